import numpy as np
import pytest

from conftest import grid_mesh_text
from mlfsi.errors import BoundsError, ConvexityError, MeshParseError, MeshValidationError
from mlfsi.fem import signed_areas
from mlfsi.geometry import (
    build_default_geometry,
    interface_graph,
    load_mesh,
    mesh_summary,
    refine_uniform,
    save_mesh,
)

SQUARE = [[6, 7, 8], [8, 13, 18], [18, 17, 16], [16, 11, 6]]


def test_refinement_zero_counts(mesh0):
    s = mesh_summary(mesh0)
    assert s["nodes"] == 25
    assert s["triangles"] == 32
    assert s["solid_triangles"] == 8
    assert s["interface_nodes"] == 8
    assert s["interface_edges"] == 4
    assert s["junctions"] == 4
    assert s["outer_boundary_nodes"] == 16


def test_refinement_one_doubles_interface(mesh0, mesh1):
    assert len(mesh1.interface_nodes) == 2 * len(mesh0.interface_nodes)
    assert mesh1.interface.K == 4


def test_triangle_count_grows_by_four_per_level(mesh0):
    mesh3 = build_default_geometry(3)
    assert len(mesh3.triangles) == 4**3 * len(mesh0.triangles)
    # 独立统计：由区域标签逐个计数
    assert int(np.sum(mesh3.regions == 1)) == 4**3 * 8


@pytest.mark.parametrize("level", [0, 1, 2, 3])
def test_areas_sum_to_unit_square(level):
    mesh = build_default_geometry(level)
    fluid = signed_areas(mesh.nodes, mesh.fluid_triangles).sum()
    solid = signed_areas(mesh.nodes, mesh.solid_triangles).sum()
    assert fluid + solid == pytest.approx(1.0, abs=1e-12)
    assert solid == pytest.approx(0.25, abs=1e-12)


@pytest.mark.parametrize("level", [-1, 9])
def test_refinement_guard(level):
    with pytest.raises(BoundsError):
        build_default_geometry(level)


def test_mesh_round_trip(mesh0, mesh1):
    for mesh in (mesh0, mesh1):
        again = load_mesh(save_mesh(mesh))
        assert again.equals(mesh)
        assert save_mesh(again) == save_mesh(mesh)


def test_interface_graph_orientation(mesh0):
    g = interface_graph(mesh0)
    assert g.K == 4
    assert len(g.junctions) == 4
    assert g.edges[0][0] == 6  # 左下角
    bottom = np.flatnonzero(g.segment_edge == 0)
    np.testing.assert_allclose(g.nu[bottom], [[0.0, 1.0]] * len(bottom))
    # 右下角：底边终点外法向 (+1, 0)，右边起点外法向 (0, −1)
    np.testing.assert_allclose(g.nj[0, 1], [1.0, 0.0])
    np.testing.assert_allclose(g.nj[1, 0], [0.0, -1.0])


def test_pairing_table_is_symmetric(mesh1):
    g = mesh1.interface
    table = g.pairing()
    assert len(table) == 2 * g.K
    for (edge, end), (other, other_end) in table.items():
        assert table[(other, other_end)] == (edge, end)
        assert g.end_node(edge, end) == g.end_node(other, other_end)
        assert g.end_sign(end) == -g.end_sign(other_end)
        assert float(g.nj[edge, end] @ g.tangents[edge]) == pytest.approx(g.end_sign(end))


def test_refine_preserves_polylines(mesh0):
    fine = refine_uniform(mesh0)
    assert fine.equals(build_default_geometry(1))
    for coarse_poly, fine_poly in zip(mesh0.interface.edges, fine.interface.edges):
        assert fine_poly[::2] == coarse_poly


def test_hanging_interface_node_is_rejected():
    # 底边线段 (6,7) 上加点 25，只剖分流体一侧
    text = grid_mesh_text(
        solid_cells={(1, 1), (2, 1), (1, 2), (2, 2)},
        polylines=[[6, 25, 7, 8], *SQUARE[1:]],
        extra_nodes=[(0.375, 0.25)],
        replace_triangles={(1, 7, 6): [(1, 7, 25), (1, 25, 6)]},
    )
    with pytest.raises(MeshValidationError) as exc:
        load_mesh(text)
    assert exc.value.entity_id == 25
    assert "25" in str(exc.value)


def test_l_shaped_solid_is_not_convex():
    text = grid_mesh_text(
        solid_cells={(1, 1), (2, 1), (1, 2)},
        polylines=[[6, 7, 8], [8, 13], [13, 12], [12, 17], [17, 16], [16, 11, 6]],
    )
    with pytest.raises(ConvexityError) as exc:
        load_mesh(text)
    assert exc.value.entity_id == 12


def test_parse_error_reports_line():
    lines = save_mesh(build_default_geometry(0)).splitlines()
    lines[3] = "2 abc 0"
    with pytest.raises(MeshParseError) as exc:
        load_mesh("\n".join(lines))
    assert exc.value.line == 4
    assert exc.value.section == "NODES"


def test_missing_section():
    text = save_mesh(build_default_geometry(0))
    head = text.split("OUTER_BOUNDARY")[0]
    with pytest.raises(MeshParseError):
        load_mesh(head)


def test_mesh_arrays_are_read_only(mesh0):
    with pytest.raises(ValueError):
        mesh0.nodes[0, 0] = 1.0
