import gc
import weakref

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, strategies as st

from mlfsi.errors import CompatibilityError, DimensionError, ParseError
from mlfsi.geometry import build_default_geometry
from mlfsi.hspace import (
    RawState,
    StateH,
    dofmap,
    energy,
    energy_components,
    gram_matrix,
    h_blocks,
    inner_h,
    load_state,
    random_state,
    raw_from_state,
    save_state,
    validate_membership,
)


def constant_w0_state(mesh):
    dofs = dofmap(mesh)
    c = np.zeros(dofs.total_dim)
    c[dofs.offsets["w0_all"]] = 1.0
    return StateH(dofs, c)


@pytest.mark.parametrize("level,dim", [(0, 18), (1, 74), (2, 306)])
def test_total_dim(level, dim, mesh0, mesh1, mesh2):
    mesh = (mesh0, mesh1, mesh2)[level]
    dofs = dofmap(mesh)
    assert dofs.total_dim == dim
    assert dofs.velocity_dim + len(dofs.w0_all) == dim


def test_dofmap_is_cached(mesh1):
    assert dofmap(mesh1) is dofmap(mesh1)


def test_dofmap_cache_released_with_mesh():
    mesh = build_default_geometry(1)
    dofs = dofmap(mesh)
    _ = dofs.ops, dofs.P_u
    ref = weakref.ref(mesh)
    del mesh, dofs, _
    gc.collect()
    assert ref() is None


def test_gram_matrix_spd(mesh0):
    M = gram_matrix(mesh0)
    assert (M - M.T).nnz == 0
    assert sla.eigvalsh(M.toarray())[0] > 0.0
    sla.cholesky(M.toarray())


def test_constant_w0_norm_is_perimeter(mesh0, mesh2):
    for mesh in (mesh0, mesh2):
        x = constant_w0_state(mesh)
        M = gram_matrix(mesh)
        assert inner_h(x, x, M) == pytest.approx(2.0, rel=1e-12)
        assert energy(x, M) == pytest.approx(1.0, rel=1e-12)
        np.testing.assert_allclose(x.h0, 1.0)


def test_energy_components_sum(pencil1, rng):
    x = random_state(pencil1.dofs, rng)
    comps = energy_components(x, pencil1.blocks)
    assert set(comps) == {"fluid", "thin_grad", "thin_mass", "thin_kin", "thick_grad", "thick_kin"}
    assert sum(comps.values()) == pytest.approx(energy(x, pencil1.M), rel=1e-12)
    assert all(v >= 0.0 for v in comps.values())


def test_inner_h_symmetric_and_zero(pencil1, rng):
    M = pencil1.M
    zero = StateH.zeros(pencil1.dofs)
    for _ in range(100):
        a, b = random_state(pencil1.dofs, rng), random_state(pencil1.dofs, rng)
        assert inner_h(a, b, M) == pytest.approx(inner_h(b, a, M), rel=1e-12, abs=1e-14)
        assert inner_h(zero, b, M) == 0.0


@given(scale=st.floats(min_value=-1e3, max_value=1e3, allow_nan=False), seed=st.integers(0, 2**32 - 1))
def test_energy_is_quadratic(pencil0, scale, seed):
    x = random_state(pencil0.dofs, np.random.default_rng(seed))
    e = energy(x, pencil0.M)
    assert energy(x * scale, pencil0.M) == pytest.approx(scale * scale * e, rel=1e-10, abs=1e-300)


def test_layout_mismatch(pencil0, pencil1):
    with pytest.raises(DimensionError):
        StateH.zeros(pencil0.dofs) + StateH.zeros(pencil1.dofs)
    with pytest.raises(DimensionError):
        StateH(pencil0.dofs, np.zeros(3))


def test_validate_zero(mesh1):
    x = validate_membership(RawState.zeros(mesh1), mesh1)
    assert not np.any(x.coeffs)


def test_validate_exact_trace(mesh1):
    raw = RawState.zeros(mesh1)
    solid = mesh1.solid_nodes
    on_gamma = np.isin(solid, mesh1.interface_nodes)
    raw.w0[on_gamma] = 1.0
    raw.h0 = [np.ones(len(poly)) for poly in mesh1.interface.edges]
    x = validate_membership(raw, mesh1, tol=1e-12)
    np.testing.assert_array_equal(x.h0, 1.0)


def test_validate_rejects_trace_mismatch(mesh1, rng):
    x = random_state(dofmap(mesh1), rng)
    raw = raw_from_state(x)
    raw.h0[2] = raw.h0[2] + 1e-3
    with pytest.raises(CompatibilityError) as exc:
        validate_membership(raw, mesh1, tol=1e-12)
    assert exc.value.condition == "i"
    assert exc.value.node == mesh1.interface.edges[2][0]


def test_validate_rejects_velocity_mismatch(mesh1, rng):
    raw = raw_from_state(random_state(dofmap(mesh1), rng))
    raw.h1[0] = raw.h1[0] + 1e-3
    with pytest.raises(CompatibilityError) as exc:
        validate_membership(raw, mesh1, tol=1e-12)
    assert exc.value.condition == "A.iii"


def test_validate_rejects_outer_heat(mesh1):
    raw = RawState.zeros(mesh1)
    outer = int(mesh1.outer_boundary_nodes[0])
    raw.u[np.searchsorted(mesh1.fluid_nodes, outer)] = 1.0
    with pytest.raises(CompatibilityError) as exc:
        validate_membership(raw, mesh1)
    assert exc.value.condition == "outer"
    assert exc.value.node == outer


def test_validate_round_trip(mesh2, rng):
    x = random_state(dofmap(mesh2), rng)
    back = validate_membership(raw_from_state(x), mesh2)
    np.testing.assert_allclose(back.coeffs, x.coeffs, rtol=1e-15, atol=0.0)


def test_state_snapshot_round_trip(pencil1, rng):
    x = random_state(pencil1.dofs, rng)
    text = save_state(x)
    again = load_state(text, pencil1.dofs)
    np.testing.assert_array_equal(again.coeffs, x.coeffs)
    assert save_state(again) == text


def test_state_snapshot_errors(pencil0, pencil1, rng):
    text = save_state(random_state(pencil1.dofs, rng))
    with pytest.raises(DimensionError):
        load_state(text, pencil0.dofs)
    with pytest.raises(ParseError):
        load_state(text.replace("BLOCK gamma", "BLOCK gama"), pencil1.dofs)


def test_coeffs_are_read_only(pencil0):
    x = StateH.zeros(pencil0.dofs)
    with pytest.raises(ValueError):
        x.coeffs[0] = 1.0


@pytest.mark.parametrize("level", [1, 2, 3])
def test_gram_matrix_spd_on_refined_meshes(level):
    M = gram_matrix(build_default_geometry(level))
    assert abs(M - M.T).max() <= 1e-15 * abs(M).max()
    assert sla.eigvalsh(M.toarray(), subset_by_index=[0, 0])[0] > 0.0


@pytest.mark.parametrize("which", ["mesh0", "mesh2"])
def test_block_norms_of_affine_state(which, request):
    # w0 = x 坐标（固体为 [0.25, 0.75]²），h1 ≡ 1，w1 ≡ 1：P1 精确表示，各项可手算
    mesh = request.getfixturevalue(which)
    dofs = dofmap(mesh)
    c = np.zeros(dofs.total_dim)
    c[dofs.offsets["w0_all"]] = mesh.nodes[dofs.w0_all, 0]
    c[dofs.offsets["gamma"]] = 1.0
    c[dofs.offsets["w1_interior"]] = 1.0
    x = StateH(dofs, c)
    comps = energy_components(x, h_blocks(dofs))
    assert comps["thin_grad"] == pytest.approx(0.5, rel=1e-12)
    assert comps["thin_mass"] == pytest.approx(7.0 / 24.0, rel=1e-12)
    assert comps["thin_kin"] == pytest.approx(1.0, rel=1e-12)
    assert comps["thick_grad"] == pytest.approx(0.125, rel=1e-12)
    assert comps["thick_kin"] == pytest.approx(0.125, rel=1e-12)
    assert comps["fluid"] > 0.0
