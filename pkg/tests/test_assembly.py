import dataclasses

import numpy as np
import pytest

from mlfsi.assembly import (
    apply_adjoint,
    apply_generator,
    assemble_adjoint,
    assemble_pencil,
    export_coo,
    inject_fault,
    junction_flux_sum,
    junction_flux_table,
)
from mlfsi.errors import AssemblyConsistencyError, BoundsError
from mlfsi.fem import gradient_energy
from mlfsi.hspace import StateH, inner_h, random_state


def test_zero_state(pencil0):
    x = StateH.zeros(pencil0.dofs)
    assert not np.any(pencil0.K @ x.coeffs)
    assert not np.any(apply_generator(pencil0, x).coeffs)


def test_dissipation_identity(pencil2, rng):
    mesh = pencil2.mesh
    for _ in range(100):
        x = random_state(pencil2.dofs, rng)
        u = pencil2.dofs.P_u @ x.coeffs
        grad = gradient_energy(mesh.nodes, mesh.fluid_triangles, u)
        lhs = float(x.coeffs @ (pencil2.K @ x.coeffs))
        assert abs(lhs + grad) <= 1e-10 * inner_h(x, x, pencil2.M)


def test_conservative_without_heat(pencil1, rng):
    for _ in range(100):
        x = random_state(pencil1.dofs, rng, heat=False)
        assert abs(float(x.coeffs @ (pencil1.K @ x.coeffs))) <= 1e-12 * inner_h(x, x, pencil1.M)


def test_generator_is_dissipative(pencil1, rng):
    for _ in range(20):
        x = random_state(pencil1.dofs, rng)
        assert inner_h(apply_generator(pencil1, x), x, pencil1.M) <= 1e-12 * inner_h(x, x, pencil1.M)


def test_adjoint_matches_transpose(mesh0, pencil0, pencil2):
    adj = assemble_adjoint(mesh0, pencil0)
    assert adj.deviation <= 1e-12
    adj2 = assemble_adjoint(pencil2.mesh, pencil2)
    assert adj2.deviation <= 1e-12


def test_adjoint_catches_single_entry_error(mesh1, pencil1):
    # 只改动 K 的一个薄层耦合元素：逐单元组装的伴随不读取 K，必然发现差异
    dofs = pencil1.dofs
    row = dofs.offsets["w0_all"].start + int(np.searchsorted(dofs.w0_all, dofs.gamma[0]))
    col = dofs.offsets["gamma"].start
    K = pencil1.K.tolil()
    K[row, col] = K[row, col] * (1.0 + 1e-6) + 1e-9
    tampered = dataclasses.replace(pencil1, K=K.tocsr())
    with pytest.raises(AssemblyConsistencyError) as info:
        assemble_adjoint(mesh1, tampered)
    assert info.value.deviation > 1e-12


def test_adjoint_defining_relation(mesh1, pencil1, rng):
    adj = assemble_adjoint(mesh1, pencil1)
    M = pencil1.M
    for _ in range(100):
        x, y = random_state(pencil1.dofs, rng), random_state(pencil1.dofs, rng)
        ax, ay = apply_generator(pencil1, x), apply_adjoint(adj, y)
        lhs, rhs = inner_h(ax, y, M), inner_h(x, ay, M)
        scale = np.sqrt(inner_h(ax, ax, M) * inner_h(y, y, M))
        assert abs(lhs - rhs) <= 1e-10 * scale
    zero = StateH.zeros(pencil1.dofs)
    assert inner_h(apply_generator(pencil1, zero), zero, M) == 0.0


@pytest.mark.parametrize("fault", ["coupling-sign", "heat-sign"])
def test_fault_injection_is_detected(mesh1, fault):
    with inject_fault(fault):
        p = assemble_pencil(mesh1)
        with pytest.raises(AssemblyConsistencyError):
            assemble_adjoint(mesh1, p)
    clean = assemble_pencil(mesh1)
    assert assemble_adjoint(mesh1, clean).deviation <= 1e-12


def test_unknown_fault():
    with pytest.raises(BoundsError):
        with inject_fault("no-such-fault"):
            pass


def test_junction_cancellation(pencil2, rng):
    for _ in range(100):
        x = random_state(pencil2.dofs, rng)
        table = junction_flux_table(pencil2, x)
        h1 = dict(zip(pencil2.dofs.gamma.tolist(), x.h1))
        scale = sum((abs(r.flux_in) + abs(r.flux_out)) * abs(h1[int(r.node)]) for r in table.itertuples())
        assert abs(junction_flux_sum(pencil2, x)) <= 1e-13 * max(scale, 1.0)
    assert junction_flux_sum(pencil2, StateH.zeros(pencil2.dofs)) == 0.0


def test_junction_hat_next_to_corner(pencil1):
    # h0 为与拐点相邻、位于到达边上的节点帽函数；闭合界面上 M_Γ 为循环三对角 (s/6)[1,4,1]
    dofs = pencil1.dofs
    graph = pencil1.mesh.interface
    jn = graph.junctions[0]
    a = graph.edges[jn.incoming][-2]
    s = float(np.linalg.norm(pencil1.mesh.nodes[jn.node] - pencil1.mesh.nodes[a]))
    c = np.zeros(dofs.total_dim)
    c[dofs.offsets["w0_all"].start + int(np.searchsorted(dofs.w0_all, a))] = 1.0
    x = StateH(dofs, c)
    rho = np.sqrt(3.0) - 2.0
    g0 = 1.0 / (2.0 * np.sqrt(3.0))
    expected_in = -(1.0 + 2.0 * g0 * rho * (1.0 - rho)) / s
    table = junction_flux_table(pencil1, x)
    row = table[table.node == jn.node].iloc[0]
    assert row.flux_in == pytest.approx(expected_in, rel=1e-6)
    assert row.flux_out == pytest.approx(-expected_in, rel=1e-6)
    assert row["sum"] == pytest.approx(0.0, abs=1e-10)
    assert junction_flux_sum(pencil1, x) == pytest.approx(0.0, abs=1e-10)


def test_export_coo_sorted(pencil0):
    text = export_coo(pencil0.M)
    rows = [tuple(map(int, line.split()[:2])) for line in text.splitlines()]
    assert rows == sorted(rows)
    assert len(rows) == pencil0.M.nnz
