"""生成元矩阵束 M ẋ = K x 及其伴随。

K = C − Cᵀ − A_f，其中 C 把速度映到位置行（厚层 w1→w0、薄层 h1→h0），
A_f 为流体刚度。界面通量不单独组装：共用迹自由度使其在弱形式中精确抵消。
"""
from __future__ import annotations

import contextlib
import contextvars
import logging
from collections.abc import Iterator
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import pandas as pd
import scipy.sparse as sp

from mlfsi.errors import AssemblyConsistencyError, BoundsError
from mlfsi.fem import assemble, segment_mass, segment_stiffness, triangle_stiffness
from mlfsi.geometry import FsiMesh
from mlfsi.hspace import DofMap, HBlocks, StateH, sandwich, dofmap, h_blocks
from mlfsi.solvers import FactorizedSolver

logger = logging.getLogger(__name__)

FAULTS = ("coupling-sign", "heat-sign")
ADJOINT_TOL = 1e-12

_active_fault: contextvars.ContextVar[str | None] = contextvars.ContextVar("mlfsi_fault", default=None)


@contextlib.contextmanager
def inject_fault(name: str | None) -> Iterator[None]:
    """测试钩子：在上下文内组装带符号错误的 K。"""
    if name is not None and name not in FAULTS:
        raise BoundsError(f"未知故障名 {name!r}，可选 {', '.join(FAULTS)}")
    token = _active_fault.set(name)
    try:
        yield
    finally:
        _active_fault.reset(token)


def active_fault() -> str | None:
    return _active_fault.get()


@dataclass(frozen=True, eq=False)
class Pencil:
    """一般矩阵束 (M, K)，M 对称正定。"""

    M: sp.csr_matrix
    K: sp.csr_matrix

    @property
    def dim(self) -> int:
        return self.M.shape[0]

    @cached_property
    def mass_solver(self) -> FactorizedSolver:
        return FactorizedSolver(self.M, name="M_H")


@dataclass(frozen=True, eq=False)
class OperatorPencil(Pencil):
    dofs: DofMap
    blocks: HBlocks
    Af: sp.csr_matrix

    @property
    def mesh(self) -> FsiMesh:
        return self.dofs.mesh


@dataclass(frozen=True, eq=False)
class AdjointPencil(Pencil):
    dofs: DofMap
    deviation: float


def _coupling(dofs: DofMap) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    ops = dofs.ops
    thick = sandwich(dofs.P_w0, ops.Ss, dofs.P_w1)
    thin = sandwich(dofs.P_h0, ops.Se + ops.Me, dofs.P_h1)
    return thick, thin


def assemble_pencil(mesh: FsiMesh) -> OperatorPencil:
    dofs = dofmap(mesh)
    blocks = h_blocks(dofs)
    Af = sandwich(dofs.P_u, dofs.ops.Sf)
    thick, thin = _coupling(dofs)
    fault = active_fault()
    C = thick + thin
    if fault == "coupling-sign":
        K = (thick - thin) - C.T - Af
    elif fault == "heat-sign":
        K = C - C.T + Af
    else:
        K = C - C.T - Af
    if fault:
        logger.warning("已注入故障 %s", fault)
    logger.info("组装矩阵束：维数 %d，nnz(M)=%d，nnz(K)=%d", dofs.total_dim, blocks.total.nnz, K.nnz)
    return OperatorPencil(M=blocks.total, K=sp.csr_matrix(K), dofs=dofs, blocks=blocks, Af=Af)


def _slot_map(n: int, nodes_and_slots: list[tuple[np.ndarray, int]]) -> np.ndarray:
    """节点 -> 布局槽位；不在任何块中的节点记为 −1。"""
    out = np.full(n, -1, dtype=np.int64)
    for ids, start in nodes_and_slots:
        out[ids] = start + np.arange(len(ids))
    return out


def _scatter(
    row_slots: np.ndarray, col_slots: np.ndarray, conn: np.ndarray, local: np.ndarray, sign: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    k = conn.shape[1]
    rows = np.repeat(row_slots[conn][:, :, None], k, axis=2).ravel()
    cols = np.repeat(col_slots[conn][:, None, :], k, axis=1).ravel()
    vals = sign * local.ravel()
    keep = (rows >= 0) & (cols >= 0)
    return rows[keep], cols[keep], vals[keep]


def assemble_adjoint(mesh: FsiMesh, pencil: OperatorPencil | None = None) -> AdjointPencil:
    """逐单元独立组装伴随算子：速度行读位置（取正），位置行读速度（取负），流体块为 −A_f。

    不经过 K 的投影乘积，与 Kᵀ 的比较因此是两条独立组装路径之间的核对。
    """
    dofs = dofmap(mesh)
    p = pencil if pencil is not None else assemble_pencil(mesh)
    o = dofs.offsets
    n = mesh.n_nodes
    gamma = (dofs.gamma, o["gamma"].start)
    u_slot = _slot_map(n, [(dofs.u_interior, o["u_interior"].start), gamma])
    w1_slot = _slot_map(n, [gamma, (dofs.w1_interior, o["w1_interior"].start)])
    w0_slot = _slot_map(n, [(dofs.w0_all, o["w0_all"].start)])
    h1_slot = _slot_map(n, [gamma])
    h0_slot = np.where(h1_slot >= 0, w0_slot, -1)

    nodes = mesh.nodes
    fluid, solid, segs = mesh.fluid_triangles, mesh.solid_triangles, mesh.interface.segments
    k_fluid = triangle_stiffness(nodes, fluid)
    k_solid = triangle_stiffness(nodes, solid)
    k_edge = segment_stiffness(nodes, segs) + segment_mass(nodes, segs)
    parts = [
        _scatter(u_slot, u_slot, fluid, k_fluid, -1.0),
        # 厚层：w1 行读 w0（+），w0 行读 w1（−）
        _scatter(w1_slot, w0_slot, solid, k_solid, 1.0),
        _scatter(w0_slot, w1_slot, solid, k_solid, -1.0),
        # 薄层：h1 行读 h0（+），h0 行读 h1（−）
        _scatter(h1_slot, h0_slot, segs, k_edge, 1.0),
        _scatter(h0_slot, h1_slot, segs, k_edge, -1.0),
    ]
    rows, cols, vals = (np.concatenate(a) for a in zip(*parts))
    N = dofs.total_dim
    K_adj = sp.coo_matrix((vals, (rows, cols)), shape=(N, N)).tocsr()
    K_adj.sum_duplicates()
    diff = K_adj - p.K.T
    deviation = float(np.max(np.abs(diff.data), initial=0.0))
    logger.info("伴随一致性偏差 %.3e", deviation)
    if deviation > ADJOINT_TOL:
        raise AssemblyConsistencyError("伴随矩阵与 Kᵀ 不一致", deviation=deviation)
    return AdjointPencil(M=p.M, K=K_adj, dofs=dofs, deviation=deviation)


def apply_generator(p: Pencil, x: StateH) -> StateH:
    """求解 M y = K x，即离散的 AΦ。"""
    y = p.mass_solver.solve(p.K @ x.coeffs)
    return StateH(x.dofs, y)


def apply_adjoint(a: AdjointPencil, x: StateH) -> StateH:
    return StateH(x.dofs, a.mass_solver.solve(a.K @ x.coeffs))


# ---------------------------
# 拐点通量
# ---------------------------
def _endpoint_residuals(dofs: DofMap, h0: np.ndarray) -> list[np.ndarray]:
    """每条边的离散端点通量 r_j = S_j h0 − M_j q，q = M_Γ⁻¹ S_Γ h0。"""
    mesh = dofs.mesh
    graph = mesh.interface
    n = mesh.n_nodes
    ops = dofs.ops
    nodal = np.zeros(n)
    nodal[dofs.gamma] = h0
    g = dofs.gamma
    M_gamma = ops.Me[g][:, g]
    q_gamma = FactorizedSolver(M_gamma, name="M_Γ").solve((ops.Se @ nodal)[g])
    q = np.zeros(n)
    q[g] = q_gamma
    out = []
    for j in range(graph.K):
        segs = graph.segments[graph.segment_edge == j]
        S_j = assemble(n, segs, segment_stiffness(mesh.nodes, segs))
        M_j = assemble(n, segs, segment_mass(mesh.nodes, segs))
        out.append(S_j @ nodal - M_j @ q)
    return out


def junction_flux_table(p: OperatorPencil, x: StateH) -> pd.DataFrame:
    """每个拐点两侧的端点通量：到达边 (终点) 与出发边 (起点)。"""
    graph = p.mesh.interface
    r = _endpoint_residuals(p.dofs, x.h0)
    rows = []
    for jn in graph.junctions:
        r_in = float(r[jn.incoming][jn.node])
        r_out = float(r[jn.outgoing][jn.node])
        rows.append(
            {"node": jn.node, "edge_in": jn.incoming, "edge_out": jn.outgoing, "flux_in": r_in, "flux_out": r_out, "sum": r_in + r_out}
        )
    return pd.DataFrame(rows, columns=["node", "edge_in", "edge_out", "flux_in", "flux_out", "sum"])


def junction_flux_sum(p: OperatorPencil, x: StateH) -> float:
    """Σ_j (∂h0j/∂n_j, h1j) 在各边端点上的离散值。"""
    graph = p.mesh.interface
    r = _endpoint_residuals(p.dofs, x.h0)
    h1 = np.zeros(p.mesh.n_nodes)
    h1[p.dofs.gamma] = x.h1
    total = 0.0
    for j, poly in enumerate(graph.edges):
        for end in (0, 1):
            node = poly[-1] if end == 1 else poly[0]
            total += float(r[j][node] * h1[node])
    return total


def export_coo(matrix: sp.spmatrix) -> str:
    coo = sp.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    lines = [f"{coo.row[k]} {coo.col[k]} {format(float(coo.data[k]), '.17g')}" for k in order]
    return "\n".join(lines) + ("\n" if lines else "")
