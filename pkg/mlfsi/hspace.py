"""能量空间 H 的离散化：合并自由度布局、状态向量与 H 内积。

布局为 [u_interior, gamma, w0_all, w1_interior]，每块内节点号升序。
界面速度（u 的迹、h1、w1 的迹）共用 gamma；h0 直接读取 w0 在界面上的值。
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from mlfsi.errors import CompatibilityError, DimensionError, ParseError
from mlfsi.fem import FemOperators, build_operators, selection
from mlfsi.geometry import FsiMesh

logger = logging.getLogger(__name__)

BLOCK_NAMES = ("u_interior", "gamma", "w0_all", "w1_interior")
COMPONENTS = ("fluid", "thin_grad", "thin_mass", "thin_kin", "thick_grad", "thick_kin")


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


# ---------------------------
# 自由度布局
# ---------------------------
@dataclass(frozen=True, eq=False)
class DofMap:
    mesh: FsiMesh
    u_interior: np.ndarray
    gamma: np.ndarray
    w0_all: np.ndarray
    w1_interior: np.ndarray

    @property
    def sizes(self) -> tuple[int, int, int, int]:
        return len(self.u_interior), len(self.gamma), len(self.w0_all), len(self.w1_interior)

    @property
    def total_dim(self) -> int:
        return sum(self.sizes)

    @property
    def velocity_dim(self) -> int:
        nu, ng, _, nw1 = self.sizes
        return nu + ng + nw1

    @cached_property
    def offsets(self) -> dict[str, slice]:
        out, start = {}, 0
        for name, size in zip(BLOCK_NAMES, self.sizes):
            out[name] = slice(start, start + size)
            start += size
        return out

    def block(self, name: str) -> np.ndarray:
        return getattr(self, name)

    @cached_property
    def velocity_slots(self) -> np.ndarray:
        """速度子布局 [u_interior, gamma, w1_interior] 在完整布局中的位置。"""
        o = self.offsets
        return np.concatenate(
            [np.arange(o["u_interior"].start, o["gamma"].stop), np.arange(o["w1_interior"].start, o["w1_interior"].stop)]
        )

    @cached_property
    def position_slots(self) -> np.ndarray:
        o = self.offsets["w0_all"]
        return np.arange(o.start, o.stop)

    @cached_property
    def ops(self) -> FemOperators:
        m = self.mesh
        return build_operators(m.nodes, m.fluid_triangles, m.solid_triangles, m.interface.segments)

    # 完整布局 -> 节点场
    def _nodal(self, pairs: list[tuple[str, np.ndarray | None]], ncols: int, offsets: dict[str, slice]) -> sp.csr_matrix:
        rows, cols = [], []
        for name, keep in pairs:
            ids = self.block(name)
            slots = np.arange(offsets[name].start, offsets[name].stop)
            if keep is not None:
                mask = np.isin(ids, keep)
                ids, slots = ids[mask], slots[mask]
            rows.append(ids)
            cols.append(slots)
        return selection((self.mesh.n_nodes, ncols), np.concatenate(rows), np.concatenate(cols))

    @cached_property
    def P_u(self) -> sp.csr_matrix:
        return self._nodal([("u_interior", None), ("gamma", None)], self.total_dim, self.offsets)

    @cached_property
    def P_h1(self) -> sp.csr_matrix:
        return self._nodal([("gamma", None)], self.total_dim, self.offsets)

    @cached_property
    def P_w1(self) -> sp.csr_matrix:
        return self._nodal([("gamma", None), ("w1_interior", None)], self.total_dim, self.offsets)

    @cached_property
    def P_w0(self) -> sp.csr_matrix:
        return self._nodal([("w0_all", None)], self.total_dim, self.offsets)

    @cached_property
    def P_h0(self) -> sp.csr_matrix:
        return self._nodal([("w0_all", self.gamma)], self.total_dim, self.offsets)

    @cached_property
    def velocity_offsets(self) -> dict[str, slice]:
        nu, ng, _, nw1 = self.sizes
        return {"u_interior": slice(0, nu), "gamma": slice(nu, nu + ng), "w1_interior": slice(nu + ng, nu + ng + nw1)}

    # 速度子布局 -> 节点场
    @cached_property
    def V_u(self) -> sp.csr_matrix:
        return self._nodal([("u_interior", None), ("gamma", None)], self.velocity_dim, self.velocity_offsets)

    @cached_property
    def V_g(self) -> sp.csr_matrix:
        return self._nodal([("gamma", None)], self.velocity_dim, self.velocity_offsets)

    @cached_property
    def V_w1(self) -> sp.csr_matrix:
        return self._nodal([("gamma", None), ("w1_interior", None)], self.velocity_dim, self.velocity_offsets)

    @cached_property
    def S1(self) -> sp.csr_matrix:
        """速度子布局 -> w0 槽位：取固体节点上的 w1 节点值。"""
        nodal = self.V_w1.tocsr()[self.w0_all]
        return sp.csr_matrix(nodal)

    @cached_property
    def edge_slots(self) -> list[np.ndarray]:
        """每条界面边折线节点在 gamma 块中的下标。"""
        return [np.searchsorted(self.gamma, np.asarray(poly)) for poly in self.mesh.interface.edges]


_DOFMAP_ATTR = "_dofmap"


def dofmap(mesh: FsiMesh) -> DofMap:
    """每个网格只构造一次布局（矩阵缓存随之共享）。

    布局挂在网格实例的 __dict__ 上（与 cached_property 相同的存放方式），
    网格与布局构成的引用环随网格一起被回收。
    """
    cached = mesh.__dict__.get(_DOFMAP_ATTR)
    if cached is None:
        cached = DofMap(
            mesh=mesh,
            u_interior=mesh.fluid_interior_nodes,
            gamma=mesh.interface_nodes,
            w0_all=mesh.solid_nodes,
            w1_interior=mesh.solid_interior_nodes,
        )
        mesh.__dict__[_DOFMAP_ATTR] = cached
        logger.info("自由度布局：u=%d gamma=%d w0=%d w1=%d，总维数 %d", *cached.sizes, cached.total_dim)
    return cached


# ---------------------------
# 状态
# ---------------------------
@dataclass(frozen=True, eq=False)
class StateH:
    dofs: DofMap
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        c = np.array(self.coeffs, dtype=float)
        if c.shape != (self.dofs.total_dim,):
            raise DimensionError(f"状态长度 {c.shape} 与布局维数 {self.dofs.total_dim} 不符")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, dofs: DofMap) -> StateH:
        return cls(dofs, np.zeros(dofs.total_dim))

    def _check(self, other: StateH) -> None:
        if not isinstance(other, StateH) or other.dofs is not self.dofs:
            raise DimensionError("两个状态不在同一布局上")

    def __add__(self, other: StateH) -> StateH:
        self._check(other)
        return StateH(self.dofs, self.coeffs + other.coeffs)

    def __sub__(self, other: StateH) -> StateH:
        self._check(other)
        return StateH(self.dofs, self.coeffs - other.coeffs)

    def __mul__(self, scalar: float) -> StateH:
        return StateH(self.dofs, self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __truediv__(self, scalar: float) -> StateH:
        return StateH(self.dofs, self.coeffs / float(scalar))

    def __neg__(self) -> StateH:
        return StateH(self.dofs, -self.coeffs)

    def block(self, name: str) -> np.ndarray:
        return self.coeffs[self.dofs.offsets[name]]

    # 语义视图
    @property
    def u(self) -> np.ndarray:
        """流体节点（升序）上的温度；Γ_f 上为零。"""
        return (self.dofs.P_u @ self.coeffs)[self.dofs.mesh.fluid_nodes]

    @property
    def h1(self) -> np.ndarray:
        return self.block("gamma")

    @property
    def h0(self) -> np.ndarray:
        return (self.dofs.P_h0 @ self.coeffs)[self.dofs.gamma]

    @property
    def w0(self) -> np.ndarray:
        return self.block("w0_all")

    @property
    def w1(self) -> np.ndarray:
        return (self.dofs.P_w1 @ self.coeffs)[self.dofs.w0_all]

    def edge_values(self, name: str, edge: int) -> np.ndarray:
        """h0 或 h1 沿界面边 edge 折线的取值。"""
        slots = self.dofs.edge_slots[edge]
        return (self.h0 if name == "h0" else self.h1)[slots]


@dataclass
class RawState:
    """未校验的分量数组：u、w0、w1 按节点升序，h0/h1 按界面边折线。"""

    u: np.ndarray
    h0: list[np.ndarray]
    h1: list[np.ndarray]
    w0: np.ndarray
    w1: np.ndarray

    @classmethod
    def zeros(cls, mesh: FsiMesh) -> RawState:
        edges = mesh.interface.edges
        return cls(
            u=np.zeros(len(mesh.fluid_nodes)),
            h0=[np.zeros(len(poly)) for poly in edges],
            h1=[np.zeros(len(poly)) for poly in edges],
            w0=np.zeros(len(mesh.solid_nodes)),
            w1=np.zeros(len(mesh.solid_nodes)),
        )


def raw_from_state(x: StateH) -> RawState:
    k = x.dofs.mesh.interface.K
    return RawState(
        u=x.u.copy(),
        h0=[x.edge_values("h0", j) for j in range(k)],
        h1=[x.edge_values("h1", j) for j in range(k)],
        w0=x.w0.copy(),
        w1=x.w1.copy(),
    )


def validate_membership(raw: RawState, mesh: FsiMesh, tol: float | None = None) -> StateH:
    """检查相容性条件并合并为 StateH；容差内的差异取平均。"""
    dofs = dofmap(mesh)
    fluid, solid = mesh.fluid_nodes, mesh.solid_nodes
    edges = mesh.interface.edges
    if raw.u.shape != (len(fluid),) or raw.w0.shape != (len(solid),) or raw.w1.shape != (len(solid),):
        raise DimensionError("RawState 的 u/w0/w1 长度与网格不符")
    if len(raw.h0) != len(edges) or len(raw.h1) != len(edges):
        raise DimensionError("RawState 的界面边数与网格不符")
    for j, poly in enumerate(edges):
        if np.shape(raw.h0[j]) != (len(poly),) or np.shape(raw.h1[j]) != (len(poly),):
            raise DimensionError(f"界面边 {j} 的 h0/h1 长度与折线节点数不符")

    if tol is None:
        scale = max([np.max(np.abs(a), initial=0.0) for a in (raw.u, raw.w0, raw.w1, *raw.h0, *raw.h1)] + [1.0])
        tol = 1e-10 * scale

    u_at = dict(zip(fluid.tolist(), raw.u))
    w0_at = dict(zip(solid.tolist(), raw.w0))
    w1_at = dict(zip(solid.tolist(), raw.w1))

    for node in mesh.outer_boundary_nodes.tolist():
        if node in u_at and abs(u_at[node]) > tol:
            raise CompatibilityError(f"节点 {node} 处 u = {u_at[node]:.3e} ≠ 0（Γ_f）", condition="outer", node=node)

    h0_vals: dict[int, list[float]] = {}
    h1_vals: dict[int, list[float]] = {}
    for j, poly in enumerate(edges):
        for k, node in enumerate(poly):
            h0, h1 = float(raw.h0[j][k]), float(raw.h1[j][k])
            if abs(w0_at[node] - h0) > tol:
                raise CompatibilityError(f"边 {j} 节点 {node}：w0 迹 {w0_at[node]:.6g} ≠ h0 {h0:.6g}", condition="i", node=node)
            if abs(u_at[node] - h1) > tol:
                raise CompatibilityError(f"边 {j} 节点 {node}：u 迹 {u_at[node]:.6g} ≠ h1 {h1:.6g}", condition="A.iii", node=node)
            if abs(w1_at[node] - h1) > tol:
                raise CompatibilityError(f"边 {j} 节点 {node}：w1 迹 {w1_at[node]:.6g} ≠ h1 {h1:.6g}", condition="A.iii", node=node)
            h0_vals.setdefault(node, []).append(h0)
            h1_vals.setdefault(node, []).append(h1)

    for jn in mesh.interface.junctions:
        a, b = h0_vals[jn.node]
        if abs(a - b) > tol:
            raise CompatibilityError(f"拐点 {jn.node} 两侧 h0 不连续：{a:.6g} / {b:.6g}", condition="ii", node=jn.node)
        a, b = h1_vals[jn.node]
        if abs(a - b) > tol:
            raise CompatibilityError(f"拐点 {jn.node} 两侧 h1 不连续：{a:.6g} / {b:.6g}", condition="A.iii", node=jn.node)

    c = np.zeros(dofs.total_dim)
    o = dofs.offsets
    c[o["u_interior"]] = [u_at[n] for n in dofs.u_interior.tolist()]
    c[o["gamma"]] = [np.mean([u_at[n], w1_at[n], *h1_vals[n]]) for n in dofs.gamma.tolist()]
    w0 = np.array(raw.w0, dtype=float)
    pos = np.searchsorted(solid, dofs.gamma)
    w0[pos] = [np.mean([w0_at[n], *h0_vals[n]]) for n in dofs.gamma.tolist()]
    c[o["w0_all"]] = w0
    c[o["w1_interior"]] = [w1_at[n] for n in dofs.w1_interior.tolist()]
    return StateH(dofs, c)


def random_state(dofs: DofMap, rng: np.random.Generator, *, heat: bool = True) -> StateH:
    c = rng.standard_normal(dofs.total_dim)
    if not heat:
        c[dofs.offsets["u_interior"]] = 0.0
        c[dofs.offsets["gamma"]] = 0.0
    return StateH(dofs, c)


# ---------------------------
# H 内积
# ---------------------------
@dataclass(frozen=True, eq=False)
class HBlocks:
    """(Hilbert) 内积的六项，各自为完整布局上的矩阵。"""

    fluid: sp.csr_matrix
    thin_grad: sp.csr_matrix
    thin_mass: sp.csr_matrix
    thin_kin: sp.csr_matrix
    thick_grad: sp.csr_matrix
    thick_kin: sp.csr_matrix

    def items(self) -> list[tuple[str, sp.csr_matrix]]:
        return [(name, getattr(self, name)) for name in COMPONENTS]

    @cached_property
    def total(self) -> sp.csr_matrix:
        acc = self.fluid
        for _, mat in self.items()[1:]:
            acc = acc + mat
        return sp.csr_matrix(acc)


def sandwich(P: sp.csr_matrix, A: sp.csr_matrix, Q: sp.csr_matrix | None = None) -> sp.csr_matrix:
    return sp.csr_matrix(P.T @ A @ (P if Q is None else Q))


def h_blocks(dofs: DofMap) -> HBlocks:
    ops = dofs.ops
    return HBlocks(
        fluid=sandwich(dofs.P_u, ops.Mf),
        thin_grad=sandwich(dofs.P_h0, ops.Se),
        thin_mass=sandwich(dofs.P_h0, ops.Me),
        thin_kin=sandwich(dofs.P_h1, ops.Me),
        thick_grad=sandwich(dofs.P_w0, ops.Ss),
        thick_kin=sandwich(dofs.P_w1, ops.Ms),
    )


def gram_matrix(mesh: FsiMesh) -> sp.csr_matrix:
    return h_blocks(dofmap(mesh)).total


def w_norm_gram(dofs: DofMap) -> sp.csr_matrix:
    """速度子布局上的 W 范数：‖∇φ‖²_f + Σ(‖∇ψ‖² + ‖ψ‖²) + ‖∇ξ‖²_s。"""
    ops = dofs.ops
    return sp.csr_matrix(
        sandwich(dofs.V_u, ops.Sf) + sandwich(dofs.V_g, ops.Se + ops.Me) + sandwich(dofs.V_w1, ops.Ss)
    )


def inner_h(a: StateH, b: StateH, M: sp.spmatrix) -> float:
    a._check(b)
    if M.shape != (a.dofs.total_dim, a.dofs.total_dim):
        raise DimensionError(f"Gram 矩阵维数 {M.shape} 与状态维数 {a.dofs.total_dim} 不符")
    return float(a.coeffs @ (M @ b.coeffs))


def energy(x: StateH, M: sp.spmatrix) -> float:
    return 0.5 * inner_h(x, x, M)


def energy_components(x: StateH, blocks: HBlocks) -> dict[str, float]:
    c = x.coeffs
    return {name: 0.5 * float(c @ (mat @ c)) for name, mat in blocks.items()}


# ---------------------------
# 状态快照
# ---------------------------
def save_state(x: StateH) -> str:
    lines = []
    for name in BLOCK_NAMES:
        ids = x.dofs.block(name)
        vals = x.block(name)
        lines.append(f"BLOCK {name} {len(ids)}")
        lines += [f"{n} {_fmt(v)}" for n, v in zip(ids, vals)]
    return "\n".join(lines) + "\n"


def load_state(text: str, dofs: DofMap) -> StateH:
    c = np.zeros(dofs.total_dim)
    rows = [(i, line.split("#", 1)[0].split()) for i, line in enumerate(text.splitlines(), start=1)]
    rows = [(i, t) for i, t in rows if t]
    pos = 0
    for name in BLOCK_NAMES:
        if pos >= len(rows):
            raise ParseError(f"缺少块 {name}", section=name)
        lineno, tokens = rows[pos]
        if len(tokens) != 3 or tokens[0] != "BLOCK" or tokens[1] != name:
            raise ParseError(f"期望块头 `BLOCK {name} <n>`", line=lineno, section=name)
        ids = dofs.block(name)
        if tokens[2] != str(len(ids)):
            raise DimensionError(f"块 {name} 长度 {tokens[2]} 与布局 {len(ids)} 不符")
        block = c[dofs.offsets[name]]
        for k, node in enumerate(ids):
            pos += 1
            if pos >= len(rows):
                raise ParseError(f"块 {name} 数据不足", section=name)
            lineno, tokens = rows[pos]
            if len(tokens) != 2:
                raise ParseError("数据行应为 `node value`", line=lineno, section=name)
            try:
                got, value = int(tokens[0]), float(tokens[1])
            except ValueError:
                raise ParseError(f"无法解析数据行：{' '.join(tokens)}", line=lineno, section=name) from None
            if got != node:
                raise DimensionError(f"块 {name} 第 {k} 项节点号 {got} 与布局节点 {node} 不符")
            block[k] = value
        pos += 1
    if pos != len(rows):
        raise ParseError("快照末尾有多余内容", line=rows[pos][0])
    return StateH(dofs, c)
