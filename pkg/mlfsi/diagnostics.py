"""独立校验：固体调和延拓、界面通量恢复、解析特征值参照与人造解。"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import pandas as pd
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from mlfsi.assembly import OperatorPencil, apply_generator, assemble_pencil
from mlfsi.errors import BoundsError, DimensionError, DomainError
from mlfsi.geometry import FsiMesh, build_default_geometry
from mlfsi.hspace import StateH, dofmap, random_state
from mlfsi.solvers import FactorizedSolver

logger = logging.getLogger(__name__)

SOLID_SIDE = 0.5
DENSE_EIG_LIMIT = 400
REGIONS = ("fluid", "solid")


def harmonic_extension(g: np.ndarray, mesh: FsiMesh) -> np.ndarray:
    """D_s g：固体内离散调和、界面上等于 g；返回按固体节点升序的值。"""
    dofs = dofmap(mesh)
    g = np.asarray(g, dtype=float)
    if g.shape != (len(dofs.gamma),):
        raise DimensionError(f"界面数据长度 {g.shape} 与界面节点数 {len(dofs.gamma)} 不符")
    S = dofs.ops.Ss
    interior, gamma = dofs.w1_interior, dofs.gamma
    f = np.zeros(mesh.n_nodes)
    f[gamma] = g
    if len(interior):
        rhs = -(S[interior][:, gamma] @ g)
        f[interior] = FactorizedSolver(S[interior][:, interior], name="D_s").solve(rhs)
    return f[dofs.w0_all]


# ---------------------------
# 界面通量
# ---------------------------
@dataclass
class FluxRecovery:
    nodes: np.ndarray
    fluid_flux: np.ndarray
    solid_flux: np.ndarray
    fluid_density: np.ndarray
    solid_density: np.ndarray
    balance_residual: np.ndarray
    balance_norm: float

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "node": self.nodes,
                "du_dnu": self.fluid_flux,
                "dw_dnu": self.solid_flux,
                "du_dnu_density": self.fluid_density,
                "dw_dnu_density": self.solid_density,
                "balance_residual": self.balance_residual,
            }
        )


def fluid_flux_functional(p: OperatorPencil, x: StateH, rate: StateH) -> np.ndarray:
    """∂u/∂ν 的节点泛函 (M_f u_t + S_f u)|_Γ，ν 指向固体。"""
    d, ops = p.dofs, p.dofs.ops
    u, u_t = d.P_u @ x.coeffs, d.P_u @ rate.coeffs
    return (ops.Mf @ u_t + ops.Sf @ u)[d.gamma]


def solid_flux_functional(p: OperatorPencil, x: StateH, rate: StateH) -> np.ndarray:
    """∂w/∂ν 的节点泛函 −(M_s w1_t + S_s w0)|_Γ。"""
    d, ops = p.dofs, p.dofs.ops
    w0, w1_t = d.P_w0 @ x.coeffs, d.P_w1 @ rate.coeffs
    return -(ops.Ms @ w1_t + ops.Ss @ w0)[d.gamma]


def recover_interface_flux(x: StateH, p: OperatorPencil, rate: StateH | None = None) -> FluxRecovery:
    """由区域残差恢复界面通量，并给出薄层力平衡残差的离散对偶范数。

    rate 缺省为 M⁻¹Kx（状态的时间导数）。
    """
    if rate is None:
        rate = apply_generator(p, x)
    d, ops = p.dofs, p.dofs.ops
    g = d.gamma
    flux_u = fluid_flux_functional(p, x, rate)
    flux_w = solid_flux_functional(p, x, rate)
    M_gamma = ops.Me[g][:, g]
    mass = FactorizedSolver(M_gamma, name="M_Γ")
    h0 = d.P_h0 @ x.coeffs
    h1_t = d.P_h1 @ rate.coeffs
    residual = (ops.Me @ h1_t + (ops.Se + ops.Me) @ h0)[g] + flux_u - flux_w
    norm = math.sqrt(max(float(residual @ mass.solve(residual)), 0.0))
    return FluxRecovery(
        nodes=g.copy(),
        fluid_flux=flux_u,
        solid_flux=flux_w,
        fluid_density=mass.solve(flux_u),
        solid_density=mass.solve(flux_w),
        balance_residual=residual,
        balance_norm=norm,
    )


# ---------------------------
# 特征值参照
# ---------------------------
def _check_region(region: str) -> str:
    if region not in REGIONS:
        raise BoundsError(f"区域必须是 fluid 或 solid：{region!r}")
    return region


def discrete_dirichlet_eigenvalues(mesh: FsiMesh, region: str, count: int = 1) -> np.ndarray:
    """区域上的离散 Dirichlet-Laplace 特征值（升序前 count 个）。"""
    _check_region(region)
    dofs = dofmap(mesh)
    ops = dofs.ops
    if region == "solid":
        free, S, M = dofs.w1_interior, ops.Ss, ops.Ms
    else:
        free, S, M = dofs.u_interior, ops.Sf, ops.Mf
    n = len(free)
    if count < 1 or count > n:
        raise BoundsError(f"请求 {count} 个特征值，但 {region} 区域只有 {n} 个内部节点")
    S_II = S[free][:, free]
    M_II = M[free][:, free]
    if n <= DENSE_EIG_LIMIT or count >= n - 1:
        vals = sla.eigh(S_II.toarray(), M_II.toarray(), eigvals_only=True, subset_by_index=[0, count - 1])
    else:
        vals = spla.eigsh(S_II.tocsc(), k=count, M=M_II.tocsc(), sigma=0.0, which="LM", return_eigenvectors=False)
    return np.sort(np.asarray(vals, dtype=float))


@lru_cache(maxsize=8)
def _fluid_reference(count: int) -> tuple[float, ...]:
    coarse = discrete_dirichlet_eigenvalues(build_default_geometry(3), "fluid", count)
    fine = discrete_dirichlet_eigenvalues(build_default_geometry(4), "fluid", count)
    # O(h²) 收敛下的 Richardson 外推
    return tuple((4.0 * fine - coarse) / 3.0)


def decoupled_eig_reference(region: str, count: int) -> np.ndarray:
    _check_region(region)
    if count < 1:
        raise BoundsError(f"count 必须 ≥ 1：{count}")
    if region == "fluid":
        return np.array(_fluid_reference(count))
    m = int(math.ceil(math.sqrt(count))) + 2
    vals = sorted(math.pi**2 * (i * i + j * j) / SOLID_SIDE**2 for i in range(1, m + 1) for j in range(1, m + 1))
    return np.array(vals[:count])


def dirichlet_convergence_ladder(levels=(1, 2, 3, 4), region: str = "solid") -> pd.DataFrame:
    """第一个 Dirichlet 特征值对参照值的误差与逐级误差比。"""
    exact = float(decoupled_eig_reference(region, 1)[0])
    rows = []
    prev = None
    for level in levels:
        mesh = build_default_geometry(level)
        lam1 = float(discrete_dirichlet_eigenvalues(mesh, region, 1)[0])
        err = abs(lam1 - exact)
        ratio = prev / err if prev is not None and err > 0 else float("nan")
        rows.append({"level": level, "h": mesh.mesh_size, "lambda1": lam1, "error": err, "ratio": ratio})
        logger.info("Dirichlet 阶梯 level=%d：λ1=%.10g，误差 %.3e", level, lam1, err)
        prev = err
    return pd.DataFrame(rows, columns=["level", "h", "lambda1", "error", "ratio"])


# ---------------------------
# 人造解
# ---------------------------
def manufactured_resolvent_case(
    mesh: FsiMesh, lam: float, seed: int, pencil: OperatorPencil | None = None
) -> tuple[StateH, StateH]:
    """返回 (x, φ*)。

    λ > 0 时 φ* = λx − M⁻¹Kx，即 solve_resolvent 的精确数据；
    λ = 0 时 φ* = M⁻¹Kx = Ax，与 solve_static 求解 Kx = Mφ* 的约定一致。
    """
    lam = float(lam)
    if not math.isfinite(lam) or lam < 0.0:
        raise DomainError(f"λ 必须 ≥ 0：{lam}")
    p = pencil if pencil is not None else assemble_pencil(mesh)
    x = random_state(p.dofs, np.random.default_rng(seed))
    ax = apply_generator(p, x)
    phi = ax if lam == 0.0 else lam * x - ax
    return x, phi
