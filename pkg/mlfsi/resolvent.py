"""预解方程 (λI − A)Φ = Φ* 与静态方程 AΦ = Φ* 的求解。

速度三元组 [u, h1(=gamma), w1] 由 W-椭圆双线性型 B 求得，位置由
h0 = (h1 + h0*)/λ、w0 = (w1 + w0*)/λ 回代。
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from mlfsi.assembly import OperatorPencil, assemble_pencil
from mlfsi.errors import DimensionError, DomainError, NumericError
from mlfsi.geometry import FsiMesh
from mlfsi.hspace import DofMap, StateH, dofmap, random_state, sandwich, w_norm_gram
from mlfsi.solvers import FactorizedSolver

logger = logging.getLogger(__name__)

LAMBDA_MIN = 1e-6
RESIDUAL_TOL = 1e-10
DENSE_LIMIT = 4000


def check_lambda(lam: float) -> float:
    lam = float(lam)
    if not np.isfinite(lam) or lam <= 0.0:
        raise DomainError(f"λ 必须为正数：{lam}")
    if lam < LAMBDA_MIN:
        raise DomainError(f"λ = {lam:g} 小于下限 {LAMBDA_MIN:g}")
    return lam


def relative_residual(r: np.ndarray, *terms: np.ndarray) -> float:
    scale = sum(float(np.linalg.norm(t)) for t in terms)
    norm = float(np.linalg.norm(r))
    return 0.0 if scale == 0.0 else norm / scale


@dataclass(frozen=True, eq=False)
class ResolventSystem:
    lam: float
    B: sp.csr_matrix
    pencil: OperatorPencil

    @property
    def dofs(self) -> DofMap:
        return self.pencil.dofs

    @cached_property
    def solver(self) -> FactorizedSolver:
        return FactorizedSolver(self.B, name=f"B(λ={self.lam:g})")

    @cached_property
    def Mv(self) -> sp.csr_matrix:
        slots = self.dofs.velocity_slots
        return sp.csr_matrix(self.pencil.M[slots][:, slots])

    @cached_property
    def Mp(self) -> sp.csr_matrix:
        slots = self.dofs.position_slots
        return sp.csr_matrix(self.pencil.M[slots][:, slots])

    def solve(self, phi_star: StateH) -> StateH:
        return _solve_with(self, phi_star)


def _velocity_forms(dofs: DofMap) -> tuple[sp.csr_matrix, sp.csr_matrix, sp.csr_matrix]:
    """速度子布局上的质量、流体刚度与位置刚度 S1ᵀ M_p S1。"""
    ops = dofs.ops
    mass = sandwich(dofs.V_u, ops.Mf) + sandwich(dofs.V_g, ops.Me) + sandwich(dofs.V_w1, ops.Ms)
    heat = sandwich(dofs.V_u, ops.Sf)
    elastic = sandwich(dofs.V_w1, ops.Ss) + sandwich(dofs.V_g, ops.Se + ops.Me)
    return sp.csr_matrix(mass), heat, sp.csr_matrix(elastic)


def assemble_b_form(mesh: FsiMesh, lam: float, pencil: OperatorPencil | None = None) -> ResolventSystem:
    lam = check_lambda(lam)
    dofs = dofmap(mesh)
    mass, heat, elastic = _velocity_forms(dofs)
    B = sp.csr_matrix(lam * mass + heat + (1.0 / lam) * elastic)
    logger.debug("组装 B(λ=%g)：维数 %d", lam, B.shape[0])
    return ResolventSystem(lam=lam, B=B, pencil=pencil if pencil is not None else assemble_pencil(mesh))


def rhs_f_lambda(phi_star: StateH, lam: float) -> np.ndarray:
    """F_λ = (M φ*)_速度 − (1/λ) S1ᵀ M_p w0*。"""
    lam = check_lambda(lam)
    dofs = phi_star.dofs
    M = assemble_pencil(dofs.mesh).M
    return _rhs(dofs, M, phi_star, lam)


def _rhs(dofs: DofMap, M: sp.csr_matrix, phi_star: StateH, lam: float) -> np.ndarray:
    v_slots, p_slots = dofs.velocity_slots, dofs.position_slots
    Mphi = M @ phi_star.coeffs
    return Mphi[v_slots] - (1.0 / lam) * (dofs.S1.T @ Mphi[p_slots])


def _solve_with(system: ResolventSystem, phi_star: StateH) -> StateH:
    dofs, lam, p = system.dofs, system.lam, system.pencil
    if phi_star.dofs is not dofs:
        raise DimensionError("φ* 与预解系统不在同一布局上")
    v = system.solver.solve(_rhs(dofs, p.M, phi_star, lam))
    x = np.zeros(dofs.total_dim)
    x[dofs.velocity_slots] = v
    x[dofs.position_slots] = (dofs.S1 @ v + phi_star.coeffs[dofs.position_slots]) / lam
    Mphi = p.M @ phi_star.coeffs
    lhs = lam * (p.M @ x)
    Kx = p.K @ x
    res = relative_residual(lhs - Kx - Mphi, lhs, Kx, Mphi)
    logger.debug("预解残差 λ=%g：%.3e", lam, res)
    if res > RESIDUAL_TOL:
        raise NumericError(f"预解方程残差超限（λ={lam:g}）", residual=res)
    return StateH(dofs, x)


def solve_resolvent(phi_star: StateH, lam: float) -> StateH:
    return assemble_b_form(phi_star.dofs.mesh, lam).solve(phi_star)


def solve_monolithic(phi_star: StateH, lam: float) -> StateH:
    """第二条代数路径：直接解 (λM − K)x = M φ*。"""
    lam = check_lambda(lam)
    p = assemble_pencil(phi_star.dofs.mesh)
    solver = FactorizedSolver(lam * p.M - p.K, name=f"λM−K(λ={lam:g})")
    return StateH(phi_star.dofs, solver.solve(p.M @ phi_star.coeffs))


def solve_static(phi_star: StateH, pencil: OperatorPencil | None = None) -> StateH:
    """K x = M φ*：先读出速度，再解流体 Dirichlet 问题，最后解位置的椭圆系统。"""
    dofs = phi_star.dofs
    p = pencil if pencil is not None else assemble_pencil(dofs.mesh)
    o = dofs.offsets
    vo = dofs.velocity_offsets
    Mphi = p.M @ phi_star.coeffs
    w0_star = phi_star.block("w0_all")

    x = np.zeros(dofs.total_dim)
    # 速度：gamma = h0*，w1 内部 = w0*
    solid_pos = np.searchsorted(dofs.w0_all, dofs.gamma)
    x[o["gamma"]] = w0_star[solid_pos]
    x[o["w1_interior"]] = w0_star[np.searchsorted(dofs.w0_all, dofs.w1_interior)]

    # 流体：Af_II u_I = −(Mφ*)_uI − Af_IΓ gamma
    Af = p.Af
    u_slots = np.arange(o["u_interior"].start, o["u_interior"].stop)
    if len(u_slots):
        A_II = Af[u_slots][:, u_slots]
        rhs = -Mphi[u_slots] - Af[u_slots] @ x
        x[u_slots] = FactorizedSolver(A_II, name="流体 Dirichlet").solve(rhs)

    # 位置：S1ᵀ M_p p = −(Mφ* + Af x) 限制在 gamma 与 w1 内部行
    rows = np.concatenate(
        [np.arange(o["gamma"].start, o["gamma"].stop), np.arange(o["w1_interior"].start, o["w1_interior"].stop)]
    )
    target = -(Mphi + Af @ x)[rows]
    v_cols = np.concatenate(
        [np.arange(vo["gamma"].start, vo["gamma"].stop), np.arange(vo["w1_interior"].start, vo["w1_interior"].stop)]
    )
    perm = sp.csr_matrix(dofs.S1[:, v_cols])  # w0 槽位 <- (gamma, w1 内部)，为置换矩阵
    slots = dofs.position_slots
    Mp = p.M[slots][:, slots]
    x[slots] = FactorizedSolver(Mp, name="位置椭圆系统").solve(perm @ target)

    Kx = p.K @ x
    res = relative_residual(Kx - Mphi, Kx, Mphi)
    logger.debug("静态求解残差 %.3e", res)
    if res > RESIDUAL_TOL:
        raise NumericError("静态方程残差超限", residual=res)
    return StateH(dofs, x)


def coercivity_constant(system: ResolventSystem) -> float:
    """B 相对 W 范数 Gram 矩阵的最小广义特征值。"""
    n = system.B.shape[0]
    if n > DENSE_LIMIT:
        raise DimensionError(f"稠密特征值计算维数 {n} 超过上限 {DENSE_LIMIT}")
    W = w_norm_gram(system.dofs)
    vals = sla.eigh(system.B.toarray(), W.toarray(), eigvals_only=True, subset_by_index=[0, 0])
    return float(vals[0])


def static_inverse_bound(mesh: FsiMesh, draws: int = 50, seed: int = 0) -> dict[str, float]:
    """经验估计 ‖A⁻¹‖：max ‖x‖_H / ‖φ*‖_H。"""
    p = assemble_pencil(mesh)
    rng = np.random.default_rng(seed)
    ratios = []
    for _ in range(draws):
        phi = random_state(p.dofs, rng)
        x = solve_static(phi, p)
        ratios.append(np.sqrt(x.coeffs @ (p.M @ x.coeffs)) / np.sqrt(phi.coeffs @ (p.M @ phi.coeffs)))
    out = {"draws": float(draws), "max_ratio": float(np.max(ratios)), "mean_ratio": float(np.mean(ratios))}
    logger.info("静态逆界：%s", out)
    return out
