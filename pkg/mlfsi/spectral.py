"""矩阵束 (K, M_H) 的全谱、虚轴上的预解扫描与伴随谱核对。"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.optimize import linear_sum_assignment

from mlfsi.assembly import AdjointPencil, OperatorPencil, Pencil, assemble_pencil
from mlfsi.config import thread_count
from mlfsi.errors import AssemblyConsistencyError, BoundsError, NumericError
from mlfsi.geometry import FsiMesh, build_default_geometry
from mlfsi.hspace import dofmap

logger = logging.getLogger(__name__)

DENSE_LIMIT = 4000
BETA_MAX = 1e4
PAIRING_TOL = 1e-9
ADJOINT_SPECTRUM_TOL = 1e-7
TREND_COLUMNS = ["level", "dim", "abscissa", "min_modulus", "axis_distance", "min_sigma", "beta_at_min"]


@dataclass
class SpectrumReport:
    eigenvalues: np.ndarray
    spectral_abscissa: float
    min_modulus: float
    axis_distance: float
    refinement_level: int | None = None
    resolvent_scan: list[tuple[float, float]] = field(default_factory=list)

    @property
    def stable(self) -> bool:
        return self.spectral_abscissa < 0.0 and self.min_modulus > 0.0

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"re": self.eigenvalues.real, "im": self.eigenvalues.imag})

    def scan_frame(self) -> pd.DataFrame:
        return scan_frame(self.resolvent_scan)


def scan_frame(samples: list[tuple[float, float]]) -> pd.DataFrame:
    return pd.DataFrame(samples, columns=["beta", "sigma_min"])


def _guard(p: Pencil) -> None:
    if p.dim > DENSE_LIMIT:
        raise BoundsError(f"矩阵束维数 {p.dim} 超过稠密计算上限 {DENSE_LIMIT}")


def _reduced(p: Pencil) -> np.ndarray:
    """A = L⁻¹ K L⁻ᵀ，M = L Lᵀ。"""
    try:
        L = sla.cholesky(p.M.toarray(), lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"M_H 的 Cholesky 分解失败：{exc}") from exc
    X = sla.solve_triangular(L, p.K.toarray(), lower=True)
    return sla.solve_triangular(L, X.T, lower=True).T


def _pair_conjugates(vals: np.ndarray) -> np.ndarray:
    """强制共轭对称：近实特征值取实部，上下半平面逐一配对后取平均。"""
    scale = max(1.0, float(np.max(np.abs(vals), initial=0.0)))
    tol = PAIRING_TOL * scale
    vals = vals.copy()
    near_real = np.abs(vals.imag) <= tol
    vals[near_real] = vals[near_real].real
    upper = np.flatnonzero(vals.imag > 0)
    lower = np.flatnonzero(vals.imag < 0)
    if len(upper) != len(lower):
        raise NumericError(f"特征值无法共轭配对：上半平面 {len(upper)} 个，下半平面 {len(lower)} 个")
    if len(upper):
        cost = np.abs(vals[upper][:, None] - np.conj(vals[lower])[None, :])
        rows, cols = linear_sum_assignment(cost)
        worst = float(cost[rows, cols].max())
        if worst > tol:
            raise NumericError("特征值共轭配对偏差超限", residual=worst)
        avg = 0.5 * (vals[upper[rows]] + np.conj(vals[lower[cols]]))
        vals[upper[rows]] = avg
        vals[lower[cols]] = np.conj(avg)
    order = np.lexsort((vals.imag, vals.real))
    return vals[order]


def generalized_eigenvalues(p: Pencil) -> np.ndarray:
    _guard(p)
    return _pair_conjugates(sla.eigvals(_reduced(p)))


def compute_spectrum(p: Pencil, refinement_level: int | None = None) -> SpectrumReport:
    vals = generalized_eigenvalues(p)
    # 迹校验：Σλ = tr(M⁻¹K)
    trace = trace_oracle(p)
    total = float(np.sum(vals).real)
    rel = abs(total - trace) / max(float(np.sum(np.abs(vals))), 1e-300)
    if rel > 1e-6:
        raise NumericError("特征值之和与 tr(M⁻¹K) 不符", residual=rel)
    if refinement_level is None and isinstance(p, OperatorPencil):
        refinement_level = p.mesh.refinement
    report = SpectrumReport(
        eigenvalues=vals,
        spectral_abscissa=float(np.max(vals.real)),
        min_modulus=float(np.min(np.abs(vals))),
        axis_distance=float(np.min(np.abs(vals.real))),
        refinement_level=refinement_level,
    )
    logger.info(
        "谱：维数 %d，abscissa=%.6e，min|λ|=%.6e", p.dim, report.spectral_abscissa, report.min_modulus
    )
    return report


def trace_oracle(p: Pencil) -> float:
    """tr(M⁻¹K)，由稠密求解独立计算。"""
    return float(np.trace(sla.solve(p.M.toarray(), p.K.toarray(), assume_a="pos")))


# ---------------------------
# 预解扫描
# ---------------------------
def default_beta_grid() -> np.ndarray:
    """β = 0 加上 [1e−2, 1e3] 上每十倍程 400 个对数等距点。"""
    return np.concatenate([[0.0], np.logspace(-2.0, 3.0, 5 * 400 + 1)])


def parse_beta_grid(grid: str) -> np.ndarray:
    """`default`、逗号分隔列表，或 `log:<lo>:<hi>:<每十倍程点数>`。"""
    grid = grid.strip()
    if grid in ("", "default"):
        return default_beta_grid()
    try:
        if grid.startswith("log:"):
            _, lo, hi, per = grid.split(":")
            lo_f, hi_f, n = float(lo), float(hi), int(per)
            if lo_f <= 0 or hi_f <= lo_f or n < 1:
                raise BoundsError(f"对数网格参数无效：{grid}")
            count = int(round(math.log10(hi_f / lo_f) * n)) + 1
            betas = np.logspace(math.log10(lo_f), math.log10(hi_f), count)
        else:
            betas = np.array([float(tok) for tok in grid.split(",") if tok.strip()])
    except ValueError:
        raise BoundsError(f"无法解析 β 网格：{grid!r}") from None
    check_betas(betas)
    return betas


def check_betas(betas: np.ndarray) -> np.ndarray:
    betas = np.asarray(betas, dtype=float)
    if betas.size == 0:
        raise BoundsError("β 网格为空")
    if not np.all(np.isfinite(betas)):
        raise BoundsError("β 必须为有限值")
    if np.max(np.abs(betas)) > BETA_MAX:
        raise BoundsError(f"|β| 超过上限 {BETA_MAX:g}")
    return betas


def resolvent_scan(p: Pencil, betas, threads: int | None = None) -> list[tuple[float, float]]:
    """每个 β 上 (iβM − K) 的最小奇异值；按 β 顺序返回。"""
    betas = check_betas(betas)
    _guard(p)
    Md, Kd = p.M.toarray(), p.K.toarray()
    workers = threads if threads is not None else thread_count()

    def sigma_min(beta: float) -> float:
        return float(sla.svdvals(1j * beta * Md - Kd)[-1])

    with ThreadPoolExecutor(max_workers=workers) as pool:
        sigmas = list(pool.map(sigma_min, betas.tolist()))
    samples = list(zip(betas.tolist(), sigmas))
    logger.info("预解扫描：%d 个 β，min σ = %.6e（%d 线程）", len(samples), min(sigmas), workers)
    return samples


# ---------------------------
# 伴随谱
# ---------------------------
@dataclass
class AdjointSpectrumReport:
    max_mismatch: float
    abscissa_primal: float
    abscissa_adjoint: float
    min_modulus_adjoint: float


def adjoint_spectrum_check(p: Pencil, a: AdjointPencil) -> AdjointSpectrumReport:
    primal = generalized_eigenvalues(p)
    adjoint = generalized_eigenvalues(a)
    cost = np.abs(adjoint[:, None] - np.conj(primal)[None, :])
    rows, cols = linear_sum_assignment(cost)
    mismatch = float(cost[rows, cols].max()) if len(rows) else 0.0
    scale = max(1.0, float(np.max(np.abs(primal), initial=0.0)))
    if mismatch > ADJOINT_SPECTRUM_TOL * scale:
        raise AssemblyConsistencyError("伴随谱与原谱的共轭不一致", deviation=mismatch)
    return AdjointSpectrumReport(
        max_mismatch=mismatch,
        abscissa_primal=float(np.max(primal.real)),
        abscissa_adjoint=float(np.max(adjoint.real)),
        min_modulus_adjoint=float(np.min(np.abs(adjoint))),
    )


# ---------------------------
# 对照与诊断
# ---------------------------
def frozen_interface_pencil(mesh: FsiMesh) -> Pencil:
    """界面固定的厚层波动：K = [[0, S_II], [−S_II, 0]]，M = diag(S_II, M_II)，谱为 ±i√μ_k。"""
    dofs = dofmap(mesh)
    interior = dofs.w1_interior
    ops = dofs.ops
    S = ops.Ss[interior][:, interior]
    Ms = ops.Ms[interior][:, interior]
    Z = sp.csr_matrix(S.shape)
    M = sp.bmat([[S, None], [None, Ms]], format="csr")
    K = sp.bmat([[Z, S], [-S, Z]], format="csr")
    return Pencil(M=M, K=K)


def silent_heat_modes(p: OperatorPencil, tol: float = 1e-8) -> int:
    """流体能量占比 ≤ tol 的特征向量个数（应为零）。"""
    _guard(p)
    Md = p.M.toarray()
    L = sla.cholesky(Md, lower=True)
    _, vecs = sla.eig(_reduced(p))
    x = sla.solve_triangular(L.T, vecs, lower=False)
    fluid = p.blocks.fluid.toarray()
    num = np.real(np.einsum("ik,ij,jk->k", x.conj(), fluid, x))
    den = np.real(np.einsum("ik,ij,jk->k", x.conj(), Md, x))
    count = int(np.sum(num <= tol * den))
    logger.info("无热分量的特征模态：%d", count)
    return count


def abscissa_trend(levels=(0, 1, 2), betas=None, threads: int | None = None) -> pd.DataFrame:
    """逐层报告谱横坐标与虚轴上 min_β s(β)；两者随加密趋近零。"""
    betas = default_beta_grid() if betas is None else check_betas(betas)
    rows = []
    for level in levels:
        p = assemble_pencil(build_default_geometry(level))
        rep = compute_spectrum(p, refinement_level=level)
        scan = resolvent_scan(p, betas, threads=threads)
        k = int(np.argmin([s for _, s in scan]))
        rows.append(
            {
                "level": level,
                "dim": p.dim,
                "abscissa": rep.spectral_abscissa,
                "min_modulus": rep.min_modulus,
                "axis_distance": rep.axis_distance,
                "min_sigma": scan[k][1],
                "beta_at_min": scan[k][0],
            }
        )
        logger.info("第 %d 层：横坐标 %.6e，min σ = %.6e（β = %g）", level, rep.spectral_abscissa, scan[k][1], scan[k][0])
    return pd.DataFrame(rows, columns=TREND_COLUMNS)
