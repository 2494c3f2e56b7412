from __future__ import annotations

import logging
from pathlib import Path
from typing import Any, Callable

import numpy as np
import pandas as pd

from mlfsi import assembly, diagnostics, resolvent, spectral, stepper
from mlfsi.config import write_resolved
from mlfsi.errors import (  # noqa: F401  对外统一从 core 取异常
    AssemblyConsistencyError,
    BoundsError,
    CompatibilityError,
    DimensionError,
    DomainError,
    FsiError,
    InvariantViolation,
    MeshValidationError,
    NumericError,
    ParseError,
    exit_code_for,
    normalize_error,
)
from mlfsi.fem import gradient_energy
from mlfsi.geometry import FsiMesh, build_default_geometry, load_mesh, mesh_summary, refine_uniform, save_mesh
from mlfsi.hspace import StateH, energy, inner_h, random_state, raw_from_state, save_state, validate_membership
from mlfsi.plotting import plot_energy, plot_spectrum
from mlfsi.schemas import CheckReport, CheckResult, MeshSummary, RunConfig, SimulationSummary, SpectrumSummary

logger = logging.getLogger(__name__)

RANDOM_DRAWS = 100
ROUND_TRIP_TOL = 1e-8
ROUTE_TOL = 1e-9
IDENTITY_TOL = 1e-10
JUNCTION_TOL = 1e-13


def _write_frame(df: pd.DataFrame, path: Path) -> Path:
    path.write_text(df.to_csv(index=False, float_format="%.17g", lineterminator="\n"), encoding="utf-8")
    return path


def _rel(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


class SimulationService:
    """命令行各子命令背后的运行逻辑；所有异常归一到 FsiError 体系。"""

    def __init__(self, config: RunConfig, defaults: list[str] | None = None):
        self.config = config
        self.defaults = list(defaults or [])
        self.out_dir = Path(config.out)

    # ---------------------------
    # 公共
    # ---------------------------
    def _prepare_out(self) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        write_resolved(self.config, self.out_dir)
        return self.out_dir

    def build_mesh(self) -> FsiMesh:
        cfg = self.config
        if cfg.geometry == "default":
            return build_default_geometry(cfg.refinement)
        path = Path(cfg.geometry)
        if not path.exists():
            raise BoundsError(f"网格文件不存在：{path}")
        mesh = load_mesh(path.read_text(encoding="utf-8"))
        for _ in range(cfg.refinement):
            mesh = refine_uniform(mesh)
        return mesh

    def initial_state(self, p: assembly.OperatorPencil) -> StateH:
        if self.config.initial == "zero":
            return StateH.zeros(p.dofs)
        x = random_state(p.dofs, np.random.default_rng(self.config.seed))
        return x / np.sqrt(energy(x, p.M))

    def _guarded(self, fn: Callable[[], Any]) -> Any:
        try:
            return fn()
        except Exception as exc:
            raise normalize_error(exc)

    # ---------------------------
    # mesh
    # ---------------------------
    def mesh(self, mesh_in: str | None = None) -> tuple[MeshSummary, Path]:
        def run() -> tuple[MeshSummary, Path]:
            if mesh_in:
                path = Path(mesh_in)
                if not path.exists():
                    raise BoundsError(f"网格文件不存在：{path}")
                mesh = load_mesh(path.read_text(encoding="utf-8"))
            else:
                mesh = self.build_mesh()
            out = self._prepare_out()
            target = out / "mesh.txt"
            target.write_text(save_mesh(mesh), encoding="utf-8")
            return MeshSummary(**mesh_summary(mesh)), target

        return self._guarded(run)

    # ---------------------------
    # simulate
    # ---------------------------
    def simulate(self, flux: bool = False) -> SimulationSummary:
        def run() -> SimulationSummary:
            cfg = self.config
            mesh = self.build_mesh()
            p = assembly.assemble_pencil(mesh)
            x0 = self.initial_state(p)
            out = self._prepare_out()
            trace = stepper.simulate(x0, cfg.dt, cfg.t_end, theta=cfg.theta, pencil=p)
            (out / "energy.csv").write_text(trace.to_csv(), encoding="utf-8")
            (out / "final.state").write_text(save_state(trace.final_state), encoding="utf-8")
            if cfg.svg:
                plot_energy(trace.times, trace.total_energy, out / "energy.svg")
            if flux:
                rec = diagnostics.recover_interface_flux(trace.final_state, p)
                _write_frame(rec.to_frame(), out / "flux.csv")
            if not trace.is_monotone():
                raise InvariantViolation("总能量不单调")
            return SimulationSummary(
                steps=len(trace) - 1,
                dim=p.dim,
                initial_energy=trace.total_energy[0],
                final_energy=trace.total_energy[-1],
                decay_ratio=trace.decay_ratio(),
                monotone=True,
                compat_drift=trace.compat_drift,
                component_decay=trace.component_decay(),
            )

        return self._guarded(run)

    # ---------------------------
    # spectrum
    # ---------------------------
    def spectrum(self, export_matrices: bool = False) -> SpectrumSummary:
        def run() -> SpectrumSummary:
            cfg = self.config
            mesh = self.build_mesh()
            p = assembly.assemble_pencil(mesh)
            betas = spectral.parse_beta_grid(cfg.betas)
            report = spectral.compute_spectrum(p, refinement_level=mesh.refinement)
            report.resolvent_scan = spectral.resolvent_scan(p, betas)
            out = self._prepare_out()
            _write_frame(report.to_frame(), out / "spectrum.csv")
            _write_frame(report.scan_frame(), out / "scan.csv")
            if cfg.svg:
                plot_spectrum(report.eigenvalues, out / "spectrum.svg")
            if export_matrices:
                (out / "M.coo").write_text(assembly.export_coo(p.M), encoding="utf-8")
                (out / "K.coo").write_text(assembly.export_coo(p.K), encoding="utf-8")
            sigmas = [s for _, s in report.resolvent_scan]
            return SpectrumSummary(
                dim=p.dim,
                refinement=report.refinement_level,
                spectral_abscissa=report.spectral_abscissa,
                min_modulus=report.min_modulus,
                axis_distance=report.axis_distance,
                scan_points=len(sigmas),
                scan_min_sigma=min(sigmas) if sigmas else None,
                stable=report.stable and all(s > 0 for s in sigmas),
            )

        return self._guarded(run)

    # ---------------------------
    # convergence
    # ---------------------------
    def convergence(self, ladder: tuple[int, ...] = (1, 2, 3, 4), levels: tuple[int, ...] = (0, 1, 2)) -> tuple[pd.DataFrame, pd.DataFrame]:
        def run() -> tuple[pd.DataFrame, pd.DataFrame]:
            out = self._prepare_out()
            conv = diagnostics.dirichlet_convergence_ladder(ladder, region="solid")
            trend = spectral.abscissa_trend(levels, spectral.parse_beta_grid(self.config.betas))
            _write_frame(conv, out / "convergence.csv")
            _write_frame(trend, out / "abscissa.csv")
            return conv, trend

        return self._guarded(run)

    # ---------------------------
    # check
    # ---------------------------
    def check(self, fault: str | None = None) -> CheckReport:
        def run() -> CheckReport:
            with assembly.inject_fault(fault):
                mesh = self.build_mesh()
                p = assembly.assemble_pencil(mesh)
                rng = np.random.default_rng(self.config.seed)
                results = [
                    self._run_check("dissipation_identity", lambda: _check_dissipation(p, rng)),
                    self._run_check("junction_cancellation", lambda: _check_junctions(p, rng)),
                    self._run_check("adjoint_identity", lambda: _check_adjoint(p, rng)),
                    self._run_check("resolvent_round_trip", lambda: _check_resolvent(p, self.config.seed)),
                    self._run_check("static_round_trip", lambda: _check_static(p, self.config.seed)),
                    self._run_check("compatibility_validation", lambda: _check_compatibility(p, rng)),
                    self._run_check("contraction_ledger", lambda: _check_contraction(p, self.config.seed)),
                    self._run_check("coercivity", lambda: _check_coercivity(p, self.config.lam)),
                ]
            report = CheckReport(results=results, defaults=self.defaults)
            out = self._prepare_out()
            (out / "check.txt").write_text("\n".join(r.line() for r in results) + "\n", encoding="utf-8")
            return report

        return self._guarded(run)

    @staticmethod
    def _run_check(name: str, fn: Callable[[], tuple[float, bool, str]]) -> CheckResult:
        try:
            value, passed, detail = fn()
        except Exception as exc:
            norm = normalize_error(exc)
            if not isinstance(norm, FsiError):
                raise
            logger.warning("检查 %s 失败：%s", name, norm)
            return CheckResult(name=name, passed=False, detail=str(norm))
        return CheckResult(name=name, passed=passed, value=value, detail=detail)


# ---------------------------
# 不变量检查
# ---------------------------
def _check_dissipation(p: assembly.OperatorPencil, rng: np.random.Generator) -> tuple[float, bool, str]:
    mesh = p.mesh
    worst = 0.0
    for _ in range(RANDOM_DRAWS):
        x = random_state(p.dofs, rng)
        u = p.dofs.P_u @ x.coeffs
        grad = gradient_energy(mesh.nodes, mesh.fluid_triangles, u)
        worst = max(worst, abs(float(x.coeffs @ (p.K @ x.coeffs)) + grad) / inner_h(x, x, p.M))
    return worst, worst <= IDENTITY_TOL, "|xᵀKx + ‖∇u‖²| / ‖x‖²_H"


def _check_junctions(p: assembly.OperatorPencil, rng: np.random.Generator) -> tuple[float, bool, str]:
    worst = 0.0
    for _ in range(RANDOM_DRAWS):
        x = random_state(p.dofs, rng)
        total = assembly.junction_flux_sum(p, x)
        table = assembly.junction_flux_table(p, x)
        h1_at = dict(zip(p.dofs.gamma.tolist(), x.h1))
        scale = sum((abs(r.flux_in) + abs(r.flux_out)) * abs(h1_at[int(r.node)]) for r in table.itertuples())
        worst = max(worst, abs(total) / max(scale, 1e-300))
    return worst, worst <= JUNCTION_TOL, "|Σ 端点通量·h1| / 规模"


def _check_adjoint(p: assembly.OperatorPencil, rng: np.random.Generator) -> tuple[float, bool, str]:
    adj = assembly.assemble_adjoint(p.mesh, p)
    worst = 0.0
    for _ in range(RANDOM_DRAWS):
        x, y = random_state(p.dofs, rng), random_state(p.dofs, rng)
        ax, ay = assembly.apply_generator(p, x), assembly.apply_adjoint(adj, y)
        lhs, rhs = inner_h(ax, y, p.M), inner_h(x, ay, p.M)
        scale = np.sqrt(inner_h(ax, ax, p.M) * inner_h(y, y, p.M)) + np.sqrt(inner_h(x, x, p.M) * inner_h(ay, ay, p.M))
        worst = max(worst, abs(lhs - rhs) / scale)
    return worst, worst <= IDENTITY_TOL, f"‖K_adj − Kᵀ‖_max = {adj.deviation:.1e}"


def _check_resolvent(p: assembly.OperatorPencil, seed: int) -> tuple[float, bool, str]:
    worst_rt, worst_route = 0.0, 0.0
    for k, lam in enumerate((0.1, 1.0, 10.0)):
        x, phi = diagnostics.manufactured_resolvent_case(p.mesh, lam, seed + k, pencil=p)
        got = resolvent.solve_resolvent(phi, lam)
        mono = resolvent.solve_monolithic(phi, lam)
        worst_rt = max(worst_rt, _rel(got.coeffs, x.coeffs))
        worst_route = max(worst_route, _rel(got.coeffs, mono.coeffs))
    ok = worst_rt <= ROUND_TRIP_TOL and worst_route <= ROUTE_TOL
    return worst_rt, ok, f"B 路径与整体路径差 {worst_route:.1e}"


def _check_static(p: assembly.OperatorPencil, seed: int) -> tuple[float, bool, str]:
    x, phi = diagnostics.manufactured_resolvent_case(p.mesh, 0.0, seed, pencil=p)
    got = resolvent.solve_static(phi, p)
    err = _rel(got.coeffs, x.coeffs)
    return err, err <= ROUND_TRIP_TOL, "solve_static(Ax) = x"


def _check_compatibility(p: assembly.OperatorPencil, rng: np.random.Generator) -> tuple[float, bool, str]:
    mesh = p.mesh
    x = random_state(p.dofs, rng)
    back = validate_membership(raw_from_state(x), mesh)
    err = float(np.max(np.abs(back.coeffs - x.coeffs)) / np.max(np.abs(x.coeffs)))
    raw = raw_from_state(x)
    raw.h0[0] = raw.h0[0] + 1e-3
    try:
        validate_membership(raw, mesh, tol=1e-12)
    except CompatibilityError as exc:
        rejected = exc.condition == "i"
    else:
        rejected = False
    return err, err <= 1e-15 and rejected, "相容数据接受、h0 扰动被条件 (i) 拒绝"


def _check_contraction(p: assembly.OperatorPencil, seed: int) -> tuple[float, bool, str]:
    x = random_state(p.dofs, np.random.default_rng(seed))
    trace = stepper.simulate(x, 0.01, 0.2, pencil=p)
    return trace.decay_ratio(), trace.is_monotone(), "20 步后向 Euler，账本逐步成立"


def _check_coercivity(p: assembly.OperatorPencil, lam: float) -> tuple[float, bool, str]:
    system = resolvent.assemble_b_form(p.mesh, lam, pencil=p)
    c = resolvent.coercivity_constant(system)
    bound = min(lam, 1.0 / lam)
    return c, c >= bound * (1.0 - 1e-9), f"下界 min(λ, 1/λ) = {bound:g}"
