"""多层热/薄波/厚波耦合系统的命令行入口。"""
from __future__ import annotations

import argparse
import logging
import sys

from mlfsi.assembly import FAULTS
from mlfsi.config import load_config_file, resolve_config
from mlfsi.core import SimulationService, exit_code_for, normalize_error

logger = logging.getLogger("mlfsi")


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"应为逗号分隔的整数：{text!r}") from None


def _setup_logging(args: argparse.Namespace) -> None:
    level = logging.INFO if args.verbose else getattr(logging, args.log_level)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    if args.log:
        handler = logging.FileHandler(args.log, encoding="utf-8")
        handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
        logging.getLogger().addHandler(handler)


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="配置文件（key = value，# 注释）")
    p.add_argument("--geometry", default=None, help="default 或网格文件路径")
    p.add_argument("--refinement", type=int, default=None, help="均匀加密次数（0..8，默认 2）")
    p.add_argument("--out", default=None, help="输出目录（默认 out）")
    p.add_argument("--seed", type=int, default=None, help="随机种子（默认 0）")
    p.add_argument("--svg", action="store_const", const=True, default=None, help="同时输出 SVG 图")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mlfsi", description="多层热-薄波-厚波耦合系统：有限元仿真与谱检验")
    ap.add_argument("--log", default="", help="日志文件（追加写入）")
    ap.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="日志级别")
    ap.add_argument("-v", "--verbose", action="store_true", help="等价于 --log-level INFO")

    sub = ap.add_subparsers(dest="cmd", required=True)

    # mesh
    p = sub.add_parser("mesh", help="生成或校验网格并写出网格文件")
    _add_run_options(p)
    p.add_argument("--in", dest="mesh_in", default=None, help="校验已有网格文件（不加密）")

    # simulate
    p = sub.add_parser("simulate", help="时间推进并输出能量曲线")
    _add_run_options(p)
    p.add_argument("--dt", type=float, default=None, help="时间步长（默认 0.01）")
    p.add_argument("--t-end", dest="t_end", type=float, default=None, help="终止时间（默认 50）")
    p.add_argument("--theta", type=float, default=None, help="θ 格式参数（0.5..1，默认 1 即后向 Euler）")
    p.add_argument("--initial", choices=["random", "zero"], default=None, help="初值：随机（单位能量）或零")
    p.add_argument("--flux", action="store_true", help="写出末状态的界面通量 flux.csv")

    # spectrum
    p = sub.add_parser("spectrum", help="离散谱与虚轴预解扫描")
    _add_run_options(p)
    p.add_argument("--betas", default=None, help="default、逗号列表或 log:lo:hi:每十倍点数")
    p.add_argument("--export-matrices", action="store_true", help="写出 M.coo 与 K.coo")

    # check
    p = sub.add_parser("check", help="运行不变量检查组")
    _add_run_options(p)
    p.add_argument("--lambda", dest="lam", type=float, default=None, help="强制性检查所用的 λ（默认 1）")
    p.add_argument("--inject-fault", choices=FAULTS, default=None, help=argparse.SUPPRESS)

    # convergence
    p = sub.add_parser("convergence", help="Dirichlet 特征值收敛阶梯与谱横坐标趋势")
    _add_run_options(p)
    p.add_argument("--ladder", type=_int_list, default=(1, 2, 3, 4), help="阶梯加密层级（默认 1,2,3,4）")
    p.add_argument("--levels", type=_int_list, default=(0, 1, 2), help="谱横坐标层级（默认 0,1,2）")
    return ap


_CONFIG_KEYS = ("geometry", "refinement", "dt", "t_end", "theta", "lam", "betas", "seed", "initial", "out", "svg")


def _service(args: argparse.Namespace) -> SimulationService:
    file_values = load_config_file(args.config) if args.config else {}
    overrides = {k: getattr(args, k) for k in _CONFIG_KEYS if hasattr(args, k)}
    cfg, defaults = resolve_config(file_values, overrides)
    return SimulationService(cfg, defaults)


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    _setup_logging(args)

    try:
        svc = _service(args)

        if args.cmd == "mesh":
            summary, path = svc.mesh(args.mesh_in)
            print(f"网格已写出：{path}")
            for key, value in summary.model_dump().items():
                print(f"{key} = {value}")
            return 0

        if args.cmd == "simulate":
            summary = svc.simulate(flux=args.flux)
            print(
                f"推进完成：{summary.steps} 步，维数 {summary.dim}，"
                f"E(0)={summary.initial_energy:.6e}，E(T)={summary.final_energy:.6e}，衰减比 {summary.decay_ratio:.3e}"
            )
            for name, frac in summary.component_decay.items():
                print(f"  {name}: {frac:.3e}")
            print(f"输出目录：{svc.out_dir}")
            return 0

        if args.cmd == "spectrum":
            summary = svc.spectrum(export_matrices=args.export_matrices)
            print(
                f"谱：维数 {summary.dim}，横坐标 {summary.spectral_abscissa:.6e}，"
                f"最小模 {summary.min_modulus:.6e}，到虚轴距离 {summary.axis_distance:.6e}"
            )
            if summary.scan_min_sigma is not None:
                print(f"扫描 {summary.scan_points} 点，最小奇异值 {summary.scan_min_sigma:.6e}")
            if not summary.stable:
                print("执行失败：稳定性证书不成立", file=sys.stderr)
                return 3
            return 0

        if args.cmd == "check":
            report = svc.check(fault=args.inject_fault)
            for result in report.results:
                print(result.line())
            if report.defaults:
                print(f"DEFAULTS {','.join(report.defaults)}")
            return 0 if report.passed else 3

        if args.cmd == "convergence":
            conv, trend = svc.convergence(args.ladder, args.levels)
            print(conv.to_string(index=False))
            print(trend.to_string(index=False))
            return 0

    except Exception as e:
        err = normalize_error(e)
        logger.debug("命令 %s 失败", args.cmd, exc_info=True)
        print(f"执行失败：{err}", file=sys.stderr)
        return exit_code_for(err)

    ap.error(f"未知命令：{args.cmd}")
    return 2


if __name__ == "__main__":
    raise SystemExit(main())
