"""运行配置：`key = value` 文件、命令行覆盖、环境变量与 resolved.config。"""
from __future__ import annotations

import logging
import os
from pathlib import Path
from typing import Any

from mlfsi.errors import BoundsError, ParseError
from mlfsi.schemas import RunConfig

logger = logging.getLogger(__name__)

ENV_THREADS = "MLFSI_THREADS"
RESOLVED_NAME = "resolved.config"


def thread_count() -> int:
    raw = os.environ.get(ENV_THREADS, "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise BoundsError(f"环境变量 {ENV_THREADS} 不是整数：{raw!r}") from None
    if n < 1:
        raise BoundsError(f"环境变量 {ENV_THREADS} 必须 ≥ 1：{n}")
    return n


def parse_config_text(text: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("配置行应为 `key = value`", line=lineno, section="config")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ParseError("配置键为空", line=lineno, section="config")
        if key in values:
            raise ParseError(f"配置键 {key} 重复", line=lineno, section="config")
        values[key] = value
    return values


def load_config_file(path: str | Path) -> dict[str, str]:
    p = Path(path)
    if not p.exists():
        raise BoundsError(f"配置文件不存在：{p}")
    return parse_config_text(p.read_text(encoding="utf-8"))


def resolve_config(file_values: dict[str, Any] | None = None, overrides: dict[str, Any] | None = None) -> tuple[RunConfig, list[str]]:
    """默认值 < 配置文件 < 命令行；返回配置与取默认值的字段名。"""
    merged: dict[str, Any] = {}
    merged.update(file_values or {})
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    if "lambda" in merged and "lam" in merged:
        merged.pop("lambda")
    cfg = RunConfig.model_validate(merged)
    given = {"lam" if k == "lambda" else k for k in merged}
    defaults = sorted(name for name in RunConfig.model_fields if name not in given)
    logger.debug("配置：%s（默认 %s）", cfg, defaults)
    return cfg, defaults


def write_resolved(cfg: RunConfig, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / RESOLVED_NAME
    path.write_text("".join(f"{k} = {v}\n" for k, v in cfg.items()), encoding="utf-8")
    return path
