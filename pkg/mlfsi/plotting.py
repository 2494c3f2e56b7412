"""可选 SVG 输出：能量曲线与复平面谱。"""
from __future__ import annotations

import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "mlfsi"
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

logger = logging.getLogger(__name__)

# 固定 SVG 元数据，保证同一输入字节一致
_SVG_META = {"Date": None, "Creator": None}


def plot_energy(times, energy, path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    try:
        positive = np.asarray(energy) > 0
        if np.all(positive) and len(energy) > 1:
            ax.semilogy(times, energy, lw=1.2)
        else:
            ax.plot(times, energy, lw=1.2)
        ax.set_xlabel("t")
        ax.set_ylabel("E_total")
        ax.grid(True, which="both", alpha=0.3)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata=_SVG_META)
    finally:
        plt.close(fig)
    logger.info("写出 %s", path)
    return Path(path)


def plot_spectrum(eigenvalues: np.ndarray, path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 5))
    try:
        ax.scatter(eigenvalues.real, eigenvalues.imag, s=6)
        ax.axvline(0.0, color="k", lw=0.6)
        ax.set_xlabel("Re λ")
        ax.set_ylabel("Im λ")
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata=_SVG_META)
    finally:
        plt.close(fig)
    logger.info("写出 %s", path)
    return Path(path)
