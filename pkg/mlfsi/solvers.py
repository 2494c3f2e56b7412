"""稀疏 LU 分解求解器，带迭代改进与残差契约。"""
from __future__ import annotations

import logging

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from mlfsi.errors import NumericError

logger = logging.getLogger(__name__)


class FactorizedSolver:
    """对固定矩阵做一次 SuperLU 分解，之后可反复求解（只读，可并发）。

    残差以后向误差度量：‖b − Ax‖∞ / (‖A‖∞‖x‖∞ + ‖b‖∞)。
    """

    def __init__(self, matrix: sp.spmatrix, *, name: str = "system", tol: float = 1e-12, max_refine: int = 3):
        self.name = name
        self.tol = tol
        self.max_refine = max_refine
        self.matrix = sp.csc_matrix(matrix)
        if self.matrix.shape[0] != self.matrix.shape[1]:
            raise NumericError(f"{name} 不是方阵：{self.matrix.shape}")
        self.norm = float(abs(self.matrix).sum(axis=1).max()) if self.matrix.nnz else 0.0
        try:
            self._lu = spla.splu(self.matrix)
        except RuntimeError as exc:
            raise NumericError(f"{name} 分解失败：{exc}") from exc
        logger.debug("分解 %s：n=%d nnz=%d", name, self.matrix.shape[0], self.matrix.nnz)

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    def backward_error(self, x: np.ndarray, rhs: np.ndarray) -> float:
        r = rhs - self.matrix @ x
        denom = self.norm * np.max(np.abs(x), initial=0.0) + np.max(np.abs(rhs), initial=0.0)
        return 0.0 if denom == 0.0 else float(np.max(np.abs(r), initial=0.0) / denom)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs)
        if rhs.shape[0] != self.shape[0]:
            raise NumericError(f"{self.name} 右端长度 {rhs.shape[0]} 与矩阵维数 {self.shape[0]} 不符")
        if not np.any(rhs):
            return np.zeros_like(rhs, dtype=np.result_type(rhs, float))
        x = self._lu.solve(rhs)
        err = self.backward_error(x, rhs)
        sweeps = 0
        while err > self.tol and sweeps < self.max_refine:
            x = x + self._lu.solve(rhs - self.matrix @ x)
            err = self.backward_error(x, rhs)
            sweeps += 1
        if sweeps > 1:
            logger.warning("%s 迭代改进 %d 次，残差 %.3e", self.name, sweeps, err)
        logger.debug("%s 求解残差 %.3e", self.name, err)
        if not np.all(np.isfinite(x)) or err > self.tol:
            raise NumericError(f"{self.name} 求解未达到残差要求", residual=err)
        return x
