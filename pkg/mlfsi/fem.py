"""P1 单元核与全局稀疏组装（三角形与界面线段）。"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)

_TRI_MASS_REF = (np.ones((3, 3)) + np.eye(3)) / 12.0
_SEG_MASS_REF = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
_SEG_STIFF_REF = np.array([[1.0, -1.0], [-1.0, 1.0]])


def signed_areas(nodes: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p0 = nodes[triangles[:, 0]]
    p1 = nodes[triangles[:, 1]]
    p2 = nodes[triangles[:, 2]]
    e1 = p1 - p0
    e2 = p2 - p0
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def p1_gradients(nodes: np.ndarray, triangles: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """返回 (T,3,2) 重心坐标梯度与 (T,) 面积；要求逆时针定向。"""
    area = signed_areas(nodes, triangles)
    x = nodes[triangles, 0]
    y = nodes[triangles, 1]
    grads = np.empty((len(triangles), 3, 2))
    for a in range(3):
        b, c = (a + 1) % 3, (a + 2) % 3
        grads[:, a, 0] = y[:, b] - y[:, c]
        grads[:, a, 1] = x[:, c] - x[:, b]
    grads /= (2.0 * area)[:, None, None]
    return grads, area


def triangle_stiffness(nodes: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    grads, area = p1_gradients(nodes, triangles)
    return np.einsum("tad,tbd->tab", grads, grads) * area[:, None, None]


def triangle_mass(nodes: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    area = signed_areas(nodes, triangles)
    return area[:, None, None] * _TRI_MASS_REF[None, :, :]


def segment_lengths(nodes: np.ndarray, segments: np.ndarray) -> np.ndarray:
    d = nodes[segments[:, 1]] - nodes[segments[:, 0]]
    return np.hypot(d[:, 0], d[:, 1])


def segment_mass(nodes: np.ndarray, segments: np.ndarray) -> np.ndarray:
    length = segment_lengths(nodes, segments)
    return length[:, None, None] * _SEG_MASS_REF[None, :, :]


def segment_stiffness(nodes: np.ndarray, segments: np.ndarray) -> np.ndarray:
    length = segment_lengths(nodes, segments)
    return _SEG_STIFF_REF[None, :, :] / length[:, None, None]


def assemble(n: int, connectivity: np.ndarray, local: np.ndarray) -> sp.csr_matrix:
    """按单元顺序累加局部矩阵；结果按对称形式精确对称化。"""
    k = connectivity.shape[1]
    if len(connectivity) == 0:
        return sp.csr_matrix((n, n))
    rows = np.repeat(connectivity[:, :, None], k, axis=2)
    cols = np.repeat(connectivity[:, None, :], k, axis=1)
    mat = sp.coo_matrix((local.ravel(), (rows.ravel(), cols.ravel())), shape=(n, n)).tocsr()
    mat.sum_duplicates()
    return ((mat + mat.T) * 0.5).tocsr()


def selection(shape: tuple[int, int], row_ids: np.ndarray, col_ids: np.ndarray) -> sp.csr_matrix:
    """0/1 选择矩阵 P，(P x)[row_ids[k]] = x[col_ids[k]]。"""
    return sp.csr_matrix((np.ones(len(row_ids)), (row_ids, col_ids)), shape=shape)


@dataclass(frozen=True, eq=False)
class FemOperators:
    """按全局节点编号组装的六个基本矩阵（N×N）。"""

    Mf: sp.csr_matrix
    Sf: sp.csr_matrix
    Ms: sp.csr_matrix
    Ss: sp.csr_matrix
    Me: sp.csr_matrix
    Se: sp.csr_matrix


def build_operators(
    nodes: np.ndarray, fluid_triangles: np.ndarray, solid_triangles: np.ndarray, segments: np.ndarray
) -> FemOperators:
    n = len(nodes)
    ops = FemOperators(
        Mf=assemble(n, fluid_triangles, triangle_mass(nodes, fluid_triangles)),
        Sf=assemble(n, fluid_triangles, triangle_stiffness(nodes, fluid_triangles)),
        Ms=assemble(n, solid_triangles, triangle_mass(nodes, solid_triangles)),
        Ss=assemble(n, solid_triangles, triangle_stiffness(nodes, solid_triangles)),
        Me=assemble(n, segments, segment_mass(nodes, segments)),
        Se=assemble(n, segments, segment_stiffness(nodes, segments)),
    )
    logger.info("组装 P1 矩阵：%d 节点，%d 流体 / %d 固体三角形，%d 界面线段", n, len(fluid_triangles), len(solid_triangles), len(segments))
    return ops


def gradient_energy(nodes: np.ndarray, triangles: np.ndarray, values: np.ndarray) -> float:
    """逐单元梯度求积 Σ|∇v|²·area，与刚度矩阵无关的独立计算。"""
    grads, area = p1_gradients(nodes, triangles)
    g = np.einsum("tad,ta->td", grads, values[triangles])
    return float(np.sum(np.einsum("td,td->t", g, g) * area))
