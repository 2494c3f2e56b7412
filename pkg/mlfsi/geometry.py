"""两区域协调网格：流体区 Ω_f 包围凸多边形固体 Ω_s，界面 Γ_s 分解为直边 Γ_j。"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from mlfsi.errors import BoundsError, ConvexityError, MeshParseError, MeshValidationError, TopologyError
from mlfsi.fem import signed_areas

logger = logging.getLogger(__name__)

FLUID, SOLID = 0, 1
REGION_NAMES = ("fluid", "solid")
MAX_REFINEMENT = 8
SECTIONS = ("NODES", "TRIANGLES", "INTERFACE_EDGES", "OUTER_BOUNDARY")

_AREA_TOL = 1e-14
_STRAIGHT_TOL = 1e-10


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


# ---------------------------
# 界面图
# ---------------------------
@dataclass(frozen=True)
class Junction:
    node: int
    incoming: int  # 在此结束的边
    outgoing: int  # 在此开始的边


@dataclass(frozen=True, eq=False)
class InterfaceGraph:
    edges: tuple[tuple[int, ...], ...]
    junctions: tuple[Junction, ...]
    segments: np.ndarray
    segment_edge: np.ndarray
    nu: np.ndarray
    tangents: np.ndarray
    nj: np.ndarray  # (K,2,2)：[j,0] 起点外法向，[j,1] 终点外法向

    @property
    def K(self) -> int:
        return len(self.edges)

    @cached_property
    def nodes(self) -> np.ndarray:
        return _readonly(np.unique(self.segments))

    @staticmethod
    def end_sign(end: int) -> int:
        """沿环参数的外向符号：终点 +1，起点 -1。"""
        return 1 if end == 1 else -1

    def pairing(self) -> dict[tuple[int, int], tuple[int, int]]:
        """(边, 端) -> 配对的 (边, 端)；端 0 为起点，1 为终点。"""
        table: dict[tuple[int, int], tuple[int, int]] = {}
        for jn in self.junctions:
            table[(jn.incoming, 1)] = (jn.outgoing, 0)
            table[(jn.outgoing, 0)] = (jn.incoming, 1)
        return table

    def end_node(self, edge: int, end: int) -> int:
        poly = self.edges[edge]
        return poly[-1] if end == 1 else poly[0]

    def equals(self, other: InterfaceGraph) -> bool:
        return self.edges == other.edges


def _graph_from_polylines(nodes: np.ndarray, polylines: list[list[int]]) -> InterfaceGraph:
    k = len(polylines)
    if k < 3:
        raise TopologyError(f"界面至少需要 3 条边，实际 {k} 条", entity="interface")
    for j, poly in enumerate(polylines):
        if len(poly) < 2:
            raise TopologyError(f"界面边 {j} 节点不足", entity="edge", entity_id=j)
        if poly[-1] != polylines[(j + 1) % k][0]:
            raise TopologyError(f"界面未闭合：边 {j} 的终点 {poly[-1]} 不是下一条边的起点", entity="edge", entity_id=j)

    cycle = [n for poly in polylines for n in poly[:-1]]
    seen: set[int] = set()
    for n in cycle:
        if n in seen:
            raise TopologyError(f"界面节点 {n} 重复出现，界面不是简单闭环", entity="node", entity_id=n)
        seen.add(n)

    segments = np.array([(poly[i], poly[i + 1]) for poly in polylines for i in range(len(poly) - 1)], dtype=np.int64)
    segment_edge = np.array([j for j, poly in enumerate(polylines) for _ in range(len(poly) - 1)], dtype=np.int64)

    tangents = np.empty((k, 2))
    for j, poly in enumerate(polylines):
        d = nodes[poly[-1]] - nodes[poly[0]]
        length = np.hypot(*d)
        if length == 0.0:
            raise TopologyError(f"界面边 {j} 长度为零", entity="edge", entity_id=j)
        tangents[j] = d / length

    seg_dir = nodes[segments[:, 1]] - nodes[segments[:, 0]]
    seg_len = np.hypot(seg_dir[:, 0], seg_dir[:, 1])
    if np.any(seg_len == 0.0):
        bad = int(np.argmin(seg_len))
        raise MeshValidationError(f"界面线段 {bad} 长度为零", entity="segment", entity_id=bad)
    seg_t = seg_dir / seg_len[:, None]
    t_edge = tangents[segment_edge]
    cross = seg_t[:, 0] * t_edge[:, 1] - seg_t[:, 1] * t_edge[:, 0]
    dot = np.einsum("sd,sd->s", seg_t, t_edge)
    bent = np.flatnonzero((np.abs(cross) > _STRAIGHT_TOL) | (dot <= 0.0))
    if len(bent):
        j = int(segment_edge[bent[0]])
        raise MeshValidationError(f"界面边 {j} 不是直线段", entity="edge", entity_id=j)

    # 鞋带公式：固体在左侧（逆时针）
    p = nodes[segments[:, 0]]
    q = nodes[segments[:, 1]]
    if 0.5 * np.sum(p[:, 0] * q[:, 1] - p[:, 1] * q[:, 0]) <= 0.0:
        raise TopologyError("界面须按逆时针（固体在左侧）排列", entity="interface")

    nu = np.column_stack([-seg_t[:, 1], seg_t[:, 0]])
    nj = np.stack([-tangents, tangents], axis=1)
    junctions = tuple(
        Junction(node=int(polylines[j][-1]), incoming=j, outgoing=(j + 1) % k) for j in range(k)
    )
    return InterfaceGraph(
        edges=tuple(tuple(int(n) for n in poly) for poly in polylines),
        junctions=junctions,
        segments=_readonly(segments),
        segment_edge=_readonly(segment_edge),
        nu=_readonly(nu),
        tangents=_readonly(tangents),
        nj=_readonly(nj),
    )


# ---------------------------
# 网格
# ---------------------------
@dataclass(frozen=True, eq=False)
class FsiMesh:
    nodes: np.ndarray
    triangles: np.ndarray
    regions: np.ndarray
    outer_boundary_nodes: np.ndarray
    interface: InterfaceGraph
    refinement: int | None = field(default=None)

    def __post_init__(self) -> None:
        object.__setattr__(self, "nodes", _readonly(np.asarray(self.nodes, dtype=float)))
        object.__setattr__(self, "triangles", _readonly(np.asarray(self.triangles, dtype=np.int64)))
        object.__setattr__(self, "regions", _readonly(np.asarray(self.regions, dtype=np.int8)))
        object.__setattr__(self, "outer_boundary_nodes", _readonly(np.unique(np.asarray(self.outer_boundary_nodes, dtype=np.int64))))

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @cached_property
    def fluid_triangles(self) -> np.ndarray:
        return _readonly(self.triangles[self.regions == FLUID])

    @cached_property
    def solid_triangles(self) -> np.ndarray:
        return _readonly(self.triangles[self.regions == SOLID])

    @cached_property
    def fluid_nodes(self) -> np.ndarray:
        return _readonly(np.unique(self.fluid_triangles))

    @cached_property
    def solid_nodes(self) -> np.ndarray:
        return _readonly(np.unique(self.solid_triangles))

    @property
    def interface_nodes(self) -> np.ndarray:
        return self.interface.nodes

    @cached_property
    def solid_interior_nodes(self) -> np.ndarray:
        return _readonly(np.setdiff1d(self.solid_nodes, self.interface_nodes))

    @cached_property
    def fluid_interior_nodes(self) -> np.ndarray:
        return _readonly(np.setdiff1d(self.fluid_nodes, np.union1d(self.interface_nodes, self.outer_boundary_nodes)))

    @cached_property
    def mesh_size(self) -> float:
        edges = _triangle_edges(self.triangles)
        d = self.nodes[edges[:, 1]] - self.nodes[edges[:, 0]]
        return float(np.max(np.hypot(d[:, 0], d[:, 1])))

    def equals(self, other: FsiMesh) -> bool:
        return (
            np.array_equal(self.nodes, other.nodes)
            and np.array_equal(self.triangles, other.triangles)
            and np.array_equal(self.regions, other.regions)
            and np.array_equal(self.outer_boundary_nodes, other.outer_boundary_nodes)
            and self.interface.equals(other.interface)
        )


def _triangle_edges(triangles: np.ndarray) -> np.ndarray:
    e = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    return np.sort(e, axis=1)


def _chain_solid_boundary(nodes: np.ndarray, triangles: np.ndarray, regions: np.ndarray) -> list[int]:
    solid = triangles[regions == SOLID]
    if len(solid) == 0:
        raise TopologyError("网格中没有固体三角形", entity="interface")
    directed = np.concatenate([solid[:, [0, 1]], solid[:, [1, 2]], solid[:, [2, 0]]])
    pairs = {(int(a), int(b)) for a, b in directed}
    boundary = [(a, b) for a, b in pairs if (b, a) not in pairs]
    nxt: dict[int, int] = {}
    for a, b in boundary:
        if a in nxt:
            raise TopologyError(f"固体边界在节点 {a} 处分叉", entity="node", entity_id=a)
        nxt[a] = b
    # 从最低（再最左）节点开始
    start = min(nxt, key=lambda n: (nodes[n][1], nodes[n][0]))
    cycle = [start]
    node = start
    while True:
        if node not in nxt:
            raise TopologyError(f"界面环在节点 {node} 处断开", entity="node", entity_id=node)
        node = nxt[node]
        if node == start:
            break
        if len(cycle) > len(nxt):
            raise TopologyError("界面环无法闭合", entity="interface")
        cycle.append(node)
    if len(cycle) != len(nxt):
        raise TopologyError("固体边界包含多个环", entity="interface")
    return cycle


def _split_at_corners(nodes: np.ndarray, cycle: list[int]) -> list[list[int]]:
    n = len(cycle)
    corners = []
    for i in range(n):
        a, v, b = nodes[cycle[i - 1]], nodes[cycle[i]], nodes[cycle[(i + 1) % n]]
        d1, d2 = v - a, b - v
        cross = d1[0] * d2[1] - d1[1] * d2[0]
        if abs(cross) > _STRAIGHT_TOL * np.hypot(*d1) * np.hypot(*d2):
            corners.append(i)
    if len(corners) < 3:
        raise TopologyError("界面拐角不足 3 个，无法构成多边形", entity="interface")
    first = min(corners, key=lambda i: (nodes[cycle[i]][1], nodes[cycle[i]][0]))
    rolled = cycle[first:] + cycle[:first]
    corner_set = {cycle[i] for i in corners}
    polylines: list[list[int]] = []
    current = [rolled[0]]
    for node in rolled[1:] + [rolled[0]]:
        current.append(node)
        if node in corner_set:
            polylines.append(current)
            current = [node]
    return polylines


def interface_graph(mesh: FsiMesh) -> InterfaceGraph:
    """由固体三角形重新推导界面图：环序编号、配对表与法向。"""
    cycle = _chain_solid_boundary(mesh.nodes, mesh.triangles, mesh.regions)
    return _graph_from_polylines(mesh.nodes, _split_at_corners(mesh.nodes, cycle))


# ---------------------------
# 校验
# ---------------------------
def _find_hanging_node(nodes: np.ndarray, a: int, b: int) -> int | None:
    pa, pb = nodes[a], nodes[b]
    d = pb - pa
    rel = nodes - pa
    cross = rel[:, 0] * d[1] - rel[:, 1] * d[0]
    t = rel @ d / (d @ d)
    inside = np.flatnonzero((np.abs(cross) <= _STRAIGHT_TOL * (d @ d)) & (t > 1e-12) & (t < 1 - 1e-12))
    return int(inside[0]) if len(inside) else None


def validate_mesh(mesh: FsiMesh) -> FsiMesh:
    nodes, tris = mesh.nodes, mesh.triangles
    n = len(nodes)
    if nodes.ndim != 2 or nodes.shape[1] != 2:
        raise MeshValidationError("节点坐标必须为二维", entity="nodes")
    if tris.ndim != 2 or tris.shape[1] != 3:
        raise MeshValidationError("三角形必须由三个节点组成", entity="triangles")
    bad = np.flatnonzero((tris < 0).any(axis=1) | (tris >= n).any(axis=1))
    if len(bad):
        raise MeshValidationError(f"三角形 {bad[0]} 引用了不存在的节点", entity="triangle", entity_id=int(bad[0]))
    if not np.all(np.isin(mesh.regions, (FLUID, SOLID))):
        raise MeshValidationError("区域标签只能是 fluid 或 solid", entity="triangles")

    area = signed_areas(nodes, tris)
    scale = max(float(np.ptp(nodes[:, 0])) * float(np.ptp(nodes[:, 1])), 1e-300)
    zero = np.flatnonzero(np.abs(area) <= _AREA_TOL * scale)
    if len(zero):
        raise MeshValidationError(f"三角形 {zero[0]} 面积为零", entity="triangle", entity_id=int(zero[0]))
    negative = np.flatnonzero(area < 0)
    if len(negative):
        raise MeshValidationError(f"三角形 {negative[0]} 为顺时针定向", entity="triangle", entity_id=int(negative[0]))

    graph = mesh.interface
    iface = graph.nodes
    fluid_nodes, solid_nodes = mesh.fluid_nodes, mesh.solid_nodes
    dangling = iface[~(np.isin(iface, fluid_nodes) & np.isin(iface, solid_nodes))]
    if len(dangling):
        node = int(dangling[0])
        raise MeshValidationError(f"界面节点 {node} 为悬挂节点（不同时属于流体与固体三角形）", entity="node", entity_id=int(node))

    edges = _triangle_edges(tris)
    owner_region = np.concatenate([mesh.regions] * 3)
    uniq, inverse, counts = np.unique(edges, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    if np.any(counts > 2):
        e = uniq[np.argmax(counts)]
        raise MeshValidationError(f"边 ({e[0]},{e[1]}) 被超过两个三角形共享", entity="node", entity_id=int(e[0]))

    outer = set(mesh.outer_boundary_nodes.tolist())
    once = uniq[counts == 1]
    for a, b in once:
        if a in outer and b in outer:
            continue
        hanging = _find_hanging_node(nodes, int(a), int(b))
        if hanging is not None:
            raise MeshValidationError(f"节点 {hanging} 为悬挂节点（位于边 ({a},{b}) 内部）", entity="node", entity_id=hanging)
        raise MeshValidationError(f"边 ({a},{b}) 只属于一个三角形但不在外边界上", entity="node", entity_id=int(a))
    boundary_nodes = set(np.unique(once).tolist())
    if boundary_nodes != outer:
        missing = sorted(boundary_nodes ^ outer)
        raise MeshValidationError(f"外边界节点表与网格边界不一致：节点 {missing[0]}", entity="node", entity_id=int(missing[0]))
    common = outer & set(iface.tolist())
    if common:
        node = min(common)
        raise MeshValidationError(f"节点 {node} 同时位于外边界与界面", entity="node", entity_id=node)

    # 每条界面线段恰好属于一个流体三角形与一个固体三角形
    solid_owners = np.bincount(inverse, weights=(owner_region == SOLID).astype(float), minlength=len(uniq))
    fluid_owners = np.bincount(inverse, weights=(owner_region == FLUID).astype(float), minlength=len(uniq))
    keys = uniq[:, 0] * n + uniq[:, 1]
    order = np.argsort(keys)
    for s, (a, b) in enumerate(graph.segments):
        lo, hi = min(a, b), max(a, b)
        pos = np.searchsorted(keys, lo * n + hi, sorter=order)
        if pos >= len(keys) or keys[order[pos]] != lo * n + hi:
            raise MeshValidationError(f"界面线段 {s} ({a},{b}) 不是网格边", entity="segment", entity_id=s)
        eid = int(order[pos])
        if solid_owners[eid] != 1 or fluid_owners[eid] != 1:
            raise MeshValidationError(f"界面线段 {s} ({a},{b}) 未被一个流体与一个固体三角形共享", entity="segment", entity_id=s)

    derived = interface_graph(mesh)
    listed = {tuple(sorted(map(int, s))) for s in graph.segments}
    found = {tuple(sorted(map(int, s))) for s in derived.segments}
    if listed != found:
        odd = sorted(listed ^ found)[0]
        raise TopologyError(f"界面边表与固体边界不一致：线段 {odd}", entity="node", entity_id=int(odd[0]))

    # 凸性：逆时针环的所有转角叉积非负
    cycle = [poly[i] for poly in graph.edges for i in range(len(poly) - 1)]
    m = len(cycle)
    for i in range(m):
        a, v, b = nodes[cycle[i - 1]], nodes[cycle[i]], nodes[cycle[(i + 1) % m]]
        d1, d2 = v - a, b - v
        cross = d1[0] * d2[1] - d1[1] * d2[0]
        if cross < -_STRAIGHT_TOL * np.hypot(*d1) * np.hypot(*d2):
            raise ConvexityError(f"固体多边形在节点 {cycle[i]} 处非凸", entity="node", entity_id=int(cycle[i]))
    return mesh


# ---------------------------
# 构造与加密
# ---------------------------
def _base_square_in_square() -> FsiMesh:
    n = 5
    xs = np.linspace(0.0, 1.0, n)
    nodes = np.array([(x, y) for y in xs for x in xs])

    def idx(i: int, j: int) -> int:
        return j * n + i

    tris, regions = [], []
    for j in range(n - 1):
        for i in range(n - 1):
            p00, p10, p11, p01 = idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)
            region = SOLID if 1 <= i <= 2 and 1 <= j <= 2 else FLUID
            tris += [(p00, p10, p11), (p00, p11, p01)]
            regions += [region, region]
    outer = [idx(i, j) for j in range(n) for i in range(n) if i in (0, n - 1) or j in (0, n - 1)]
    polylines = [
        [idx(1, 1), idx(2, 1), idx(3, 1)],
        [idx(3, 1), idx(3, 2), idx(3, 3)],
        [idx(3, 3), idx(2, 3), idx(1, 3)],
        [idx(1, 3), idx(1, 2), idx(1, 1)],
    ]
    return FsiMesh(nodes, np.array(tris), np.array(regions), np.array(outer), _graph_from_polylines(nodes, polylines), refinement=0)


def refine_uniform(mesh: FsiMesh) -> FsiMesh:
    """红加密：每个三角形一分为四，保持定向、区域、外边界与界面折线。"""
    n = mesh.n_nodes
    tris = mesh.triangles
    edges = _triangle_edges(tris)
    uniq, inverse, counts = np.unique(edges, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    mids = n + inverse.reshape(3, -1).T  # (T,3)：边 01、12、20 的中点
    new_nodes = np.vstack([mesh.nodes, 0.5 * (mesh.nodes[uniq[:, 0]] + mesh.nodes[uniq[:, 1]])])

    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    mab, mbc, mca = mids[:, 0], mids[:, 1], mids[:, 2]
    children = np.stack(
        [
            np.column_stack([a, mab, mca]),
            np.column_stack([mab, b, mbc]),
            np.column_stack([mca, mbc, c]),
            np.column_stack([mab, mbc, mca]),
        ],
        axis=1,
    ).reshape(-1, 3)
    regions = np.repeat(mesh.regions, 4)

    keys = uniq[:, 0] * n + uniq[:, 1]

    def midpoint(p: int, q: int) -> int:
        lo, hi = min(p, q), max(p, q)
        return n + int(np.searchsorted(keys, lo * n + hi))

    outer = set(mesh.outer_boundary_nodes.tolist())
    boundary_edges = uniq[counts == 1]
    outer_mids = [n + int(np.searchsorted(keys, p * n + q)) for p, q in boundary_edges if p in outer and q in outer]
    polylines = []
    for poly in mesh.interface.edges:
        refined = [poly[0]]
        for p, q in zip(poly[:-1], poly[1:]):
            refined += [midpoint(p, q), q]
        polylines.append(refined)
    level = None if mesh.refinement is None else mesh.refinement + 1
    return FsiMesh(
        new_nodes,
        children,
        regions,
        np.concatenate([mesh.outer_boundary_nodes, np.array(outer_mids, dtype=np.int64)]),
        _graph_from_polylines(new_nodes, polylines),
        refinement=level,
    )


def build_default_geometry(refinement: int) -> FsiMesh:
    """默认几何：Ω_s = [0.25,0.75]²，Ω_f = [0,1]² \\ Ω̄_s，K = 4。"""
    if isinstance(refinement, bool) or not isinstance(refinement, (int, np.integer)):
        raise BoundsError(f"refinement 必须是整数：{refinement!r}")
    if not 0 <= refinement <= MAX_REFINEMENT:
        raise BoundsError(f"refinement 超出范围 [0, {MAX_REFINEMENT}]：{refinement}")
    mesh = _base_square_in_square()
    for _ in range(int(refinement)):
        mesh = refine_uniform(mesh)
    logger.info("默认几何 refinement=%d：%d 节点，%d 三角形", refinement, mesh.n_nodes, len(mesh.triangles))
    return validate_mesh(mesh)


# ---------------------------
# 文本格式
# ---------------------------
def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def save_mesh(mesh: FsiMesh) -> str:
    lines = [f"NODES {mesh.n_nodes}"]
    lines += [f"{i} {_fmt(x)} {_fmt(y)}" for i, (x, y) in enumerate(mesh.nodes)]
    lines.append(f"TRIANGLES {len(mesh.triangles)}")
    lines += [
        f"{t} {a} {b} {c} {REGION_NAMES[r]}" for t, ((a, b, c), r) in enumerate(zip(mesh.triangles, mesh.regions))
    ]
    lines.append(f"INTERFACE_EDGES {mesh.interface.K}")
    lines += [f"{j} " + " ".join(str(n) for n in poly) for j, poly in enumerate(mesh.interface.edges)]
    lines.append(f"OUTER_BOUNDARY {len(mesh.outer_boundary_nodes)}")
    lines += [str(n) for n in mesh.outer_boundary_nodes]
    return "\n".join(lines) + "\n"


def _parse_int(token: str, line: int, section: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise MeshParseError(f"不是整数：{token!r}", line=line, section=section) from None


def _parse_float(token: str, line: int, section: str) -> float:
    try:
        value = float(token)
    except ValueError:
        raise MeshParseError(f"不是浮点数：{token!r}", line=line, section=section) from None
    if not np.isfinite(value):
        raise MeshParseError(f"坐标非有限值：{token!r}", line=line, section=section)
    return value


def _read_sections(text: str) -> dict[str, list[tuple[int, list[str]]]]:
    sections: dict[str, list[tuple[int, list[str]]]] = {}
    expected: dict[str, int] = {}
    current: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if tokens[0].isalpha() or tokens[0].replace("_", "").isalpha():
            name = tokens[0]
            if name not in SECTIONS:
                raise MeshParseError(f"未知段名 {name!r}", line=lineno)
            if name in sections:
                raise MeshParseError(f"段 {name} 重复", line=lineno, section=name)
            if current is not None and len(sections[current]) != expected[current]:
                raise MeshParseError(
                    f"段 {current} 声明 {expected[current]} 行，实际 {len(sections[current])} 行", line=lineno, section=current
                )
            if len(tokens) != 2:
                raise MeshParseError("段头格式应为 `<名称> <行数>`", line=lineno, section=name)
            expected[name] = _parse_int(tokens[1], lineno, name)
            sections[name] = []
            current = name
            continue
        if current is None:
            raise MeshParseError("数据出现在任何段之前", line=lineno)
        if len(sections[current]) >= expected[current]:
            raise MeshParseError(f"段 {current} 行数超过声明的 {expected[current]}", line=lineno, section=current)
        sections[current].append((lineno, tokens))
    if current is not None and len(sections[current]) != expected[current]:
        raise MeshParseError(f"段 {current} 声明 {expected[current]} 行，实际 {len(sections[current])} 行", section=current)
    for name in SECTIONS:
        if name not in sections:
            raise MeshParseError(f"缺少段 {name}", section=name)
    return sections


def load_mesh(text: str) -> FsiMesh:
    sections = _read_sections(text)

    nodes = []
    for k, (lineno, tokens) in enumerate(sections["NODES"]):
        if len(tokens) != 3:
            raise MeshParseError("节点行应为 `id x y`", line=lineno, section="NODES")
        if _parse_int(tokens[0], lineno, "NODES") != k:
            raise MeshParseError(f"节点编号应连续，期望 {k}", line=lineno, section="NODES")
        nodes.append((_parse_float(tokens[1], lineno, "NODES"), _parse_float(tokens[2], lineno, "NODES")))
    nodes_arr = np.array(nodes, dtype=float).reshape(-1, 2)
    n = len(nodes_arr)

    def node_id(token: str, lineno: int, section: str) -> int:
        value = _parse_int(token, lineno, section)
        if not 0 <= value < n:
            raise MeshParseError(f"节点 {value} 不存在", line=lineno, section=section)
        return value

    tris, regions = [], []
    for k, (lineno, tokens) in enumerate(sections["TRIANGLES"]):
        if len(tokens) != 5:
            raise MeshParseError("三角形行应为 `id n1 n2 n3 region`", line=lineno, section="TRIANGLES")
        if _parse_int(tokens[0], lineno, "TRIANGLES") != k:
            raise MeshParseError(f"三角形编号应连续，期望 {k}", line=lineno, section="TRIANGLES")
        if tokens[4] not in REGION_NAMES:
            raise MeshParseError(f"区域标签无效：{tokens[4]!r}", line=lineno, section="TRIANGLES")
        tris.append([node_id(t, lineno, "TRIANGLES") for t in tokens[1:4]])
        regions.append(REGION_NAMES.index(tokens[4]))

    polylines = []
    for k, (lineno, tokens) in enumerate(sections["INTERFACE_EDGES"]):
        if len(tokens) < 3:
            raise MeshParseError("界面边行应为 `edge_id n1 n2 ...`", line=lineno, section="INTERFACE_EDGES")
        if _parse_int(tokens[0], lineno, "INTERFACE_EDGES") != k:
            raise MeshParseError(f"界面边编号应连续，期望 {k}", line=lineno, section="INTERFACE_EDGES")
        polylines.append([node_id(t, lineno, "INTERFACE_EDGES") for t in tokens[1:]])

    outer = []
    for lineno, tokens in sections["OUTER_BOUNDARY"]:
        if len(tokens) != 1:
            raise MeshParseError("外边界行应为单个节点编号", line=lineno, section="OUTER_BOUNDARY")
        outer.append(node_id(tokens[0], lineno, "OUTER_BOUNDARY"))

    mesh = FsiMesh(
        nodes_arr,
        np.array(tris, dtype=np.int64).reshape(-1, 3),
        np.array(regions, dtype=np.int8),
        np.array(outer, dtype=np.int64),
        _graph_from_polylines(nodes_arr, polylines),
    )
    return validate_mesh(mesh)


def mesh_summary(mesh: FsiMesh) -> dict[str, float | int]:
    return {
        "nodes": mesh.n_nodes,
        "triangles": len(mesh.triangles),
        "fluid_triangles": len(mesh.fluid_triangles),
        "solid_triangles": len(mesh.solid_triangles),
        "interface_nodes": len(mesh.interface_nodes),
        "interface_edges": mesh.interface.K,
        "junctions": len(mesh.interface.junctions),
        "outer_boundary_nodes": len(mesh.outer_boundary_nodes),
        "h": mesh.mesh_size,
    }
