import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mlfsi.assembly import assemble_pencil
from mlfsi.geometry import build_default_geometry

settings.register_profile(
    "default", settings(suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture], max_examples=25, deadline=None)
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def mesh0():
    return build_default_geometry(0)


@pytest.fixture(scope="session")
def mesh1():
    return build_default_geometry(1)


@pytest.fixture(scope="session")
def mesh2():
    return build_default_geometry(2)


@pytest.fixture(scope="session")
def pencil0(mesh0):
    return assemble_pencil(mesh0)


@pytest.fixture(scope="session")
def pencil1(mesh1):
    return assemble_pencil(mesh1)


@pytest.fixture(scope="session")
def pencil2(mesh2):
    return assemble_pencil(mesh2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)


def grid_mesh_text(solid_cells, polylines, extra_nodes=(), replace_triangles=None):
    """5×5 结构网格的网格文件文本；solid_cells 为固体单元 (i, j) 集合。"""
    n = 5
    xs = np.linspace(0.0, 1.0, n)
    nodes = [(x, y) for y in xs for x in xs] + list(extra_nodes)

    def idx(i, j):
        return j * n + i

    tris = []
    for j in range(n - 1):
        for i in range(n - 1):
            p00, p10, p11, p01 = idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)
            region = "solid" if (i, j) in solid_cells else "fluid"
            tris += [((p00, p10, p11), region), ((p00, p11, p01), region)]
    for old, new in (replace_triangles or {}).items():
        k = [t for t, _ in tris].index(old)
        region = tris[k][1]
        tris[k : k + 1] = [(t, region) for t in new]
    outer = [idx(i, j) for j in range(n) for i in range(n) if i in (0, n - 1) or j in (0, n - 1)]
    lines = [f"NODES {len(nodes)}"]
    lines += [f"{k} {float(x)!r} {float(y)!r}" for k, (x, y) in enumerate(nodes)]
    lines.append(f"TRIANGLES {len(tris)}")
    lines += [f"{k} {a} {b} {c} {r}" for k, ((a, b, c), r) in enumerate(tris)]
    lines.append(f"INTERFACE_EDGES {len(polylines)}")
    lines += [f"{k} " + " ".join(map(str, poly)) for k, poly in enumerate(polylines)]
    lines.append(f"OUTER_BOUNDARY {len(outer)}")
    lines += [str(v) for v in outer]
    return "\n".join(lines) + "\n"
