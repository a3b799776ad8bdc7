import math

import numpy as np
import pytest

from singulate import geometry as geo
from singulate.scene import Scene, SceneObject, TableSpec


def square_scene(centers, side=0.1, table=None, thetas=None):
    """Axis-aligned squares (or rotated by ``thetas``) at the given centers."""
    table = table or TableSpec()
    thetas = thetas or [0.0] * len(centers)
    objs = [SceneObject(i, geo.rectangle(side, side), (x, y, t))
            for i, ((x, y), t) in enumerate(zip(centers, thetas))]
    return Scene(table, tuple(objs))


def random_convex(rng, n_min=3, n_max=8, radius=0.05):
    """Random convex polygon: sorted angles on a jittered circle, then hull."""
    from scipy.spatial import ConvexHull

    while True:
        n = int(rng.integers(n_min, n_max + 1))
        ang = np.sort(rng.uniform(0, 2 * math.pi, size=n))
        r = radius * rng.uniform(0.5, 1.0, size=n)
        pts = np.stack([r * np.cos(ang), r * np.sin(ang)], axis=1)
        try:
            hull = ConvexHull(pts)
        except Exception:
            continue
        poly = [tuple(map(float, pts[i])) for i in hull.vertices]
        if len(poly) >= 3 and geo.area(poly) > 1e-5:
            cx, cy = geo.centroid(poly)
            return geo.ensure_ccw([(x - cx, y - cy) for x, y in poly])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
