"""Planar convex-polygon helpers.

Polygons are sequences of ``(x, y)`` float pairs in counter-clockwise order.
The physics loop calls these thousands of times per push on polygons with a
handful of vertices, so they stay in plain Python floats instead of numpy.
"""
from __future__ import annotations

import math
from typing import Iterable, Sequence

Point = tuple[float, float]
Polygon = Sequence[Point]

EPS = 1e-12


def signed_area(poly: Polygon) -> float:
    a = 0.0
    n = len(poly)
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        a += x0 * y1 - x1 * y0
    return 0.5 * a


def area(poly: Polygon) -> float:
    return abs(signed_area(poly))


def centroid(poly: Polygon) -> Point:
    """Area centroid of a simple polygon."""
    a = signed_area(poly)
    if abs(a) < EPS:
        n = len(poly)
        return (sum(p[0] for p in poly) / n, sum(p[1] for p in poly) / n)
    cx = cy = 0.0
    n = len(poly)
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        cr = x0 * y1 - x1 * y0
        cx += (x0 + x1) * cr
        cy += (y0 + y1) * cr
    return (cx / (6.0 * a), cy / (6.0 * a))


def ensure_ccw(poly: Polygon) -> list[Point]:
    pts = [(float(x), float(y)) for x, y in poly]
    if signed_area(pts) < 0:
        pts.reverse()
    return pts


def is_convex(poly: Polygon, tol: float = 1e-12) -> bool:
    """True for a strictly counter-clockwise convex polygon (collinear runs allowed)."""
    n = len(poly)
    if n < 3:
        return False
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        x2, y2 = poly[(i + 2) % n]
        if (x1 - x0) * (y2 - y1) - (y1 - y0) * (x2 - x1) < -tol:
            return False
    return signed_area(poly) > 0


def transform(poly: Polygon, x: float, y: float, theta: float) -> list[Point]:
    c, s = math.cos(theta), math.sin(theta)
    return [(c * px - s * py + x, s * px + c * py + y) for px, py in poly]


def translate(poly: Polygon, dx: float, dy: float) -> list[Point]:
    return [(px + dx, py + dy) for px, py in poly]


def rotate_about(poly: Polygon, center: Point, angle: float) -> list[Point]:
    c, s = math.cos(angle), math.sin(angle)
    cx, cy = center
    return [(cx + c * (px - cx) - s * (py - cy), cy + s * (px - cx) + c * (py - cy))
            for px, py in poly]


def aabb(poly: Iterable[Point]) -> tuple[float, float, float, float]:
    """(xmin, ymin, xmax, ymax)."""
    xs, ys = zip(*poly)
    return (min(xs), min(ys), max(xs), max(ys))


def edge_normals(poly: Polygon) -> list[Point]:
    """Outward unit normals, one per edge ``poly[i] -> poly[i+1]``."""
    out = []
    n = len(poly)
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        ex, ey = x1 - x0, y1 - y0
        ln = math.hypot(ex, ey)
        out.append((ey / ln, -ex / ln))
    return out


def point_in_convex(p: Point, poly: Polygon, tol: float = 0.0) -> bool:
    """Closed containment test; ``tol`` > 0 shrinks the polygon."""
    px, py = p
    n = len(poly)
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        ex, ey = x1 - x0, y1 - y0
        cr = ex * (py - y0) - ey * (px - x0)
        if cr < tol * math.hypot(ex, ey):
            return False
    return True


def penetration(p: Point, poly: Polygon) -> tuple[float, int]:
    """Depth of ``p`` inside ``poly`` and the index of the nearest edge.

    Depth is <= 0 when the point is outside or on the boundary.
    """
    px, py = p
    best, best_i = math.inf, -1
    n = len(poly)
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        ex, ey = x1 - x0, y1 - y0
        d = (ex * (py - y0) - ey * (px - x0)) / math.hypot(ex, ey)
        if d < best:
            best, best_i = d, i
    return best, best_i


def point_segment_distance(p: Point, a: Point, b: Point) -> float:
    px, py = p
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    ll = dx * dx + dy * dy
    if ll <= 0.0:
        return math.hypot(px - ax, py - ay)
    t = ((px - ax) * dx + (py - ay) * dy) / ll
    t = 0.0 if t < 0.0 else (1.0 if t > 1.0 else t)
    return math.hypot(px - ax - t * dx, py - ay - t * dy)


def point_polygon_distance(p: Point, poly: Polygon) -> float:
    """Distance from ``p`` to a convex polygon (0 inside)."""
    if point_in_convex(p, poly):
        return 0.0
    n = len(poly)
    return min(point_segment_distance(p, poly[i], poly[(i + 1) % n]) for i in range(n))


def _orient(a: Point, b: Point, c: Point) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool:
    d1 = _orient(c, d, a)
    d2 = _orient(c, d, b)
    d3 = _orient(a, b, c)
    d4 = _orient(a, b, d)
    if ((d1 > 0 > d2) or (d1 < 0 < d2)) and ((d3 > 0 > d4) or (d3 < 0 < d4)):
        return True
    if d1 == 0 and point_segment_distance(a, c, d) == 0:
        return True
    if d2 == 0 and point_segment_distance(b, c, d) == 0:
        return True
    if d3 == 0 and point_segment_distance(c, a, b) == 0:
        return True
    if d4 == 0 and point_segment_distance(d, a, b) == 0:
        return True
    return False


def segment_segment_distance(a: Point, b: Point, c: Point, d: Point) -> float:
    if segments_intersect(a, b, c, d):
        return 0.0
    return min(point_segment_distance(a, c, d), point_segment_distance(b, c, d),
               point_segment_distance(c, a, b), point_segment_distance(d, a, b))


def sat_overlap(a: Polygon, b: Polygon) -> tuple[float, Point]:
    """Separating-axis test for two convex polygons.

    Returns ``(depth, axis)`` where ``depth`` is the smallest projection
    overlap over all edge normals and ``axis`` is oriented so that moving
    ``b`` by ``depth * axis`` separates the pair. ``depth <= 0`` means the
    polygons are disjoint (or exactly touching).
    """
    best = math.inf
    best_axis = (1.0, 0.0)
    for poly in (a, b):
        n = len(poly)
        for i in range(n):
            x0, y0 = poly[i]
            x1, y1 = poly[(i + 1) % n]
            ex, ey = x1 - x0, y1 - y0
            ln = math.hypot(ex, ey)
            nx, ny = ey / ln, -ex / ln
            amin = amax = a[0][0] * nx + a[0][1] * ny
            for px, py in a:
                v = px * nx + py * ny
                if v < amin:
                    amin = v
                elif v > amax:
                    amax = v
            bmin = bmax = b[0][0] * nx + b[0][1] * ny
            for px, py in b:
                v = px * nx + py * ny
                if v < bmin:
                    bmin = v
                elif v > bmax:
                    bmax = v
            # push b towards +axis or -axis, whichever is shorter
            push_pos = amax - bmin
            push_neg = bmax - amin
            if push_pos <= 0.0 or push_neg <= 0.0:
                return min(push_pos, push_neg), (nx, ny)
            if push_pos < best:
                best, best_axis = push_pos, (nx, ny)
            if push_neg < best:
                best, best_axis = push_neg, (-nx, -ny)
    return best, best_axis


def convex_distance(a: Polygon, b: Polygon) -> float:
    """Euclidean boundary distance between convex polygons, 0 when they touch or overlap."""
    depth, _ = sat_overlap(a, b)
    if depth >= 0.0:
        return 0.0
    na, nb = len(a), len(b)
    best = math.inf
    for p in a:
        for j in range(nb):
            d = point_segment_distance(p, b[j], b[(j + 1) % nb])
            if d < best:
                best = d
    for p in b:
        for j in range(na):
            d = point_segment_distance(p, a[j], a[(j + 1) % na])
            if d < best:
                best = d
    return best


def clip_halfplane(poly: Polygon, origin: Point, normal: Point) -> list[Point]:
    """Keep the part of ``poly`` with ``dot(p - origin, normal) <= 0``."""
    ox, oy = origin
    nx, ny = normal
    out: list[Point] = []
    n = len(poly)
    for i in range(n):
        p = poly[i]
        q = poly[(i + 1) % n]
        dp = (p[0] - ox) * nx + (p[1] - oy) * ny
        dq = (q[0] - ox) * nx + (q[1] - oy) * ny
        if dp <= 0:
            out.append(p)
        if (dp < 0 < dq) or (dq < 0 < dp):
            t = dp / (dp - dq)
            out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
    return out


def _ray_to_segment(p: Point, d: Point, a: Point, b: Point) -> float:
    """Distance along unit ray ``p + t d`` to segment ``ab``, inf if missed."""
    ex, ey = b[0] - a[0], b[1] - a[1]
    den = d[0] * ey - d[1] * ex
    if abs(den) < EPS:
        return math.inf
    wx, wy = a[0] - p[0], a[1] - p[1]
    t = (wx * ey - wy * ex) / den
    u = (wx * d[1] - wy * d[0]) / den
    if t < -1e-12 or u < -1e-12 or u > 1 + 1e-12:
        return math.inf
    return max(t, 0.0)


def sweep_distance(a: Polygon, b: Polygon, d: Point) -> float:
    """Distance ``a`` can translate along unit direction ``d`` before touching ``b``.

    Assumes the polygons are disjoint at the start; returns inf when the sweep
    misses ``b`` entirely.
    """
    best = math.inf
    nb, na = len(b), len(a)
    for p in a:
        for j in range(nb):
            t = _ray_to_segment(p, d, b[j], b[(j + 1) % nb])
            if t < best:
                best = t
    nd = (-d[0], -d[1])
    for p in b:
        for j in range(na):
            t = _ray_to_segment(p, nd, a[j], a[(j + 1) % na])
            if t < best:
                best = t
    return best


def second_moments(poly: Polygon) -> tuple[Point, tuple[float, float, float]]:
    """Centroid and central second moments ``(Ixx, Ixy, Iyy)`` per unit area."""
    cx, cy = centroid(poly)
    a = signed_area(poly)
    sxx = sxy = syy = 0.0
    n = len(poly)
    for i in range(n):
        x0, y0 = poly[i][0] - cx, poly[i][1] - cy
        x1, y1 = poly[(i + 1) % n][0] - cx, poly[(i + 1) % n][1] - cy
        cr = x0 * y1 - x1 * y0
        sxx += cr * (x0 * x0 + x0 * x1 + x1 * x1)
        syy += cr * (y0 * y0 + y0 * y1 + y1 * y1)
        sxy += cr * (x0 * y1 + 2 * x0 * y0 + 2 * x1 * y1 + x1 * y0)
    return (cx, cy), (sxx / (12 * a), sxy / (24 * a), syy / (12 * a))


def regular_polygon(n: int, radius: float, phase: float = 0.0) -> list[Point]:
    return [(radius * math.cos(phase + 2 * math.pi * k / n),
             radius * math.sin(phase + 2 * math.pi * k / n)) for k in range(n)]


def rectangle(w: float, h: float) -> list[Point]:
    return [(-w / 2, -h / 2), (w / 2, -h / 2), (w / 2, h / 2), (-w / 2, h / 2)]
