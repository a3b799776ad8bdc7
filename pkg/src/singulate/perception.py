"""Synthetic over-segmented observations of a scene."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from math import gcd
from pathlib import Path

import numpy as np

from . import geometry as geo
from .scene import Scene, TableSpec

GRAY_LOW, GRAY_HIGH = 0.3, 1.0
GRAY_SCHEME = "linspace(0.3,1.0,L) golden-stride"
BACKGROUND = -1
MIN_PIECE_FRACTION = 0.15


@dataclass(frozen=True)
class Segment:
    id: int
    parent_object: int
    polygon: tuple[tuple[float, float], ...]
    centroid: tuple[float, float]
    axes: tuple[tuple[float, float], tuple[float, float]]
    extents: tuple[float, float]

    @property
    def area(self) -> float:
        return geo.area(self.polygon)

    @property
    def aabb(self) -> tuple[float, float, float, float]:
        return geo.aabb(self.polygon)

    def to_dict(self) -> dict:
        return {"id": self.id, "parent_object": self.parent_object,
                "polygon": [list(p) for p in self.polygon]}


def make_segment(sid: int, parent: int, polygon) -> Segment:
    """Build a segment and its canonical principal-axis summary.

    Axes come from the area second moments, are ordered by decreasing
    extent and sign-fixed into the +x half-plane; extents are the half-widths
    of the polygon projected on each axis.
    """
    poly = tuple((float(x), float(y)) for x, y in polygon)
    (cx, cy), (ixx, ixy, iyy) = geo.second_moments(poly)
    _, vecs = np.linalg.eigh(np.array([[ixx, ixy], [ixy, iyy]]))
    axes = []
    for k in (1, 0):
        ax, ay = float(vecs[0, k]), float(vecs[1, k])
        if ax < 0 or (ax == 0 and ay < 0):
            ax, ay = -ax, -ay
        axes.append((ax, ay))
    ext = [max(abs((x - cx) * ax + (y - cy) * ay) for x, y in poly) for ax, ay in axes]
    if ext[1] > ext[0]:
        axes.reverse()
        ext.reverse()
    return Segment(sid, parent, poly, (cx, cy), (axes[0], axes[1]), (ext[0], ext[1]))


def _split(poly, rng, radius):
    """Cut a convex polygon with a random chord; None if the cut is too lopsided."""
    cx, cy = geo.centroid(poly)
    off = rng.uniform(-0.3, 0.3, size=2) * radius
    ang = rng.uniform(0.0, math.pi)
    origin = (cx + float(off[0]), cy + float(off[1]))
    normal = (math.cos(ang), math.sin(ang))
    left = geo.clip_halfplane(poly, origin, normal)
    right = geo.clip_halfplane(poly, origin, (-normal[0], -normal[1]))
    total = geo.area(poly)
    if len(left) < 3 or len(right) < 3:
        return None
    if min(geo.area(left), geo.area(right)) < MIN_PIECE_FRACTION * total:
        return None
    return left, right


def over_segment(scene: Scene, noise_seed: int = 0, split_prob: float = 0.3) -> list[Segment]:
    """Decompose each object into 1-3 convex segments.

    With probability ``split_prob`` an object is cut by random chords into
    two or three pieces whose union is the object polygon.
    """
    if not 0.0 <= split_prob <= 1.0:
        raise ValueError("split_prob must lie in [0, 1]")
    rng = np.random.default_rng(noise_seed)
    segments: list[Segment] = []
    for obj in scene.objects:
        pieces = [obj.world_polygon]
        if rng.random() < split_prob:
            target = int(rng.integers(2, 4))
            for _ in range(20):
                if len(pieces) >= target:
                    break
                k = max(range(len(pieces)), key=lambda i: geo.area(pieces[i]))
                cut = _split(pieces[k], rng, obj.radius)
                if cut is not None:
                    pieces[k:k + 1] = list(cut)
        for piece in pieces:
            segments.append(make_segment(len(segments), obj.id, piece))
    return segments


@dataclass(frozen=True)
class ViewTransform:
    """Orthographic top-down camera.

    Image coordinates are ``(u, v)`` = (column, row) with pixel centers on
    integers and ``v`` growing downwards.
    """

    scale: float = 320.0
    image_size: tuple[int, int] = (256, 320)
    world_origin_pixel: tuple[float, float] = (-0.5, 255.5)

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    def contains(self, uv) -> np.ndarray:
        uv = np.asarray(uv, dtype=float)
        h, w = self.image_size
        return ((uv[..., 0] >= -0.5) & (uv[..., 0] <= w - 0.5)
                & (uv[..., 1] >= -0.5) & (uv[..., 1] <= h - 0.5))

    def covers(self, table: TableSpec, tol: float = 1e-9) -> bool:
        x0, y0, x1, y1 = table.bounds
        uv, _ = world_to_image(self, [[x0, y0], [x1, y1]])
        h, w = self.image_size
        return bool(np.all(uv >= -0.5 - tol) and uv[:, 0].max() <= w - 0.5 + tol
                    and uv[:, 1].max() <= h - 0.5 + tol)

    def to_dict(self) -> dict:
        return {"scale": self.scale, "image_size": list(self.image_size),
                "world_origin_pixel": list(self.world_origin_pixel)}

    @classmethod
    def from_dict(cls, d) -> "ViewTransform":
        return cls(float(d["scale"]), tuple(d["image_size"]), tuple(d["world_origin_pixel"]))


def default_view(table: TableSpec, scale: float = 320.0) -> ViewTransform:
    """View whose image exactly spans the table."""
    w = int(round(table.width * scale))
    h = int(round(table.height * scale))
    x0, y0 = table.origin
    return ViewTransform(scale, (h, w), (-0.5 - x0 * scale, h - 0.5 + y0 * scale))


def world_to_image(view: ViewTransform, points):
    """Map world points (meters) to image coordinates.

    Returns ``(uv, inside)``; points that land outside the image are flagged
    in ``inside`` rather than clamped.
    """
    pts = np.asarray(points, dtype=float)
    u0, v0 = view.world_origin_pixel
    uv = np.stack([u0 + view.scale * pts[..., 0], v0 - view.scale * pts[..., 1]], axis=-1)
    return uv, view.contains(uv)


def image_to_world(view: ViewTransform, uv) -> np.ndarray:
    uv = np.asarray(uv, dtype=float)
    u0, v0 = view.world_origin_pixel
    return np.stack([(uv[..., 0] - u0) / view.scale, (v0 - uv[..., 1]) / view.scale], axis=-1)


def gray_levels(n: int) -> np.ndarray:
    """Distinct gray values for ``n`` segments.

    Levels are evenly spaced in [0.3, 1.0] and handed out with a stride near
    the golden ratio so consecutive segments get well separated values.
    """
    if n <= 0:
        return np.zeros(0)
    if n == 1:
        return np.array([GRAY_HIGH])
    base = np.linspace(GRAY_LOW, GRAY_HIGH, n)
    k = max(1, int(round(n * 0.618)))
    while gcd(k, n) != 1:
        k += 1
    return base[[(i * k) % n for i in range(n)]]


@dataclass(frozen=True, eq=False)
class ObservationImage:
    pixels: np.ndarray
    view: ViewTransform
    segment_id_map: np.ndarray

    def __post_init__(self):
        if self.pixels.shape != self.segment_id_map.shape:
            raise ValueError("pixels and segment map differ in shape")

    def write(self, path) -> None:
        """Write ``<path>.pgm`` plus a ``<path>.json`` sidecar."""
        path = Path(path)
        write_pgm(path.with_suffix(".pgm"), self.pixels)
        side = {"view": self.view.to_dict(),
                "segment_map": rle_encode(self.segment_id_map),
                "shape": list(self.pixels.shape), "gray_scheme": GRAY_SCHEME}
        path.with_suffix(".json").write_text(json.dumps(side))

    @classmethod
    def read(cls, path) -> "ObservationImage":
        path = Path(path)
        pixels = read_pgm(path.with_suffix(".pgm"))
        side = json.loads(path.with_suffix(".json").read_text())
        seg = rle_decode(side["segment_map"], tuple(side["shape"]))
        return cls(pixels, ViewTransform.from_dict(side["view"]), seg)


EDGE_SOFTNESS = 3.0  # half-width of the anti-aliased edge band, pixels


def smootherstep(x: np.ndarray, w: float) -> np.ndarray:
    """C2 ramp from 0 at ``-w`` to 1 at ``+w``; ``s(-x) = 1 - s(x)``."""
    t = np.clip((x + w) / (2.0 * w), 0.0, 1.0)
    return t * t * t * (t * (6.0 * t - 15.0) + 10.0)


def _window(poly_uv: np.ndarray, shape, pad: float):
    h, w = shape
    umin, vmin = poly_uv.min(axis=0) - pad
    umax, vmax = poly_uv.max(axis=0) + pad
    j0, j1 = max(0, math.ceil(umin)), min(w - 1, math.floor(umax))
    i0, i1 = max(0, math.ceil(vmin)), min(h - 1, math.floor(vmax))
    if j1 < j0 or i1 < i0:
        return None
    jj, ii = np.meshgrid(np.arange(j0, j1 + 1, dtype=float), np.arange(i0, i1 + 1, dtype=float))
    return slice(i0, i1 + 1), slice(j0, j1 + 1), jj, ii


def _inward_distances(poly_uv: np.ndarray, jj, ii):
    sign = 1.0 if geo.signed_area([tuple(p) for p in poly_uv]) > 0 else -1.0
    n = len(poly_uv)
    for k in range(n):
        (au, av), (bu, bv) = poly_uv[k], poly_uv[(k + 1) % n]
        ln = math.hypot(bu - au, bv - av)
        yield sign * ((bu - au) * (ii - av) - (bv - av) * (jj - au)) / ln


def render(scene: Scene, segments: list[Segment], view: ViewTransform,
           softness: float = EDGE_SOFTNESS) -> ObservationImage:
    """Draw segments as filled polygons with anti-aliased edges.

    Each segment contributes ``gray * prod_e smootherstep(d_e)`` where ``d_e``
    is the inward distance (pixels) to edge ``e``. The profile depends only
    on distances to the polygon, so the image is a smooth, rotation
    consistent function sampled at pixel centers; this keeps the encoder's
    bilinear resampling accurate. The segment map uses hard pixel-center
    inclusion.
    """
    h, w = view.image_size
    pixels = np.zeros((h, w), dtype=np.float64)
    ids = np.full((h, w), BACKGROUND, dtype=np.int32)
    levels = gray_levels(len(segments))
    for k, seg in enumerate(segments):
        uv, _ = world_to_image(view, seg.polygon)
        win = _window(uv, (h, w), softness)
        if win is None:
            continue
        rows, cols, jj, ii = win
        alpha = np.ones(jj.shape)
        inside = np.ones(jj.shape, dtype=bool)
        for d in _inward_distances(uv, jj, ii):
            inside &= d >= 0
            if softness > 0:
                alpha *= smootherstep(d, softness)
        if softness <= 0:
            alpha = inside.astype(float)
        pixels[rows, cols] += levels[k] * alpha
        ids[rows, cols][inside] = seg.id
    return ObservationImage(np.clip(pixels, 0.0, 1.0).astype(np.float32), view, ids)


def write_pgm(path, pixels: np.ndarray) -> None:
    data = np.clip(np.rint(np.asarray(pixels, dtype=float) * 255.0), 0, 255).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(data.tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    data = np.frombuffer(parts[4][: w * h], dtype=np.uint8).reshape(h, w)
    return data.astype(np.float32) / maxval


def rle_encode(grid: np.ndarray) -> list[list[int]]:
    flat = np.asarray(grid).ravel()
    if flat.size == 0:
        return []
    change = np.flatnonzero(np.diff(flat)) + 1
    starts = np.concatenate([[0], change])
    lengths = np.diff(np.concatenate([starts, [flat.size]]))
    return [[int(flat[s]), int(n)] for s, n in zip(starts, lengths)]


def rle_decode(runs, shape) -> np.ndarray:
    if not runs:
        return np.full(shape, BACKGROUND, dtype=np.int32)
    vals = np.array([r[0] for r in runs], dtype=np.int32)
    lens = np.array([r[1] for r in runs], dtype=np.int64)
    return np.repeat(vals, lens).reshape(shape)
