"""Tabletop scenes: tables, convex objects, generation and distance queries."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Sequence

import numpy as np

from . import geometry as geo

SCENE_SCHEMA = "singulate.scene/1"

CONTACT_EPSILON = 1e-3
MOTION_EPSILON = 5e-3
SINGULATION_THRESHOLD = 0.03
MIN_AREA = 1e-8


class SceneError(ValueError):
    pass


class PlacementError(SceneError):
    """Raised when the generator cannot fit the requested objects."""


@dataclass(frozen=True)
class TableSpec:
    width: float = 1.0
    height: float = 0.8
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise SceneError(f"table dimensions must be positive, got {self.width}x{self.height}")

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        x0, y0 = self.origin
        return (x0, y0, x0 + self.width, y0 + self.height)

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)

    def contains(self, p, tol: float = 0.0) -> bool:
        x0, y0, x1, y1 = self.bounds
        return x0 - tol <= p[0] <= x1 + tol and y0 - tol <= p[1] <= y1 + tol


@dataclass(frozen=True)
class SceneObject:
    """A rigid convex object.

    ``polygon`` is in the body frame; ``pose`` is ``(x, y, theta)`` mapping
    body to world coordinates.
    """

    id: int
    polygon: tuple[tuple[float, float], ...]
    pose: tuple[float, float, float] = (0.0, 0.0, 0.0)
    mass_center: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        poly = tuple((float(x), float(y)) for x, y in self.polygon)
        object.__setattr__(self, "polygon", poly)
        object.__setattr__(self, "pose", tuple(float(v) for v in self.pose))
        object.__setattr__(self, "mass_center", tuple(float(v) for v in self.mass_center))
        validate_polygon(poly)
        if not geo.point_in_convex(self.mass_center, poly):
            raise SceneError(f"object {self.id}: mass center outside polygon")

    @cached_property
    def world_polygon(self) -> list[tuple[float, float]]:
        return geo.transform(self.polygon, *self.pose)

    @cached_property
    def world_mass_center(self) -> tuple[float, float]:
        return geo.transform([self.mass_center], *self.pose)[0]

    @property
    def area(self) -> float:
        return geo.area(self.polygon)

    @property
    def radius(self) -> float:
        """Largest distance from the mass center to a vertex."""
        mx, my = self.mass_center
        return max(math.hypot(x - mx, y - my) for x, y in self.polygon)

    def moved(self, pose) -> "SceneObject":
        return replace(self, pose=tuple(pose))


@dataclass(frozen=True)
class Scene:
    table: TableSpec
    objects: tuple[SceneObject, ...]
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        if not self.objects:
            raise SceneError("a scene needs at least one object")
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise SceneError("duplicate object ids")
        for o in self.objects:
            if not all(self.table.contains(p, tol=1e-9) for p in o.world_polygon):
                raise SceneError(f"object {o.id} extends beyond the table")

    def object(self, oid: int) -> SceneObject:
        for o in self.objects:
            if o.id == oid:
                return o
        raise KeyError(oid)

    @property
    def ids(self) -> list[int]:
        return [o.id for o in self.objects]

    def with_poses(self, poses: dict) -> "Scene":
        return replace(self, objects=tuple(o.moved(poses[o.id]) if o.id in poses else o
                                           for o in self.objects))

    def to_dict(self) -> dict:
        return {
            "schema": SCENE_SCHEMA,
            "rng_seed": self.rng_seed,
            "table": {"width": self.table.width, "height": self.table.height,
                      "origin": list(self.table.origin)},
            "objects": [{"id": o.id, "polygon": [list(p) for p in o.polygon],
                         "pose": list(o.pose), "mass_center": list(o.mass_center)}
                        for o in self.objects],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scene":
        if d.get("schema") != SCENE_SCHEMA:
            raise SceneError(f"unsupported scene schema {d.get('schema')!r}")
        t = d["table"]
        table = TableSpec(t["width"], t["height"], tuple(t["origin"]))
        objs = [SceneObject(o["id"], tuple(map(tuple, o["polygon"])), tuple(o["pose"]),
                            tuple(o["mass_center"])) for o in d["objects"]]
        return cls(table, tuple(objs), int(d["rng_seed"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, s: str) -> "Scene":
        return cls.from_dict(json.loads(s))


def validate_polygon(poly: Sequence) -> None:
    if len(poly) < 3:
        raise SceneError("polygon needs at least 3 vertices")
    if not geo.is_convex(poly):
        raise SceneError("polygon must be convex and counter-clockwise")
    if geo.area(poly) <= MIN_AREA:
        raise SceneError("degenerate polygon")


def default_shape_library() -> list[list[tuple[float, float]]]:
    """Everyday-object footprints between 5 and 14 cm."""
    return [
        geo.rectangle(0.06, 0.06),
        geo.rectangle(0.08, 0.08),
        geo.rectangle(0.10, 0.05),
        geo.rectangle(0.12, 0.06),
        geo.rectangle(0.14, 0.045),
        geo.regular_polygon(3, 0.045),
        geo.regular_polygon(5, 0.04),
        geo.regular_polygon(6, 0.035),
        geo.regular_polygon(8, 0.035),
    ]


def _center_template(poly) -> tuple[tuple[float, float], ...]:
    poly = geo.ensure_ccw(poly)
    validate_polygon(poly)
    cx, cy = geo.centroid(poly)
    return tuple((x - cx, y - cy) for x, y in poly)


def generate_scene(n_objects: int, shape_library=None, table: TableSpec | None = None,
                   seed: int = 0, max_attempts: int = 200,
                   contact_gap: float = 0.5 * CONTACT_EPSILON) -> Scene:
    """Random cluster of touching objects.

    The first object is dropped near the table center; every further object is
    slid in from outside the table along a random direction aimed at a random
    placed object and stops ``contact_gap`` short of the first object it meets,
    so the contact graph stays connected.
    """
    if n_objects < 1:
        raise SceneError("n_objects must be >= 1")
    shape_library = default_shape_library() if shape_library is None else shape_library
    if not shape_library:
        raise SceneError("empty shape library")
    templates = [_center_template(p) for p in shape_library]
    table = table or TableSpec()
    rng = np.random.default_rng(seed)
    x0, y0, x1, y1 = table.bounds
    cx, cy = (x0 + x1) / 2, (y0 + y1) / 2

    def inside(poly):
        bx0, by0, bx1, by1 = geo.aabb(poly)
        return bx0 >= x0 and by0 >= y0 and bx1 <= x1 and by1 <= y1

    placed: list[SceneObject] = []
    for k in range(n_objects):
        for _ in range(max_attempts):
            tpl = templates[int(rng.integers(len(templates)))]
            theta = float(rng.uniform(-math.pi, math.pi))
            if not placed:
                px = cx + float(rng.uniform(-0.1, 0.1))
                py = cy + float(rng.uniform(-0.1, 0.1))
                obj = SceneObject(k, tpl, (px, py, theta))
                if inside(obj.world_polygon):
                    break
                continue
            anchor = placed[int(rng.integers(len(placed)))]
            phi = float(rng.uniform(-math.pi, math.pi))
            ax, ay = anchor.world_mass_center
            # lateral jitter so objects do not always line up on centers
            lat = float(rng.uniform(-0.5, 0.5)) * anchor.radius
            far = 2.0 * table.diagonal
            d = (-math.cos(phi), -math.sin(phi))
            sx = ax - far * d[0] - lat * d[1]
            sy = ay - far * d[1] + lat * d[0]
            start = geo.transform(tpl, sx, sy, theta)
            hit = min(geo.sweep_distance(start, o.world_polygon, d) for o in placed)
            if not math.isfinite(hit):
                continue
            step = hit - contact_gap
            obj = SceneObject(k, tpl, (sx + step * d[0], sy + step * d[1], theta))
            poly = obj.world_polygon
            if not inside(poly):
                continue
            if any(geo.sat_overlap(o.world_polygon, poly)[0] > 0.0 for o in placed):
                continue
            break
        else:
            raise PlacementError(f"could not place object {k} after {max_attempts} attempts")
        placed.append(obj)
    return Scene(table, tuple(placed), seed)


def pairwise_distances(scene: Scene) -> dict[tuple[int, int], float]:
    polys = [(o.id, o.world_polygon) for o in scene.objects]
    out = {}
    for i in range(len(polys)):
        for j in range(i + 1, len(polys)):
            out[(polys[i][0], polys[j][0])] = geo.convex_distance(polys[i][1], polys[j][1])
    return out


def min_pairwise_distance(scene: Scene) -> float:
    if len(scene.objects) < 2:
        return math.inf
    return min(pairwise_distances(scene).values())


def object_clearance(scene: Scene, oid: int) -> float:
    """Distance from one object to its nearest neighbour (inf if alone)."""
    me = scene.object(oid).world_polygon
    return min((geo.convex_distance(me, o.world_polygon) for o in scene.objects if o.id != oid),
               default=math.inf)


def is_singulated(scene: Scene, threshold: float = SINGULATION_THRESHOLD) -> bool:
    return min_pairwise_distance(scene) >= threshold


def contact_graph(scene: Scene, eps: float = CONTACT_EPSILON) -> dict[int, set[int]]:
    g = {o.id: set() for o in scene.objects}
    for (a, b), d in pairwise_distances(scene).items():
        if d < eps:
            g[a].add(b)
            g[b].add(a)
    return g


def is_connected(graph: dict[int, set[int]]) -> bool:
    if not graph:
        return True
    start = next(iter(graph))
    seen, todo = {start}, [start]
    while todo:
        for nb in graph[todo.pop()]:
            if nb not in seen:
                seen.add(nb)
                todo.append(nb)
    return len(seen) == len(graph)
