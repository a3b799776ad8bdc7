"""Quasi-static planar pushing with a point pusher.

The pusher advances along a straight segment in fixed sub-steps. At every
sub-step penetrations are projected out: first the pusher against each
object, then object against object (the downstream object yields), then the
table boundary clamps. A sub-step that cannot be made consistent ends the
push at the previous sub-step.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

from . import geometry as geo
from .scene import CONTACT_EPSILON, MOTION_EPSILON, Scene, SceneError

log = logging.getLogger(__name__)

SUB_STEP = 2e-3
MAX_ITERATIONS = 200
PUSH_LENGTH = 0.2
# rad per meter of travel per unit lever ratio (|lever| / object radius);
# a push 80-90% of the way from the face center to a square's corner turns
# it 13-15 deg over 0.2 m
ROTATION_GAIN = 3.0
_SLOP = 1e-9


@dataclass(frozen=True)
class PushCommand:
    start: tuple[float, float]
    direction: tuple[float, float]
    length: float = PUSH_LENGTH

    def __post_init__(self):
        n = math.hypot(*self.direction)
        if abs(n - 1.0) > 1e-9:
            raise SceneError(f"push direction must be a unit vector (|d| = {n})")
        if not self.length > 0:
            raise SceneError("push length must be positive")

    @property
    def end(self) -> tuple[float, float]:
        return (self.start[0] + self.length * self.direction[0],
                self.start[1] + self.length * self.direction[1])


@dataclass
class PushOutcome:
    moved_ids: set = field(default_factory=set)
    displacement_map: dict = field(default_factory=dict)
    contacted_first: int | None = None
    traveled: float = 0.0
    truncated: bool = False

    def to_dict(self) -> dict:
        return {
            "moved_ids": sorted(self.moved_ids),
            "displacement": {str(k): [v[0][0], v[0][1], v[1]]
                             for k, v in sorted(self.displacement_map.items())},
            "contacted_first": self.contacted_first,
            "traveled": self.traveled,
            "truncated": self.truncated,
        }


class _Body:
    __slots__ = ("id", "local", "com_local", "x", "y", "theta", "radius", "poly", "com", "box")

    def __init__(self, obj):
        self.id = obj.id
        self.local = obj.polygon
        self.com_local = obj.mass_center
        self.x, self.y, self.theta = obj.pose
        self.radius = obj.radius
        self._refresh()

    def _refresh(self):
        self.poly = geo.transform(self.local, self.x, self.y, self.theta)
        self.com = geo.transform([self.com_local], self.x, self.y, self.theta)[0]
        self.box = geo.aabb(self.poly)

    def shift(self, dx, dy):
        self.x += dx
        self.y += dy
        self.poly = [(px + dx, py + dy) for px, py in self.poly]
        self.com = (self.com[0] + dx, self.com[1] + dy)
        b = self.box
        self.box = (b[0] + dx, b[1] + dy, b[2] + dx, b[3] + dy)

    def holds(self, p) -> bool:
        b = self.box
        return b[0] < p[0] < b[2] and b[1] < p[1] < b[3]

    def turn(self, angle):
        # rotate about the world mass center
        cx, cy = self.com
        c, s = math.cos(angle), math.sin(angle)
        ox, oy = self.x - cx, self.y - cy
        self.x = cx + c * ox - s * oy
        self.y = cy + s * ox + c * oy
        self.theta += angle
        self._refresh()

    def state(self):
        return (self.x, self.y, self.theta)

    def restore(self, st):
        self.x, self.y, self.theta = st
        self._refresh()


def _clamp(body: _Body, bounds) -> None:
    x0, y0, x1, y1 = bounds
    bx0, by0, bx1, by1 = body.box
    dx = (x0 - bx0) if bx0 < x0 else ((x1 - bx1) if bx1 > x1 else 0.0)
    dy = (y0 - by0) if by0 < y0 else ((y1 - by1) if by1 > y1 else 0.0)
    if dx or dy:
        body.shift(dx, dy)


def _aabb_touch(a, b, margin=0.0) -> bool:
    return not (a[2] + margin < b[0] or b[2] + margin < a[0]
                or a[3] + margin < b[1] or b[3] + margin < a[1])


def _resolve_pusher(p, bodies) -> list[int]:
    """Project pusher penetrations out of every body; returns the ids touched."""
    touched = []
    for b in bodies:
        if not b.holds(p):
            continue
        depth, edge = geo.penetration(p, b.poly)
        if depth <= _SLOP:
            continue
        n = len(b.poly)
        (ax, ay), (bx, by) = b.poly[edge], b.poly[(edge + 1) % n]
        ex, ey = bx - ax, by - ay
        ln = math.hypot(ex, ey)
        # body moves against its outward normal, i.e. away from the pusher
        ux, uy = -ey / ln, ex / ln
        b.shift(ux * depth, uy * depth)
        rx, ry = p[0] - b.com[0], p[1] - b.com[1]
        lever = rx * uy - ry * ux
        if abs(lever) > 1e-12:
            b.turn(ROTATION_GAIN * (lever / b.radius) * depth)
            # keep the contact consistent after turning
            d2, e2 = geo.penetration(p, b.poly)
            if d2 > _SLOP:
                (ax, ay), (bx, by) = b.poly[e2], b.poly[(e2 + 1) % n]
                ex, ey = bx - ax, by - ay
                ln = math.hypot(ex, ey)
                b.shift(-ey / ln * d2, ex / ln * d2)
        touched.append(b.id)
    return touched


def _resolve_chain(bodies, rank, bounds, max_iterations) -> bool:
    """Separate overlapping bodies; the higher-ranked (downstream) body yields.

    Bodies that never moved cannot overlap each other, so only pairs with at
    least one ranked body are tested.
    """
    for _ in range(max_iterations):
        worst = None
        for i in range(len(bodies)):
            ri = bodies[i].id in rank
            for j in range(i + 1, len(bodies)):
                if not (ri or bodies[j].id in rank):
                    continue
                if not _aabb_touch(bodies[i].box, bodies[j].box):
                    continue
                depth, axis = geo.sat_overlap(bodies[i].poly, bodies[j].poly)
                if depth > _SLOP and (worst is None or depth > worst[0]):
                    worst = (depth, i, j, axis)
        if worst is None:
            return True
        depth, i, j, axis = worst
        a, b = bodies[i], bodies[j]
        ra, rb = rank.get(a.id, math.inf), rank.get(b.id, math.inf)
        if ra < rb or (ra == rb and a.id < b.id):
            mover, sign, src = b, 1.0, ra
        else:
            mover, sign, src = a, -1.0, rb
        before = (mover.x, mover.y)
        mover.shift(sign * axis[0] * (depth + _SLOP), sign * axis[1] * (depth + _SLOP))
        _clamp(mover, bounds)
        if abs(mover.x - before[0]) + abs(mover.y - before[1]) < 1e-12:
            return False  # pinned against the table edge: jammed
        if mover.id not in rank:
            rank[mover.id] = src + 1
    return False


def apply_push(scene: Scene, cmd: PushCommand, sub_step: float = SUB_STEP,
               max_iterations: int = MAX_ITERATIONS,
               motion_epsilon: float = MOTION_EPSILON) -> tuple[Scene, PushOutcome]:
    """Execute a straight-line push and return the resulting scene and outcome."""
    bodies = [_Body(o) for o in scene.objects]
    bounds = scene.table.bounds
    start_poly = {b.id: list(b.poly) for b in bodies}
    start_pose = {b.id: b.state() for b in bodies}
    start_com = {b.id: b.com for b in bodies}
    dx, dy = cmd.direction
    n_steps = max(1, int(math.ceil(cmd.length / sub_step - 1e-9)))
    rank: dict = {}
    outcome = PushOutcome()
    traveled = 0.0

    sweep = geo.aabb([cmd.start, cmd.end])
    if not any(_aabb_touch(sweep, b.box) for b in bodies):
        return scene, outcome

    for k in range(1, n_steps + 1):
        s = min(cmd.length, k * sub_step)
        p = (cmd.start[0] + s * dx, cmd.start[1] + s * dy)
        saved = [b.state() for b in bodies]
        saved_rank, saved_first = dict(rank), outcome.contacted_first
        ok = False
        for _ in range(4):
            for oid in _resolve_pusher(p, bodies):
                if outcome.contacted_first is None:
                    outcome.contacted_first = oid
                rank[oid] = 0
            for b in bodies:
                _clamp(b, bounds)
            if not _resolve_chain(bodies, rank, bounds, max_iterations):
                break
            if all(not b.holds(p) or geo.penetration(p, b.poly)[0] <= 1e-7 for b in bodies):
                ok = True
                break
        if not ok:
            for b, st in zip(bodies, saved):
                b.restore(st)
            rank, outcome.contacted_first = saved_rank, saved_first
            outcome.truncated = True
            log.debug("push truncated after %.4f m (jammed)", traveled)
            break
        traveled = s
    outcome.traveled = traveled

    poses = {}
    for b in bodies:
        poses[b.id] = b.state()
        disp = max(math.hypot(p[0] - q[0], p[1] - q[1]) for p, q in zip(b.poly, start_poly[b.id]))
        if disp > 0.0:
            cx0, cy0 = start_com[b.id]
            outcome.displacement_map[b.id] = ((b.com[0] - cx0, b.com[1] - cy0),
                                              b.theta - start_pose[b.id][2])
        if disp > motion_epsilon:
            outcome.moved_ids.add(b.id)
    return scene.with_poses(poses), outcome
