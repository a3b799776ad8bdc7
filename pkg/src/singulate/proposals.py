"""Push handle sampling on segment boundaries and lifting to image proposals."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .perception import Segment, ViewTransform, image_to_world, world_to_image
from .physics import PUSH_LENGTH
from .scene import TableSpec

log = logging.getLogger(__name__)

PER_SEGMENT = 16


@dataclass(frozen=True)
class PushHandle:
    position: tuple[float, float]
    normal: tuple[float, float]
    segment: int
    parent_object: int
    length: float = PUSH_LENGTH

    @property
    def end(self) -> tuple[float, float]:
        return (self.position[0] + self.length * self.normal[0],
                self.position[1] + self.length * self.normal[1])

    def to_dict(self) -> dict:
        return {"position": list(self.position), "normal": list(self.normal),
                "segment": self.segment, "parent_object": self.parent_object,
                "length": self.length}

    @classmethod
    def from_dict(cls, d) -> "PushHandle":
        return cls(tuple(d["position"]), tuple(d["normal"]), int(d["segment"]),
                   int(d["parent_object"]), float(d["length"]))


@dataclass(frozen=True)
class PushProposal:
    c: tuple[float, float]
    alpha: float
    handle: PushHandle

    def to_dict(self) -> dict:
        return {"c": list(self.c), "alpha": self.alpha, "handle": self.handle.to_dict()}

    @classmethod
    def from_dict(cls, d) -> "PushProposal":
        return cls(tuple(d["c"]), float(d["alpha"]), PushHandle.from_dict(d["handle"]))


def wrap_angle(a: float) -> float:
    """Normalize to [-pi, pi)."""
    return (a + math.pi) % (2 * math.pi) - math.pi


def _boundary_points(seg: Segment, ts):
    poly = seg.polygon
    n = len(poly)
    lens = [math.dist(poly[i], poly[(i + 1) % n]) for i in range(n)]
    cum = np.concatenate([[0.0], np.cumsum(lens)])
    out = []
    for t in ts:
        i = min(int(np.searchsorted(cum, t, side="right")) - 1, n - 1)
        f = (t - cum[i]) / lens[i]
        (ax, ay), (bx, by) = poly[i], poly[(i + 1) % n]
        ex, ey = (bx - ax) / lens[i], (by - ay) / lens[i]
        # ccw polygon: inward normal is the edge direction turned left
        out.append(((ax + f * (bx - ax), ay + f * (by - ay)), (-ey, ex)))
    return out, cum[-1]


def sample_handles(segments: list[Segment], table: TableSpec, per_segment: int = PER_SEGMENT,
                   seed: int = 0, length: float = PUSH_LENGTH) -> list[PushHandle]:
    """Sample ``per_segment`` boundary handles per segment and drop off-table pushes.

    Positions are stratified-uniform in arc length (one jittered sample per
    equal-length stratum). A handle survives only if both its position and
    its push end point lie on the table.
    """
    if per_segment < 1:
        raise ValueError("per_segment must be >= 1")
    rng = np.random.default_rng(seed)
    handles = []
    for seg in segments:
        jitter = rng.random(per_segment)
        poly = seg.polygon
        perim = sum(math.dist(poly[i], poly[(i + 1) % len(poly)]) for i in range(len(poly)))
        ts = (np.arange(per_segment) + jitter) / per_segment * perim
        pts, _ = _boundary_points(seg, ts)
        for pos, nrm in pts:
            h = PushHandle(pos, nrm, seg.id, seg.parent_object, length)
            if table.contains(h.position) and table.contains(h.end):
                handles.append(h)
    return handles


def to_proposals(handles: list[PushHandle], view: ViewTransform) -> list[PushProposal]:
    """Express handles as image-plane proposals ``(c, alpha)``."""
    if not handles:
        return []
    uv, inside = world_to_image(view, [h.position for h in handles])
    out = []
    for h, c, ok in zip(handles, uv, inside):
        if not ok:
            continue
        # image v axis points down, so world angles flip sign
        alpha = wrap_angle(math.atan2(-h.normal[1], h.normal[0]))
        out.append(PushProposal((float(c[0]), float(c[1])), alpha, h))
    dropped = len(handles) - len(out)
    if dropped:
        log.info("dropped %d handles outside the working image", dropped)
    return out


def proposal_world_end(p: PushProposal, view: ViewTransform) -> np.ndarray:
    start = image_to_world(view, p.c)
    d = np.array([math.cos(p.alpha), -math.sin(p.alpha)])
    return start + p.handle.length * d
