"""Hand-crafted push scoring from free space and push history.

Segments become axis-aligned boxes in a complete graph weighted by box
Manhattan distance. A push is scored by how much room the pushed segment's
box would have after a straight translation, blended with an exponential
decay in how often that segment was pushed before. Segments are tracked
between observations by greedy matching on centroid and principal-axis
descriptors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .perception import Segment
from .physics import PUSH_LENGTH
from .proposals import PushHandle

D_MAX = 0.3
W_FREE = 0.5
W_HISTORY = 0.5
W_PCA = 0.6
W_CENTROID = 0.4
MATCH_THRESHOLD = 0.5

Box = tuple[float, float, float, float]


def aabb_manhattan(a: Box, b: Box) -> float:
    """Sum of the per-axis gaps between two boxes ``(xmin, ymin, xmax, ymax)``."""
    gx = max(0.0, a[0] - b[2], b[0] - a[2])
    gy = max(0.0, a[1] - b[3], b[1] - a[3])
    return gx + gy


def _shift(box: Box, dx: float, dy: float) -> Box:
    return (box[0] + dx, box[1] + dy, box[2] + dx, box[3] + dy)


@dataclass
class SegmentGraph:
    segments: list[Segment]
    boxes: dict[int, Box]
    distances: np.ndarray  # symmetric, indexed like ``segments``

    @property
    def ids(self) -> list[int]:
        return [s.id for s in self.segments]


def build_graph(segments: list[Segment]) -> SegmentGraph:
    boxes = {s.id: s.aabb for s in segments}
    n = len(segments)
    d = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d[i, j] = d[j, i] = aabb_manhattan(boxes[segments[i].id], boxes[segments[j].id])
    return SegmentGraph(list(segments), boxes, d)


def raw_free_space(graph: SegmentGraph, handle: PushHandle, length: float = PUSH_LENGTH) -> float:
    """Smallest box distance after translating the pushed segment; inf if alone."""
    if handle.segment not in graph.boxes:
        raise KeyError(f"segment {handle.segment} not in graph")
    moved = _shift(graph.boxes[handle.segment], length * handle.normal[0], length * handle.normal[1])
    others = [b for sid, b in graph.boxes.items() if sid != handle.segment]
    if not others:
        return math.inf
    return min(aabb_manhattan(moved, b) for b in others)


def free_space_feature(graph: SegmentGraph, handle: PushHandle, length: float = PUSH_LENGTH,
                       d_max: float = D_MAX) -> float:
    """Free space after the predicted motion, normalized to [0, 1].

    A predicted collision (zero distance) scores 0; a lone segment scores 1.
    """
    raw = raw_free_space(graph, handle, length)
    if raw <= 0.0:
        return 0.0
    return min(1.0, raw / d_max)


def history_feature(r: int) -> float:
    if r < 0:
        raise ValueError("push count must be non-negative")
    return math.exp(-r)


def combine(f_s: float, f_h: float) -> float:
    return W_FREE * f_s + W_HISTORY * f_h


def pca_descriptor(seg: Segment) -> np.ndarray:
    """Principal axes scaled by their extents, in canonical order and sign."""
    (a0, a1), (e0, e1) = seg.axes, seg.extents
    return np.array([e0 * a0[0], e0 * a0[1], e1 * a1[0], e1 * a1[1]])


def segment_distance(a: Segment, b: Segment, diagonal: float) -> float:
    d_c = min(1.0, math.dist(a.centroid, b.centroid) / diagonal)
    d_pca = min(1.0, float(np.linalg.norm(pca_descriptor(a) - pca_descriptor(b))) / diagonal)
    return W_PCA * d_pca + W_CENTROID * d_c


def match_segments(prev: list[Segment], cur: list[Segment], diagonal: float,
                   threshold: float = MATCH_THRESHOLD) -> dict[int, tuple[int, float]]:
    """Greedy matching of current to previous segments.

    Returns ``{cur_id: (prev_id, distance)}`` for matched segments; pairs are
    taken in increasing distance (ties by list order) while below
    ``threshold``.
    """
    pairs = []
    for j, c in enumerate(cur):
        for i, p in enumerate(prev):
            pairs.append((segment_distance(p, c, diagonal), j, i))
    pairs.sort()
    used_prev, out = set(), {}
    for d, j, i in pairs:
        if d >= threshold:
            break
        if cur[j].id in out or prev[i].id in used_prev:
            continue
        out[cur[j].id] = (prev[i].id, d)
        used_prev.add(prev[i].id)
    return out


@dataclass
class TrackState:
    """Push counts carried across observations by segment tracking."""

    diagonal: float
    counts: dict[int, int] = field(default_factory=dict)   # track id -> r
    assignment: dict[int, int] = field(default_factory=dict)  # current segment id -> track id
    segments: list[Segment] = field(default_factory=list)
    next_track: int = 0

    def observe(self, segments: list[Segment]) -> dict[int, tuple[int, float]]:
        matches = match_segments(self.segments, segments, self.diagonal)
        assignment = {}
        for s in segments:
            if s.id in matches:
                assignment[s.id] = self.assignment[matches[s.id][0]]
            else:
                assignment[s.id] = self.next_track
                self.counts[self.next_track] = 0
                self.next_track += 1
        self.assignment = assignment
        self.segments = list(segments)
        return matches

    def track_of(self, segment_id: int) -> int:
        return self.assignment[segment_id]

    def pushes(self, segment_id: int) -> int:
        return self.counts.get(self.assignment.get(segment_id, -1), 0)

    def record_push(self, segment_id: int) -> None:
        self.counts[self.assignment[segment_id]] += 1


def score(handle: PushHandle, graph: SegmentGraph, track: TrackState,
          length: float = PUSH_LENGTH) -> tuple[float, dict]:
    """Blended score and its breakdown for one handle."""
    f_s = free_space_feature(graph, handle, length)
    r = track.pushes(handle.segment)
    f_h = history_feature(r)
    return combine(f_s, f_h), {"f_s": f_s, "f_h": f_h, "r": r,
                               "track": track.assignment.get(handle.segment)}
