"""Programmatic push labels.

A push is positive only when all four conditions hold: the pushed object
ends up singulated, it was not singulated before, no other object moved, and
the push line passes close to the object's mass center.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .physics import PushOutcome
from .proposals import PushHandle
from .scene import SINGULATION_THRESHOLD, Scene, object_clearance


class LabelingError(RuntimeError):
    pass


@dataclass(frozen=True)
class LabelCriteria:
    singulation_threshold: float = SINGULATION_THRESHOLD
    # fraction of the pushed object's radius (mass center to farthest vertex)
    center_offset_max: float = 0.35
    max_moved: int = 1

    def __post_init__(self):
        if not (self.singulation_threshold > 0 and self.center_offset_max > 0):
            raise ValueError("label thresholds must be positive")


@dataclass(frozen=True)
class Label:
    singulated_after: bool
    single_object_moved: bool
    near_center: bool
    not_singulated_before: bool
    center_offset: float = 0.0

    @property
    def value(self) -> int:
        return int(self.singulated_after and self.single_object_moved
                   and self.near_center and self.not_singulated_before)

    def to_dict(self) -> dict:
        return {"label": self.value, "singulated_after": bool(self.singulated_after),
                "single_object_moved": bool(self.single_object_moved),
                "near_center": bool(self.near_center),
                "not_singulated_before": bool(self.not_singulated_before),
                "center_offset": float(self.center_offset)}


def push_line_offset(before: Scene, handle: PushHandle) -> float:
    """Perpendicular distance from the pushed object's mass center to the push line."""
    obj = before.object(handle.parent_object)
    mx, my = obj.world_mass_center
    px, py = handle.position
    nx, ny = handle.normal
    return abs((mx - px) * ny - (my - py) * nx)


def label_push(before: Scene, after: Scene, outcome: PushOutcome, handle: PushHandle,
               criteria: LabelCriteria = LabelCriteria()) -> Label:
    oid = handle.parent_object
    if oid not in before.ids or oid not in after.ids:
        raise LabelingError(f"pushed object {oid} missing from scene")
    thr = criteria.singulation_threshold
    obj = before.object(oid)
    offset = push_line_offset(before, handle)
    return Label(
        singulated_after=object_clearance(after, oid) >= thr,
        single_object_moved=len(outcome.moved_ids) <= criteria.max_moved,
        near_center=offset <= criteria.center_offset_max * obj.radius,
        not_singulated_before=not object_clearance(before, oid) >= thr,
        center_offset=offset / obj.radius,
    )


def singulation_progress(scene: Scene, threshold: float = SINGULATION_THRESHOLD) -> float:
    """Sum over objects of their clearance capped at ``threshold``."""
    total = 0.0
    for o in scene.objects:
        c = object_clearance(scene, o.id)
        total += threshold if math.isinf(c) else min(c, threshold)
    return total
