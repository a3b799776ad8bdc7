"""Closed-loop singulation trials.

Each step observes the scene (over-segment, render), samples push handles,
scores every proposal with the configured policy and executes the best
feasible one. A trial ends on success, when the push budget is spent, or
when no acceptable proposal remains.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import baseline as bl
from . import geometry as geo
from .encoder import encode_batch
from .network import model as mdl
from .oracle import LabelCriteria, label_push, singulation_progress
from .perception import default_view, over_segment, render
from .physics import PushCommand, apply_push
from .proposals import PER_SEGMENT, PushHandle, sample_handles, to_proposals
from .scene import (SINGULATION_THRESHOLD, Scene, generate_scene, is_singulated,
                    object_clearance)

log = logging.getLogger(__name__)

POLICIES = ("random", "vanilla_network", "aggregated_network", "network", "baseline",
            "oracle", "idle")
NETWORK_POLICIES = ("vanilla_network", "aggregated_network", "network")
STATUSES = ("success", "push_budget_exhausted", "no_feasible_positive")

PUSHER_RADIUS = 0.015
PUSHER_BACKOFF = 0.02


class TrialError(ValueError):
    pass


def max_pushes_for(n_objects: int) -> int:
    """Push budget floor(1.3 n) + 1, computed in integers."""
    return (13 * n_objects) // 10 + 1


def derive_seed(*keys) -> int:
    """Stable 32-bit seed from a tuple of non-negative ints."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


@dataclass(frozen=True)
class TrialConfig:
    n_objects: int = 4
    max_pushes: int | None = None
    singulation_threshold: float = SINGULATION_THRESHOLD
    policy: str = "random"
    positive_threshold: float = 0.5
    scene_seed: int = 0
    policy_seed: int = 0
    per_segment: int = PER_SEGMENT
    split_prob: float = 0.3
    # stop as soon as the scene is singulated; otherwise only the
    # no-positive rule (or the budget) ends a trial
    explicit_success_check: bool = True

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise TrialError(f"unknown policy {self.policy!r}; choose from {POLICIES}")
        if self.n_objects < 1:
            raise TrialError("n_objects must be >= 1")
        if self.max_pushes is None:
            object.__setattr__(self, "max_pushes", max_pushes_for(self.n_objects))
        if self.max_pushes < 0:
            raise TrialError("max_pushes must be >= 0")

    @property
    def is_network(self) -> bool:
        return self.policy in NETWORK_POLICIES

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class PushEntry:
    index: int
    scene: dict
    proposal: dict
    scores: list[float]
    chosen: int
    n_candidates: int
    n_feasible: int
    outcome: dict
    label: dict
    breakdown: dict | None = None
    image: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "image"}
        return d


@dataclass
class TrialRecord:
    config: dict
    entries: list[PushEntry]
    status: str
    terminated_by: str
    pushes_used: int
    final_scene: dict

    @property
    def success(self) -> bool:
        return self.status == "success"

    def to_dict(self) -> dict:
        return {"config": self.config, "status": self.status, "terminated_by": self.terminated_by,
                "pushes_used": self.pushes_used, "final_scene": self.final_scene,
                "entries": [e.to_dict() for e in self.entries]}


def feasibility_check(scene: Scene, handle: PushHandle, radius: float = PUSHER_RADIUS,
                      backoff: float = PUSHER_BACKOFF) -> bool:
    """Whether the pusher disc fits at the approach point behind the handle.

    Only objects block the disc; the table edge does not.
    """
    cx = handle.position[0] - backoff * handle.normal[0]
    cy = handle.position[1] - backoff * handle.normal[1]
    for o in scene.objects:
        x0, y0, x1, y1 = geo.aabb(o.world_polygon)
        if cx < x0 - radius or cx > x1 + radius or cy < y0 - radius or cy > y1 + radius:
            continue
        poly = o.world_polygon
        if geo.point_in_convex((cx, cy), poly) or geo.point_polygon_distance((cx, cy), poly) < radius:
            return False
    return True


def _push(scene: Scene, handle: PushHandle):
    return apply_push(scene, PushCommand(handle.position, handle.normal, handle.length))


def _n_singulated(scene: Scene, thr: float) -> int:
    return sum(object_clearance(scene, o.id) >= thr for o in scene.objects)


def oracle_key(before: Scene, handle: PushHandle, thr: float, criteria: LabelCriteria):
    """One-step lookahead value of a push (larger is better)."""
    after, outcome = _push(before, handle)
    label = label_push(before, after, outcome, handle, criteria)
    return (int(is_singulated(after, thr)), _n_singulated(after, thr), label.value,
            singulation_progress(after, thr))


@dataclass
class _Policy:
    config: TrialConfig
    model: mdl.NetworkParams | None
    rng: np.random.Generator
    track: bl.TrackState | None = None

    def scores(self, scene, segments, observation, proposals, feasible) -> tuple[np.ndarray, list | None]:
        cfg = self.config
        n = len(proposals)
        if cfg.policy == "random":
            return self.rng.random(n), None
        if cfg.is_network:
            return mdl.forward(self.model, encode_batch(observation, proposals)), None
        if cfg.policy == "baseline":
            graph = bl.build_graph(segments)
            out = [bl.score(p.handle, graph, self.track, p.handle.length) for p in proposals]
            return np.array([s for s, _ in out]), [b for _, b in out]
        if cfg.policy == "oracle":
            crit = LabelCriteria(singulation_threshold=cfg.singulation_threshold)
            keys = [oracle_key(scene, p.handle, cfg.singulation_threshold, crit) if ok else None
                    for p, ok in zip(proposals, feasible)]
            # rank feasible keys; infeasible proposals get -1
            ranked = sorted({k for k in keys if k is not None})
            pos = {k: i for i, k in enumerate(ranked)}
            return np.array([-1.0 if k is None else float(pos[k]) for k in keys]), None
        return np.zeros(n), None


def run_trial(config: TrialConfig, model: mdl.NetworkParams | None = None,
              scene: Scene | None = None, keep_images: bool = False) -> TrialRecord:
    """Run one trial; fully determined by ``config`` seeds, ``model`` and ``scene``."""
    if config.is_network and model is None:
        raise TrialError(f"policy {config.policy} needs a model")
    if scene is None:
        scene = generate_scene(config.n_objects, seed=config.scene_seed)
    thr = config.singulation_threshold
    view = default_view(scene.table)
    criteria = LabelCriteria(singulation_threshold=thr)
    policy = _Policy(config, model, np.random.default_rng(derive_seed(config.policy_seed, 7)),
                     bl.TrackState(scene.table.diagonal) if config.policy == "baseline" else None)
    entries: list[PushEntry] = []
    status, why = None, None
    for k in range(config.max_pushes):
        if config.explicit_success_check and is_singulated(scene, thr):
            status, why = "success", "explicit_check"
            break
        segments = over_segment(scene, noise_seed=derive_seed(config.scene_seed, k, 1),
                                split_prob=config.split_prob)
        observation = render(scene, segments, view)
        handles = sample_handles(segments, scene.table, config.per_segment,
                                 seed=derive_seed(config.scene_seed, k, 2))
        proposals = to_proposals(handles, view)
        if not proposals:
            status, why = "no_feasible_positive", "no_proposals"
            break
        if policy.track is not None:
            policy.track.observe(segments)
        feasible = [feasibility_check(scene, p.handle) for p in proposals]
        scores, breakdowns = policy.scores(scene, segments, observation, proposals, feasible)
        order = np.argsort(-scores, kind="stable")
        chosen = None
        for i in order:
            if config.is_network and scores[i] < config.positive_threshold:
                break
            if feasible[i]:
                chosen = int(i)
                break
        if chosen is None or config.policy == "idle":
            status = "no_feasible_positive"
            why = "idle" if config.policy == "idle" else "no_feasible_positive"
            break
        prop = proposals[chosen]
        after, outcome = _push(scene, prop.handle)
        label = label_push(scene, after, outcome, prop.handle, criteria)
        image = encode_batch(observation, [prop])[0] if keep_images else None
        entries.append(PushEntry(
            index=k, scene=scene.to_dict(), proposal=prop.to_dict(),
            scores=[float(s) for s in scores], chosen=chosen, n_candidates=len(proposals),
            n_feasible=int(sum(feasible)), outcome=outcome.to_dict(), label=label.to_dict(),
            breakdown=breakdowns[chosen] if breakdowns else None, image=image))
        if policy.track is not None:
            policy.track.record_push(prop.handle.segment)
        scene = after
    if status is None:
        if is_singulated(scene, thr) and config.explicit_success_check:
            status, why = "success", "explicit_check"
        else:
            status, why = "push_budget_exhausted", "budget"
    # success is always judged on the final scene
    if status != "success" and is_singulated(scene, thr):
        status, why = "success", why
    elif status == "success" and not is_singulated(scene, thr):
        raise TrialError("success reported on a non-singulated scene")
    log.debug("trial scene=%d policy=%s status=%s (%s) pushes=%d", config.scene_seed,
              config.policy, status, why, len(entries))
    return TrialRecord(config.to_dict(), entries, status, why, len(entries), scene.to_dict())
