"""Data collection, the two training rounds, and policy evaluation."""
from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import Dataset, write_dataset
from .encoder import CONVENTIONS
from .network import io as nio
from .network.model import NetworkParams
from .network.train import TrainConfig, train
from .perception import EDGE_SOFTNESS, GRAY_SCHEME
from .runner import TrialConfig, TrialRecord, derive_seed, max_pushes_for, run_trial

log = logging.getLogger(__name__)

COLLECT_STREAM = 0
EVAL_STREAM = 1
VALIDATION_EVERY = 10
REPORT_SCHEMA = "singulate.report/1"
CSV_COLUMNS = ("policy", "n_objects", "trial", "pushes_used", "success")


def model_conventions() -> dict:
    """Everything the encoder must reproduce at test time."""
    return dict(CONVENTIONS, gray_scheme=GRAY_SCHEME, edge_softness=EDGE_SOFTNESS)


def trial_config(policy: str, n_objects: int, trial: int, seed: int, stream: int,
                 **overrides) -> TrialConfig:
    """Per-trial seeds; the scene seed ignores the policy so all policies share scenes."""
    return TrialConfig(n_objects=n_objects, policy=policy,
                       scene_seed=derive_seed(seed, stream, n_objects, trial, 1),
                       policy_seed=derive_seed(seed, stream, n_objects, trial, 2), **overrides)


def _run(args) -> TrialRecord:
    cfg, model, keep = args
    return run_trial(cfg, model, keep_images=keep)


def run_many(configs: list[TrialConfig], model=None, jobs: int = 1,
             keep_images: bool = False) -> list[TrialRecord]:
    """Run trials in order; with ``jobs > 1`` they run in worker processes."""
    tasks = [(c, model, keep_images) for c in configs]
    if jobs <= 1 or len(tasks) <= 1:
        return [_run(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(_run, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))


def records_to_dataset(records: list[TrialRecord], trial_ids: list[int], round_tag: str = "") -> Dataset:
    images, labels, metas = [], [], []
    for tid, rec in zip(trial_ids, records):
        cfg = rec.config
        split = "validation" if tid % VALIDATION_EVERY == VALIDATION_EVERY - 1 else "train"
        for e in rec.entries:
            images.append(e.image)
            labels.append(e.label["label"])
            metas.append({"trial": tid, "push_index": e.index, "policy": cfg["policy"],
                          "split": split, "round": round_tag, "n_objects": cfg["n_objects"],
                          "scene_seed": cfg["scene_seed"], "policy_seed": cfg["policy_seed"],
                          "positive_threshold": cfg["positive_threshold"],
                          "proposal": e.proposal, "label_breakdown": e.label})
    if not labels:
        return Dataset.empty()
    return Dataset(np.stack(images), labels, metas)


def collect_dataset(policy: str, n_trials: int, n_objects: int, seed: int = 0,
                    model: NetworkParams | None = None, out=None, jobs: int = 1,
                    trial_offset: int = 0, round_tag: str = "",
                    positive_threshold: float = 0.5) -> tuple[Dataset, list[TrialRecord]]:
    """One labeled sample per executed push over ``n_trials`` trials."""
    ids = list(range(trial_offset, trial_offset + n_trials))
    overrides = {"positive_threshold": positive_threshold}
    configs = [trial_config(policy, n_objects, t, seed, COLLECT_STREAM, **overrides) for t in ids]
    records = run_many(configs, model, jobs, keep_images=True)
    data = records_to_dataset(records, ids, round_tag)
    if out is not None:
        write_dataset(out, data)
    c = data.counts()
    log.info("collected %d samples (%d positive) from %d %s trials", c["total"], c["positives"],
             n_trials, policy)
    return data, records


def collect_until(policy: str, target: int, n_objects: int, seed: int = 0,
                  model: NetworkParams | None = None, jobs: int = 1, batch: int = 50,
                  round_tag: str = "", positive_threshold: float = 0.5) -> Dataset:
    """Collect whole trials until at least ``target`` samples exist, then trim to ``target``.

    Trimming keeps a prefix in trial order, so the result is reproducible.
    """
    data, start = Dataset.empty(), 0
    while len(data) < target:
        part, _ = collect_dataset(policy, batch, n_objects, seed, model, None, jobs,
                                  trial_offset=start, round_tag=round_tag,
                                  positive_threshold=positive_threshold)
        if len(part) == 0 and start > 20 * batch:
            log.warning("policy %s produced no samples; stopping at %d", policy, len(data))
            break
        data = data.concat(part)
        start += batch
    return data.subset(np.arange(min(target, len(data))))


@dataclass
class AggregationResult:
    vanilla: NetworkParams
    aggregated: NetworkParams
    round1: Dataset
    round2: Dataset
    vanilla_log: list = field(default_factory=list)
    aggregated_log: list = field(default_factory=list)

    @property
    def merged(self) -> Dataset:
        return self.round1.concat(self.round2)


def train_iterations(round1: Dataset, round2_objects: int = 6, round2_target: int = 970,
                     config: TrainConfig = TrainConfig(), seed: int = 0, jobs: int = 1,
                     out_dir=None, positive_threshold: float = 0.5) -> AggregationResult:
    """Vanilla model on random-policy data, then an aggregated model.

    The vanilla model acts as the policy to collect round-2 data; the
    aggregated model is trained from scratch on the union of both rounds.
    """
    f1, log1 = train(round1, config, seed)
    if round2_target > 0:
        round2 = collect_until("vanilla_network", round2_target, round2_objects, seed + 1, f1, jobs,
                               round_tag="round2", positive_threshold=positive_threshold)
    else:
        round2 = Dataset.empty()
    merged = round1.concat(round2)
    f2, log2 = train(merged, config, seed)
    res = AggregationResult(f1, f2, round1, round2, log1, log2)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        nio.save_model(out / "vanilla.model", f1, model_conventions())
        nio.save_model(out / "aggregated.model", f2, model_conventions())
        write_dataset(out / "round2", round2)
        write_dataset(out / "merged", merged)
    return res


def success_curve(records: list[TrialRecord], max_pushes: int) -> list[float]:
    """Fraction of trials solved within k pushes, k = 0..max_pushes."""
    if not records:
        return [0.0] * (max_pushes + 1)
    return [sum(r.success and r.pushes_used <= k for r in records) / len(records)
            for k in range(max_pushes + 1)]


def summarize(records: list[TrialRecord], max_pushes: int) -> dict:
    used = [r.pushes_used for r in records if r.success]
    n = len(records)
    return {
        "trials": n,
        "successes": len(used),
        "success_rate": len(used) / n if n else 0.0,
        "mean_pushes": float(np.mean(used)) if used else None,
        "std_pushes": float(np.std(used)) if used else None,
        "curve": success_curve(records, max_pushes),
        "terminations": {s: sum(r.terminated_by == s for r in records)
                         for s in sorted({r.terminated_by for r in records})},
    }


def evaluate(policies: dict, object_counts, n_trials: int, seed: int = 0, jobs: int = 1,
             out_dir=None, positive_threshold: float = 0.5) -> dict:
    """Run every policy on the same seeded scenes.

    ``policies`` maps a report name to ``(policy, model_or_None)``. Returns the
    JSON report; with ``out_dir`` also writes ``report.csv``, ``report.json``
    and one NDJSON trial log per policy and object count.
    """
    rows, summary = [], []
    all_records = {}
    for n_obj in object_counts:
        for name, (policy, model) in policies.items():
            cfgs = [trial_config(policy, n_obj, t, seed, EVAL_STREAM,
                                 positive_threshold=positive_threshold) for t in range(n_trials)]
            recs = run_many(cfgs, model, jobs)
            all_records[(name, n_obj)] = recs
            for t, r in enumerate(recs):
                rows.append({"policy": name, "n_objects": n_obj, "trial": t,
                             "pushes_used": r.pushes_used, "success": int(r.success)})
            s = summarize(recs, max_pushes_for(n_obj))
            s.update(policy=name, n_objects=n_obj)
            summary.append(s)
            log.info("%s @ %d objects: %d/%d", name, n_obj, s["successes"], n_trials)
    report = {"schema": REPORT_SCHEMA, "seed": seed, "n_trials": n_trials,
              "object_counts": list(object_counts), "results": summary}
    if out_dir is not None:
        write_report(out_dir, rows, report, all_records)
    report["_records"] = all_records
    return report


def write_report(out_dir, rows, report, records=None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "report.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.DictWriter(f, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    clean = {k: v for k, v in report.items() if not k.startswith("_")}
    (out / "report.json").write_text(json.dumps(clean, indent=2, sort_keys=True) + "\n")
    for (name, n_obj), recs in (records or {}).items():
        write_trial_log(out / f"trials_{name}_{n_obj}.ndjson", recs)


def write_trial_log(path, records: list[TrialRecord]) -> None:
    """One line per push (``kind: push``) plus one summary line per trial."""
    with open(path, "w", encoding="utf-8") as f:
        for t, r in enumerate(records):
            for e in r.entries:
                f.write(json.dumps({"kind": "push", "trial": t, **e.to_dict()}, sort_keys=True) + "\n")
            f.write(json.dumps({"kind": "trial", "trial": t, "config": r.config, "status": r.status,
                                "terminated_by": r.terminated_by, "pushes_used": r.pushes_used},
                               sort_keys=True) + "\n")
