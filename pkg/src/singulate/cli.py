"""Command-line entry point.

Every subcommand reads defaults from an optional INI file (one section per
subcommand, plus ``[DEFAULT]``) and lets ``--key=value`` flags override
them. The fully resolved settings are written next to the outputs.
"""
from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

log = logging.getLogger("singulate")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_MISSING = 3
EXIT_SCHEMA = 4
EXIT_CHECKSUM = 5
EXIT_MISMATCH = 6


class CliError(Exception):
    def __init__(self, code: int, kind: str, message: str):
        super().__init__(message)
        self.code, self.kind = code, kind


# name -> (type, default); shared flag vocabulary across subcommands
OPTIONS = {
    "seed": (int, 0),
    "jobs": (int, 1),
    "objects": (str, "4"),
    "trials": (int, 10),
    "policy": (str, "random"),
    "model": (str, None),
    "data": (str, None),
    "out": (str, None),
    "epochs": (int, 25),
    "batch-size": (int, 64),
    "lr": (float, 1e-3),
    "positive-threshold": (float, 0.5),
    "samples": (int, 0),
    "round2-objects": (int, 6),
    "round2-samples": (int, 970),
    "reports": (str, None),
    "index": (int, 0),
    "top": (int, 5),
}

COMMANDS = {
    "collect": ("collect labeled pushes", ["seed", "jobs", "objects", "trials", "samples", "policy",
                                           "model", "out", "positive-threshold"]),
    "train": ("train a model on a dataset", ["seed", "data", "out", "epochs", "batch-size", "lr"]),
    "aggregate": ("train vanilla and aggregated models", ["seed", "jobs", "data", "out", "epochs",
                                                          "batch-size", "lr", "round2-objects",
                                                          "round2-samples", "positive-threshold"]),
    "eval": ("evaluate policies on seeded scenes", ["seed", "jobs", "objects", "trials", "policy",
                                                   "model", "out", "positive-threshold"]),
    "compare": ("tabulate several evaluation reports", ["reports", "out"]),
    "replay": ("re-run the trials behind a dataset and compare", ["data", "model", "out", "jobs",
                                                                 "positive-threshold"]),
    "inspect": ("dump observation, push images and scores", ["seed", "objects", "policy", "model",
                                                           "data", "index", "out", "top",
                                                           "positive-threshold"]),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="singulate",
        description="Learned push proposals for singulating cluttered objects in a planar simulator.")
    p.add_argument("--config", help="INI file with per-subcommand sections")
    sub = p.add_subparsers(dest="command", required=True)
    for name, (helptext, opts) in COMMANDS.items():
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--config", dest="sub_config", help="INI file (same as the global flag)")
        for opt in opts:
            typ, default = OPTIONS[opt]
            sp.add_argument(f"--{opt}", type=typ, default=None,
                            help=f"default: {default}" if default is not None else None)
    return p


def resolve(args: argparse.Namespace) -> dict:
    """Merge hard defaults, the config file section and command-line flags."""
    cfg_path = args.sub_config or args.config
    section = {}
    if cfg_path:
        if not Path(cfg_path).exists():
            raise CliError(EXIT_MISSING, "missing_file", f"config file not found: {cfg_path}")
        cp = configparser.ConfigParser()
        cp.read(cfg_path)
        if cp.has_section(args.command):
            section = dict(cp.items(args.command))
        else:
            section = dict(cp.defaults())
    out = {}
    for opt in COMMANDS[args.command][1]:
        typ, default = OPTIONS[opt]
        cli_val = getattr(args, opt.replace("-", "_"))
        raw = section.get(opt, section.get(opt.replace("-", "_")))
        if cli_val is not None:
            out[opt] = cli_val
        elif raw is not None:
            try:
                out[opt] = typ(raw)
            except ValueError as exc:
                raise CliError(EXIT_USAGE, "bad_config", f"{opt}={raw!r}: {exc}") from exc
        else:
            out[opt] = default
    return out


def write_resolved(path: Path, command: str, settings: dict) -> None:
    cp = configparser.ConfigParser()
    cp[command] = {k: str(v) for k, v in settings.items() if v is not None}
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        cp.write(f)


def _need(settings, key):
    if settings.get(key) in (None, ""):
        raise CliError(EXIT_USAGE, "missing_flag", f"--{key} is required")
    return settings[key]


def _exists(path, what="file"):
    from .dataset import dataset_exists

    ok = dataset_exists(path) if what == "dataset" else Path(path).exists()
    if not ok:
        raise CliError(EXIT_MISSING, "missing_file", f"{what} not found: {path}")
    return path


def _objects(s) -> list[int]:
    try:
        vals = [int(x) for x in str(s).split(",") if x.strip()]
    except ValueError as exc:
        raise CliError(EXIT_USAGE, "bad_flag", f"--objects expects integers: {s!r}") from exc
    if not vals or min(vals) < 1:
        raise CliError(EXIT_USAGE, "bad_flag", f"--objects must list positive counts: {s!r}")
    return vals


def _load_model(path):
    from .network import io as nio

    _exists(path, "model")
    params, conv = nio.load_model(path)
    from .pipeline import model_conventions

    if conv and conv != model_conventions():
        raise CliError(EXIT_SCHEMA, "schema_mismatch",
                       f"model encoder conventions {conv} differ from this build's {model_conventions()}")
    return params


def _policy_models(settings) -> dict:
    """Parse ``--policy a,b`` and ``--model path`` or ``--model name=path,...``."""
    from .runner import NETWORK_POLICIES, POLICIES

    names = [p.strip() for p in settings["policy"].split(",") if p.strip()]
    for n in names:
        if n not in POLICIES:
            raise CliError(EXIT_USAGE, "bad_flag", f"unknown policy {n!r}; choose from {POLICIES}")
    spec = settings.get("model") or ""
    paths = {}
    if "=" in spec:
        for item in spec.split(","):
            k, _, v = item.partition("=")
            paths[k.strip()] = v.strip()
    elif spec:
        paths = {n: spec for n in names if n in NETWORK_POLICIES}
    out = {}
    for n in names:
        if n in NETWORK_POLICIES:
            if n not in paths:
                raise CliError(EXIT_USAGE, "missing_flag", f"policy {n} needs --model")
            out[n] = (n, paths[n])
        else:
            out[n] = (n, None)
    return out


def _train_config(s):
    from .network.optim import AdamConfig
    from .network.train import TrainConfig

    return TrainConfig(epochs=s["epochs"], batch_size=s["batch-size"], adam=AdamConfig(lr=s["lr"]))


def cmd_collect(s: dict) -> int:
    from . import pipeline as pl
    from .dataset import write_dataset

    out = Path(_need(s, "out"))
    models = _policy_models(s)
    if len(models) != 1:
        raise CliError(EXIT_USAGE, "bad_flag", "collect takes exactly one policy")
    (policy, mpath), = models.values()
    n_obj = _objects(s["objects"])
    if len(n_obj) != 1:
        raise CliError(EXIT_USAGE, "bad_flag", "collect takes one object count")
    model = _load_model(mpath) if mpath else None
    write_resolved(out.with_suffix(".config.ini"), "collect", s)
    if s["samples"] > 0:
        data = pl.collect_until(policy, s["samples"], n_obj[0], s["seed"], model, s["jobs"],
                                positive_threshold=s["positive-threshold"])
    else:
        data, _ = pl.collect_dataset(policy, s["trials"], n_obj[0], s["seed"], model, None, s["jobs"],
                                     positive_threshold=s["positive-threshold"])
    write_dataset(out, data)
    print(json.dumps({"dataset": str(out), **data.counts()}))
    return EXIT_OK


def cmd_train(s: dict) -> int:
    from .dataset import read_dataset
    from .network import io as nio
    from .network.train import train
    from .pipeline import model_conventions

    data_path = _exists(_need(s, "data"), "dataset")
    out = Path(_need(s, "out"))
    write_resolved(out.with_suffix(".config.ini"), "train", s)
    params, history = train(read_dataset(data_path), _train_config(s), s["seed"])
    nio.save_model(out, params, model_conventions())
    last = history[-1]
    print(json.dumps({"model": str(out), "epochs": len(history), "train_loss": last.train_loss,
                      "val_loss": last.val_loss, "val_accuracy": last.val_accuracy}))
    return EXIT_OK


def cmd_aggregate(s: dict) -> int:
    from . import pipeline as pl
    from .dataset import read_dataset

    data_path = _exists(_need(s, "data"), "dataset")
    out = Path(_need(s, "out"))
    write_resolved(out / "config.ini", "aggregate", s)
    res = pl.train_iterations(read_dataset(data_path), s["round2-objects"], s["round2-samples"],
                              _train_config(s), s["seed"], s["jobs"], out,
                              positive_threshold=s["positive-threshold"])
    print(json.dumps({"vanilla": str(out / "vanilla.model"), "aggregated": str(out / "aggregated.model"),
                      "round1": len(res.round1), "round2": len(res.round2), "merged": len(res.merged)}))
    return EXIT_OK


def cmd_eval(s: dict) -> int:
    from . import pipeline as pl

    out = Path(_need(s, "out"))
    specs = _policy_models(s)
    policies = {n: (p, _load_model(m) if m else None) for n, (p, m) in specs.items()}
    counts = _objects(s["objects"])
    if s["trials"] < 0:
        raise CliError(EXIT_USAGE, "bad_flag", "--trials must be >= 0")
    write_resolved(out / "config.ini", "eval", s)
    report = pl.evaluate(policies, counts, s["trials"], s["seed"], s["jobs"], out,
                         s["positive-threshold"])
    for r in report["results"]:
        print(json.dumps({k: r[k] for k in ("policy", "n_objects", "trials", "success_rate",
                                            "mean_pushes")}))
    return EXIT_OK


def cmd_compare(s: dict) -> int:
    from .pipeline import REPORT_SCHEMA

    paths = [p for p in (_need(s, "reports")).split(",") if p]
    rows = []
    for p in paths:
        path = Path(p)
        if path.is_dir():
            path = path / "report.json"
        _exists(path, "report")
        rep = json.loads(path.read_text())
        if rep.get("schema") != REPORT_SCHEMA:
            raise CliError(EXIT_SCHEMA, "schema_mismatch", f"{path}: schema {rep.get('schema')!r}")
        for r in rep["results"]:
            rows.append({"report": str(path), "policy": r["policy"], "n_objects": r["n_objects"],
                         "trials": r["trials"], "success_rate": r["success_rate"],
                         "mean_pushes": r["mean_pushes"], "std_pushes": r["std_pushes"]})
    lines = ["report,policy,n_objects,trials,success_rate,mean_pushes,std_pushes"]
    for r in rows:
        lines.append(",".join("" if r[k] is None else str(r[k]) for k in
                              ("report", "policy", "n_objects", "trials", "success_rate",
                               "mean_pushes", "std_pushes")))
    text = "\n".join(lines) + "\n"
    if s.get("out"):
        Path(s["out"]).parent.mkdir(parents=True, exist_ok=True)
        Path(s["out"]).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_replay(s: dict) -> int:
    from . import pipeline as pl
    from .dataset import read_dataset, write_dataset
    from .runner import TrialConfig

    data_path = _exists(_need(s, "data"), "dataset")
    data = read_dataset(data_path)
    model = _load_model(s["model"]) if s.get("model") else None
    trials: dict[int, dict] = {}
    for m in data.metas:
        trials.setdefault(m["trial"], m)
    ids = sorted(trials)
    configs = []
    for t in ids:
        m = trials[t]
        if m["policy"] in ("vanilla_network", "aggregated_network", "network") and model is None:
            raise CliError(EXIT_USAGE, "missing_flag", f"trial {t} used {m['policy']}; pass --model")
        configs.append(TrialConfig(n_objects=m["n_objects"], policy=m["policy"],
                                   scene_seed=m["scene_seed"], policy_seed=m["policy_seed"],
                                   positive_threshold=m.get("positive_threshold",
                                                            s["positive-threshold"])))
    records = pl.run_many(configs, model, s["jobs"], keep_images=True)
    rounds = {t: trials[t].get("round", "") for t in ids}
    parts = [pl.records_to_dataset([r], [t], rounds[t]) for t, r in zip(ids, records)]
    again = parts[0] if parts else data.subset([])
    for p in parts[1:]:
        again = again.concat(p)
    # the stored dataset may be a trimmed prefix of whole trials
    again = again.subset(np.arange(min(len(again), len(data))))
    same = (len(again) == len(data) and np.array_equal(again.images.view(np.uint32),
                                                       data.images.view(np.uint32))
            and np.array_equal(again.labels, data.labels)
            and json.dumps(again.metas, sort_keys=True) == json.dumps(data.metas, sort_keys=True))
    if s.get("out"):
        write_dataset(s["out"], again)
    print(json.dumps({"dataset": str(data_path), "trials": len(ids), "samples": len(data),
                      "identical": bool(same)}))
    return EXIT_OK if same else EXIT_MISMATCH


def cmd_inspect(s: dict) -> int:
    from .encoder import encode
    from .dataset import read_dataset
    from .perception import write_pgm
    from .runner import TrialConfig, derive_seed

    out = Path(_need(s, "out"))
    out.mkdir(parents=True, exist_ok=True)
    write_resolved(out / "config.ini", "inspect", s)
    if s.get("data"):
        data = read_dataset(_exists(s["data"], "dataset"))
        if not 0 <= s["index"] < len(data):
            raise CliError(EXIT_USAGE, "bad_flag", f"--index {s['index']} outside 0..{len(data) - 1}")
        write_pgm(out / f"sample_{s['index']}.pgm", data.images[s["index"]])
        (out / f"sample_{s['index']}.json").write_text(
            json.dumps({"label": int(data.labels[s["index"]]), "meta": data.metas[s["index"]]},
                       indent=2, sort_keys=True))
        print(json.dumps({"sample": s["index"], "label": int(data.labels[s["index"]])}))
        return EXIT_OK
    from .perception import default_view, over_segment, render
    from .proposals import sample_handles, to_proposals
    from .runner import _Policy, feasibility_check
    from .scene import generate_scene
    from . import baseline as bl

    specs = _policy_models(s)
    if len(specs) != 1:
        raise CliError(EXIT_USAGE, "bad_flag", "inspect takes exactly one policy")
    (policy, mpath), = specs.values()
    model = _load_model(mpath) if mpath else None
    n_obj = _objects(s["objects"])[0]
    cfg = TrialConfig(n_objects=n_obj, policy=policy, scene_seed=s["seed"], policy_seed=s["seed"],
                      positive_threshold=s["positive-threshold"])
    scene = generate_scene(n_obj, seed=cfg.scene_seed)
    segments = over_segment(scene, noise_seed=derive_seed(cfg.scene_seed, 0, 1), split_prob=cfg.split_prob)
    view = default_view(scene.table)
    obs = render(scene, segments, view)
    obs.write(out / "observation")
    (out / "scene.json").write_text(scene.to_json())
    handles = sample_handles(segments, scene.table, cfg.per_segment, seed=derive_seed(cfg.scene_seed, 0, 2))
    proposals = to_proposals(handles, view)
    feasible = [feasibility_check(scene, p.handle) for p in proposals]
    pol = _Policy(cfg, model, np.random.default_rng(derive_seed(cfg.policy_seed, 7)),
                  bl.TrackState(scene.table.diagonal) if policy == "baseline" else None)
    if pol.track is not None:
        pol.track.observe(segments)
    scores, _ = pol.scores(scene, segments, obs, proposals, feasible)
    order = np.argsort(-scores, kind="stable")
    with open(out / "scores.csv", "w", encoding="utf-8") as f:
        f.write("rank,proposal,score,feasible,u,v,alpha,segment,object\n")
        for r, i in enumerate(order):
            p = proposals[i]
            f.write(f"{r},{i},{scores[i]:.6f},{int(feasible[i])},{p.c[0]:.3f},{p.c[1]:.3f},"
                    f"{p.alpha:.6f},{p.handle.segment},{p.handle.parent_object}\n")
    for r, i in enumerate(order[: s["top"]]):
        write_pgm(out / f"push_{r}_p{i}.pgm", encode(obs, proposals[i]).pixels)
    (out / "proposals.json").write_text(json.dumps([p.to_dict() for p in proposals]))
    print(json.dumps({"out": str(out), "proposals": len(proposals), "feasible": int(sum(feasible))}))
    return EXIT_OK


HANDLERS = {"collect": cmd_collect, "train": cmd_train, "aggregate": cmd_aggregate,
            "eval": cmd_eval, "compare": cmd_compare, "replay": cmd_replay, "inspect": cmd_inspect}


def _error(code: int, kind: str, message: str) -> int:
    sys.stderr.write("error: " + json.dumps({"code": code, "kind": kind, "message": message}) + "\n")
    return code


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("SINGULATE_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_USAGE
    from .dataset import DatasetError
    from .network.io import ModelChecksumError, ModelFileError, ModelVersionError
    from .scene import SceneError

    try:
        settings = resolve(args)
        return HANDLERS[args.command](settings)
    except CliError as exc:
        return _error(exc.code, exc.kind, str(exc))
    except FileNotFoundError as exc:
        return _error(EXIT_MISSING, "missing_file", str(exc))
    except ModelVersionError as exc:
        return _error(EXIT_SCHEMA, "schema_mismatch", str(exc))
    except ModelChecksumError as exc:
        return _error(EXIT_CHECKSUM, "checksum", str(exc))
    except (DatasetError, ModelFileError) as exc:
        return _error(EXIT_SCHEMA, "schema_mismatch", str(exc))
    except (SceneError, ValueError) as exc:
        return _error(EXIT_ERROR, "invalid", str(exc))


if __name__ == "__main__":
    sys.exit(main())
