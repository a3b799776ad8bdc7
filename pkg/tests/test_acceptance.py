"""End-to-end acceptance checks, one test per criterion.

Each test appends a PASS/FAIL line that is printed in the terminal summary.
The direction-of-effect tests share one full pipeline run (about 25 minutes
on one core): random collection, vanilla and aggregated training, and
evaluation of every policy on 100 seeded scenes at 4 and 6 objects.
"""
import math
import time

import numpy as np
import pytest

from singulate import cli
from singulate import pipeline as pl
from singulate.baseline import aabb_manhattan, build_graph, combine, free_space_feature, history_feature
from singulate.encoder import ANCHOR, SIZE, encode
from singulate.network import layers as ly
from singulate.network.model import forward, init_params
from singulate.perception import default_view, make_segment, over_segment, render
from singulate.proposals import PushHandle, PushProposal, sample_handles
from singulate.runner import max_pushes_for
from singulate.scene import (SINGULATION_THRESHOLD, Scene, SceneObject, TableSpec, generate_scene,
                             is_singulated, min_pairwise_distance)
from singulate import geometry as geo

from conftest import ACCEPTANCE_LINES, random_convex, square_scene
from oracles import brute_force_distance, equivariance_fraction, finite_difference_check, naive_forward

pytestmark = pytest.mark.acceptance

N_EVAL = 100
ROUND1_SAMPLES = 2500
ROUND2_SAMPLES = 970
ROUND2_OBJECTS = 6


def record(name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def test_gradient_check():
    t0 = time.perf_counter()
    arch = [ly.conv(1, 4), ly.RELU, ly.POOL, ly.conv(4, 8), ly.RELU, ly.POOL, ly.FLATTEN,
            ly.dense(128, 1), ly.SIGMOID]
    rng = np.random.default_rng(0)
    p = init_params(arch, seed=0, input_shape=(1, 16, 16), dtype=np.float64)
    for w in p.weights:
        if w:
            w["b"][...] = rng.uniform(-0.1, 0.1, size=w["b"].shape)
    x = rng.random((4, 16, 16))
    y = np.array([0, 1, 1, 0])
    worst, checked, skipped = finite_difference_check(p, x, y, 200, rng, h=1e-4)
    dt = time.perf_counter() - t0
    ok = checked >= 200 and worst <= 1e-4 and dt < 60
    assert record("gradient check", ok,
                  f"{checked} coordinates, worst relative error {worst:.2e} (<= 1e-4), "
                  f"{skipped} kink-crossing draws skipped, {dt:.1f}s (< 60s)")


def test_forward_reference():
    rng = np.random.default_rng(1)
    arch = ly.build_default_architecture()
    worst = 0.0
    for draw in range(50):
        p = init_params(arch, seed=draw, dtype=np.float64)
        for w in p.weights:
            if w:
                w["b"][...] = rng.normal(0, 0.05, size=w["b"].shape)
        x = rng.random((1, 64, 64))
        worst = max(worst, abs(float(forward(p, x)[0]) - naive_forward(p.arch, p.weights, x[0])))
    assert record("forward reference", worst <= 1e-5,
                  f"50 draws of the full network, worst |difference| {worst:.2e} (<= 1e-5)")


def test_baseline_formulas():
    errs = []
    errs.append(abs(history_feature(0) - 1.0))
    errs.append(abs(history_feature(1) - math.exp(-1)))
    errs.append(abs(history_feature(3) - math.exp(-3)))
    errs.append(abs(aabb_manhattan((0, 0, 1, 1), (0.5, 0.5, 2, 2)) - 0.0))
    errs.append(abs(aabb_manhattan((0, 0, 1, 1), (1.1, 0.5, 2, 2)) - 0.1))
    errs.append(abs(aabb_manhattan((0, 0, 1, 1), (1.1, 1.2, 2, 2)) - 0.3))
    errs.append(abs(combine(0.0, history_feature(0)) - 0.5))
    errs.append(abs(combine(1.0, history_feature(0)) - 1.0))
    errs.append(abs(combine(0.667, history_feature(2)) - (0.5 * 0.667 + 0.5 * math.exp(-2))))
    sq = [make_segment(i, i, geo.transform(geo.rectangle(0.1, 0.1), cx, 0.4, 0.0))
          for i, cx in enumerate((0.3, 0.4))]
    f_s = free_space_feature(build_graph(sq), PushHandle((0.35, 0.4), (1.0, 0.0), 1, 1))
    errs.append(abs(f_s - 0.2 / 0.3))
    worst = max(errs)
    assert record("baseline formulas", worst <= 1e-12,
                  f"{len(errs)} hand-computed values, worst error {worst:.1e} (<= 1e-12)")


def test_distance_against_brute_force():
    rng = np.random.default_rng(7)
    worst = 0.0
    kinds = {"overlap": 0, "apart": 0}
    for _ in range(1000):
        a = SceneObject(0, random_convex(rng), (0.4, 0.4, float(rng.uniform(-math.pi, math.pi))))
        b = SceneObject(1, random_convex(rng), (float(0.4 + rng.uniform(0.0, 0.15)),
                                                float(0.4 + rng.uniform(-0.1, 0.1)),
                                                float(rng.uniform(-math.pi, math.pi))))
        s = Scene(TableSpec(), (a, b))
        want = brute_force_distance(a.world_polygon, b.world_polygon)
        kinds["overlap" if want == 0 else "apart"] += 1
        worst = max(worst, abs(min_pairwise_distance(s) - want))
    assert record("pairwise distance", worst <= 1e-9,
                  f"1000 random convex pairs ({kinds['overlap']} overlapping), "
                  f"worst error {worst:.1e} (<= 1e-9)")


def test_protocol_constants():
    gap_ok = (is_singulated(square_scene([(0.2, 0.4), (0.331, 0.4)]))
              and not is_singulated(square_scene([(0.2, 0.4), (0.329, 0.4)])))
    ok = max_pushes_for(4) == 6 and max_pushes_for(6) == 8 and SINGULATION_THRESHOLD == 0.03 and gap_ok
    assert record("protocol constants", ok,
                  f"budget(4)={max_pushes_for(4)}, budget(6)={max_pushes_for(6)}, "
                  f"threshold={SINGULATION_THRESHOLD} m, 3.1 cm gap singulated, 2.9 cm not")


@pytest.fixture(scope="module")
def full_run():
    t0 = time.perf_counter()
    round1 = pl.collect_until("random", ROUND1_SAMPLES, 4, seed=0, round_tag="round1")
    agg = pl.train_iterations(round1, round2_objects=ROUND2_OBJECTS, round2_target=ROUND2_SAMPLES,
                              seed=0)
    policies = {"random": ("random", None), "baseline": ("baseline", None),
                "vanilla": ("vanilla_network", agg.vanilla),
                "aggregated": ("aggregated_network", agg.aggregated),
                "oracle": ("oracle", None)}
    report = pl.evaluate(policies, [4, 6], N_EVAL, seed=0)
    rates = {(r["policy"], r["n_objects"]): r["success_rate"] for r in report["results"]}
    c1, c2 = round1.counts(), agg.round2.counts()
    summary = (f"round1 {c1['total']} ({c1['positives']} positive), round2 {c2['total']} "
               f"({c2['positives']} positive), {time.perf_counter() - t0:.0f}s")
    ACCEPTANCE_LINES.append("      pipeline: " + summary)
    for n in (4, 6):
        ACCEPTANCE_LINES.append(f"      {n} objects: " + ", ".join(
            f"{name} {rates[(name, n)]:.2f}" for name in policies))
    return agg, report, rates


def test_vanilla_beats_random(full_run):
    _, _, rates = full_run
    v, r = rates[("vanilla", 4)], rates[("random", 4)]
    assert record("vanilla vs random, 4 objects", v - r >= 0.15,
                  f"vanilla {v:.2f}, random {r:.2f}, margin {100 * (v - r):+.0f} pp (>= +15)")


def test_aggregated_not_worse(full_run):
    _, _, rates = full_run
    a, v = rates[("aggregated", 6)], rates[("vanilla", 6)]
    assert record("aggregated vs vanilla, 6 objects", a >= v, f"aggregated {a:.2f}, vanilla {v:.2f}")


def test_oracle_upper_bound(full_run):
    _, _, rates = full_run
    worst = []
    for n in (4, 6):
        top = rates[("oracle", n)]
        for name in ("random", "baseline", "vanilla", "aggregated"):
            worst.append((rates[(name, n)] - top, name, n))
    gap, name, n = max(worst)
    assert record("oracle upper bound", gap <= 0,
                  f"largest policy-minus-oracle rate {gap:+.2f} ({name}, {n} objects; <= 0)")


def test_aggregation_sizes(full_run):
    agg, _, _ = full_run
    ok = len(agg.merged) == len(agg.round1) + len(agg.round2) == ROUND1_SAMPLES + ROUND2_SAMPLES
    assert ok


def _pipeline(root):
    steps = [["collect", "--objects", "4", "--samples", "200", "--seed", "3", "--out", str(root / "r1")],
             ["train", "--data", str(root / "r1"), "--epochs", "2", "--seed", "3",
              "--out", str(root / "f1.model")],
             ["eval", "--policy", "random,vanilla_network", "--model", str(root / "f1.model"),
              "--objects", "4", "--trials", "5", "--seed", "3", "--out", str(root / "eval")]]
    for argv in steps:
        assert cli.main(argv) == 0


def test_pipeline_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    _pipeline(a)
    _pipeline(b)
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file() and not p.name.endswith(".ini"))
    diff = [str(f) for f in files if (a / f).read_bytes() != (b / f).read_bytes()]
    assert record("pipeline determinism", not diff and len(files) >= 6,
                  f"{len(files)} dataset/model/report files compared byte-wise, "
                  f"{len(diff)} differ {diff or ''}".rstrip())


def test_encoder_properties():
    view = default_view(TableSpec())
    dummy = PushHandle((0.5, 0.4), (1.0, 0.0), 0, 0)
    s = generate_scene(6, seed=0)
    obs = render(s, over_segment(s, 0, 0.3), view)
    h, w = obs.pixels.shape
    c = (w // 2, h // 2)
    ident = encode(obs, PushProposal(c, 0.0, dummy)).pixels
    crop = obs.pixels[c[1] - ANCHOR[1]:c[1] - ANCHOR[1] + SIZE, c[0] - ANCHOR[0]:c[0] - ANCHOR[0] + SIZE]
    ident_ok = np.array_equal(ident, crop)
    a0 = encode(obs, PushProposal((160.0, 128.0), 0.0, dummy)).pixels
    a1 = encode(obs, PushProposal((160.0, 128.0), -math.pi, dummy)).pixels
    half = float(np.max(np.abs(a1[1:, 1:] - a0[1:, 1:][::-1, ::-1])))
    fracs = []
    for seed in range(50):
        rng = np.random.default_rng(seed)
        sc = generate_scene(int(rng.integers(2, 7)), seed=1000 + seed)
        segs = over_segment(sc, seed, 0.3)
        hs = sample_handles(segs, sc.table, 16, seed)
        handle = hs[int(rng.integers(len(hs)))]
        fracs.append(equivariance_fraction(sc, segs, handle, float(rng.uniform(-math.pi, math.pi)), view))
    ok = ident_ok and half <= 2 / 255 and min(fracs) >= 0.99
    assert record("encoder properties", ok,
                  f"identity crop exact={ident_ok}, half turn max diff {255 * half:.2f}/255 (<= 2/255), "
                  f"rotation equivariance over 50 scenes min {min(fracs):.4f} mean {np.mean(fracs):.4f} "
                  f"(>= 0.99 at 4/255)")
