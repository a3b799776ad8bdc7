import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from singulate import pipeline as pl
from singulate.dataset import Dataset, read_dataset, write_dataset
from singulate.network import layers as ly
from singulate.network.model import init_params
from singulate.network.train import TrainConfig
from singulate.proposals import PushHandle
from singulate.runner import (TrialConfig, TrialError, derive_seed, feasibility_check,
                              max_pushes_for, run_trial)
from singulate.scene import SINGULATION_THRESHOLD, Scene, is_singulated

from conftest import square_scene


def _constant_model(bias):
    """Default network whose output is sigmoid(bias) for every input."""
    p = init_params(ly.build_default_architecture(), seed=0)
    for w in p.weights[-2:]:
        for a in w.values():
            a[...] = 0
    p.weights[-2]["b"][...] = bias
    return p


class TestConfig:
    def test_budget_formula(self):
        assert max_pushes_for(4) == 6
        assert max_pushes_for(6) == 8
        assert max_pushes_for(8) == 11
        assert [max_pushes_for(n) for n in (1, 10)] == [2, 14]
        assert TrialConfig(n_objects=6).max_pushes == 8
        assert TrialConfig(n_objects=6, max_pushes=2).max_pushes == 2
        assert SINGULATION_THRESHOLD == 0.03

    def test_validation(self):
        with pytest.raises(TrialError):
            TrialConfig(policy="greedy")
        with pytest.raises(TrialError):
            TrialConfig(n_objects=0)
        with pytest.raises(TrialError):
            run_trial(TrialConfig(policy="vanilla_network"))

    def test_derive_seed_stable(self):
        assert derive_seed(1, 2, 3) == derive_seed(1, 2, 3)
        assert derive_seed(1, 2, 3) != derive_seed(1, 2, 4)
        assert 0 <= derive_seed(0) < 2 ** 32


class TestFeasibility:
    def test_open_face(self):
        s = square_scene([(0.5, 0.4)])
        assert feasibility_check(s, PushHandle((0.45, 0.4), (1.0, 0.0), 0, 0))

    def test_crevice(self):
        s = square_scene([(0.3, 0.4), (0.41, 0.4)])
        assert not feasibility_check(s, PushHandle((0.36, 0.4), (1.0, 0.0), 1, 1))

    def test_table_corner_does_not_block(self):
        s = square_scene([(0.05, 0.05)])
        assert feasibility_check(s, PushHandle((0.0, 0.05), (1.0, 0.0), 0, 0))


class TestTrial:
    def test_already_singulated(self):
        s = square_scene([(0.2, 0.4), (0.7, 0.4)])
        rec = run_trial(TrialConfig(n_objects=2), scene=s)
        assert rec.status == "success" and rec.pushes_used == 0 and rec.entries == []

    def test_idle_never_succeeds_on_generated_scenes(self):
        for t in range(5):
            rec = run_trial(TrialConfig(policy="idle", scene_seed=t))
            assert rec.status == "no_feasible_positive" and rec.pushes_used == 0

    def test_network_without_positive_stops(self):
        rec = run_trial(TrialConfig(policy="network", scene_seed=3), _constant_model(-5.0))
        assert rec.status == "no_feasible_positive" and rec.pushes_used == 0

    def test_network_with_all_positive_pushes(self):
        rec = run_trial(TrialConfig(policy="network", scene_seed=3), _constant_model(5.0))
        assert rec.pushes_used >= 1

    def test_deterministic(self):
        cfg = TrialConfig(policy="random", scene_seed=11, policy_seed=4)
        a = run_trial(cfg, keep_images=True)
        b = run_trial(cfg, keep_images=True)
        assert json.dumps(a.to_dict(), sort_keys=True) == json.dumps(b.to_dict(), sort_keys=True)
        for ea, eb in zip(a.entries, b.entries):
            assert np.array_equal(ea.image, eb.image)

    def test_baseline_records_breakdown(self):
        rec = run_trial(TrialConfig(policy="baseline", scene_seed=2))
        assert rec.entries
        assert set(rec.entries[0].breakdown) == {"f_s", "f_h", "r", "track"}

    @settings(max_examples=12, deadline=None)
    @given(seed=st.integers(0, 10_000), n=st.integers(2, 5),
           policy=st.sampled_from(["random", "baseline"]))
    def test_budget_and_success_flag(self, seed, n, policy):
        rec = run_trial(TrialConfig(n_objects=n, policy=policy, scene_seed=seed, policy_seed=seed))
        assert rec.pushes_used <= max_pushes_for(n)
        assert rec.success == is_singulated(Scene.from_dict(rec.final_scene))
        assert len(rec.entries) == rec.pushes_used


class TestCollection:
    def test_sample_count_bound(self):
        data, recs = pl.collect_dataset("random", 10, 4, seed=0)
        assert 0 <= len(data) <= 60
        assert len(data) == sum(r.pushes_used for r in recs)
        m = data.metas[0]
        assert {"trial", "push_index", "policy", "split", "scene_seed", "policy_seed",
                "label_breakdown"} <= set(m)
        assert all(lb == m["label_breakdown"]["label"] for lb, m in zip(data.labels, data.metas))

    def test_replay_is_byte_identical(self, tmp_path):
        pl.collect_dataset("random", 4, 3, seed=5, out=tmp_path / "a")
        pl.collect_dataset("random", 4, 3, seed=5, out=tmp_path / "b")
        for ext in (".ndjson", ".bin"):
            assert (tmp_path / f"a{ext}").read_bytes() == (tmp_path / f"b{ext}").read_bytes()

    def test_collect_until_trims(self):
        d = pl.collect_until("random", 15, 3, seed=1, batch=5)
        assert len(d) == 15
        assert d.metas == pl.collect_until("random", 15, 3, seed=1, batch=5).metas

    def test_validation_split_by_trial(self):
        data, _ = pl.collect_dataset("random", 20, 3, seed=2)
        for m in data.metas:
            assert (m["split"] == "validation") == (m["trial"] % 10 == 9)


def _small_round1():
    d = pl.collect_until("random", 120, 3, seed=0, batch=20)
    assert 0 < d.labels.sum() < len(d)
    return d


class TestAggregation:
    def test_degenerate_round2(self, tmp_path):
        r1 = _small_round1()
        res = pl.train_iterations(r1, round2_target=0, config=TrainConfig(epochs=1), out_dir=tmp_path)
        assert len(res.round2) == 0 and len(res.merged) == len(r1)
        assert len(read_dataset(tmp_path / "merged")) == len(r1)
        assert res.vanilla.arch == res.aggregated.arch

    def test_merged_is_union(self):
        r1 = _small_round1()
        res = pl.train_iterations(r1, round2_objects=3, round2_target=7, config=TrainConfig(epochs=1),
                                  positive_threshold=0.0)
        assert len(res.round2) == 7
        assert len(res.merged) == len(r1) + 7
        assert all(m["policy"] == "vanilla_network" for m in res.round2.metas)


class TestEvaluate:
    def test_zero_trials_schema_valid(self, tmp_path):
        rep = pl.evaluate({"random": ("random", None)}, [4], 0, out_dir=tmp_path)
        on_disk = json.loads((tmp_path / "report.json").read_text())
        assert on_disk["schema"] == pl.REPORT_SCHEMA
        (res,) = on_disk["results"]
        assert res["trials"] == 0 and res["success_rate"] == 0.0
        assert res["curve"] == [0.0] * 7
        assert (tmp_path / "report.csv").read_text().strip() == ",".join(pl.CSV_COLUMNS)
        assert "_records" in rep

    def test_shared_scenes_and_curves(self, tmp_path):
        pols = {"random": ("random", None), "idle": ("idle", None)}
        rep = pl.evaluate(pols, [3], 4, seed=7, out_dir=tmp_path)
        a = rep["_records"][("random", 3)]
        b = rep["_records"][("idle", 3)]
        assert [r.config["scene_seed"] for r in a] == [r.config["scene_seed"] for r in b]
        for res in rep["results"]:
            c = res["curve"]
            assert all(x <= y for x, y in zip(c, c[1:]))
            assert c[-1] == res["success_rate"]
        idle = [r for r in rep["results"] if r["policy"] == "idle"][0]
        assert idle["success_rate"] == 0.0
        lines = (tmp_path / "trials_random_3.ndjson").read_text().splitlines()
        kinds = [json.loads(x)["kind"] for x in lines]
        assert kinds.count("trial") == 4
