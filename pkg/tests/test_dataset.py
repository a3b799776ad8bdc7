import json

import numpy as np
import pytest

from singulate.dataset import (DATASET_SCHEMA, Dataset, DatasetError, LabeledSample,
                               append_samples, dataset_exists, read_dataset, write_dataset)


def _data(n, seed=0, split_every=3):
    rng = np.random.default_rng(seed)
    imgs = rng.random((n, 64, 64)).astype(np.float32)
    labels = rng.integers(0, 2, n)
    metas = [{"trial": i, "split": "validation" if i % split_every == 0 else "train"} for i in range(n)]
    return Dataset(imgs, labels, metas)


def test_round_trip(tmp_path):
    d = _data(7)
    write_dataset(tmp_path / "d", d)
    assert dataset_exists(tmp_path / "d")
    back = read_dataset(tmp_path / "d.ndjson")
    assert np.array_equal(back.images, d.images)
    assert np.array_equal(back.labels, d.labels)
    assert back.metas == d.metas


def test_append_and_overwrite(tmp_path):
    p = tmp_path / "d"
    assert append_samples(p, _data(3)) == 3
    assert append_samples(p, _data(2, seed=1)) == 5
    both = read_dataset(p)
    assert np.array_equal(both.images[3:], _data(2, seed=1).images)
    write_dataset(p, _data(1))
    assert len(read_dataset(p)) == 1


def test_empty_round_trip(tmp_path):
    write_dataset(tmp_path / "e", Dataset.empty())
    assert len(read_dataset(tmp_path / "e")) == 0


def test_truncated_blob_reports_offset(tmp_path):
    p = tmp_path / "d"
    write_dataset(p, _data(3))
    blob = (tmp_path / "d.bin").read_bytes()
    (tmp_path / "d.bin").write_bytes(blob[:-100])
    with pytest.raises(DatasetError, match="byte offset"):
        read_dataset(p)


def test_foreign_schema_and_bad_json(tmp_path):
    p = tmp_path / "d"
    write_dataset(p, _data(2))
    lines = (tmp_path / "d.ndjson").read_text().splitlines()
    rec = json.loads(lines[1])
    rec["schema"] = "other/9"
    (tmp_path / "d.ndjson").write_text(lines[0] + "\n" + json.dumps(rec) + "\n")
    with pytest.raises(DatasetError, match=":2:"):
        read_dataset(p)
    (tmp_path / "d.ndjson").write_text("{not json\n")
    with pytest.raises(DatasetError):
        read_dataset(p)
    assert json.loads(lines[0])["schema"] == DATASET_SCHEMA


def test_missing_files(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_dataset(tmp_path / "nope")


def test_validation_on_construction():
    with pytest.raises(DatasetError):
        Dataset(np.zeros((2, 64, 64)), [0, 2], [{}, {}])
    with pytest.raises(DatasetError):
        Dataset(np.zeros((2, 64, 64)), [0], [{}, {}])
    with pytest.raises(DatasetError):
        LabeledSample(np.zeros((32, 32)), 1)
    with pytest.raises(DatasetError):
        LabeledSample(np.zeros((64, 64)), 3)


def test_split_subset_concat_counts():
    d = _data(9)
    val, tr = d.split("validation"), d.split("train")
    assert len(val) + len(tr) == 9
    assert all(m["split"] == "validation" for m in val.metas)
    both = tr.concat(val)
    assert len(both) == 9
    assert both.counts()["positives"] == int(d.labels.sum())
    assert Dataset.from_samples(d.samples()).metas == d.metas
    assert len(Dataset.from_samples([])) == 0
    assert d.samples()[0].split == "validation"
