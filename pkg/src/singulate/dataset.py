"""Labeled push samples and their on-disk format.

A dataset lives in two files: ``<name>.ndjson`` holds one JSON record per
sample (label, provenance, label breakdown, blob offset) and
``<name>.bin`` holds the push images as little-endian float32, 4096 values
each, in record order.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .encoder import SIZE

DATASET_SCHEMA = "singulate.dataset/1"
SPLITS = ("train", "validation")
_VALUES = SIZE * SIZE
_RECORD_BYTES = _VALUES * 4


class DatasetError(IOError):
    pass


@dataclass(frozen=True, eq=False)
class LabeledSample:
    image: np.ndarray
    label: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.label not in (0, 1):
            raise DatasetError(f"label must be 0 or 1, got {self.label!r}")
        if self.image.shape != (SIZE, SIZE):
            raise DatasetError(f"image must be {SIZE}x{SIZE}, got {self.image.shape}")

    @property
    def split(self) -> str:
        return self.meta.get("split", "train")


@dataclass(eq=False)
class Dataset:
    """Column view of many samples: ``images`` is ``(N, 64, 64)`` float32."""

    images: np.ndarray
    labels: np.ndarray
    metas: list[dict]

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float32).reshape(-1, SIZE, SIZE)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if not (len(self.images) == len(self.labels) == len(self.metas)):
            raise DatasetError("images, labels and metas differ in length")
        if len(self.labels) and not np.isin(self.labels, (0, 1)).all():
            raise DatasetError("labels must be binary")

    def __len__(self) -> int:
        return len(self.labels)

    @classmethod
    def empty(cls) -> "Dataset":
        return cls(np.zeros((0, SIZE, SIZE), np.float32), np.zeros(0, np.int64), [])

    @classmethod
    def from_samples(cls, samples) -> "Dataset":
        samples = list(samples)
        if not samples:
            return cls.empty()
        return cls(np.stack([s.image for s in samples]), [s.label for s in samples],
                   [dict(s.meta) for s in samples])

    def samples(self) -> list[LabeledSample]:
        return [LabeledSample(im, int(y), m) for im, y, m in zip(self.images, self.labels, self.metas)]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.images[idx], self.labels[idx], [self.metas[i] for i in idx])

    def split(self, tag: str) -> "Dataset":
        return self.subset([i for i, m in enumerate(self.metas) if m.get("split", "train") == tag])

    def counts(self) -> dict:
        pos = int(self.labels.sum())
        return {"total": len(self), "positives": pos, "negatives": len(self) - pos}

    def concat(self, other: "Dataset") -> "Dataset":
        return Dataset(np.concatenate([self.images, other.images]),
                       np.concatenate([self.labels, other.labels]), self.metas + other.metas)


def _paths(path) -> tuple[Path, Path]:
    p = Path(path)
    stem = p.with_suffix("") if p.suffix in (".ndjson", ".bin") else p
    return stem.with_suffix(".ndjson"), stem.with_suffix(".bin")


def dataset_exists(path) -> bool:
    meta, blob = _paths(path)
    return meta.exists() and blob.exists()


def append_samples(path, data: Dataset) -> int:
    """Append ``data`` to the dataset at ``path``; returns the new record count."""
    meta_path, blob_path = _paths(path)
    meta_path.parent.mkdir(parents=True, exist_ok=True)
    start = blob_path.stat().st_size // _RECORD_BYTES if blob_path.exists() else 0
    if blob_path.exists() and blob_path.stat().st_size % _RECORD_BYTES:
        raise DatasetError(f"{blob_path}: size {blob_path.stat().st_size} is not a whole number of records")
    with open(blob_path, "ab") as fb, open(meta_path, "a", encoding="utf-8") as fm:
        for k in range(len(data)):
            rec = {"schema": DATASET_SCHEMA, "index": start + k, "offset": (start + k) * _RECORD_BYTES,
                   "label": int(data.labels[k]), "meta": data.metas[k]}
            fm.write(json.dumps(rec, sort_keys=True) + "\n")
            fb.write(np.ascontiguousarray(data.images[k], dtype="<f4").tobytes())
    return start + len(data)


def write_dataset(path, data: Dataset) -> None:
    for p in _paths(path):
        if p.exists():
            os.remove(p)
    append_samples(path, data)


def read_dataset(path) -> Dataset:
    meta_path, blob_path = _paths(path)
    if not meta_path.exists() or not blob_path.exists():
        raise FileNotFoundError(f"dataset not found: {meta_path} / {blob_path}")
    blob = np.fromfile(blob_path, dtype="<f4")
    labels, metas = [], []
    with open(meta_path, encoding="utf-8") as fm:
        for lineno, line in enumerate(fm, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{meta_path}:{lineno}: {exc}") from exc
            if rec.get("schema") != DATASET_SCHEMA:
                raise DatasetError(f"{meta_path}:{lineno}: schema {rec.get('schema')!r} != {DATASET_SCHEMA!r}")
            if rec["offset"] != len(labels) * _RECORD_BYTES:
                raise DatasetError(f"{meta_path}:{lineno}: offset {rec['offset']} out of sequence")
            labels.append(rec["label"])
            metas.append(rec["meta"])
    if blob.size != len(labels) * _VALUES:
        raise DatasetError(f"{blob_path}: {blob.size} values for {len(labels)} records "
                           f"(expected {len(labels) * _VALUES}, byte offset {blob.size * 4})")
    return Dataset(blob.reshape(-1, SIZE, SIZE), labels, metas)
