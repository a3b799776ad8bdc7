"""Mini-batch training of the push proposal network."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import model as mdl
from .layers import build_default_architecture
from .optim import AdamConfig, adam_step

log = logging.getLogger(__name__)


class TrainingError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 25
    batch_size: int = 64
    adam: AdamConfig = field(default_factory=AdamConfig)
    # positives are resampled up to this fraction of the negatives each epoch; 0 disables
    pos_ratio: float = 1.0 / 3.0
    dtype: str = "float32"

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise TrainingError("epochs and batch_size must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["adam"] = self.adam.to_dict()
        return d


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_loss: float | None = None
    val_accuracy: float | None = None
    n_seen: int = 0


def _evaluate(params, images, labels) -> tuple[float, float]:
    p = mdl.forward_chunked(params, images)
    loss = float(mdl.bce(p, labels).mean())
    acc = float(((p >= 0.5) == (labels == 1)).mean())
    return loss, acc


def epoch_order(labels: np.ndarray, rng: np.random.Generator, pos_ratio: float) -> np.ndarray:
    """Shuffled sample indices for one epoch, oversampling positives if needed."""
    pos = np.flatnonzero(labels == 1)
    neg = np.flatnonzero(labels == 0)
    idx = np.arange(len(labels))
    if pos_ratio > 0 and len(pos) and len(pos) < pos_ratio * len(neg):
        want = int(math.ceil(pos_ratio * len(neg)))
        extra = want - len(pos)
        reps, rest = divmod(extra, len(pos))
        add = np.concatenate([np.tile(pos, reps), rng.choice(pos, size=rest, replace=False)])
        idx = np.concatenate([idx, add])
    return rng.permutation(idx)


def train(dataset, config: TrainConfig = TrainConfig(), seed: int = 0,
          params: mdl.NetworkParams | None = None, validation=None):
    """Fit the network; returns ``(params, log)``.

    ``dataset`` is a :class:`~singulate.dataset.Dataset` (or a list of
    ``LabeledSample``). Samples tagged ``split == "validation"`` are held out
    and only scored, unless ``validation`` is given explicitly.
    """
    from ..dataset import Dataset

    data = dataset if isinstance(dataset, Dataset) else Dataset.from_samples(dataset)
    if validation is None:
        validation = data.split("validation")
        data = data.split("train")
    labels = data.labels
    if len(labels) == 0 or labels.min() == labels.max():
        raise TrainingError(f"training data must contain both classes, got {data.counts()}")

    dtype = np.dtype(config.dtype)
    if params is None:
        params = mdl.init_params(build_default_architecture(), seed=seed, dtype=dtype)
    else:
        params = params.astype(dtype)
    rng = np.random.default_rng([seed, 1])
    x_all = data.images
    y_all = labels.astype(np.float64)
    history: list[EpochLog] = []
    for epoch in range(1, config.epochs + 1):
        order = epoch_order(labels, rng, config.pos_ratio)
        tot, correct = 0.0, 0
        for s in range(0, len(order), config.batch_size):
            b = order[s:s + config.batch_size]
            loss, grads, p = mdl.loss_and_gradients(params, x_all[b], y_all[b], return_probs=True)
            adam_step(params, grads, config.adam)
            tot += loss * len(b)
            correct += int(((p >= 0.5) == (y_all[b] == 1)).sum())
        params.check_finite()
        # running averages over the epoch, as seen by the optimizer
        entry = EpochLog(epoch, tot / len(order), correct / len(order), n_seen=len(order))
        if len(validation):
            entry.val_loss, entry.val_accuracy = _evaluate(params, validation.images,
                                                           validation.labels.astype(np.float64))
        history.append(entry)
        log.info("epoch %d/%d loss %.4f acc %.3f val %s", epoch, config.epochs,
                 entry.train_loss, entry.train_accuracy,
                 "-" if entry.val_loss is None else f"{entry.val_loss:.4f}/{entry.val_accuracy:.3f}")
    return params, history
