"""Prediction entropy, ranking of weak samples and threshold recovery."""

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from mvver.dataset import DatasetError, LabeledDataset
from mvver.voting import CurationState

ENTROPY_EPS = 1e-15


def prediction_entropy(p, base=math.e):
    """Shannon entropy of a probability vector (or of each row of a matrix).

    Terms with ``p <= 1e-15`` contribute nothing. Nats by default.
    """
    p = np.asarray(p, dtype=np.float64)
    safe = np.where(p > ENTROPY_EPS, p, 1.0)
    # "+ 0.0" turns the -0.0 of one-hot inputs into 0.0
    h = -np.sum(np.where(p > ENTROPY_EPS, p * np.log(safe), 0.0), axis=-1) + 0.0
    if base != math.e:
        h = h / math.log(base)
    return float(h) if np.ndim(h) == 0 else h


@dataclass(frozen=True)
class EntropyRecord:
    sample_id: int
    entropy: float
    map_label: int
    map_prob: float


@dataclass(frozen=True)
class RecoveryConfig:
    alpha: float = 1.5

    def __post_init__(self):
        if math.isnan(self.alpha):
            raise ValueError("alpha must not be NaN")


def rank_weak(model, weak):
    """Score weak samples with ``model``; ascending entropy, ties by sample id."""
    if len(weak) == 0:
        return []
    if weak.dim != model.dim:
        raise ValueError(f"dimension mismatch: model expects {model.dim}, got {weak.dim}")
    P = model.predict_proba(weak.features)
    H = prediction_entropy(P)
    labels = np.argmax(P, axis=1)
    probs = P[np.arange(P.shape[0]), labels]
    order = np.lexsort((weak.ids, H))
    return [
        EntropyRecord(int(weak.ids[i]), float(H[i]), int(labels[i]), float(probs[i]))
        for i in order
    ]


def recover(state, records, cfg):
    """Move weak samples with entropy ``<= alpha`` into the strong set.

    Recovered samples take the model's MAP label. A negative alpha disables
    recovery. Returns the new state and the recovered ids (ranked order).
    """
    alpha = cfg.alpha if isinstance(cfg, RecoveryConfig) else float(cfg)
    rec_ids = np.array([r.sample_id for r in records], dtype=np.int64)
    if rec_ids.size != len(state.weak) or not np.array_equal(
        np.sort(rec_ids), np.sort(state.weak.ids)
    ):
        raise DatasetError("entropy records do not cover exactly the weak set")
    moved = [r for r in records if r.entropy <= alpha]
    if not moved:
        return state, np.empty(0, dtype=np.int64)
    moved_ids = np.array([r.sample_id for r in moved], dtype=np.int64)
    pos = {sid: i for i, sid in enumerate(state.weak.ids.tolist())}
    take = np.array([pos[s] for s in moved_ids.tolist()], dtype=np.int64)
    keep = np.setdiff1d(np.arange(len(state.weak)), take)
    added = LabeledDataset(
        state.weak.features[take],
        np.array([r.map_label for r in moved], dtype=np.int64),
        moved_ids,
        state.strong.num_classes,
    )
    new_state = CurationState(state.strong.concat(added), state.weak.take(keep), state.n_total)
    return new_state, moved_ids


def records_to_csv(records, path):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "entropy", "map_label", "map_prob"])
        for r in records:
            w.writerow([r.sample_id, repr(r.entropy), r.map_label, repr(r.map_prob)])


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray

    def to_dict(self):
        return {"edges": self.edges.tolist(), "counts": self.counts.tolist()}

    def to_json(self):
        return json.dumps(self.to_dict())

    def to_csv(self, path):
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bin_lo", "bin_hi", "count"])
            for lo, hi, c in zip(self.edges[:-1].tolist(), self.edges[1:].tolist(), self.counts.tolist()):
                w.writerow([repr(lo), repr(hi), c])


def entropy_histogram(records, bins, num_classes):
    """Equal-width histogram over ``[0, ln C]``, last bin closed on the right."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    if num_classes < 2:
        raise ValueError("histogram needs at least 2 classes")
    top = math.log(num_classes)
    h = np.clip(np.array([r.entropy for r in records], dtype=np.float64), 0.0, top)
    counts, edges = np.histogram(h, bins=bins, range=(0.0, top))
    return Histogram(edges, counts.astype(np.int64))
