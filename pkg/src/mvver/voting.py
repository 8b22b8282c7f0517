"""Multi-view training and unanimity voting.

The current dataset is split into ``n`` disjoint stratified views, one
model is trained per view, and every sample is predicted by every model.
Unanimously predicted samples form the strong set (with the voted label);
the rest lose their label and join the persistent weak set.
"""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from mvver.classifier import ClassifierConfig, fit, predict
from mvver.dataset import DatasetError, LabeledDataset, stratified_split
from mvver.seeds import derive_seed

STRONG_LABEL_MODES = ("voted", "original")


@dataclass(frozen=True, eq=False)
class UnlabeledSet:
    """Weak samples: features and ids only.

    ``stripped_labels`` keeps the last label each sample carried before
    demotion. It exists for audit metrics; the curation algorithm never
    reads it.
    """

    ids: np.ndarray
    features: np.ndarray
    stripped_labels: np.ndarray

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.int64).reshape(-1)
        X = np.asarray(self.features, dtype=np.float64)
        X = X.reshape(ids.size, -1) if X.size or ids.size else X.reshape(0, 0)
        labels = np.asarray(self.stripped_labels, dtype=np.int64).reshape(-1)
        if labels.shape != ids.shape:
            raise DatasetError("weak set ids and audit labels disagree on N")
        if np.unique(ids).size != ids.size:
            raise DatasetError("weak set ids must be unique")
        for name, a in (("ids", ids), ("features", X), ("stripped_labels", labels)):
            a.flags.writeable = False
            object.__setattr__(self, name, a)

    @classmethod
    def empty(cls, dim):
        return cls(np.empty(0, np.int64), np.empty((0, dim)), np.empty(0, np.int64))

    @classmethod
    def from_dataset(cls, ds):
        return cls(ds.ids, ds.features, ds.labels)

    def __len__(self):
        return self.ids.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]

    def take(self, positions):
        positions = np.asarray(positions, dtype=np.int64)
        return UnlabeledSet(
            self.ids[positions], self.features[positions], self.stripped_labels[positions]
        )

    def concat(self, other):
        if len(self) == 0:
            return other
        if len(other) == 0:
            return self
        return UnlabeledSet(
            np.concatenate([self.ids, other.ids]),
            np.concatenate([self.features, other.features]),
            np.concatenate([self.stripped_labels, other.stripped_labels]),
        )


@dataclass(frozen=True, eq=False)
class CurationState:
    strong: LabeledDataset
    weak: UnlabeledSet
    n_total: int

    def __post_init__(self):
        if len(self.strong) + len(self.weak) != self.n_total:
            raise DatasetError(
                f"|strong| + |weak| = {len(self.strong)} + {len(self.weak)} != N = {self.n_total}"
            )
        if np.intersect1d(self.strong.ids, self.weak.ids).size:
            raise DatasetError("strong and weak sets share ids")


@dataclass(frozen=True, eq=False)
class VoteTable:
    """Per-sample predictions of every view model, one column per model."""

    ids: np.ndarray
    predictions: np.ndarray

    @property
    def n_views(self):
        return self.predictions.shape[1]

    @property
    def unanimous(self):
        return np.all(self.predictions == self.predictions[:, :1], axis=1)

    @property
    def voted_label(self):
        """Unanimous label per row, ``-1`` where the views disagree."""
        return np.where(self.unanimous, self.predictions[:, 0], -1)

    def to_csv(self, path):
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id"] + [f"z{t + 1}" for t in range(self.n_views)] + ["unanimous", "voted_label"])
            for sid, row, u, v in zip(
                self.ids.tolist(), self.predictions.tolist(), self.unanimous.tolist(),
                self.voted_label.tolist(),
            ):
                w.writerow([sid] + row + [int(u), v if u else ""])


def train_views(ds, n, config=ClassifierConfig(), seed=0, backend=None):
    """Train one model per stratified view of ``ds``; view ``j`` gets seed ``(seed, j)``."""
    if n < 2:
        raise ValueError("unanimity needs at least 2 views")
    views = stratified_split(ds, n, seed=derive_seed(seed, "split"))
    return [
        fit(view, config.with_seed(derive_seed(seed, "view", j)), backend=backend)
        for j, view in enumerate(views)
    ]


def vote(models, ds):
    if len(models) < 2:
        raise ValueError("voting needs at least 2 models")
    for m in models:
        if m.num_classes != ds.num_classes or m.dim != ds.dim:
            raise ValueError(
                f"model shape (C={m.num_classes}, d={m.dim}) does not match "
                f"dataset (C={ds.num_classes}, d={ds.dim})"
            )
    preds = np.stack([predict(m, ds.features) for m in models], axis=1)
    return VoteTable(ds.ids.copy(), preds.astype(np.int64))


def partition(ds, table, carried_weak=None, strong_label="voted"):
    """Split ``ds`` by unanimity and append the dissenters to ``carried_weak``."""
    if strong_label not in STRONG_LABEL_MODES:
        raise ValueError(f"strong_label must be one of {STRONG_LABEL_MODES}")
    if carried_weak is None:
        carried_weak = UnlabeledSet.empty(ds.dim)
    if table.ids.shape != ds.ids.shape or not np.array_equal(np.sort(table.ids), np.sort(ds.ids)):
        raise DatasetError("vote table does not cover exactly the dataset ids")
    if np.intersect1d(carried_weak.ids, ds.ids).size:
        raise DatasetError("carried weak samples overlap the dataset")
    rows = ds.positions_of(table.ids)
    unanimous = np.zeros(len(ds), dtype=bool)
    voted = np.full(len(ds), -1, dtype=np.int64)
    unanimous[rows] = table.unanimous
    voted[rows] = table.voted_label
    keep = np.flatnonzero(unanimous)
    strong = ds.take(keep)
    if strong_label == "voted":
        strong = strong.with_labels(voted[keep])
    demoted = UnlabeledSet.from_dataset(ds.take(np.flatnonzero(~unanimous)))
    weak = carried_weak.concat(demoted)
    return CurationState(strong, weak, len(ds) + len(carried_weak))
