"""Labeled feature datasets, CSV I/O, synthetic blobs, label-noise injection
and stratified splitting.

Datasets are immutable: arrays are stored read-only and every transform
returns a new object. Sample ids are carried through all subsets so that
curation results can be traced back to the original rows.
"""

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np


class DatasetError(ValueError):
    pass


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.flags.writeable = False
    return a


class Sample(NamedTuple):
    id: int
    features: np.ndarray
    label: int


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Feature matrix ``(N, d)`` with integer labels in ``[0, num_classes)``."""

    features: np.ndarray
    labels: np.ndarray
    ids: np.ndarray
    num_classes: int

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        if X.ndim != 2:
            raise DatasetError(f"features must be 2-D, got shape {X.shape}")
        y = np.asarray(self.labels)
        ids = np.asarray(self.ids)
        if y.shape != (X.shape[0],) or ids.shape != (X.shape[0],):
            raise DatasetError("features, labels and ids disagree on N")
        if not np.all(np.isfinite(X)):
            raise DatasetError("features must be finite")
        if self.num_classes < 1:
            raise DatasetError("num_classes must be >= 1")
        if y.size and (y.min() < 0 or y.max() >= self.num_classes):
            raise DatasetError(f"label out of range [0, {self.num_classes})")
        if np.unique(ids).size != ids.size:
            raise DatasetError("sample ids must be unique")
        object.__setattr__(self, "features", _frozen(X, np.float64))
        object.__setattr__(self, "labels", _frozen(y, np.int64))
        object.__setattr__(self, "ids", _frozen(ids, np.int64))
        object.__setattr__(self, "num_classes", int(self.num_classes))

    @classmethod
    def from_arrays(cls, features, labels, num_classes=None, ids=None):
        labels = np.asarray(labels, dtype=np.int64)
        if num_classes is None:
            num_classes = int(labels.max()) + 1 if labels.size else 1
        if ids is None:
            ids = np.arange(labels.shape[0])
        return cls(features, labels, ids, num_classes)

    def __len__(self):
        return self.labels.shape[0]

    def __iter__(self):
        for i in range(len(self)):
            yield Sample(int(self.ids[i]), self.features[i], int(self.labels[i]))

    @property
    def dim(self):
        return self.features.shape[1]

    def class_counts(self):
        return np.bincount(self.labels, minlength=self.num_classes)

    def take(self, positions):
        """Subset by row position, preserving the given order."""
        positions = np.asarray(positions, dtype=np.int64)
        return LabeledDataset(
            self.features[positions], self.labels[positions], self.ids[positions], self.num_classes
        )

    def positions_of(self, ids):
        """Row positions of ``ids``; raises if any id is absent."""
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size == 0:
            return np.empty(0, dtype=np.int64)
        order = np.argsort(self.ids, kind="stable")
        pos = np.searchsorted(self.ids, ids, sorter=order)
        pos = np.clip(pos, 0, max(len(self) - 1, 0))
        found = order[pos] if len(self) else pos
        if len(self) == 0 or not np.array_equal(self.ids[found], ids):
            raise DatasetError("ids not present in dataset")
        return found

    def select_ids(self, ids):
        return self.take(self.positions_of(ids))

    def with_labels(self, labels):
        return LabeledDataset(self.features, labels, self.ids, self.num_classes)

    def label_map(self):
        return dict(zip(self.ids.tolist(), self.labels.tolist()))

    def concat(self, other):
        if other.num_classes != self.num_classes or (len(other) and other.dim != self.dim):
            raise DatasetError("cannot concatenate datasets with different shapes")
        return LabeledDataset(
            np.concatenate([self.features, other.features.reshape(-1, self.dim)]),
            np.concatenate([self.labels, other.labels]),
            np.concatenate([self.ids, other.ids]),
            self.num_classes,
        )


@dataclass(frozen=True)
class NoiseSpec:
    ratio: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.ratio < 1.0:
            raise DatasetError(f"noise ratio must be in [0, 1), got {self.ratio}")


@dataclass
class NoiseLedger:
    """Ground truth for injected noise: ``id -> (original, corrupted)``."""

    entries: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.entries)

    def noisy_ids(self):
        return np.array(sorted(self.entries), dtype=np.int64)

    def restore(self, ds):
        """Undo the recorded flips on ``ds`` (ids absent from ``ds`` are skipped)."""
        labels = ds.labels.copy()
        for pos, sid in enumerate(ds.ids.tolist()):
            entry = self.entries.get(sid)
            if entry is not None:
                if labels[pos] != entry[1]:
                    raise DatasetError(f"sample {sid} does not carry its recorded corrupted label")
                labels[pos] = entry[0]
        return ds.with_labels(labels)

    def to_json(self):
        rows = [
            {"id": sid, "original": orig, "corrupted": corr}
            for sid, (orig, corr) in sorted(self.entries.items())
        ]
        return json.dumps(rows, indent=1)

    @classmethod
    def from_json(cls, text):
        entries = {}
        for row in json.loads(text):
            if row["original"] == row["corrupted"]:
                raise DatasetError(f"ledger entry {row['id']} does not change the label")
            entries[int(row["id"])] = (int(row["original"]), int(row["corrupted"]))
        return cls(entries)

    def save(self, path):
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path):
        return cls.from_json(Path(path).read_text())


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def load_csv(path, num_classes=None):
    """Read ``f0,...,f{d-1},label`` rows, optionally preceded by ``# classes=C``.

    A leading ``id`` column is accepted so curated subsets keep their
    original sample ids; without it ids are ``0..N-1`` in row order.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        lines = fh.read().splitlines()
    declared = None
    lineno = 0
    while lineno < len(lines) and lines[lineno].startswith("#"):
        meta = lines[lineno][1:].strip()
        for item in meta.split(","):
            key, _, val = item.strip().partition("=")
            if key.strip() == "classes":
                try:
                    declared = int(val)
                except ValueError:
                    raise DatasetError(f"line {lineno + 1}: bad classes metadata {val!r}")
        lineno += 1
    if lineno >= len(lines):
        raise DatasetError("missing header row")
    reader = csv.reader(lines[lineno:])
    header = [h.strip() for h in next(reader)]
    has_id = bool(header) and header[0] == "id"
    feat_cols = header[1:-1] if has_id else header[:-1]
    if not header or header[-1] != "label" or feat_cols != [f"f{j}" for j in range(len(feat_cols))]:
        raise DatasetError(f"line {lineno + 1}: header must be f0,...,f{{d-1}},label")
    width = len(header)
    d = len(feat_cols)
    ids, feats, labels = [], [], []
    for k, row in enumerate(reader):
        rowno = lineno + 2 + k
        if not row:
            continue
        if len(row) != width:
            raise DatasetError(f"row {rowno}: expected {width} columns, got {len(row)}")
        try:
            x = [float(v) for v in row[1 : 1 + d]] if has_id else [float(v) for v in row[:d]]
        except ValueError:
            raise DatasetError(f"row {rowno}: malformed feature value")
        if not all(math.isfinite(v) for v in x):
            raise DatasetError(f"row {rowno}: non-finite feature value")
        try:
            label = int(row[-1])
        except ValueError:
            raise DatasetError(f"row {rowno}: non-integer label {row[-1]!r}")
        if label < 0:
            raise DatasetError(f"row {rowno}: negative label {label}")
        if has_id:
            try:
                ids.append(int(row[0]))
            except ValueError:
                raise DatasetError(f"row {rowno}: non-integer id {row[0]!r}")
        feats.append(x)
        labels.append(label)
    if not labels:
        raise DatasetError("empty dataset")
    C = num_classes if num_classes is not None else declared
    if C is None:
        C = max(labels) + 1
    elif max(labels) >= C:
        raise DatasetError(f"label out of range: {max(labels)} >= declared classes {C}")
    X = np.array(feats, dtype=np.float64).reshape(len(labels), d)
    return LabeledDataset(X, labels, ids if has_id else np.arange(len(labels)), C)


def save_csv(ds, path, with_ids=False):
    """Write ``ds`` so that :func:`load_csv` reads it back bit-exactly."""
    header = [f"f{j}" for j in range(ds.dim)] + ["label"]
    if with_ids:
        header = ["id"] + header
    with Path(path).open("w", newline="") as fh:
        fh.write(f"# classes={ds.num_classes}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for sid, x, label in zip(ds.ids.tolist(), ds.features.tolist(), ds.labels.tolist()):
            row = [repr(v) for v in x] + [label]
            w.writerow([sid] + row if with_ids else row)


# ---------------------------------------------------------------------------
# generation, noise, splitting
# ---------------------------------------------------------------------------


def _blob_means(num_classes, dim, separation, rng):
    # C <= d: scaled axis vectors, every pair exactly `separation` apart.
    # Otherwise: best of 64 random unit-sphere layouts, rescaled so the
    # closest pair is `separation` apart. Centered on the origin either way.
    if num_classes == 1:
        return np.zeros((1, dim))
    if num_classes <= dim:
        means = np.eye(num_classes, dim) * (separation / np.sqrt(2.0))
        return means - means.mean(axis=0)
    best, best_score = None, -1.0
    iu = np.triu_indices(num_classes, 1)
    for _ in range(64):
        u = rng.normal(size=(num_classes, dim))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        closest = np.linalg.norm(u[:, None] - u[None], axis=-1)[iu].min()
        if closest > best_score:
            best, best_score = u, closest
    means = best * (separation / best_score)
    return means - means.mean(axis=0)


def make_blobs(num_classes, per_class, dim, separation, spread, seed=0):
    """Isotropic Gaussian clusters whose closest pair of means is ``separation`` apart.

    With ``num_classes <= dim`` every pair of means is exactly ``separation``
    apart.

    Returns the dataset and an empty :class:`NoiseLedger`.
    """
    if num_classes < 1 or per_class < 1 or dim < 1:
        raise DatasetError("num_classes, per_class and dim must be positive")
    if separation <= 0 or spread <= 0:
        raise DatasetError("separation and spread must be positive")
    rng = np.random.default_rng(seed)
    means = _blob_means(num_classes, dim, separation, rng)
    X = np.concatenate(
        [means[c] + spread * rng.normal(size=(per_class, dim)) for c in range(num_classes)]
    )
    y = np.repeat(np.arange(num_classes), per_class)
    return LabeledDataset.from_arrays(X, y, num_classes), NoiseLedger()


def _round_half_up(x):
    # guard against 0.35 * 10 == 3.4999999999999996
    return int(math.floor(x + 0.5 + 1e-9))


def inject_noise(ds, spec):
    """Flip exactly ``round(ratio * N_c)`` labels inside every class ``c``.

    Targets are uniform over the other ``C - 1`` classes. Returns the noisy
    copy and the ledger of flips; ``ds`` is left untouched.
    """
    if ds.num_classes < 2:
        raise DatasetError("noise injection needs at least 2 classes (C = 1 has no wrong class)")
    rng = np.random.default_rng(spec.seed)
    labels = ds.labels.copy()
    entries = {}
    for c in range(ds.num_classes):
        members = np.flatnonzero(ds.labels == c)
        k = _round_half_up(spec.ratio * members.size)
        if k == 0:
            continue
        chosen = np.sort(rng.choice(members, size=k, replace=False))
        targets = rng.integers(0, ds.num_classes - 1, size=k)
        targets = targets + (targets >= c)
        labels[chosen] = targets
        for pos, new in zip(chosen.tolist(), targets.tolist()):
            entries[int(ds.ids[pos])] = (c, int(new))
    return ds.with_labels(labels), NoiseLedger(entries)


def _check_strata(ds, n):
    counts = ds.class_counts()
    for c in range(ds.num_classes):
        if 0 < counts[c] < n:
            raise DatasetError(
                f"class {c} has {counts[c]} member(s), fewer than the {n} parts requested"
            )


def stratified_split(ds, n, seed=0):
    """Split ``ds`` into ``n`` disjoint subsets, balanced per class.

    Each class is shuffled and dealt round-robin; the dealing position
    carries over between classes so subset sizes also differ by at most one.
    Classes that are absent entirely are allowed; present classes need at
    least ``n`` members.
    """
    if n < 2:
        raise DatasetError("need at least 2 parts")
    if len(ds) < n:
        raise DatasetError(f"dataset of {len(ds)} samples is too small to split into {n} parts")
    _check_strata(ds, n)
    rng = np.random.default_rng(seed)
    owner = np.empty(len(ds), dtype=np.int64)
    offset = 0
    for c in range(ds.num_classes):
        members = np.flatnonzero(ds.labels == c)
        if members.size == 0:
            continue
        members = rng.permutation(members)
        owner[members] = (offset + np.arange(members.size)) % n
        offset = (offset + members.size) % n
    return [ds.take(np.flatnonzero(owner == j)) for j in range(n)]


def stratified_holdout(ds, test_fraction, seed=0):
    """Per-class random holdout; returns ``(train, test)`` in original row order."""
    if not 0.0 < test_fraction < 1.0:
        raise DatasetError("test_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    is_test = np.zeros(len(ds), dtype=bool)
    for c in range(ds.num_classes):
        members = np.flatnonzero(ds.labels == c)
        k = _round_half_up(test_fraction * members.size)
        is_test[rng.permutation(members)[:k]] = True
    return ds.take(np.flatnonzero(~is_test)), ds.take(np.flatnonzero(is_test))
