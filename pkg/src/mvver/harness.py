"""Evaluation metrics, repeated-trial experiments and report writers."""

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import stats

from mvver import kernels
from mvver.classifier import fit, predict
from mvver.dataset import (
    DatasetError,
    NoiseSpec,
    inject_noise,
    load_csv,
    make_blobs,
    stratified_holdout,
)
from mvver.refine import RefineConfig, run_refinement, train_final, voting_only
from mvver.seeds import derive_seed

log = logging.getLogger(__name__)

CONFIG_VERSION = 1
REPORT_VERSION = 1
METHODS = ("naive", "voting_only", "full")


class ExperimentError(RuntimeError):
    def __init__(self, ratio, repeat, cause):
        super().__init__(f"ratio={ratio} repeat={repeat}: {type(cause).__name__}: {cause}")
        self.ratio = ratio
        self.repeat = repeat


def evaluate(model, test):
    """Overall accuracy on a clean test set."""
    if len(test) == 0:
        raise DatasetError("empty test set")
    return float(np.mean(predict(model, test.features) == test.labels))


def aggregate(values, confidence=0.95):
    """Sample mean and Student-t half-width with ``k - 1`` degrees of freedom."""
    a = np.asarray(values, dtype=np.float64)
    if a.size < 2:
        raise ValueError("need at least 2 values for a confidence interval")
    mean = float(a.mean())
    sd = float(a.std(ddof=1))
    t = float(stats.t.ppf(0.5 + confidence / 2, a.size - 1))
    return mean, t * sd / math.sqrt(a.size)


def curation_metrics(ledger, clean_truth, curated, recovered_ids=None, demoted_ids=None):
    """Label quality of a curated set against ground truth.

    ``purity`` is the fraction of curated labels equal to the clean label.
    ``recovery_precision`` is the same fraction restricted to samples that
    entered through entropy recovery; ``recovery_recall`` is the number of
    correctly labeled recoveries over every sample that was ever demoted to
    the weak set. ``noisy_retained`` is the fraction of injected flips still
    present, with the corrupted label, in the curated set.
    """
    try:
        true = clean_truth.select_ids(curated.ids).labels
    except DatasetError as exc:
        raise DatasetError("curated ids are not a subset of the truth ids") from exc
    correct = true == curated.labels
    out = {
        "curated_size": len(curated),
        "purity": float(correct.mean()) if len(curated) else None,
    }
    label_of = curated.label_map()
    flips = ledger.entries
    out["noisy_retained"] = (
        sum(1 for sid, (_, bad) in flips.items() if label_of.get(sid) == bad) / len(flips)
        if flips else 0.0
    )
    if recovered_ids is not None:
        rec = np.asarray(recovered_ids, dtype=np.int64)
        rec = rec[np.isin(rec, curated.ids)]
        hits = int(correct[np.isin(curated.ids, rec)].sum())
        out["recovered"] = int(rec.size)
        out["recovery_precision"] = hits / rec.size if rec.size else None
        if demoted_ids is not None:
            n_dem = len(demoted_ids)
            out["recovery_recall"] = hits / n_dem if n_dem else None
    return out


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BlobsSource:
    num_classes: int = 5
    per_class: int = 200
    dim: int = 10
    separation: float = 4.0
    spread: float = 1.0
    seed: int = 0


@dataclass
class ExperimentConfig:
    data: object = field(default_factory=BlobsSource)  # BlobsSource or a CSV path
    noise_ratios: list = field(default_factory=lambda: [0.1, 0.2, 0.3, 0.4, 0.5])
    repeats: int = 10
    refine: RefineConfig = field(default_factory=RefineConfig)
    test_fraction: float = 0.5
    baselines: dict = field(default_factory=lambda: {"naive": True, "voting_only": True})
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must be in (0, 1)")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        for r in self.noise_ratios:
            NoiseSpec(r)
        unknown = set(self.baselines) - {"naive", "voting_only"}
        if unknown:
            raise ValueError(f"unknown baselines {sorted(unknown)}")

    def to_dict(self):
        data = asdict(self.data) if isinstance(self.data, BlobsSource) else str(self.data)
        return {
            "version": CONFIG_VERSION,
            "data": {"source": "blobs", **data} if isinstance(data, dict) else
                    {"source": "csv", "path": data},
            "noise_ratios": [float(r) for r in self.noise_ratios],
            "repeats": self.repeats,
            "refine": self.refine.to_dict(),
            "test_fraction": self.test_fraction,
            "baselines": dict(self.baselines),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        version = d.pop("version", CONFIG_VERSION)
        if version != CONFIG_VERSION:
            raise ValueError(f"unsupported config version {version}")
        data = dict(d.pop("data", {"source": "blobs"}))
        source = data.pop("source", "blobs")
        if source == "blobs":
            d["data"] = BlobsSource(**data)
        elif source == "csv":
            d["data"] = data["path"]
        else:
            raise ValueError(f"unknown data source {source!r}")
        if "refine" in d:
            d["refine"] = RefineConfig.from_dict(d["refine"])
        return cls(**d)

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))

    def load_data(self):
        if isinstance(self.data, BlobsSource):
            b = self.data
            ds, _ = make_blobs(b.num_classes, b.per_class, b.dim, b.separation, b.spread, b.seed)
            return ds
        return load_csv(self.data)


# ---------------------------------------------------------------------------
# experiment
# ---------------------------------------------------------------------------


def _run_cell(clean, cfg, ratio_index, ratio, repeat, backend):
    cell_seed = derive_seed(cfg.seed, "cell", ratio_index, repeat)
    train, test = stratified_holdout(clean, cfg.test_fraction, derive_seed(cell_seed, "holdout"))
    noisy, ledger = inject_noise(train, NoiseSpec(ratio, derive_seed(cell_seed, "noise")))
    # noise only ever touches the training half
    assert not np.isin(ledger.noisy_ids(), test.ids).any()
    rcfg = replace(cfg.refine, seed=derive_seed(cell_seed, "refine"))
    final_cfg = rcfg.final_classifier.with_seed(derive_seed(cell_seed, "final"))

    cell = {"ratio": float(ratio), "repeat": repeat, "flips": len(ledger)}
    result = run_refinement(noisy, rcfg, truth=train, test=test, backend=backend)
    cell["full"] = evaluate(train_final(result.curated, final_cfg, backend=backend), test)
    cell["iterations"] = [r.to_dict() for r in result.reports]
    cell["curation"] = curation_metrics(
        ledger, train, result.curated, result.recovered_ids(), result.ever_demoted
    )
    if cfg.baselines.get("naive", True):
        cell["naive"] = evaluate(fit(noisy, final_cfg, backend=backend), test)
    if cfg.baselines.get("voting_only", True):
        vo = run_refinement(noisy, voting_only(rcfg), truth=train, backend=backend)
        cell["voting_only"] = evaluate(train_final(vo.curated, final_cfg, backend=backend), test)
        cell["voting_only_purity"] = vo.reports[-1].purity
    return cell


def run_experiment(cfg, backend=None, progress=None):
    """Every (ratio, repeat) cell: clean 50/50 holdout, noise on the training
    half, curation plus baselines, accuracy on the clean test half."""
    clean = cfg.load_data()
    cells = []
    for ri, ratio in enumerate(cfg.noise_ratios):
        for rep in range(cfg.repeats):
            try:
                cell = _run_cell(clean, cfg, ri, ratio, rep, backend)
            except Exception as exc:
                raise ExperimentError(ratio, rep, exc) from exc
            cells.append(cell)
            if progress is not None:
                progress(cell)
    summary = []
    for ratio in cfg.noise_ratios:
        row = {"ratio": float(ratio)}
        group = [c for c in cells if c["ratio"] == float(ratio)]
        for method in METHODS:
            vals = [c[method] for c in group if method in c]
            if not vals:
                continue
            if len(vals) >= 2:
                row[method] = dict(zip(("mean", "ci95"), aggregate(vals)))
            else:
                row[method] = {"mean": float(vals[0]), "ci95": None}
        row["purity"] = float(np.mean([c["curation"]["purity"] for c in group]))
        summary.append(row)
    return {
        "version": REPORT_VERSION,
        "metadata": {
            "ci": "Student-t 95% half-width, k-1 degrees of freedom",
            "entropy_unit": "nats",
            "kernel_backend": kernels.get_backend(backend).name,
            "train_test_split": "stratified per class",
        },
        "config": cfg.to_dict(),
        "summary": summary,
        "cells": cells,
    }


def report_json(report):
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def write_report(report, out_dir):
    """``report.json`` (canonical) and ``results.csv`` (ratio x method table)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report_json(report))
    with (out / "results.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = ["ratio"]
        for m in METHODS:
            header += [f"{m}_mean", f"{m}_ci95"]
        w.writerow(header)
        for row in report["summary"]:
            line = [row["ratio"]]
            for m in METHODS:
                cell = row.get(m)
                line += ["", ""] if cell is None else [cell["mean"], "" if cell["ci95"] is None else cell["ci95"]]
            w.writerow(line)
    return out / "report.json"


def alpha_sweep(ds, alphas, cfg=RefineConfig(), holdout_fraction=0.2, backend=None):
    """Downstream accuracy for each candidate threshold.

    For every alpha the dataset is curated, a stratified holdout is carved
    from the curated set (its labels treated as clean), the final model is
    trained on the rest and scored on that holdout. Choosing alpha from the
    table is left to the caller.
    """
    rows = []
    for alpha in alphas:
        result = run_refinement(ds, replace(cfg, alpha=float(alpha)), backend=backend)
        fit_part, held = stratified_holdout(
            result.curated, holdout_fraction, derive_seed(cfg.seed, "sweep")
        )
        model = train_final(fit_part, cfg.final_classifier.with_seed(derive_seed(cfg.seed, "final")),
                            backend=backend)
        rows.append({
            "alpha": float(alpha),
            "curated_size": len(result.curated),
            "recovered": sum(r.recovered for r in result.reports),
            "holdout_accuracy": evaluate(model, held),
        })
    return rows
