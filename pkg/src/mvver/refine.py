"""Iterative refinement: vote/partition, train a strong model, recover from
the weak set by entropy, and feed the strong set into the next round."""

import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from mvver.classifier import ClassifierConfig, fit, predict
from mvver.dataset import DatasetError
from mvver.entropy import recover, rank_weak
from mvver.seeds import derive_seed
from mvver.voting import UnlabeledSet, partition, train_views, vote

log = logging.getLogger(__name__)


class RefinementError(RuntimeError):
    def __init__(self, iteration, message):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration


@dataclass(frozen=True)
class RefineConfig:
    M: int = 3
    n: int = 2
    alpha: float = 1.5
    view_classifier: ClassifierConfig = ClassifierConfig()
    strong_classifier: ClassifierConfig = ClassifierConfig()
    final_classifier: ClassifierConfig = ClassifierConfig()
    strong_label: str = "voted"
    seed: int = 0

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("M must be >= 1")
        if self.n < 2:
            raise ValueError("n must be >= 2 (unanimity is vacuous with one view)")
        if self.strong_label not in ("voted", "original"):
            raise ValueError("strong_label must be 'voted' or 'original'")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for key in ("view_classifier", "strong_classifier", "final_classifier"):
            if key in d:
                d[key] = ClassifierConfig.from_dict(d[key])
        return cls(**d)


@dataclass
class IterationReport:
    iteration: int
    input_size: int
    voted_strong: int
    demoted: int
    recovered: int
    strong_size: int
    weak_size: int
    purity: float | None = None
    strong_model_accuracy: float | None = None

    def to_dict(self):
        return asdict(self)


@dataclass(eq=False)
class RefinementResult:
    curated: object
    weak: UnlabeledSet
    reports: list
    entropy_records: list = field(default_factory=list)
    # id -> "voted" | "recovered": how each curated sample last entered the strong set
    provenance: dict = field(default_factory=dict)
    ever_demoted: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    strong_trace: list = field(default_factory=list)
    weak_trace: list = field(default_factory=list)

    def __iter__(self):
        return iter((self.curated, self.weak, self.reports))

    def recovered_ids(self):
        return np.array(
            sorted(i for i, how in self.provenance.items() if how == "recovered"), dtype=np.int64
        )


def _purity(strong, truth):
    if truth is None or len(strong) == 0:
        return None
    true = truth.select_ids(strong.ids).labels
    return float(np.mean(true == strong.labels))


def run_refinement(ds, cfg=RefineConfig(), truth=None, test=None, backend=None):
    """Run ``cfg.M`` rounds of voting and entropy recovery on ``ds``.

    ``truth`` (clean labels for the same ids) and ``test`` (a clean holdout)
    only feed the per-iteration reports; they never influence curation.
    """
    N = len(ds)
    current = ds
    weak = UnlabeledSet.empty(ds.dim)
    reports, all_records, trace, weak_trace = [], [], [], []
    provenance = {int(i): "voted" for i in ds.ids.tolist()}
    demoted_ever = set()
    for m in range(1, cfg.M + 1):
        try:
            models = train_views(
                current, cfg.n, cfg.view_classifier, seed=derive_seed(cfg.seed, m, "views"),
                backend=backend,
            )
        except DatasetError as exc:
            raise RefinementError(m, str(exc)) from exc
        table = vote(models, current)
        state = partition(current, table, weak, strong_label=cfg.strong_label)
        voted_strong = len(state.strong)
        demoted = len(current) - voted_strong
        if voted_strong < cfg.n * ds.num_classes:
            raise RefinementError(
                m, f"strong set shrank to {voted_strong} samples (< n*C = {cfg.n * ds.num_classes})"
            )
        for sid in state.weak.ids.tolist():
            provenance.pop(sid, None)
        demoted_ever.update(state.weak.ids.tolist())

        strong_model = fit(
            state.strong, cfg.strong_classifier.with_seed(derive_seed(cfg.seed, m, "strong")),
            backend=backend,
        )
        records = rank_weak(strong_model, state.weak)
        state, moved = recover(state, records, cfg.alpha)
        for sid in moved.tolist():
            provenance[sid] = "recovered"
        all_records.append(records)

        acc = None
        if test is not None:
            acc = float(np.mean(predict(strong_model, test.features) == test.labels))
        report = IterationReport(
            iteration=m,
            input_size=len(current),
            voted_strong=voted_strong,
            demoted=demoted,
            recovered=int(moved.size),
            strong_size=len(state.strong),
            weak_size=len(state.weak),
            purity=_purity(state.strong, truth),
            strong_model_accuracy=acc,
        )
        assert report.strong_size + report.weak_size == N
        reports.append(report)
        trace.append(np.sort(state.strong.ids))
        weak_trace.append(np.sort(state.weak.ids))
        log.debug("refinement %s", report)
        current, weak = state.strong, state.weak
    return RefinementResult(
        curated=current,
        weak=weak,
        reports=reports,
        entropy_records=all_records,
        provenance=provenance,
        ever_demoted=np.array(sorted(demoted_ever), dtype=np.int64),
        strong_trace=trace,
        weak_trace=weak_trace,
    )


def train_final(curated, cfg=ClassifierConfig(), backend=None):
    """Fit the pipeline's product model; every class must still be present."""
    if len(curated) == 0:
        raise DatasetError("curated dataset is empty")
    missing = np.flatnonzero(curated.class_counts() == 0)
    if missing.size:
        raise DatasetError(f"curated dataset is missing class(es) {missing.tolist()}")
    return fit(curated, cfg, backend=backend)


def voting_only(cfg):
    """The same pipeline with entropy recovery switched off."""
    return replace(cfg, alpha=-1.0)
