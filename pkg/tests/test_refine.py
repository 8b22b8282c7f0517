import math

import numpy as np
import pytest

from mvver.classifier import ClassifierConfig, fit, predict
from mvver.dataset import (
    DatasetError,
    LabeledDataset,
    NoiseSpec,
    inject_noise,
    make_blobs,
    stratified_holdout,
)
from mvver.entropy import rank_weak, recover
from mvver.refine import (
    RefineConfig,
    RefinementError,
    run_refinement,
    train_final,
    voting_only,
)
from mvver.seeds import derive_seed
from mvver.voting import partition, train_views, vote

FAST = ClassifierConfig(epochs=10)


def noisy_blobs(seed, ratio=0.4, per_class=100, C=3, d=2, sep=4.0):
    clean, _ = make_blobs(C, per_class, d, separation=sep, spread=1.0, seed=seed)
    noisy, ledger = inject_noise(clean, NoiseSpec(ratio, seed))
    return clean, noisy, ledger


def test_single_round_matches_manual_pipeline():
    _, noisy, _ = noisy_blobs(1)
    cfg = RefineConfig(M=1, alpha=0.9, view_classifier=FAST, strong_classifier=FAST, seed=5)
    result = run_refinement(noisy, cfg)

    models = train_views(noisy, 2, FAST, seed=derive_seed(5, 1, "views"))
    state = partition(noisy, vote(models, noisy))
    strong = fit(state.strong, FAST.with_seed(derive_seed(5, 1, "strong")))
    state, moved = recover(state, rank_weak(strong, state.weak), 0.9)

    assert len(result.reports) == 1
    assert result.curated.ids.tolist() == state.strong.ids.tolist()
    assert result.curated.labels.tolist() == state.strong.labels.tolist()
    assert result.reports[0].recovered == moved.size


def test_conservation_and_persistent_weak():
    _, noisy, _ = noisy_blobs(2)
    result = run_refinement(noisy, RefineConfig(alpha=0.6, view_classifier=FAST, strong_classifier=FAST))
    for rep in result.reports:
        assert rep.strong_size + rep.weak_size == len(noisy)
    assert result.reports[0].input_size == len(noisy)
    for prev, cur in zip(result.reports, result.reports[1:]):
        assert cur.input_size == prev.strong_size
        assert cur.weak_size == prev.weak_size + cur.demoted - cur.recovered
    assert len(result.curated) + len(result.weak) == len(noisy)


def test_curated_set_unpacks_like_a_tuple():
    _, noisy, _ = noisy_blobs(3)
    curated, weak, reports = run_refinement(noisy, RefineConfig(M=2, view_classifier=FAST, strong_classifier=FAST))
    assert len(reports) == 2 and len(curated) + len(weak) == len(noisy)


def test_deterministic():
    _, noisy, _ = noisy_blobs(4)
    cfg = RefineConfig(view_classifier=FAST, strong_classifier=FAST, seed=9)
    a, b = run_refinement(noisy, cfg), run_refinement(noisy, cfg)
    assert a.curated.ids.tolist() == b.curated.ids.tolist()
    assert a.curated.labels.tolist() == b.curated.labels.tolist()


@pytest.mark.parametrize("seed", range(10))
def test_zero_noise_keeps_labels(seed):
    clean, _ = make_blobs(3, 100, 2, separation=10.0, spread=1.0, seed=seed)
    result = run_refinement(clean, RefineConfig(seed=seed))
    kept = result.curated.label_map()
    same = sum(kept.get(i) == y for i, y in zip(clean.ids.tolist(), clean.labels.tolist()))
    assert same / len(clean) >= 0.99
    assert len(result.weak) <= 0.01 * len(clean)


def test_error_rate_falls_over_iterations():
    # 40% noise, alpha at half the maximum entropy
    falling = 0
    for seed in range(10):
        clean, noisy, _ = noisy_blobs(seed, per_class=200, C=5, d=10)
        result = run_refinement(noisy, RefineConfig(alpha=0.5 * math.log(5), seed=seed), truth=clean)
        err = [1 - r.purity for r in result.reports]
        falling += all(b <= a for a, b in zip(err, err[1:]))
    assert falling >= 8


def test_voting_only_equals_full_below_every_entropy():
    clean, noisy, _ = noisy_blobs(6)
    cfg = RefineConfig(alpha=1e-6, view_classifier=FAST, strong_classifier=FAST, seed=1)
    full, vo = run_refinement(noisy, cfg), run_refinement(noisy, voting_only(cfg))
    assert sum(r.recovered for r in full.reports) == 0
    assert all(np.array_equal(a, b) for a, b in zip(full.strong_trace, vo.strong_trace))


def test_recovered_samples_carry_map_labels():
    _, noisy, _ = noisy_blobs(7)
    result = run_refinement(noisy, RefineConfig(M=1, alpha=1.0, view_classifier=FAST))
    rec = result.recovered_ids()
    assert rec.size
    labels = result.curated.label_map()
    last = {r.sample_id: r.map_label for records in result.entropy_records for r in records}
    assert all(labels[i] == last[i] for i in rec.tolist())


def test_error_names_iteration():
    ds = LabeledDataset.from_arrays(np.arange(5.0)[:, None], [0, 0, 0, 0, 1])
    with pytest.raises(RefinementError, match="iteration 1") as info:
        run_refinement(ds, RefineConfig(view_classifier=FAST, strong_classifier=FAST))
    assert info.value.iteration == 1


def test_config_validation():
    with pytest.raises(ValueError):
        RefineConfig(M=0)
    with pytest.raises(ValueError):
        RefineConfig(n=1)
    cfg = RefineConfig(alpha=0.3, view_classifier=ClassifierConfig(kind="mlp"))
    assert RefineConfig.from_dict(cfg.to_dict()) == cfg


class TestTrainFinal:
    def test_clean_blobs(self, blobs3):
        train, test = stratified_holdout(blobs3, 0.5, seed=0)
        model = train_final(train)
        assert np.mean(predict(model, test.features) == test.labels) >= 0.99

    def test_missing_class(self):
        ds = LabeledDataset.from_arrays(np.arange(4.0)[:, None], [0, 0, 1, 1], num_classes=3)
        with pytest.raises(DatasetError, match="missing class"):
            train_final(ds)

    def test_empty(self):
        ds = LabeledDataset.from_arrays(np.zeros((0, 1)), np.zeros(0, int), num_classes=2)
        with pytest.raises(DatasetError, match="empty"):
            train_final(ds)

    def test_beats_naive_at_40_percent(self):
        # a linear model is nearly immune to symmetric flips, so this uses the MLP
        mlp = ClassifierConfig(kind="mlp")
        cur, naive = [], []
        for seed in range(10):
            clean, _ = make_blobs(5, 200, 10, separation=4.0, spread=1.0, seed=seed)
            train, test = stratified_holdout(clean, 0.5, seed=seed)
            noisy, _ = inject_noise(train, NoiseSpec(0.4, seed))
            result = run_refinement(noisy, RefineConfig(alpha=0.4, view_classifier=mlp,
                                                        strong_classifier=mlp, seed=seed))
            cfg = mlp.with_seed(seed)
            cur.append(np.mean(predict(train_final(result.curated, cfg), test.features) == test.labels))
            naive.append(np.mean(predict(fit(noisy, cfg), test.features) == test.labels))
        assert np.mean(cur) >= np.mean(naive)
