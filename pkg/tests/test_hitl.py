from __future__ import annotations

import numpy as np
import pytest

from trustboost.crypto import Digest, sha256
from trustboost.hitl import (
    BadFractionError,
    ExpertOracle,
    InvalidDistributionError,
    PoolExhaustedError,
    ReviewItem,
    Route,
    UnknownCustomerError,
    active_learning_run,
    binary_entropies,
    entropy_of,
    normalized_entropy,
    route,
    synth_dataset,
)
from trustboost.model import Dataset, DecisionDistribution


def test_entropy_matches_published_examples():
    assert normalized_entropy((0.98, 0.02)) == pytest.approx(0.141, abs=1e-3)
    assert normalized_entropy((0.47, 0.53)) == pytest.approx(0.997, abs=1e-3)


def test_entropy_extremes():
    assert normalized_entropy((0.5, 0.5)) == 1.0
    assert normalized_entropy((1.0, 0.0)) == 0.0
    assert normalized_entropy((0.0, 1.0)) == 0.0


def test_entropy_symmetry_and_monotonicity():
    grid = np.linspace(0.0, 0.5, 51)
    values = [normalized_entropy((p, 1 - p)) for p in grid]
    for p, v in zip(grid, values):
        assert v == pytest.approx(normalized_entropy((1 - p, p)), abs=1e-12)
        assert 0.0 <= v <= 1.0
    assert values == sorted(values)  # increasing toward p = 0.5


def test_entropy_rejects_bad_distributions():
    with pytest.raises(InvalidDistributionError):
        normalized_entropy((0.9, 0.2))
    with pytest.raises(InvalidDistributionError):
        normalized_entropy((1.2, -0.2))
    with pytest.raises(InvalidDistributionError):
        normalized_entropy((1.0,))


def test_entropy_of_distribution():
    assert entropy_of(DecisionDistribution(0.98, 0.02)) == pytest.approx(0.141, abs=1e-3)


def test_binary_entropies_vectorized_matches_scalar():
    ps = np.array([0.0, 0.02, 0.25, 0.5, 0.75, 0.98, 1.0])
    vec = binary_entropies(ps)
    for p, v in zip(ps, vec):
        assert v == pytest.approx(normalized_entropy((p, 1 - p)), abs=1e-12)


def test_routing_thresholds():
    assert route(0.141).route == Route.AUTO_DECIDE
    assert route(0.997).route == Route.HUMAN_REVIEW
    assert route(0.80).route == Route.AUTO_DECIDE  # boundary inclusive
    assert route(0.8000001).route == Route.HUMAN_REVIEW
    assert route(0.9, threshold=0.95).route == Route.AUTO_DECIDE


def test_routing_rejects_bad_entropy():
    with pytest.raises(InvalidDistributionError):
        route(1.5)


def _item(customer="c1") -> ReviewItem:
    return ReviewItem(
        case_id="case-1",
        customer_id=customer,
        distribution=DecisionDistribution(0.47, 0.53),
        entropy=0.997,
        artifact_hash=sha256(b"artifact"),
    )


def test_oracle_error_rate_zero_and_one():
    truth = {"c1": 1}
    assert ExpertOracle(0.0, seed=1).decide_item(_item(), truth) == 1
    assert ExpertOracle(1.0, seed=1).decide_item(_item(), truth) == 0


def test_oracle_unknown_customer():
    with pytest.raises(UnknownCustomerError):
        ExpertOracle().decide_item(_item("ghost"), {"c1": 1})


def test_oracle_flip_rate_binomial_bound():
    oracle = ExpertOracle(0.1, seed=42)
    flips = sum(oracle.decide_label(1) == 0 for _ in range(1000))
    assert 80 <= flips <= 120


def test_synth_dataset_defaults_hit_published_proportions():
    data = synth_dataset()
    assert len(data) == 1888
    assert 0.4452 <= data.fund_fraction <= 0.4652
    assert data.features.shape == (1888, 88)
    assert np.all(data.features.sum(axis=1) == 18)


def test_synth_dataset_extreme_fractions():
    assert synth_dataset(n=10, fund_fraction=0.0, seed=1).labels.sum() == 0
    assert synth_dataset(n=10, fund_fraction=1.0, seed=1).labels.sum() == 10


def test_synth_dataset_deterministic():
    a = synth_dataset(n=100, seed=9)
    b = synth_dataset(n=100, seed=9)
    assert np.array_equal(a.features, b.features)
    assert np.array_equal(a.labels, b.labels)
    c = synth_dataset(n=100, seed=10)
    assert not np.array_equal(a.labels, c.labels) or not np.array_equal(a.features, c.features)


def test_synth_dataset_rejects_bad_fraction():
    with pytest.raises(BadFractionError):
        synth_dataset(n=10, fund_fraction=1.5)


def test_active_learning_pool_exhaustion():
    data = synth_dataset(n=120, seed=0)
    with pytest.raises(PoolExhaustedError):
        active_learning_run(data, data, iterations=6, batch=150)


def test_active_learning_zero_iterations_is_baseline_only():
    data = synth_dataset(n=260, seed=3)
    initial, pool = data.subset(range(60)), data.subset(range(60, 260))
    records = active_learning_run(pool, initial, iterations=0, batch=10, seed=1, epochs=2, folds=3)
    assert len(records) == 1
    assert records[0].iteration == 0
    assert records[0].annotated_added == 0
    assert records[0].labeled_size == 60


def test_active_learning_bookkeeping_and_anchors():
    """Labeled growth, pool/labeled disjointness, one anchor per iteration."""
    data = synth_dataset(n=400, seed=5)
    initial, pool = data.subset(range(80)), data.subset(range(80, 400))
    anchors: list[tuple[Digest, int]] = []
    records = active_learning_run(
        pool, initial, iterations=3, batch=40, seed=2, epochs=2, folds=3,
        anchor_sink=lambda digest, iteration: anchors.append((digest, iteration)),
    )
    assert [r.labeled_size for r in records] == [80, 120, 160, 200]
    assert [r.annotated_added for r in records] == [0, 40, 40, 40]
    assert [it for _, it in anchors] == [0, 1, 2, 3]
    assert len({d.hex for d, _ in anchors}) == 4  # retrained model each round


def test_active_learning_deterministic():
    data = synth_dataset(n=300, seed=4)
    initial, pool = data.subset(range(50)), data.subset(range(50, 300))

    def curve():
        records = active_learning_run(pool, initial, iterations=2, batch=30,
                                      seed=9, epochs=2, folds=3)
        return [(r.mean_auc, r.config_hash) for r in records]

    assert curve() == curve()


def test_noisy_oracle_labels_differ_from_truth():
    data = synth_dataset(n=300, seed=6)
    initial, pool = data.subset(range(50)), data.subset(range(50, 300))
    records = active_learning_run(pool, initial, iterations=1, batch=100, seed=3,
                                  epochs=2, folds=3, oracle=ExpertOracle(1.0, seed=1))
    assert records[1].annotated_added == 100
