import math
from types import SimpleNamespace

import numpy as np
import pandas as pd
import pytest

from cyclescore.errors import CycleScoreError
from cyclescore.scoring import (
    WEIGHT_FLOOR, PenaltyParams, Weights, aggregate_quality, calibrate_weights, penalty_g,
    weights_from_values,
)


def test_penalty_reference_values():
    assert penalty_g(0.0) == pytest.approx(1.0)
    assert penalty_g(0.5) == pytest.approx(6.0)
    assert penalty_g(-0.1) == pytest.approx(math.exp(-1.0))
    assert penalty_g(np.array([-0.1, 0.0, 0.5])) == pytest.approx([math.exp(-1.0), 1.0, 6.0])


@pytest.mark.parametrize("eps", [1e-3, 1e-6, 1e-9])
def test_penalty_is_continuous_and_smooth_at_zero(eps):
    slope = PenaltyParams().alpha
    assert abs(penalty_g(eps) - penalty_g(-eps)) <= 2 * slope * eps + 1e-9
    left_slope = (penalty_g(0.0) - penalty_g(-eps)) / eps
    right_slope = (penalty_g(eps) - penalty_g(0.0)) / eps
    assert left_slope == pytest.approx(right_slope, rel=0.01)


def test_penalty_is_strictly_increasing():
    xs = np.linspace(-2, 2, 401)
    assert np.all(np.diff(penalty_g(xs)) > 0)
    assert penalty_g(-1e4) == 0.0


def test_penalty_params_must_be_positive():
    with pytest.raises(ValueError):
        PenaltyParams(alpha=0.0)


def test_aggregate_quality_single_and_batch():
    w = Weights.unit()
    objectives = np.arange(10, dtype=float)
    constraints = np.zeros(15)
    assert aggregate_quality(objectives, constraints, w) == pytest.approx(45.0 + 15.0)

    scaled = Weights(np.full(10, 2.0), np.ones(15))
    batch = aggregate_quality(np.vstack([objectives, objectives + 1]), np.zeros((2, 15)), scaled)
    assert batch.tolist() == pytest.approx([22.5 + 15.0, 27.5 + 15.0])


def test_violations_dominate_the_score():
    w = Weights.unit()
    feasible = aggregate_quality(np.zeros(10), np.full(15, -1.0), w)
    violated = aggregate_quality(np.zeros(10), np.r_[1.0, np.full(14, -1.0)], w)
    assert violated - feasible > 10.0
    assert math.isnan(aggregate_quality(np.full(10, np.nan), np.zeros(15), w))


def test_weights_save_and_load(tmp_path):
    w = Weights(np.linspace(1, 2, 10), np.linspace(3, 4, 15), seed=7)
    path = tmp_path / "weights.json"
    w.save(path)
    back = Weights.load(path)
    assert back.objective_weights == pytest.approx(w.objective_weights)
    assert back.constraint_weights == pytest.approx(w.constraint_weights)
    assert back.seed == 7
    with pytest.raises(CycleScoreError):
        Weights.load(tmp_path / "missing.json")


def test_invalid_weights_raise():
    with pytest.raises(ValueError):
        Weights(np.r_[0.0, np.ones(9)], np.ones(15))
    with pytest.raises(ValueError):
        Weights(np.ones(10), np.r_[np.inf, np.ones(14)])


def test_weights_from_values_is_mean_absolute():
    objectives = np.array([[1.0, -4.0], [3.0, 0.0]])
    constraints = np.array([[0.0, np.nan], [0.0, -2.0]])
    w = weights_from_values(objectives, constraints, seed=3)
    assert w.objective_weights.tolist() == pytest.approx([2.0, 2.0])
    # zero columns floor at machine epsilon
    assert w.constraint_weights[0] == WEIGHT_FLOOR
    assert w.constraint_weights[1] == pytest.approx(2.0)
    assert w.seed == 3
    with pytest.raises(CycleScoreError):
        weights_from_values(np.empty((0, 2)), np.empty((0, 2)))


def test_calibrate_weights_uses_paired_conditions():
    calls = []

    class FakeEvaluator:
        def evaluate_frame(self, frame, conditions):
            calls.append((len(frame), len(conditions)))
            n = len(frame)
            return SimpleNamespace(objectives=np.full((n, 10), 2.0), constraints=np.full((n, 15), -1.0))

    dataset = pd.DataFrame({"x": [1.0, 2.0, 3.0]})
    w = calibrate_weights(dataset, ["c0", "c1", "c2"], FakeEvaluator(), seed=1)
    assert calls == [(3, 3)]
    assert w.objective_weights == pytest.approx(np.full(10, 2.0))
    assert w.constraint_weights == pytest.approx(np.ones(15))
    with pytest.raises(CycleScoreError):
        calibrate_weights(dataset, ["c0"], FakeEvaluator())
    with pytest.raises(CycleScoreError):
        calibrate_weights(dataset.iloc[:0], [], FakeEvaluator())
