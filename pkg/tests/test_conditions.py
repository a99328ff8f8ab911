import numpy as np
import pandas as pd
import pytest

from cyclescore.conditions import (
    ConditionBatch, RiderDistribution, conditions_from_config, read_conditions, read_target_embeddings,
    sample_conditions, write_conditions,
)
from cyclescore.ergonomics import RiderProfile, UseCase
from cyclescore.errors import CycleScoreError
from cyclescore.performance_proxies import LinearEmbedder


@pytest.fixture(scope="module")
def embedder(schema):
    return LinearEmbedder(schema, dimension=32, seed=0)


def test_condition_string(condition):
    assert condition.condition_string() == (
        "Rider Body Dimensions: Upper leg length - 450, Lower leg length - 500, "
        "Arm length - 620, Torso length - 560, Neck and head length - 260, "
        "Torso width - 380. Use Case: Road Biking. "
        "Marketing Description: A sleek red road bike"
    )


def test_sampling_is_seeded(schema, embedder):
    a = sample_conditions(20, 4, schema, embedder)
    b = sample_conditions(20, 4, schema, embedder)
    assert [c.condition_string() for c in a] == [c.condition_string() for c in b]
    assert all(np.array_equal(x.target_embedding.data, y.target_embedding.data) for x, y in zip(a, b))
    c = sample_conditions(20, 5, schema, embedder)
    assert [x.rider for x in a] != [x.rider for x in c]


def test_use_cases_are_uniform(schema, embedder):
    conditions = sample_conditions(3000, 0, schema, embedder)
    for use_case in UseCase:
        share = np.mean([c.use_case is use_case for c in conditions])
        assert share == pytest.approx(1 / 3, abs=0.03)


def test_riders_are_clamped(schema, embedder):
    conditions = sample_conditions(500, 1, schema, embedder)
    legs = np.array([c.rider.upper_leg for c in conditions])
    assert legs.min() >= 450.0 - 90.0
    assert legs.max() <= 450.0 + 90.0
    with pytest.raises(CycleScoreError):
        RiderDistribution({**RiderDistribution().parameters, "upper_leg": (50.0, 20.0)}).sample(
            np.random.default_rng(0), 3)


def test_external_targets_and_prompts(schema, embedder):
    table = np.eye(3)
    conditions = sample_conditions(10, 2, schema, embedder, prompts=("fast", "cheap"),
                                   target_embeddings=table)
    for c in conditions:
        assert c.target_embedding.dimension == 3
        assert c.prompt_text in ("fast", "cheap")
    with pytest.raises(CycleScoreError):
        sample_conditions(0, 2, schema, embedder)


def test_config_names_external_targets(schema, embedder, tmp_path):
    table = np.eye(32)[:4]
    path = tmp_path / "targets.csv"
    pd.DataFrame(table).to_csv(path, index=False)
    config = {"conditions": {"target_embeddings": str(path)}, "prompts": ["light"]}
    conditions = conditions_from_config(6, 3, schema, embedder, config)
    for c in conditions:
        assert any(np.allclose(c.target_embedding.data, row) for row in table)
        assert c.prompt_text == "light"
    assert [c.rider for c in conditions] == [c.rider for c in conditions_from_config(6, 3, schema, embedder, {})]

    pd.DataFrame(np.eye(8)).to_csv(path, index=False)
    with pytest.raises(CycleScoreError):
        conditions_from_config(2, 3, schema, embedder, config)
    with pytest.raises(CycleScoreError):
        read_target_embeddings(tmp_path / "missing.csv")
    (tmp_path / "holes.csv").write_text("a,b\n1.0,\n")
    with pytest.raises(CycleScoreError):
        read_target_embeddings(tmp_path / "holes.csv")


def test_conditions_file_round_trip(schema, embedder, tmp_path):
    conditions = sample_conditions(4, 6, schema, embedder, prompts=("a red bike",))
    path = tmp_path / "conditions.json"
    write_conditions(path, conditions)
    back = read_conditions(path)
    assert [c.condition_string() for c in back] == [c.condition_string() for c in conditions]
    assert back[0].target_embedding.data == pytest.approx(conditions[0].target_embedding.data)
    (tmp_path / "bad.json").write_text('[{"rider": {}}]')
    with pytest.raises(CycleScoreError):
        read_conditions(tmp_path / "bad.json")


def test_batch_views(condition):
    other = condition.with_rider(RiderProfile(400.0, 420.0, 600.0, 540.0, 250.0, 360.0))
    batch = ConditionBatch.from_conditions([condition, other, condition])
    assert batch.riders.shape == (3, 6)
    assert batch.subset([1]).riders[0, 0] == 400.0
    assert len(ConditionBatch.repeat(condition, 4)) == 4
