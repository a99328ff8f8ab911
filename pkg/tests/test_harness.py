import json
from dataclasses import replace

import numpy as np
import pandas as pd
import pytest

from cyclescore.config import deep_merge
from cyclescore.errors import CycleScoreError
from cyclescore.geometry_constraints import geometric_frame
from cyclescore.harness import (
    Benchmark, BenchmarkRun, BenchmarkSettings, DatasetGenerator, RandomGenerator, RunMode,
    dataset_baseline, get_generator, report, run_benchmark, run_conditional, run_unconditional,
    split_dataset, synthesize_dataset,
)
from cyclescore.metrics import ScoreSummary, valid_mask

SMALL = {
    "benchmark": {"n_conditions": 2, "samples_per_condition": 20,
                  "dataset_size": {"desk": 60}, "conditional_cases": {"desk": 15}},
    "metrics": {"mc_samples": 2000},
    "aesthetics": {"embedding_dim": 32},
}


@pytest.fixture(scope="module")
def small_config(config):
    return deep_merge(config, SMALL)


@pytest.fixture(scope="module")
def bench(small_config):
    return Benchmark.prepare(small_config)


def _run(summary=None, failures=(), substitutes=("StructuralProxy",)):
    summary = summary or ScoreSummary(0.027, 0.5, 0.1234567, 0.001, 40, 1)
    return BenchmarkRun(
        mode=RunMode.UNCONDITIONAL, generator="random", scale="desk",
        seeds={"generator": 0, "condition": 1, "metric": 2},
        per_condition=[summary, None] if failures else [summary],
        aggregate=summary, reference_point=[1.0, 2.0],
        substitutes=list(substitutes), failures=list(failures),
    )


def test_synthetic_dataset_passes_geometry(schema):
    dataset = synthesize_dataset(schema, 50, seed=0)
    assert len(dataset) == 50
    assert (geometric_frame(dataset).to_numpy() <= 0).all()
    pd.testing.assert_frame_equal(dataset, synthesize_dataset(schema, 50, seed=0))


def test_split_is_seeded_and_disjoint():
    frame = pd.DataFrame({"id": range(100)})
    split = split_dataset(frame, 0.2, seed=3)
    assert (len(split.train), len(split.held_out)) == (80, 20)
    assert set(split.train["id"]).isdisjoint(split.held_out["id"])
    assert split.train.equals(split_dataset(frame, 0.2, seed=3).train)
    with pytest.raises(CycleScoreError):
        split_dataset(frame, 1.0, seed=3)


def test_dataset_baseline_draws():
    frame = pd.DataFrame({"id": range(10)})
    assert sorted(dataset_baseline(frame, 10, seed=1)["id"]) == list(range(10))
    assert dataset_baseline(frame, 4, seed=1)["id"].is_unique
    assert len(dataset_baseline(frame, 25, seed=1)) == 25
    with pytest.raises(CycleScoreError):
        dataset_baseline(frame.iloc[:0], 5, seed=1)


def test_unknown_generator():
    with pytest.raises(CycleScoreError):
        get_generator("diffusion")
    assert isinstance(get_generator("dataset"), DatasetGenerator)


def test_seed_override_shifts_all_seeds(config):
    settings = BenchmarkSettings.from_config(config, seed=10)
    assert settings.seeds == {"generator": 10, "condition": 11, "metric": 12}
    assert settings.scaled("full", settings.dataset_size) == 4500
    with pytest.raises(CycleScoreError):
        settings.scaled("huge", settings.dataset_size)


def test_benchmark_preparation(bench):
    assert len(bench.context.train) == 48
    assert len(bench.held_out) == 12
    assert bench.reference.shape == (10,)
    assert np.all(bench.context.weights.objective_weights > 0)
    assert [c.condition_string() for c in bench.conditions(2)] == \
        [c.condition_string() for c in bench.conditions(2)]


def test_run_json_round_trip(tmp_path):
    run = _run(failures=[{"condition": 1, "message": "boom"}])
    back = BenchmarkRun.from_json(run.to_json())
    assert back.to_dict() == run.to_dict()
    path = tmp_path / "runs" / "random.json"
    run.save(path)
    assert BenchmarkRun.load(path).partial
    (tmp_path / "broken.json").write_text("{}")
    with pytest.raises(CycleScoreError):
        BenchmarkRun.load(tmp_path / "broken.json")


def test_table_report():
    text = report(_run(), "table")
    assert "2.70%" in text
    assert "0.5000" in text and "0.1235" in text
    assert "random*" in text
    assert "Validity (↑)" in text and "Similarity (↓)" in text
    assert "Seeds for random/unconditional: condition=1, generator=0, metric=2" in text
    assert "* Scored with substitute evaluators: StructuralProxy" in text
    assert "PARTIAL" not in text


def test_partial_runs_are_flagged():
    run = _run(failures=[{"condition": 1, "message": "boom"}], substitutes=())
    text = report(run, "table")
    assert "random (partial)" in text
    assert "PARTIAL: random has 1 failed condition(s)" in text
    assert json.loads(report(run, "structured"))["partial"] is True


def test_structured_and_table_agree():
    run = _run()
    record = json.loads(report(run, "structured"))
    assert f"{100 * record['aggregate']['validity']:.2f}%" in report(run, "table")
    assert len(json.loads(report([run, run], "structured"))) == 2
    with pytest.raises(CycleScoreError):
        report(run, "html")


def test_unconditional_run_is_deterministic(bench):
    first = run_unconditional(RandomGenerator(), bench, workers=1)
    second = run_unconditional(RandomGenerator(), bench, workers=1)
    threaded = run_unconditional(RandomGenerator(), bench, workers=2)
    assert first.to_dict() == second.to_dict() == threaded.to_dict()
    assert first.mode is RunMode.UNCONDITIONAL
    assert len(first.per_condition) == 2
    assert not first.partial
    assert first.per_condition[0].n_designs == 20


def test_validity_matches_the_constraint_matrix(bench):
    run = run_unconditional(DatasetGenerator(), bench, workers=1)
    assert run.mode is RunMode.BASELINE
    settings = bench.settings
    condition = bench.conditions(settings.n_conditions)[0]
    designs = dataset_baseline(bench.context.train, settings.samples_per_condition, settings.generator_seed)
    result = bench.context.evaluators.evaluate_frame(designs, condition)
    expected = np.mean(valid_mask(result.constraints) & np.all(np.isfinite(result.objectives), axis=1))
    assert run.per_condition[0].validity == pytest.approx(expected)


def test_failing_condition_makes_the_run_partial(bench):
    class FailsOnSecond(RandomGenerator):
        name = "flaky"

        def unconditional(self, context, condition, n, seed):
            if seed == bench.settings.generator_seed + 1:
                raise RuntimeError("out of memory")
            return super().unconditional(context, condition, n, seed)

    run = run_unconditional(FailsOnSecond(), bench, workers=1)
    assert run.partial
    assert run.failures[0]["condition"] == 1
    assert run.per_condition[1] is None
    assert run.aggregate.validity == pytest.approx(run.per_condition[0].validity)
    assert run.aggregate.optimality == pytest.approx(run.per_condition[0].optimality)


def test_conditional_run(bench):
    run = run_conditional(RandomGenerator(), bench)
    assert run.mode is RunMode.CONDITIONAL
    assert run.aggregate.n_designs == 15
    with pytest.raises(CycleScoreError):
        run_conditional(get_generator("nsga2"), bench)


def test_run_benchmark_rejects_unknown_generator(small_config):
    with pytest.raises(CycleScoreError):
        run_benchmark("unconditional", "vae", small_config)


@pytest.mark.slow
def test_dataset_beats_random_on_validity_and_similarity(config):
    dataset = run_benchmark("unconditional", "dataset", config, workers=1)
    random = run_benchmark("unconditional", "random", config, workers=1)
    assert dataset.aggregate.validity > random.aggregate.validity
    assert dataset.aggregate.similarity < random.aggregate.similarity


@pytest.mark.slow
def test_nsga2_is_at_least_as_valid_as_random(config):
    quick = deep_merge(config, {"benchmark": {"n_conditions": 2, "samples_per_condition": 100},
                                "nsga2": {"generations": 30}})
    random = run_benchmark("unconditional", "random", quick, workers=1)
    evolved = run_benchmark("unconditional", "nsga2", quick, workers=1)
    assert evolved.aggregate.validity >= random.aggregate.validity


def test_nsga2_generator_returns_at_most_n_designs(bench, small_config):
    quick = deep_merge(small_config, {"nsga2": {"pop_size": 8, "generations": 2, "log_every": 0}})
    context = replace(bench.context, config=quick)
    condition = bench.conditions(1)[0]
    designs = get_generator("nsga2").unconditional(context, condition, 5, 0)
    assert 0 < len(designs) <= 5


@pytest.mark.slow
def test_desk_scale_generator_ordering(config):
    dataset = run_benchmark("unconditional", "dataset", config, seed=7, workers=1)
    evolved = run_benchmark("unconditional", "nsga2", config, seed=7, workers=1)
    descent = run_benchmark("unconditional", "grad", config, seed=7, workers=1)
    assert evolved.aggregate.validity >= 0.95
    assert evolved.aggregate.optimality > dataset.aggregate.optimality
    assert descent.aggregate.validity >= 0.80
    assert dataset.aggregate.similarity < evolved.aggregate.similarity
    assert dataset.aggregate.similarity < descent.aggregate.similarity
