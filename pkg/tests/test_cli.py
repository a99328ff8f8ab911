import json
import math

import numpy as np
import pandas as pd
import pytest

from cyclescore.cli import build_parser, main
from cyclescore.conditions import Condition, write_conditions
from cyclescore.design_space import sample_frame, write_designs_csv
from cyclescore.ergonomics import UseCase
from cyclescore.harness import BenchmarkRun, RunMode
from cyclescore.metrics import ScoreSummary
from cyclescore.performance_proxies import COSINE_DISTANCE, Embedding

SMALL_CONFIG = {
    "benchmark": {"n_conditions": 2, "samples_per_condition": 10, "dataset_size": {"desk": 40}},
    "metrics": {"mc_samples": 1000},
    "aesthetics": {"embedding_dim": 16},
    "nsga2": {"pop_size": 8, "generations": 2, "log_every": 0},
}


@pytest.fixture(autouse=True)
def no_env_config(monkeypatch):
    monkeypatch.delenv("CYCLESCORE_CONFIG", raising=False)
    monkeypatch.setenv("CYCLESCORE_WORKERS", "1")


def _write_config(tmp_path, name="config.json", **sections):
    path = tmp_path / name
    path.write_text(json.dumps({**SMALL_CONFIG, **sections}))
    return str(path)


def test_parser_defaults():
    args = build_parser().parse_args(["benchmark"])
    assert (args.mode, args.generator, args.scale, args.seed) == ("unconditional", "dataset", "desk", None)
    assert args.format == "table"
    assert args.config is None
    assert build_parser().parse_args(["optimize"]).condition_seed == 1


def test_config_may_follow_the_subcommand():
    args = build_parser().parse_args(["optimize", "--algo", "nsga2", "--seed", "1", "--config", "a.json"])
    assert (args.config, args.seed) == ("a.json", 1)
    args = build_parser().parse_args(["--config", "b.json", "report", "--run", "x.json"])
    assert args.config == "b.json"
    args = build_parser().parse_args(["--log-level", "DEBUG", "label", "--ratings", "r.csv"])
    assert args.log_level == "DEBUG"


def test_label_command(tmp_path, capsys):
    ratings = tmp_path / "ratings.csv"
    pd.DataFrame({"yes": [9, 1, 5, 0], "total": [10, 10, 10, 0]}).to_csv(ratings, index=False)
    out = tmp_path / "labels.csv"
    assert main(["label", "--ratings", str(ratings), "--out", str(out)]) == 0
    assert capsys.readouterr().out == "usable: 1\nunusable: 1\nunlabeled: 2\n"
    assert pd.read_csv(out)["label"].tolist() == ["usable", "unusable", "unlabeled", "unlabeled"]


def test_evaluate_command(schema, condition, tmp_path):
    designs = tmp_path / "designs.csv"
    conditions = tmp_path / "conditions.json"
    out = tmp_path / "out" / "reports.csv"
    write_designs_csv(sample_frame(schema, 3, seed=0), designs, schema)
    write_conditions(conditions, [condition])
    assert main(["evaluate", "--designs", str(designs), "--conditions", str(conditions),
                 "--out", str(out)]) == 0
    reports = pd.read_csv(out)
    assert reports.shape == (3, 26)
    assert "Knee Angle Error" in reports.columns


def test_evaluate_with_precomputed_embeddings(schema, rider, tmp_path):
    designs = tmp_path / "designs.csv"
    embeddings = tmp_path / "embeddings.csv"
    write_designs_csv(sample_frame(schema, 3, seed=0), designs, schema)
    pd.DataFrame([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [1.0, 1.0, 0.0, 0.0]]).to_csv(
        embeddings, index=False)
    conditions = tmp_path / "conditions.json"
    write_conditions(conditions, [Condition(rider, UseCase.ROAD, Embedding(np.array([1.0, 0.0, 0.0, 0.0])))])
    config = _write_config(tmp_path, evaluators={"embedder": {
        "kind": "precomputed", "designs_csv": str(designs), "embeddings_csv": str(embeddings)}})
    out = tmp_path / "reports.csv"
    argv = ["evaluate", "--designs", str(designs), "--conditions", str(conditions), "--out", str(out)]
    assert main(argv + ["--config", config]) == 0
    distances = pd.read_csv(out)[COSINE_DISTANCE].tolist()
    assert distances == pytest.approx([0.0, 1.0, 1.0 - 1.0 / math.sqrt(2.0)])

    unknown = _write_config(tmp_path, "unknown.json", evaluators={"embedder": {"kind": "clip"}})
    assert main(argv + ["--config", unknown]) == 2


def test_report_command(tmp_path, capsys):
    summary = ScoreSummary(0.5, 0.25, 0.75, 0.0, 10, 5)
    run = BenchmarkRun(RunMode.BASELINE, "dataset", "desk",
                       {"generator": 0, "condition": 1, "metric": 2}, [summary], summary)
    path = tmp_path / "dataset.json"
    run.save(path)
    assert main(["report", "--run", str(path), "--format", "structured"]) == 0
    record = json.loads(capsys.readouterr().out)
    assert record["aggregate"]["validity"] == 0.5
    assert main(["report", "--run", str(path)]) == 0
    assert "50.00%" in capsys.readouterr().out


def test_errors_exit_with_status_two(tmp_path):
    assert main(["benchmark", "--generator", "vae"]) == 2
    assert main(["--config", str(tmp_path / "missing.json"), "report", "--run", "x.json"]) == 2
    assert main(["report", "--run", "x.json", "--config", str(tmp_path / "missing.json")]) == 2
    assert main(["report", "--run", str(tmp_path / "missing.json")]) == 2


def test_benchmark_command_is_reproducible(tmp_path, capsys):
    config = _write_config(tmp_path)
    argv = ["benchmark", "--mode", "unconditional", "--generator", "nsga2", "--seed", "7",
            "--scale", "desk", "--format", "structured", "--out", str(tmp_path / "run.json"),
            "--config", config]
    assert main(argv) == 0
    first = capsys.readouterr().out
    assert main(argv) == 0
    assert capsys.readouterr().out == first
    record = json.loads(first)
    assert record["generator"] == "nsga2"
    assert record["seeds"] == {"condition": 8, "generator": 7, "metric": 9}
    assert BenchmarkRun.load(tmp_path / "run.json").to_dict() == record


def test_optimize_command_is_reproducible_with_external_targets(tmp_path):
    targets = tmp_path / "targets.csv"
    pd.DataFrame(np.random.default_rng(0).normal(size=(5, 16))).to_csv(targets, index=False)
    config = _write_config(tmp_path, conditions={"target_embeddings": str(targets)})
    outputs = []
    for name in ("a.csv", "b.csv"):
        out = tmp_path / name
        assert main(["optimize", "--algo", "nsga2", "--seed", "7", "--out", str(out), "--config", config]) == 0
        outputs.append(out.read_bytes())
    assert outputs[0] == outputs[1]

    narrow = _write_config(tmp_path, "narrow.json", conditions={"target_embeddings": str(targets)},
                           aesthetics={"embedding_dim": 8})
    assert main(["optimize", "--seed", "7", "--out", str(tmp_path / "c.csv"), "--config", narrow]) == 2
