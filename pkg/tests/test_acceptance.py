"""
README の手順どおりに 合成 → 学習 → ベンチマーク を通した受け入れテスト
"""
import pytest

import cli
import evalbench
from config import EXIT_OK
from conftest import SEED


def model_args(paths):
    return [
        "--detector-model", str(paths["detector"]),
        "--filter-model", str(paths["filter"]),
        "--recognizer-model", str(paths["recognizer"]),
    ]


@pytest.fixture(scope="module")
def bench_summary(trained_models, tmp_path_factory):
    bench_dir = tmp_path_factory.mktemp("bench")
    assert cli.main(["synth", "benchmark", "--n", "200", "--seed", str(SEED), "--out-dir", str(bench_dir)]) == EXIT_OK
    report = bench_dir / "report.txt"
    code = cli.main(["bench", str(bench_dir), "--report", str(report), "--jobs", "4"] + model_args(trained_models))
    assert code == EXIT_OK

    summary, _ = evalbench.read_report(report)
    return {k: float(v) for k, v in summary.items()}


@pytest.mark.slow
@pytest.mark.parametrize(
    "metric, minimum",
    [
        ("recall", 0.95),
        ("precision", 0.95),
        ("mean_plate_score", 0.90),
        ("exact_match_rate", 0.80),
    ],
)
def test_benchmark_meets_targets(bench_summary, metric, minimum):
    assert bench_summary[metric] >= minimum
