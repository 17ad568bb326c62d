import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

import fairtilt as ft
from fairtilt.cli import main


def _read_csv(path):
    with Path(path).open() as fh:
        return list(csv.DictReader(fh))


def _read_json(path):
    return json.loads(Path(path).read_text())


def test_simulate_writes_dataset_and_manifest(tmp_path):
    out = tmp_path / "sim"
    code = main(["simulate", "--n", "50", "--seed", "3", "--out", str(out)])
    assert code == 0
    rows = _read_csv(out / "dataset.csv")
    assert len(rows) == 50
    assert list(rows[0]) == ["d1", "x1", "y"]
    manifest = _read_json(out / "simulate_manifest.json")
    assert manifest["rows"] == 50
    assert manifest["files"] == ["dataset.csv"]
    assert manifest["scenario_hash"] == ft.scenario_hash(ft.two_group())


def test_simulate_is_byte_deterministic(tmp_path):
    first = tmp_path / "a"
    second = tmp_path / "b"
    for out in (first, second):
        assert main(["simulate", "--n", "40", "--seed", "9", "--out", str(out)]) == 0
    assert (first / "dataset.csv").read_bytes() == (second / "dataset.csv").read_bytes()
    assert (first / "simulate_manifest.json").read_bytes() == (
        second / "simulate_manifest.json"
    ).read_bytes()


def test_simulate_accepts_scenario_file(tmp_path):
    config = tmp_path / "scenario.yaml"
    ft.save_scenario(ft.two_group(), config)
    out = tmp_path / "sim"
    code = main(["simulate", "--scenario", str(config), "--n", "10", "--out", str(out)])
    assert code == 0
    assert (out / "dataset.csv").exists()


def test_solve_writes_per_measure_tables(tmp_path):
    out = tmp_path / "solve"
    code = main(
        [
            "solve",
            "--scenario",
            "two_group",
            "--n",
            "512",
            "--reps",
            "2",
            "--bins",
            "4",
            "--grid-q",
            "2",
            "--seed",
            "5",
            "--measure",
            "insensitive",
            "--measure",
            "marginal:1",
            "--out",
            str(out),
        ]
    )
    assert code == 0
    manifest = _read_json(out / "solve_manifest.json")
    assert manifest["measures"] == ["insensitive", "marginal:1"]
    assert manifest["files"] == ["solve_insensitive.csv", "solve_marginal_1.csv"]
    rows = _read_csv(out / "solve_insensitive.csv")
    assert len(rows) == 2
    for row in rows:
        assert row["converged"] == "1"
        assert abs(float(row["sens_1"])) <= 1e-4
        assert int(row["accepted"]) >= 1
    marginal = _read_csv(out / "solve_marginal_1.csv")
    assert {"eta_1", "lambda", "residual_sup"} <= set(marginal[0])


def test_solve_oracle_check_reports_projection_gap(tmp_path):
    out = tmp_path / "check"
    code = main(
        [
            "solve",
            "--n",
            "512",
            "--reps",
            "1",
            "--bins",
            "4",
            "--grid-q",
            "2",
            "--seed",
            "7",
            "--oracle-check",
            "--out",
            str(out),
        ]
    )
    assert code == 0
    manifest = _read_json(out / "solve_manifest.json")
    assert manifest["oracle_max_gap"]["insensitive"] <= 1e-6


def test_solve_oracle_check_refuses_large_n(tmp_path, capsys):
    code = main(["solve", "--n", "10000", "--oracle-check", "--out", str(tmp_path)])
    assert code == 2
    assert "4096" in capsys.readouterr().err


def test_solve_measure_none_is_a_dry_run(tmp_path):
    out = tmp_path / "none"
    code = main(
        ["solve", "--measure", "none", "--n", "256", "--bins", "4", "--grid-q", "2", "--out", str(out)]
    )
    assert code == 0
    manifest = _read_json(out / "solve_manifest.json")
    assert manifest["measures"] == []
    assert manifest["files"] == []


def test_solve_divergence_exits_three(tmp_path, capsys):
    out = tmp_path / "dead"
    code = main(
        [
            "solve",
            "--scenario",
            "infeasible_two_point",
            "--measure",
            "insensitive",
            "--n",
            "512",
            "--bins",
            "4",
            "--grid-q",
            "2",
            "--reps",
            "1",
            "--out",
            str(out),
        ]
    )
    assert code == 3
    err = capsys.readouterr().err
    assert "no converged node" in err
    assert "insensitive" in err
    # the per-node table is still written for diagnosis
    rows = _read_csv(out / "solve_insensitive.csv")
    assert all(row["converged"] == "0" for row in rows)


def test_report_emits_four_tables(tmp_path):
    out = tmp_path / "rep"
    args = [
        "report",
        "--scenario",
        "two_group",
        "--n",
        "512",
        "--reps",
        "2",
        "--bins",
        "4",
        "--grid-q",
        "2",
        "--seed",
        "5",
        "--measure",
        "base",
        "--measure",
        "insensitive",
        "--out",
        str(out),
    ]
    assert main(args) == 0
    for name in (
        "report_nodes.csv",
        "report_summary.csv",
        "report_multipliers.csv",
        "report_comparison.csv",
    ):
        assert (out / name).exists()

    nodes = _read_csv(out / "report_nodes.csv")
    summary = {row["measure"]: row for row in _read_csv(out / "report_summary.csv")}
    for label in ("base", "insensitive"):
        mine = [row for row in nodes if row["measure"] == label]
        weights = np.array([float(row["weight"]) for row in mine])
        sens = np.array([[float(row["sens_1"])] for row in mine])
        ok = np.array([row["converged"] == "1" for row in mine])
        direct = ft.aggregate_sensitivities(weights, sens, ok)
        assert float(summary[label]["xi_1"]) == pytest.approx(
            direct.per_coordinate[0], abs=1e-12
        )
        assert float(summary[label]["xi_total"]) == pytest.approx(direct.total, abs=1e-12)

    comparison = _read_csv(out / "report_comparison.csv")
    assert list(comparison[0]) == [
        "x1",
        "unaware",
        "best_estimate_-1",
        "best_estimate_1",
        "discrimination_free",
    ]
    # the comparison seed convention is (seed, node index, reps)
    node0 = comparison[0]
    direct = ft.comparison_premia(
        ft.two_group(),
        np.array([float(node0["x1"])]),
        ft.DistortionWeight.es_load(0.9, 0.2),
        n=512,
        seed=ft.spawn_seed(5, 0, 2),
    )
    assert float(node0["unaware"]) == pytest.approx(direct.unaware, abs=1e-12)
    assert float(node0["discrimination_free"]) == pytest.approx(
        direct.discrimination_free, abs=1e-12
    )


def test_report_unconditional_mix_column(tmp_path):
    out = tmp_path / "repu"
    args = [
        "report",
        "--n",
        "256",
        "--reps",
        "1",
        "--bins",
        "4",
        "--grid-q",
        "2",
        "--measure",
        "base",
        "--unconditional-mix",
        "--out",
        str(out),
    ]
    assert main(args) == 0
    rows = _read_csv(out / "report_comparison.csv")
    assert "discrimination_free_unconditional" in rows[0]
    assert all(row["discrimination_free_unconditional"] != "" for row in rows)


def test_weights_search_outputs(tmp_path, capsys):
    out = tmp_path / "wts"
    code = main(
        [
            "weights",
            "--scenario",
            "auto_portfolio",
            "--n",
            "2048",
            "--reps",
            "1",
            "--bins",
            "8",
            "--grid-q",
            "2",
            "--grid-points",
            "5",
            "--seed",
            "11",
            "--out",
            str(out),
        ]
    )
    assert code == 0
    captured = capsys.readouterr().out
    assert "pi = (" in captured and "objective" in captured
    manifest = _read_json(out / "weights_manifest.json")
    assert 0.0 <= manifest["pi"][0] <= 1.0
    assert manifest["pi"][0] + manifest["pi"][1] == pytest.approx(1.0, abs=1e-12)
    assert len(manifest["xi_reference"]) == 2
    trace = _read_csv(out / "weights_trace.csv")
    assert len(trace) >= 5
    assert {"pi_1", "objective"} == set(trace[0])


def test_weights_needs_two_protected(tmp_path, capsys):
    code = main(["weights", "--scenario", "two_group", "--out", str(tmp_path)])
    assert code == 2
    assert "two protected" in capsys.readouterr().err


def test_config_file_overrides_flags(tmp_path):
    out = tmp_path / "cfg"
    config = tmp_path / "run.yaml"
    config.write_text(f"n: 64\nseed: 21\nout: {out}\n")
    code = main(["simulate", "--n", "32", "--config", str(config)])
    assert code == 0
    assert len(_read_csv(out / "dataset.csv")) == 64


def test_config_rejects_unknown_and_misplaced_keys(tmp_path, capsys):
    unknown = tmp_path / "unknown.yaml"
    unknown.write_text("samples: 10\n")
    assert main(["simulate", "--config", str(unknown), "--out", str(tmp_path)]) == 2
    assert "unknown config key" in capsys.readouterr().err

    misplaced = tmp_path / "misplaced.yaml"
    misplaced.write_text("grid_points: 7\n")
    assert main(["simulate", "--config", str(misplaced), "--out", str(tmp_path)]) == 2
    assert "does not apply" in capsys.readouterr().err

    assert main(["simulate", "--config", str(tmp_path / "absent.yaml")]) == 2


def test_validation_failures_exit_two(tmp_path, capsys):
    cases = [
        ["simulate", "--n", "0"],
        ["simulate", "--alpha", "1.5"],
        ["solve", "--n", "50", "--bins", "100"],
        ["simulate", "--scenario", "no_such_preset"],
        ["solve", "--measure", "marginal:9"],
    ]
    for argv in cases:
        assert main([*argv, "--out", str(tmp_path)]) == 2, argv
        assert capsys.readouterr().err.startswith("error:")


def test_unwritable_output_exits_four(tmp_path, capsys):
    blocker = tmp_path / "blocker"
    blocker.write_text("file, not a directory\n")
    code = main(["simulate", "--n", "5", "--out", str(blocker / "sub")])
    assert code == 4
    assert "io failure" in capsys.readouterr().err


def test_solve_reruns_are_byte_identical(tmp_path):
    args = [
        "solve",
        "--n",
        "256",
        "--reps",
        "1",
        "--bins",
        "4",
        "--grid-q",
        "2",
        "--seed",
        "13",
    ]
    first = tmp_path / "a"
    second = tmp_path / "b"
    assert main([*args, "--out", str(first)]) == 0
    assert main([*args, "--out", str(second)]) == 0
    for name in ("solve_insensitive.csv", "solve_manifest.json"):
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_module_entrypoint_runs(tmp_path):
    result = subprocess.run(
        [
            sys.executable,
            "-m",
            "fairtilt",
            "simulate",
            "--n",
            "5",
            "--out",
            str(tmp_path / "cli"),
        ],
        capture_output=True,
        text=True,
    )
    assert result.returncode == 0
    assert (tmp_path / "cli" / "dataset.csv").exists()
