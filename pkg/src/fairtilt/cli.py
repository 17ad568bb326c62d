"""Command line driver: simulate, solve, report, weights.

Every command is deterministic given its configuration and seed; output
CSVs and manifests are byte-identical across reruns. A YAML config file
passed with --config overrides command line flags. Exit codes: 0 success,
2 configuration error, 3 solver divergence (a requested measure converged
nowhere), 4 output IO failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np
import yaml

from .barycentre import optimal_weights
from .distortion import DistortionWeight
from .errors import (
    DatasetFormatError,
    DomainError,
    Infeasible,
    ReplicationError,
    TiltOverflow,
    UnsupportedLawError,
)
from .io import load_scenario, save_dataset, scenario_hash, spawn_seed, write_manifest
from .metrics import build_xgrid, comparison_premia, node_rows, summary_rows
from .pipeline import default_bundle, oracle_check_node, parse_measure, prepare_weight_search, run_grid
from .presets import auto_portfolio, infeasible_two_point, two_group
from .scenario import generate_dataset
from .solver import SolverOptions
from .tilt import BinScheme

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_IO = 4

PRESETS = {
    "two_group": two_group,
    "auto_portfolio": auto_portfolio,
    "infeasible_two_point": infeasible_two_point,
}

_CONFIG_KEYS = (
    "scenario",
    "seed",
    "n",
    "reps",
    "bins",
    "tol",
    "tol_accept",
    "grid_q",
    "alpha",
    "load",
    "out",
    "measure",
    "pi",
    "oracle_check",
    "unconditional_mix",
    "grid_points",
)


class ConfigError(Exception):
    pass


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--scenario", default="two_group", help="preset name or scenario YAML path")
    parser.add_argument("--seed", type=int, default=1234)
    parser.add_argument("--n", type=int, default=10000, help="samples per replicate")
    parser.add_argument("--reps", type=int, default=5, help="replicates per grid node")
    parser.add_argument("--bins", type=int, default=100, help="rank bins of the tilt")
    parser.add_argument("--tol", type=float, default=1e-6, help="solver residual tolerance")
    parser.add_argument(
        "--tol-accept", type=float, default=1e-4, help="replicate rejection threshold"
    )
    parser.add_argument("--grid-q", type=int, default=25, help="quantile nodes per continuous covariate")
    parser.add_argument("--alpha", type=float, default=0.9, help="tail level of the loaded distortion")
    parser.add_argument("--load", type=float, default=0.2, help="tail surcharge of the loaded distortion")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--config", default=None, help="YAML config overriding the flags")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairtilt", description="insensitive pricing measures for distortion premia"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate a joint dataset CSV")
    _add_common(p_sim)

    p_solve = sub.add_parser("solve", help="solve measures over the covariate grid")
    _add_common(p_solve)
    p_solve.add_argument(
        "--measure",
        action="append",
        help="measure token (repeatable): base, insensitive, insensitive:<k>, "
        "marginal:<k>, barycentre:<pi,..>, constrained_barycentre:<pi,..>",
    )
    p_solve.add_argument(
        "--oracle-check",
        action="store_true",
        help="verify each solve against the direct projection (needs n <= 4096)",
    )

    p_rep = sub.add_parser("report", help="emit premium, sensitivity, KL and comparison tables")
    _add_common(p_rep)
    p_rep.add_argument("--measure", action="append", help="override the default measure bundle")
    p_rep.add_argument(
        "--pi",
        action="append",
        help="barycentric weight vector (repeatable), as in --pi 0.5,0.5",
    )
    p_rep.add_argument(
        "--unconditional-mix",
        action="store_true",
        help="also mix best-estimates with population weights instead of the posterior",
    )

    p_wts = sub.add_parser("weights", help="search barycentric weights equalising reductions")
    _add_common(p_wts)
    p_wts.add_argument("--grid-points", type=int, default=11, help="initial search grid size")
    return parser


def _apply_config(args: argparse.Namespace) -> None:
    if not args.config:
        return
    path = Path(args.config)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if doc is None:
        return
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    for key, value in doc.items():
        dest = key.replace("-", "_")
        if dest not in _CONFIG_KEYS:
            raise ConfigError(f"{path}: unknown config key {key!r}")
        if not hasattr(args, dest):
            raise ConfigError(f"{path}: key {key!r} does not apply to this command")
        if dest in ("measure", "pi") and isinstance(value, str):
            value = [value]
        setattr(args, dest, value)


def _validate(args: argparse.Namespace) -> None:
    for name, low in (("n", 1), ("reps", 1), ("bins", 1), ("grid_q", 1)):
        if getattr(args, name) < low:
            raise ConfigError(f"--{name.replace('_', '-')} must be at least {low}")
    if args.tol <= 0 or args.tol_accept <= 0:
        raise ConfigError("tolerances must be positive")
    if not 0.0 < args.alpha < 1.0:
        raise ConfigError("--alpha must lie strictly between 0 and 1")
    if args.load < 0.0:
        raise ConfigError("--load must be non-negative")
    if args.command != "simulate" and args.n < args.bins:
        raise ConfigError("--n below --bins leaves rank bins empty")


def _load_scenario_arg(token: str):
    if token in PRESETS:
        return PRESETS[token]()
    path = Path(token)
    if not path.exists():
        raise ConfigError(
            f"scenario {token!r} is neither a preset ({', '.join(sorted(PRESETS))}) "
            "nor an existing file"
        )
    return load_scenario(path)


def _distortion(args: argparse.Namespace) -> DistortionWeight:
    if args.load == 0.0:
        return DistortionWeight.mean()
    return DistortionWeight.es_load(alpha=args.alpha, load=args.load)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def _write_csv(path: Path, fieldnames: list[str], rows: list[dict]) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({key: _fmt(row.get(key)) for key in fieldnames})


def _common_manifest(args: argparse.Namespace, scenario) -> dict:
    return {
        "command": args.command,
        "scenario": args.scenario,
        "scenario_hash": scenario_hash(scenario),
        "seed": args.seed,
        "n": args.n,
        "reps": args.reps,
        "bins": args.bins,
        "tol": args.tol,
        "tol_accept": args.tol_accept,
        "grid_q": args.grid_q,
        "alpha": args.alpha,
        "load": args.load,
    }


def _label_slug(label: str) -> str:
    return label.replace(":", "_").replace(",", "-")


def cmd_simulate(args: argparse.Namespace) -> int:
    scenario = _load_scenario_arg(args.scenario)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset = generate_dataset(scenario, args.n, args.seed)
    data_path = out / "dataset.csv"
    save_dataset(dataset, data_path)
    manifest = _common_manifest(args, scenario)
    manifest["rows"] = dataset.n
    manifest["files"] = [data_path.name]
    write_manifest(out / "simulate_manifest.json", manifest)
    print(f"wrote {data_path} ({dataset.n} rows)")
    return EXIT_OK


def _measure_requests(args: argparse.Namespace, m: int, tokens: list[str] | None):
    if tokens is None:
        pi_tokens = getattr(args, "pi", None)
        if pi_tokens:
            pi_list = tuple(tuple(float(p) for p in tok.split(",")) for tok in pi_tokens)
        elif m == 2:
            pi_list = ((0.5, 0.5),)
        else:
            pi_list = ()
        return default_bundle(m, pi_list)
    if tokens == ["none"]:
        return []
    return [parse_measure(token, m) for token in tokens]


def _solver_options(args: argparse.Namespace) -> SolverOptions:
    return SolverOptions(
        tol=args.tol, replications=args.reps, tol_accept=args.tol_accept
    )


def cmd_solve(args: argparse.Namespace) -> int:
    scenario = _load_scenario_arg(args.scenario)
    m = len(scenario.protected)
    tokens = args.measure if args.measure else ["insensitive"]
    requests = _measure_requests(args, m, tokens)
    if args.oracle_check and args.n > 4096:
        raise ConfigError("--oracle-check needs --n at most 4096")
    w = _distortion(args)
    bins = BinScheme(args.bins)
    grid = build_xgrid(scenario, args.grid_q)
    opts = _solver_options(args)
    run = run_grid(scenario, requests, w, bins, grid, args.n, args.reps, args.seed, opts)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    x_names = list(grid.names)
    for req in requests:
        results = run.node_results[req.label]
        eta_len = max((len(r.eta) for r in results if r.eta is not None), default=0)
        fields = [
            *x_names,
            "premium",
            *[f"sens_{i + 1}" for i in range(m)],
            "kl",
            *[f"eta_{i + 1}" for i in range(eta_len)],
            "lambda",
            "residual_sup",
            "converged",
            "accepted",
            "attempted",
        ]
        rows = []
        for node, result in zip(grid.nodes, results):
            row = {name: float(v) for name, v in zip(x_names, node.x)}
            row["premium"] = result.premium
            for i in range(m):
                row[f"sens_{i + 1}"] = float(result.sensitivities[i])
            row["kl"] = result.kl
            for i in range(eta_len):
                row[f"eta_{i + 1}"] = None if result.eta is None else result.eta[i]
            row["lambda"] = result.lam
            row["residual_sup"] = result.residual_sup
            row["converged"] = result.converged
            row["accepted"] = result.accepted
            row["attempted"] = result.attempted
            rows.append(row)
        path = out / f"solve_{_label_slug(req.label)}.csv"
        _write_csv(path, fields, rows)
        files.append(path.name)

    manifest = _common_manifest(args, scenario)
    manifest["measures"] = [req.label for req in requests]
    manifest["files"] = files
    if args.oracle_check:
        gaps = {}
        for node_index, node in enumerate(grid.nodes):
            node_gaps = oracle_check_node(
                scenario, node.x, requests, w, bins, args.n, args.seed, node_index, opts
            )
            for label, gap in node_gaps.items():
                gaps.setdefault(label, []).append(gap)
        manifest["oracle_max_gap"] = {
            label: float(np.nanmax(values)) if not np.all(np.isnan(values)) else None
            for label, values in gaps.items()
        }
    write_manifest(out / "solve_manifest.json", manifest)

    dead = [req.label for req in requests if not any(r.converged for r in run.node_results[req.label])]
    if dead:
        print(f"no converged node for: {', '.join(dead)}", file=sys.stderr)
        for label in dead:
            diagnosis = run.node_results[label][0].diagnosis
            if diagnosis:
                print(f"  {label}: {diagnosis}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    scenario = _load_scenario_arg(args.scenario)
    m = len(scenario.protected)
    requests = _measure_requests(args, m, args.measure)
    w = _distortion(args)
    bins = BinScheme(args.bins)
    grid = build_xgrid(scenario, args.grid_q)
    opts = _solver_options(args)
    run = run_grid(scenario, requests, w, bins, grid, args.n, args.reps, args.seed, opts)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    x_names = list(grid.names)

    node_fields = [
        *x_names,
        "weight",
        "measure",
        "premium",
        *[f"sens_{i + 1}" for i in range(m)],
        "kl",
        "converged",
        "accepted",
        "attempted",
    ]
    stacked = []
    for req in requests:
        stacked.extend(node_rows(run.reports[req.label]))
    _write_csv(out / "report_nodes.csv", node_fields, stacked)

    summary_fields = ["measure", *[f"xi_{i + 1}" for i in range(m)], "xi_total", "coverage"]
    _write_csv(out / "report_summary.csv", summary_fields, summary_rows([run.reports[r.label] for r in requests]))

    mult_fields = [*x_names, "measure", *[f"eta_{i + 1}" for i in range(m)], "lambda"]
    mult_rows = []
    for req in requests:
        for node, result in zip(grid.nodes, run.node_results[req.label]):
            row = {name: float(v) for name, v in zip(x_names, node.x)}
            row["measure"] = req.label
            if result.eta is not None:
                for i, value in enumerate(result.eta):
                    row[f"eta_{i + 1}"] = value
            row["lambda"] = result.lam
            mult_rows.append(row)
    _write_csv(out / "report_multipliers.csv", mult_fields, mult_rows)

    combos = scenario.protected_combinations()
    combo_cols = ["best_estimate_" + "_".join(f"{v:g}" for v in combo) for combo in combos]
    comp_fields = [*x_names, "unaware", *combo_cols, "discrimination_free"]
    if args.unconditional_mix:
        comp_fields.append("discrimination_free_unconditional")
    comp_rows = []
    for node_index, node in enumerate(grid.nodes):
        comp_seed = spawn_seed(args.seed, node_index, args.reps)
        comparison = comparison_premia(scenario, node.x, w, args.n, comp_seed)
        row = {name: float(v) for name, v in zip(x_names, node.x)}
        row["unaware"] = comparison.unaware
        for col, value in zip(combo_cols, comparison.best_estimates):
            row[col] = float(value)
        row["discrimination_free"] = comparison.discrimination_free
        if args.unconditional_mix:
            unc = comparison_premia(scenario, node.x, w, args.n, comp_seed, unconditional=True)
            row["discrimination_free_unconditional"] = unc.discrimination_free
        comp_rows.append(row)
    _write_csv(out / "report_comparison.csv", comp_fields, comp_rows)

    manifest = _common_manifest(args, scenario)
    manifest["measures"] = [req.label for req in requests]
    manifest["files"] = [
        "report_nodes.csv",
        "report_summary.csv",
        "report_multipliers.csv",
        "report_comparison.csv",
    ]
    write_manifest(out / "report_manifest.json", manifest)

    dead = [req.label for req in requests if not any(r.converged for r in run.node_results[req.label])]
    if dead:
        print(f"no converged node for: {', '.join(dead)}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_weights(args: argparse.Namespace) -> int:
    scenario = _load_scenario_arg(args.scenario)
    if len(scenario.protected) != 2:
        raise ConfigError("weights search needs a scenario with exactly two protected covariates")
    if args.grid_points < 3:
        raise ConfigError("--grid-points must be at least 3")
    w = _distortion(args)
    bins = BinScheme(args.bins)
    grid = build_xgrid(scenario, args.grid_q)
    opts = _solver_options(args)
    data = prepare_weight_search(
        scenario, w, bins, grid, args.n, args.reps, args.seed, opts
    )
    result = optimal_weights(data.xi_reference, data.evaluate, grid=args.grid_points)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = [{"pi_1": p, "objective": v} for p, v in result.evaluations]
    _write_csv(out / "weights_trace.csv", ["pi_1", "objective"], rows)
    manifest = _common_manifest(args, scenario)
    manifest["grid_points"] = args.grid_points
    manifest["xi_reference"] = [float(v) for v in data.xi_reference]
    manifest["pi"] = [float(p) for p in result.weights.pi]
    manifest["objective"] = result.objective
    manifest["files"] = ["weights_trace.csv"]
    write_manifest(out / "weights_manifest.json", manifest)
    print(
        f"pi = ({result.weights.pi[0]:.4f}, {result.weights.pi[1]:.4f}), "
        f"objective {result.objective:.3e}"
    )
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config(args)
        _validate(args)
        handler = {
            "simulate": cmd_simulate,
            "solve": cmd_solve,
            "report": cmd_report,
            "weights": cmd_weights,
        }[args.command]
        return handler(args)
    except (ConfigError, DomainError, UnsupportedLawError, DatasetFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TiltOverflow, Infeasible, ReplicationError, RuntimeError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as exc:
        print(f"io failure: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
