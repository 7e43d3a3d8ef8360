"""Command-line front end.

Subcommands ``powermin``, ``maxmin`` and ``msemin`` solve the scenario of a
config file (no sweep), ``sweep`` runs the config's full sweep grid, and
``validate`` re-checks a solutions file by Monte Carlo.

Run outputs go to the ``--out`` directory: ``results.csv``,
``solutions.csv``, the resolved ``config.yaml`` and, when validation is
requested, ``reports/<scenario_id>.csv``.

Exit codes: 0 success, 1 some validation check failed, 2 usage or config
error, 3 stale solution, 4 solver internal error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import List, Optional

import numpy as np

from . import llbcp, montecarlo
from .config import ExperimentConfig, dump_experiment, expand, load_document, scenario_fingerprint
from .errors import ConfigError, StaleSolutionError
from .problems import solve_maxmin, solve_mse_power_min, solve_power_min, to_dbw

logger = logging.getLogger("misopower")

RESULT_COLUMNS = ("scenario_id", "problem", "K", "M", "kappa", "eps", "alpha_or_mu", "objective",
                  "objective_dBW", "status", "iterations", "cuts", "runtime_ms")
SOLUTION_COLUMNS = ("scenario_id", "problem", "seed", "fingerprint", "user", "target", "power")

EXIT_OK, EXIT_VALIDATION, EXIT_USAGE, EXIT_STALE, EXIT_INTERNAL = 0, 1, 2, 3, 4


def _num(x) -> str:
    return repr(float(x))


def _per_user(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (list, tuple, np.ndarray)):
        values = [float(v) for v in value]
        if all(v == values[0] for v in values):
            return _num(values[0])
        return ";".join(_num(v) for v in values)
    return _num(value)


@dataclass
class PointResult:
    scenario_id: str
    row: dict
    seed: int
    fingerprint: str
    targets: Optional[np.ndarray]
    powers: Optional[np.ndarray]
    scenario: object
    trace: list


def solve_point(problem, sid, spec, solver_cfg, record_runtime=True) -> PointResult:
    sc = spec.build()
    K = sc.K
    if problem == "powermin":
        res = solve_power_min(sc, solver_cfg)
        objective, status, its, cuts = res.total_power, res.status, res.iterations, res.cuts
        targets, powers, runtime, trace = sc.alpha, res.p_star, res.runtime_ms, res.trace
        shown = sc.alpha
    elif problem == "msemin":
        res = solve_mse_power_min(sc, solver_cfg)
        objective, status, its, cuts = res.total_power, res.status, res.iterations, res.cuts
        targets, powers, runtime, trace = sc.mu, res.p_star, res.runtime_ms, res.trace
        shown = sc.mu
    else:
        mode = problem.split("-", 1)[1]
        res = solve_maxmin(sc, mode, solver_cfg)
        objective, status, its, cuts = res.a_star, res.status, res.iterations, res.cuts
        targets, powers, runtime, trace = np.full(K, res.a_star), res.p_star, res.runtime_ms, []
        shown = res.a_star

    if spec.kind == "broadcast":
        kappa, eps = "", _per_user(1.0 - np.asarray(sc.phi))
    else:
        kappa, eps = _num(spec.kappa), _per_user(sc.eps)
    row = {
        "scenario_id": sid,
        "problem": problem,
        "K": K,
        "M": sc.M,
        "kappa": kappa,
        "eps": eps,
        "alpha_or_mu": _per_user(shown),
        "objective": _num(objective),
        "objective_dBW": _num(to_dbw(objective)) if math.isfinite(objective) else _num(objective),
        "status": status,
        "iterations": its,
        "cuts": cuts,
        "runtime_ms": _num(runtime) if record_runtime else "nan",
    }
    return PointResult(sid, row, spec.seed, scenario_fingerprint(sc), np.asarray(targets, float),
                       powers, sc, trace)


def _validate_one(scenario, kind, targets, powers, samples, seed, bins=None):
    if kind == "interference":
        sc = scenario.replace(alpha=targets)
        return montecarlo.estimate_outage(sc, powers, samples, seed), None
    sc = scenario.replace(mu=targets)
    report = montecarlo.estimate_mse_satisfaction(sc, powers, samples, seed)
    hist = montecarlo.histogram_mse(sc, powers, samples, bins, seed) if bins else None
    return report, hist


def run_experiment(cfg: ExperimentConfig, out_dir, use_sweep=True) -> int:
    """Solve every grid point, write outputs and return the exit status."""
    if not use_sweep:
        cfg = replace(cfg, sweep_param=None, sweep_values=())
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.yaml"), "w") as fh:
        fh.write(dump_experiment(cfg))

    points = expand(cfg)
    solver_cfg = cfg.solver_config()
    job = lambda pt: solve_point(cfg.problem, pt[0], pt[1], solver_cfg, cfg.record_runtime)  # noqa: E731
    try:
        if cfg.workers > 1:
            with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                results = list(pool.map(job, points))
        else:
            results = [job(pt) for pt in points]
    except (AssertionError, RuntimeError, FloatingPointError, np.linalg.LinAlgError) as exc:
        logger.error("solver internal error: %s", exc)
        return EXIT_INTERNAL

    with open(os.path.join(out_dir, "results.csv"), "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS)
        w.writeheader()
        for r in results:
            w.writerow(r.row)
    write_solutions(results, os.path.join(out_dir, "solutions.csv"))

    if cfg.trace:
        os.makedirs(os.path.join(out_dir, "traces"), exist_ok=True)
        for r in results:
            if r.trace:
                llbcp.write_trace_csv(r.trace, os.path.join(out_dir, "traces", f"{r.scenario_id}.csv"))

    status = EXIT_OK
    if cfg.validate_samples is not None:
        status = _write_reports(results, cfg.scenario.kind, cfg.validate_samples, cfg.validate_seed,
                                out_dir, cfg.histogram_bins)
    return status


def write_solutions(results: List[PointResult], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SOLUTION_COLUMNS)
        for r in results:
            if r.powers is None:
                continue
            for k, (t, p) in enumerate(zip(r.targets, r.powers)):
                w.writerow([r.scenario_id, r.row["problem"], r.seed, r.fingerprint, k, _num(t), _num(p)])


def _write_reports(results, kind, samples, seed, out_dir, bins=None) -> int:
    os.makedirs(os.path.join(out_dir, "reports"), exist_ok=True)
    status = EXIT_OK
    for r in results:
        if r.powers is None:
            continue
        report, hist = _validate_one(r.scenario, kind, r.targets, r.powers, samples, seed, bins)
        montecarlo.write_report_csv(report, os.path.join(out_dir, "reports", f"{r.scenario_id}.csv"))
        if hist is not None:
            os.makedirs(os.path.join(out_dir, "histograms"), exist_ok=True)
            montecarlo.write_histogram_csv(*hist, os.path.join(out_dir, "histograms", f"{r.scenario_id}.csv"))
        verdict = "pass" if report.all_passed else "FAIL"
        print(f"{r.scenario_id}: {verdict} rates={np.array2string(report.rate, precision=5)}")
        if not report.all_passed:
            status = EXIT_VALIDATION
    return status


def read_solutions(path):
    """Solutions grouped by scenario id, in file order."""
    groups = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return groups
        missing = set(SOLUTION_COLUMNS) - set(reader.fieldnames)
        if missing:
            raise ConfigError(f"solution file lacks columns {sorted(missing)}", key="<header>", line=1)
        for row in reader:
            g = groups.setdefault(row["scenario_id"], {"seed": int(row["seed"]), "fingerprint": row["fingerprint"],
                                                       "problem": row["problem"], "users": {}})
            if int(row["seed"]) != g["seed"] or row["fingerprint"] != g["fingerprint"]:
                raise StaleSolutionError(f"inconsistent rows for scenario {row['scenario_id']}")
            g["users"][int(row["user"])] = (float(row["target"]), float(row["power"]))
    return groups


def validate_solutions(cfg: ExperimentConfig, groups, samples, seed, out_dir) -> int:
    points = {sid: spec for sid, spec, _ in expand(cfg)}
    results = []
    for sid, g in groups.items():
        if sid not in points:
            raise StaleSolutionError(f"scenario {sid!r} does not occur in the config")
        spec = points[sid]
        if spec.seed != g["seed"]:
            raise StaleSolutionError(f"scenario {sid!r}: solution seed {g['seed']} != config seed {spec.seed}")
        sc = spec.build()
        if scenario_fingerprint(sc) != g["fingerprint"]:
            raise StaleSolutionError(f"scenario {sid!r}: channel data no longer matches the solution")
        if sorted(g["users"]) != list(range(sc.K)):
            raise StaleSolutionError(f"scenario {sid!r}: expected powers for users 0..{sc.K - 1}")
        targets = np.array([g["users"][k][0] for k in range(sc.K)])
        powers = np.array([g["users"][k][1] for k in range(sc.K)])
        results.append(PointResult(sid, {"problem": g["problem"]}, g["seed"], g["fingerprint"],
                                   targets, powers, sc, []))
    return _write_reports(results, cfg.scenario.kind, samples, seed, out_dir)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="misopower", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_default="results"):
        p.add_argument("--config", required=True, help="experiment or scenario YAML file")
        p.add_argument("--out", default=None, help=f"output directory (default: config path or {out_default!r})")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--samples", type=int, default=None)

    for name, helptext in (("powermin", "minimize total power under SINR-outage constraints"),
                           ("msemin", "minimize broadcast power under MSE-outage constraints"),
                           ("sweep", "run the config's sweep grid")):
        common(sub.add_parser(name, help=helptext))
    p = sub.add_parser("maxmin", help="maximize the common SINR target under a power budget")
    common(p)
    p.add_argument("--mode", choices=("individual", "total"), default=None)
    p = sub.add_parser("validate", help="Monte Carlo check of a solutions file")
    common(p, "validation")
    p.add_argument("--solution", required=True, help="solutions.csv written by a solve run")
    return parser


def _resolve(args, parser) -> ExperimentConfig:
    try:
        with open(args.config) as fh:
            text = fh.read()
    except OSError as exc:
        parser.error(f"cannot read config: {exc}")
    problem = {"powermin": "powermin", "msemin": "msemin"}.get(args.command)
    if args.command == "maxmin":
        problem = f"maxmin-{args.mode}" if args.mode else None
    cfg = load_document(text, problem)
    if args.command == "maxmin" and not cfg.problem.startswith("maxmin"):
        cfg = load_document(text, "maxmin-individual")
    if args.seed is not None and args.command != "validate":
        cfg = replace(cfg, seeds=(args.seed,), scenario=cfg.scenario.replace(seed=args.seed))
    if args.samples is not None:
        if args.samples < 1000:
            parser.error("--samples must be at least 1000")
        cfg = replace(cfg, validate_samples=args.samples,
                      validate_seed=cfg.validate_seed if args.command != "validate" else cfg.validate_seed)
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _resolve(args, parser)
        out = args.out or cfg.output or ("validation" if args.command == "validate" else "results")
        if args.command == "validate":
            groups = read_solutions(args.solution)
            if not groups:
                parser.error(f"solution file {args.solution!r} holds no solutions")
            samples = args.samples or cfg.validate_samples or 100_000
            seed = args.seed if args.seed is not None else cfg.validate_seed
            return validate_solutions(cfg, groups, samples, seed, out)
        if args.command == "sweep" and cfg.sweep_param is None:
            parser.error("sweep needs a config with a sweep block")
        return run_experiment(cfg, out, use_sweep=args.command == "sweep")
    except ConfigError as exc:
        print(f"misopower: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StaleSolutionError as exc:
        print(f"misopower: stale solution: {exc}", file=sys.stderr)
        return EXIT_STALE
    except OSError as exc:
        print(f"misopower: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
