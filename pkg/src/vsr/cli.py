"""Command-line entry point: generate datasets, run regressors, count trees, score expressions.

Exit codes: 0 on success, 1 when any equation failed, 2 on a configuration error.
"""

from __future__ import annotations

import argparse
import csv
import glob
import io
import json
import logging
import sys
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from statistics import median
from typing import Sequence

import numpy as np

from . import expr
from .datasets import TrigConfig, generate_trig
from .gp import GpConfig, run_gp
from .mcts import MctsConfig, run_mcts
from .metrics import DEFAULT_TAU, MetricReport, compute_metrics
from .optimize import FitSettings
from .oracle import ControlSpec, EquationSpec, Oracle, OracleConfig, SchemaError, TrialSampler, load_equation, save_equation
from .vertical import VsrConfig, run_vsr

log = logging.getLogger("vsr")

ALGORITHMS = ("gp", "vsr-gp", "mcts", "vsr-mcts")
SCHEMA_PATH = Path(__file__).parent / "schema" / "run_report.schema.json"


class ConfigError(Exception):
    """Bad flags or inputs that prevent a run from starting."""


@dataclass
class Budget:
    """Per-round search budget; classic runs get ``rounds x`` this, i.e. the
    same total a vertical run may spend over its rounds."""

    gp_generations: int = 200
    gp_pool: int = 100
    mcts_episodes: int = 200
    n_sim: int = 10
    batch: int = 256
    K: int = 5
    test_size: int = 256


@dataclass
class RunReport:
    id: str
    group: str
    algorithm: str
    seed: int
    noise_sigma: float
    expression: list[list[str]] | None = None  # preorder record of the best expression
    infix: str | None = None
    metrics: dict | None = None
    recovered: bool = False
    oracle_queries: int = 0
    evaluations: int = 0
    wall_time: float | None = None
    error: str | None = None

    def to_json(self, timing: bool) -> str:
        d = asdict(self)
        if not timing:
            d.pop("wall_time")
        return json.dumps(d, sort_keys=True, allow_nan=False)


def derive_seeds(seed: int, eq_id: str) -> tuple[int, int, int]:
    """Training-oracle, search and test seeds for one equation, as separate streams."""
    ss = np.random.SeedSequence([seed, zlib.crc32(eq_id.encode())])
    return tuple(int(c.generate_state(1)[0]) for c in ss.spawn(3))


def _ops(spec: EquationSpec) -> list[str]:
    return [t for t in spec.function_set if t not in ("const", "var")]


def run_equation(
    spec: EquationSpec,
    eq_id: str,
    algorithm: str,
    seed: int,
    noise_sigma: float = 0.0,
    budget: Budget | None = None,
    group: str = "",
) -> RunReport:
    """Learn ``spec`` with ``algorithm`` and score the result on fresh noiseless test data."""
    budget = budget or Budget()
    report = RunReport(eq_id, group, algorithm, seed, noise_sigma)
    oracle_seed, search_seed, test_seed = derive_seeds(seed, eq_id)
    oracle = Oracle(spec, OracleConfig(noise_sigma, oracle_seed))
    rng = np.random.default_rng(search_seed)
    m = spec.num_vars
    ops = _ops(spec)
    fit = FitSettings(batch=budget.batch)
    gp_cfg = GpConfig(pool_size=budget.gp_pool, generations=budget.gp_generations, fit=fit)
    mcts_cfg = MctsConfig(episodes=budget.mcts_episodes, n_sim=budget.n_sim, fit=fit)

    start = time.perf_counter()
    if algorithm.startswith("vsr-"):
        cfg = VsrConfig(regressor=algorithm[4:], K=budget.K, batch=budget.batch, gp=gp_cfg, mcts=mcts_cfg)
        result = run_vsr(oracle, ops, cfg, rng)
        best, evaluations = result.best, result.evaluations
    elif algorithm == "gp":
        gp_cfg.generations *= m
        res = run_gp([], TrialSampler(oracle, ControlSpec.all_free(m)), ops, list(range(m)), gp_cfg, rng)
        best, evaluations = res.best.tree, res.evaluations
    elif algorithm == "mcts":
        mcts_cfg.episodes *= m
        res = run_mcts(None, TrialSampler(oracle, ControlSpec.all_free(m)), ops, list(range(m)), mcts_cfg, rng)
        best, evaluations = res.best, res.evaluations
    else:
        raise ConfigError(f"unknown algorithm {algorithm!r}")
    report.wall_time = time.perf_counter() - start
    report.oracle_queries = oracle.query_count
    report.evaluations = evaluations

    # test data: a separate stream, drawn only after learning has finished
    test = oracle.spawn(test_seed)
    X_test = test.sample_inputs(ControlSpec.all_free(m), budget.test_size)[0]
    y_test = test.exact(X_test)
    keep = np.isfinite(y_test)  # some equations are undefined on part of their domain
    X_test, y_test = X_test[keep], y_test[keep]
    with np.errstate(all="ignore"):
        y_pred = expr.evaluate(best, X_test)
    metrics = compute_metrics(y_test, y_pred)
    report.expression = [list(p) for p in expr.to_preorder(best)]
    report.infix = expr.to_infix(best)
    report.metrics = metrics.to_dict()
    report.recovered = metrics.r2 >= DEFAULT_TAU
    return report


def _run_task(args) -> RunReport:
    path, eq_id, group, algorithm, seed, sigma, budget = args
    report = RunReport(eq_id, group, algorithm, seed, sigma)
    try:
        spec = load_equation(path)
        return run_equation(spec, eq_id, algorithm, seed, sigma, budget, group)
    except Exception as exc:  # a failing equation must not stop the run
        report.error = f"{type(exc).__name__}: {exc}"
        return report


def summarize(reports: Sequence[RunReport], timing: bool = True) -> str:
    """CSV with one row per (group, algorithm)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = ["group", "algorithm", "equations", "failed", "median_nmse", "accuracy@0.999"]
    writer.writerow(header + (["total_time"] if timing else []))
    keys = sorted({(r.group, r.algorithm) for r in reports})
    for group, alg in keys:
        rows = [r for r in reports if r.group == group and r.algorithm == alg]
        ok = [r for r in rows if r.error is None]
        nmse = [float(r.metrics["nmse"]) for r in ok]
        med = f"{median(nmse):.6g}" if nmse else "nan"
        acc = f"{sum(r.recovered for r in ok) / len(rows):.3f}"
        row = [group, alg, len(rows), len(rows) - len(ok), med, acc]
        if timing:
            row.append(f"{sum(r.wall_time or 0.0 for r in rows):.2f}")
        writer.writerow(row)
    return buf.getvalue()


# --------------------------------------------------------------------------- #
# commands


def cmd_gen(args) -> int:
    ops = [t.strip() for t in args.ops.split(",") if t.strip()]
    try:
        base = TrigConfig.parse(args.config, ops)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = Path(args.out)
    children = np.random.SeedSequence(args.seed).spawn(args.count)
    for k, child in enumerate(children):
        cfg = TrigConfig(base.l1, base.l2, base.l3, base.op_set, int(child.generate_state(1)[0]))
        eq = generate_trig(cfg)
        path = out / f"trig_{base.l1}-{base.l2}-{base.l3}_{k:02d}.json"
        try:
            save_equation(eq.spec, path)
        except OSError as exc:
            raise OSError(f"{path}: {exc}") from exc
        print(path)
    return 0


def cmd_run(args) -> int:
    paths = sorted({Path(p) for pattern in args.data for p in glob.glob(pattern)})
    paths = [p for p in paths if p.suffix == ".json"]
    if not paths:
        raise ConfigError(f"no equation files match {args.data}")
    if args.sigma < 0:
        raise ConfigError("--sigma must be >= 0")
    budget = Budget(
        gp_generations=args.gp_generations,
        gp_pool=args.gp_pool,
        mcts_episodes=args.mcts_episodes,
        n_sim=args.n_sim,
        batch=args.batch,
        K=args.K,
        test_size=args.test_size,
    )
    tasks = [
        (str(p), p.stem, p.parent.name, alg, args.seed, args.sigma, budget)
        for alg in args.algorithm
        for p in paths
    ]
    if args.workers > 1:
        with ProcessPoolExecutor(args.workers) as pool:
            reports = list(pool.map(_run_task, tasks))
    else:
        reports = [_run_task(t) for t in tasks]
    reports.sort(key=lambda r: (r.algorithm, r.group, r.id))

    lines = "".join(r.to_json(args.timing) + "\n" for r in reports)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(lines)
    else:
        sys.stdout.write(lines)
    summary = summarize(reports, timing=True)
    if args.summary:
        Path(args.summary).parent.mkdir(parents=True, exist_ok=True)
        Path(args.summary).write_text(summary)
    else:
        sys.stderr.write(summary)
    failed = [r for r in reports if r.error is not None]
    for r in failed:
        log.error("%s (%s): %s", r.id, r.algorithm, r.error)
    return 1 if failed else 0


def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def cmd_count_space(args) -> int:
    rows = []
    for l in args.l:
        for m in args.m:
            for o in args.o:
                try:
                    count = expr.enumerate_trees(l, m, o)
                except ValueError as exc:
                    raise ConfigError(str(exc)) from None
                rows.append((l, m, o, count, expr.tree_space_size(l, m, o)))
    print("l,m,o,enumerated,closed_form,match")
    for l, m, o, got, want in rows:
        print(f"{l},{m},{o},{got},{want},{got == want}")
    return 0 if all(r[3] == r[4] for r in rows) else 1


def _load_expression(path: Path) -> expr.Node:
    text = path.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        return expr.from_infix(text.strip())
    record = data["equation"] if isinstance(data, dict) else data
    return expr.from_preorder(record)


def evaluate_expression(
    tree: expr.Node | None,
    spec: EquationSpec,
    n: int = 256,
    seed: int = 0,
    noise_sigma: float = 0.0,
) -> MetricReport:
    """Score ``tree`` against ``n`` fresh oracle samples; ``tree=None`` scores
    the mean predictor."""
    oracle = Oracle(spec, OracleConfig(noise_sigma, seed))
    X, y = oracle.sample(n)
    if tree is None:
        y_pred = np.full_like(y, y.mean())
    else:
        with np.errstate(all="ignore"):
            y_pred = expr.evaluate(tree, X)
    return compute_metrics(y, y_pred)


def cmd_eval(args) -> int:
    spec = load_equation(args.equation)
    tree = None if args.expression == "mean" else _load_expression(Path(args.expression))
    report = evaluate_expression(tree, spec, args.n, args.seed, args.sigma)
    print(json.dumps(report.to_dict(), sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vsr", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write trigonometric benchmark equations")
    p.add_argument("--config", required=True, help="l1,l2,l3")
    p.add_argument("--ops", default="sin,cos,add,sub,mul", help="comma-separated operator tokens")
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="data/trig")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("run", help="run regressors over equation files")
    p.add_argument("--algorithm", nargs="+", choices=ALGORITHMS, required=True)
    p.add_argument("--data", nargs="+", required=True, help="glob(s) of equation files")
    p.add_argument("--sigma", type=float, default=0.0, help="Gaussian noise std of the training oracle")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gp-generations", type=int, default=200, help="per round")
    p.add_argument("--gp-pool", type=int, default=100)
    p.add_argument("--mcts-episodes", type=int, default=200, help="per round")
    p.add_argument("--n-sim", type=int, default=10)
    p.add_argument("--batch", type=int, default=256)
    p.add_argument("--K", type=int, default=5)
    p.add_argument("--test-size", type=int, default=256)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--timing", action="store_true", help="include wall time in the JSON lines")
    p.add_argument("--out", help="JSON-lines report path (default: stdout)")
    p.add_argument("--summary", help="CSV summary path (default: stderr)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("count-space", help="enumerate expression trees against the closed form")
    p.add_argument("--l", type=_int_list, default=[1, 3, 5, 7, 9])
    p.add_argument("--m", type=_int_list, default=[1, 2, 3])
    p.add_argument("--o", type=_int_list, default=[1, 2])
    p.set_defaults(func=cmd_count_space)

    p = sub.add_parser("eval", help="score an expression against an equation's oracle")
    p.add_argument("--expression", required=True, help="preorder JSON or infix file, or 'mean'")
    p.add_argument("--equation", required=True)
    p.add_argument("--n", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma", type=float, default=0.0)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, SchemaError, expr.ExpressionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
