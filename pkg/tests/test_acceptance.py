"""Acceptance checks 1-10. Each test records one PASS/FAIL line (also printed
in the terminal summary) before asserting.

Run alone with ``python tests/test_acceptance.py`` or ``pytest tests/test_acceptance.py -s``.
"""

from __future__ import annotations

import json
import time

import numpy as np
import pytest

from vsr import cli, expr
from vsr.gp import GpConfig, crossover, mutate, random_tree, run_gp
from vsr.mcts import MctsConfig, run_mcts
from vsr.metrics import compute_metrics
from vsr.optimize import cv_experiment, fit_constants
from vsr.oracle import ControlSpec, EquationSpec, Oracle, OracleConfig, TrialSampler, load_equation, parse_equation, save_equation
from vsr.vertical import VsrConfig, freeze_equation, run_vsr

from cases import ROUND_ONE, freeze_cases

RESULTS: list[str] = []


def record(n: int, title: str, ok: bool, detail: str, elapsed: float, limit: float | None) -> bool:
    in_time = limit is None or elapsed < limit
    passed = ok and in_time
    budget = f"{elapsed:.1f}s" + (f" of {limit:.0f}s" if limit is not None else "")
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {n}: {title}: {detail} ({budget})"
    RESULTS.append(line)
    print(line)
    return passed


# 1 ------------------------------------------------------------------------- #


def test_01_tree_count_formula():
    t0 = time.perf_counter()
    mismatches = []
    cases = 0
    for l in (1, 3, 5, 7, 9):
        for m in (1, 2, 3):
            for o in (1, 2):
                cases += 1
                got, want = expr.enumerate_trees(l, m, o), expr.tree_space_size(l, m, o)
                if got != want:
                    mismatches.append((l, m, o, got, want))
    elapsed = time.perf_counter() - t0
    assert record(1, "tree count closed form", not mismatches, f"{cases - len(mismatches)}/{cases} exact matches", elapsed, 10)


# 2 ------------------------------------------------------------------------- #


def test_02_reduced_form_constants():
    t0 = time.perf_counter()
    tree = expr.from_infix("x1 * x3 - x2 * x4")
    oracle = Oracle(EquationSpec.from_tree(tree, 4, [(0.1, 1.0)] * 4, ["add", "sub", "mul", "const"]), OracleConfig(seed=0))
    controls = [{1: 0.5, 2: 0.1, 3: 0.7}, {1: 0.2, 2: 0.8, 3: 0.3}]
    expected = np.array([[0.1, 0.35], [0.8, 0.06]])
    got = []
    for values in controls:
        X, y, _ = oracle.sample_trial(ControlSpec([1, 2, 3], [0]), 256, values)
        phi = expr.op("sub", expr.op("mul", expr.const(), expr.var(0)), expr.const())
        got.append(fit_constants(phi, X, y, rng=np.random.default_rng(0)).constants)
    err = float(np.max(np.abs(np.array(got) - expected)))
    elapsed = time.perf_counter() - t0
    assert record(2, "reduced-form constants", err <= 1e-4, f"max abs error {err:.1e}", elapsed, 1)


# 3 ------------------------------------------------------------------------- #


def test_03_freeze_classification():
    t0 = time.perf_counter()
    correct = total = 0
    for k, case in enumerate(freeze_cases(20, seed=0)):
        out = cv_experiment(case.candidate, ROUND_ONE, case.oracle, K=5, rng=np.random.default_rng(k))
        _, decision = freeze_equation(case.candidate, out, K=5, zero_threshold=1e-10, variance_threshold=1e-3)
        roles = decision.roles or [None] * len(case.roles)
        correct += sum(a == b for a, b in zip(roles, case.roles))
        total += len(case.roles)
    acc = correct / total
    elapsed = time.perf_counter() - t0
    assert record(3, "freeze classification", acc >= 0.95, f"{correct}/{total} constant slots ({acc:.1%})", elapsed, 60)


# 4 ------------------------------------------------------------------------- #

ARITH = ["add", "sub", "mul", "div"]
POOL = 30  # GP pool size at desk scale
PER_ROUND = 200  # generations or episodes per round


def product_of_pairs(m: int) -> str:
    return " * ".join(f"(x{2 * j - 1} + x{2 * j})" for j in range(1, m + 1))


def _recovered(oracle: Oracle, best: expr.Node, n_vars: int) -> bool:
    X = np.random.default_rng(999).uniform(0.1, 5.0, size=(1000, n_vars))
    with np.errstate(all="ignore"):
        report = compute_metrics(oracle.exact(X), expr.evaluate(best, X))
    return report.nmse < 1e-6


def _run(alg: str, m: int, seed: int) -> tuple[bool, int]:
    """(recovered, candidate evaluations) for one seed."""
    n_vars = 2 * m
    tree = expr.from_infix(product_of_pairs(m))
    oracle = Oracle(EquationSpec.from_tree(tree, n_vars, [(0.1, 5.0)] * n_vars, ARITH + ["const"]), OracleConfig(seed=seed))
    rng = np.random.default_rng(seed)
    gp_cfg = GpConfig(pool_size=POOL, generations=PER_ROUND)
    mcts_cfg = MctsConfig(episodes=PER_ROUND)
    if alg.startswith("vsr-"):
        res = run_vsr(oracle, ARITH, VsrConfig(regressor=alg[4:], gp=gp_cfg, mcts=mcts_cfg), rng)
        best, evals = res.best, res.evaluations
    else:
        # classic: all variables at once with the total budget of n_vars rounds
        sampler = TrialSampler(oracle, ControlSpec.all_free(n_vars))
        if alg == "gp":
            gp_cfg.generations = PER_ROUND * n_vars
            res = run_gp([], sampler, ARITH, list(range(n_vars)), gp_cfg, rng)
            best, evals = res.best.tree, res.evaluations
        else:
            mcts_cfg.episodes = PER_ROUND * n_vars
            res = run_mcts(None, sampler, ARITH, list(range(n_vars)), mcts_cfg, rng)
            best, evals = res.best, res.evaluations
    return _recovered(oracle, best, n_vars), evals


def test_04_vertical_beats_classic():
    t0 = time.perf_counter()
    seeds = range(10)
    runs = {(alg, m): [_run(alg, m, s) for s in seeds] for alg in ("vsr-gp", "vsr-mcts", "gp", "mcts") for m in (1, 2)}
    elapsed = time.perf_counter() - t0
    hits = {k: sum(ok for ok, _ in v) for k, v in runs.items()}
    evals = {k: np.mean([e for _, e in v]) for k, v in runs.items()}
    floor_ok = all(hits[(alg, m)] >= 8 for alg in ("vsr-gp", "vsr-mcts") for m in (1, 2))
    totals = {alg: hits[(alg, 1)] + hits[(alg, 2)] for alg in ("vsr-gp", "vsr-mcts", "gp", "mcts")}
    fewer = {base: totals[base] < totals["vsr-" + base] for base in ("gp", "mcts")}
    detail = ", ".join(f"{alg} m={m}: {h}/10 (~{evals[(alg, m)]:.0f} evals)" for (alg, m), h in hits.items())
    detail += f"; classic strictly fewer: gp {fewer['gp']}, mcts {fewer['mcts']}"
    assert record(4, "recovery of products of pairs", floor_ok and all(fewer.values()), detail, elapsed, 15 * 60)


# 5 ------------------------------------------------------------------------- #


def test_05_trig_recovery(tmp_path):
    t0 = time.perf_counter()
    acc = {}
    for config in ("2,1,1", "3,2,2"):
        data = tmp_path / config.replace(",", "")
        assert cli.main(["gen", "--config", config, "--ops", "inv,add,sub,mul", "--count", "10", "--seed", "1", "--out", str(data)]) == 0
        out = tmp_path / f"{data.name}.jsonl"
        code = cli.main(["run", "--algorithm", "vsr-mcts", "mcts", "--data", str(data / "*.json"), "--out", str(out), "--summary", str(tmp_path / "s.csv")])
        assert code == 0
        for line in out.read_text().splitlines():
            rec = json.loads(line)
            acc.setdefault((config, rec["algorithm"]), []).append(rec["recovered"])
    elapsed = time.perf_counter() - t0
    rate = {k: sum(v) / len(v) for k, v in acc.items()}
    vsr, classic = rate[("3,2,2", "vsr-mcts")], rate[("3,2,2", "mcts")]
    detail = ", ".join(f"{alg} ({cfg}): {r:.0%}" for (cfg, alg), r in sorted(rate.items()))
    assert record(5, "trig recovery rates", vsr >= classic and vsr >= 0.6, detail, elapsed, 3600)


# 6 ------------------------------------------------------------------------- #


def test_06_metric_identities():
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    worst = 0.0
    scale_worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 200))
        y = rng.normal(size=n) * 10 ** rng.uniform(-3, 3)
        p = y + rng.normal(size=n) * 10 ** rng.uniform(-3, 3)
        r = compute_metrics(y, p)
        worst = max(worst, abs(r.r2 + r.nmse - 1.0) / max(1.0, r.nmse), abs(r.inv_nmse * (1 + r.nmse) - 1.0), abs(r.nrmse**2 - r.nmse) / max(1.0, r.nmse))
        s = 10 ** rng.uniform(-3, 3)
        scale_worst = max(scale_worst, abs(compute_metrics(s * y, s * p).nmse - r.nmse) / max(r.nmse, 1e-300))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and scale_worst <= 1e-9
    assert record(6, "metric identities", ok, f"max identity residual {worst:.1e}, max relative scale drift {scale_worst:.1e}", elapsed, 5)


# 7 ------------------------------------------------------------------------- #


def test_07_noise_model():
    t0 = time.perf_counter()
    tree = expr.from_infix("8.31 * x1 * (x2 / x3)")
    spec = EquationSpec.from_tree(tree, 3, [(0.01, 1e4), (10.0, 1e3), (1e-3, 1e4)], ARITH + ["const"])
    oracle = Oracle(spec, OracleConfig(noise_sigma=0.1, seed=7))
    y = oracle.evaluate(np.repeat([[1.0, 10.0, 2.0]], 100_000, axis=0))
    sd = float(np.std(y, ddof=1))
    elapsed = time.perf_counter() - t0
    assert record(7, "noise model", abs(sd - 0.1) <= 0.01, f"sample std {sd:.4f}", elapsed, 5)


# 8 ------------------------------------------------------------------------- #

LITERAL = """{
  'num_vars': 3,
  'var_domains':[(0, 1), (0, 1), (0, 1)],
  'function_set': ['add', 'sub', 'mul', 'div', 'const'],
  'equation': [
        ('mul','binary'), ('mul','binary'), ('8.314', 'const'),
        ('x1', 'var'), ('div', 'binary'), ('x2', 'var'), ('x3', 'var')]
}"""


def test_08_format_fidelity(tmp_path):
    t0 = time.perf_counter()
    row = np.array([[1.0, 10.0, 2.0]])
    literal = parse_equation(LITERAL)
    y_literal = float(Oracle(literal).evaluate(row)[0])
    # the plain traversal and the constants table give 8.31; the extended listing prints 8.314
    stated = json.loads(literal.dumps())
    stated["equation"][2][0] = "8.31"
    spec = parse_equation(json.dumps(stated))
    y = float(Oracle(spec).evaluate(row)[0])
    stable = True
    for k, s in enumerate((literal, spec)):
        path = tmp_path / f"eq{k}.json"
        save_equation(s, path)
        first = path.read_bytes()
        save_equation(load_equation(path), path)
        stable &= path.read_bytes() == first
    elapsed = time.perf_counter() - t0
    ok = abs(y - 41.55) < 1e-9 and abs(y_literal - 41.57) < 1e-9 and stable
    detail = f"8.31 record gives {y:.2f}, literal 8.314 listing gives {y_literal:.2f}, byte-stable round trip {stable}"
    assert record(8, "format fidelity", ok, detail, elapsed, 1)


# 9 ------------------------------------------------------------------------- #


def _frozen_nodes(tree):
    out = {}

    def visit(node, path):
        if not node.editable:
            out[path] = (node.name, node.index, node.value, node.role, len(node.children))
        for k, child in enumerate(node.children):
            visit(child, path + (k,))

    visit(tree, ())
    return out


def _masked_tree(rng, ops):
    tree = random_tree(ops, [0, 1, 2], rng, int(rng.integers(1, 5)))
    p = rng.uniform()
    for node in tree.preorder():
        if node.is_const:
            node.value = float(rng.uniform(-2, 2))
        if rng.random() < p:
            node.editable = False
    return tree


def test_09_freeze_safety():
    t0 = time.perf_counter()
    rng = np.random.default_rng(9)
    ops = ["add", "sub", "mul", "div", "sin", "cos", "inv"]
    violations = 0
    for k in range(10_000):
        a = _masked_tree(rng, ops)
        before = [_frozen_nodes(a)]
        if k % 2:
            b = _masked_tree(rng, ops)
            before.append(_frozen_nodes(b))
            children = crossover(a, b, rng)
        else:
            children = (mutate(a, ops, [0, 1, 2], rng),)
        for snap, child in zip(before, children):
            after = _frozen_nodes(child)
            violations += any(after.get(path) != content for path, content in snap.items())
    elapsed = time.perf_counter() - t0
    assert record(9, "freeze safety", violations == 0, f"{violations} violations in 10000 operations", elapsed, 10)


# 10 ------------------------------------------------------------------------ #


def test_10_seed_determinism(tmp_path):
    t0 = time.perf_counter()
    data = tmp_path / "trig"
    cli.main(["gen", "--config", "2,1,1", "--ops", "inv,add,sub,mul", "--count", "2", "--seed", "3", "--out", str(data)])
    flags = ["run", "--algorithm", "gp", "vsr-gp", "mcts", "vsr-mcts", "--data", str(data / "*.json"), "--seed", "11",
             "--gp-generations", "10", "--gp-pool", "20", "--mcts-episodes", "10", "--summary", str(tmp_path / "s.csv")]
    outputs = []
    for k in range(2):
        out = tmp_path / f"run{k}.jsonl"
        cli.main(flags + ["--out", str(out)])
        outputs.append(out.read_bytes())
    elapsed = time.perf_counter() - t0
    n = outputs[0].count(b"\n")
    assert record(10, "seed determinism", outputs[0] == outputs[1] and n == 8, f"{n} records, identical bytes {outputs[0] == outputs[1]}", elapsed, None)


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-s"]))
