import numpy as np
import pytest

from vsr import expr
from vsr.gp import GpConfig, run_gp
from vsr.mcts import MctsConfig
from vsr.optimize import ExperimentOutcome, cv_experiment
from vsr.oracle import ControlSpec, EquationSpec, Oracle, OracleConfig, TrialSampler
from vsr.vertical import VsrConfig, freeze_equation, run_vsr

from cases import ROUND_ONE, freeze_cases


def reduced_form():
    return expr.op("sub", expr.op("mul", expr.const(), expr.var(0)), expr.const())


def outcome(scores, constants):
    return ExperimentOutcome(np.asarray(scores, float), np.asarray(constants, float), [])


def test_two_trial_example_both_summary():
    frozen, decision = freeze_equation(reduced_form(), outcome([1e-14, 2e-14], [[0.1, 0.35], [0.8, 0.06]]), K=2)
    assert decision.structure_frozen
    assert decision.roles == [expr.SUMMARY, expr.SUMMARY]
    np.testing.assert_allclose(decision.variances, [0.1225, 0.021025], rtol=1e-12)
    assert all(not n.editable for n in frozen.preorder() if not n.is_const)
    assert all(n.editable for n in frozen.preorder() if n.is_const)


def test_stable_constant_is_standalone():
    spec = EquationSpec.from_tree(expr.from_infix("3.7 * x1 + x2"), 2, [(0.1, 5.0)] * 2, ["add", "mul", "const"])
    oracle = Oracle(spec, OracleConfig(seed=0))
    ctrl = ControlSpec([1], [0])
    phi = expr.op("add", expr.op("mul", expr.const(), expr.var(0)), expr.const())
    out = cv_experiment(phi, ctrl, oracle, K=5, rng=np.random.default_rng(0))
    frozen, decision = freeze_equation(phi, out)
    assert decision.roles == [expr.STANDALONE, expr.SUMMARY]
    c1 = frozen.children[0].children[0]
    assert c1.value == pytest.approx(3.7, abs=1e-6) and not c1.editable


def test_any_bad_trial_blocks_freeze():
    phi = reduced_form()
    frozen, decision = freeze_equation(phi, outcome([0.0, 0.0, 1e-3, 0.0, 0.0], np.zeros((5, 2))))
    assert not decision.structure_frozen
    assert all(n.editable for n in frozen.preorder())


def test_short_outcome_blocks_freeze():
    _, decision = freeze_equation(reduced_form(), outcome([0.0, 0.0], np.zeros((2, 2))), K=5)
    assert not decision.structure_frozen


def test_failed_freeze_keeps_old_locks():
    phi = expr.op("add", expr.var(0, editable=False), expr.const(), editable=False)
    frozen, _ = freeze_equation(phi, outcome([1.0], [[0.0]]))
    assert not frozen.editable and not frozen.children[0].editable


@pytest.mark.parametrize("case", freeze_cases(10, seed=7), ids=lambda c: expr.to_infix(c.oracle.spec.tree))
def test_classification_on_synthetic_truths(case):
    out = cv_experiment(case.candidate, ROUND_ONE, case.oracle, K=5, rng=np.random.default_rng(0))
    _, decision = freeze_equation(case.candidate, out)
    assert decision.structure_frozen
    assert decision.roles == case.roles


def test_config_validation():
    with pytest.raises(ValueError):
        VsrConfig(regressor="sa")
    with pytest.raises(ValueError):
        VsrConfig(K=1)


def oracle_for(infix, m, seed=0):
    spec = EquationSpec.from_tree(expr.from_infix(infix), m, [(0.1, 5.0)] * m, ["add", "sub", "mul", "div", "const"])
    return Oracle(spec, OracleConfig(seed=seed))


def test_single_round_matches_plain_gp():
    cfg = GpConfig(pool_size=20, generations=5)
    pools = []
    vsr = run_vsr(oracle_for("2 * x1 + 1", 1), ["add", "mul"], VsrConfig(gp=cfg), np.random.default_rng(3), lambda i, P, Q: pools.append(P))
    gp = run_gp([], TrialSampler(oracle_for("2 * x1 + 1", 1), ControlSpec.all_free(1)), ["add", "mul"], [0], cfg, np.random.default_rng(3))
    assert len(vsr.rounds) == 1 and vsr.rounds[0].variable == 0
    # same code path, same seed: the regressor output is identical
    assert len(pools[0]) == len(gp.pool)
    shape = lambda t: [(n.name, n.index) for n in t.preorder()]  # noqa: E731
    assert [shape(t) for t in pools[0]] == [shape(ind.tree) for ind in gp.pool]


@pytest.mark.parametrize("regressor", ["gp", "mcts"])
def test_round_and_q_invariants(regressor):
    seen_vars = []

    def on_round(i, P, Q):
        # candidates of round i only use x1..x(i+1)
        seen_vars.append(set().union(*(t.variables() for t in P)))

    cfg = VsrConfig(regressor=regressor, gp=GpConfig(pool_size=20, generations=20), mcts=MctsConfig(episodes=30))
    res = run_vsr(oracle_for("x1 + x2", 2), ["add", "sub", "mul", "div"], cfg, np.random.default_rng(0), on_round)
    assert len(res.rounds) == 2
    assert seen_vars[0] <= {0} and seen_vars[1] <= {0, 1}
    assert res.fitness == min(f for f, _ in res.Q)
    sigs = [t.signature() for _, t in res.Q]
    assert len(sigs) == len(set(sigs)) <= cfg.q_capacity


def test_vsr_recovers_sum():
    cfg = VsrConfig(regressor="mcts", mcts=MctsConfig(episodes=100))
    res = run_vsr(oracle_for("x1 + x2", 2), ["add", "sub", "mul", "div"], cfg, np.random.default_rng(1))
    X = np.random.default_rng(5).uniform(0.1, 5, (256, 2))
    pred = expr.evaluate(res.best, X)
    np.testing.assert_allclose(pred, X.sum(axis=1), atol=1e-6)
