"""The vertical loop: free one variable per round, search, freeze, keep the best."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import expr
from .expr import Node
from .gp import GpConfig, run_gp
from .mcts import MctsConfig, run_mcts
from .optimize import ExperimentOutcome, cv_experiment, fit_constants
from .oracle import ControlSpec, Oracle, TrialSampler

REGRESSORS = ("gp", "mcts")


@dataclass
class VsrConfig:
    regressor: str = "gp"
    K: int = 5
    zero_threshold: float = 1e-10
    variance_threshold: float = 1e-3
    q_capacity: int = 50
    batch: int = 256
    optimizer: str = "bfgs"
    max_iter: int = 500
    restarts: int = 3
    gp: GpConfig = field(default_factory=GpConfig)
    mcts: MctsConfig = field(default_factory=MctsConfig)

    def __post_init__(self):
        if self.regressor not in REGRESSORS:
            raise ValueError(f"regressor must be one of {REGRESSORS}")
        if self.K < 2:
            raise ValueError("K must be >= 2 so constant variances are defined")
        if not (self.zero_threshold > 0 and self.variance_threshold > 0):
            raise ValueError("thresholds must be positive")
        if self.q_capacity < 1:
            raise ValueError("q_capacity must be >= 1")


@dataclass
class FreezeDecision:
    structure_frozen: bool
    roles: list[str]  # one per open constant of the candidate, empty unless frozen
    variances: np.ndarray


def freeze_equation(
    tree: Node,
    outcome: ExperimentOutcome,
    K: int = 5,
    zero_threshold: float = 1e-10,
    variance_threshold: float = 1e-3,
) -> tuple[Node, FreezeDecision]:
    """Lock a candidate whose K trial scores are all at most ``zero_threshold``.

    Open constants whose fitted values vary little across trials (population
    variance at most ``variance_threshold``) become stand-alone: fixed to
    their mean and locked. The rest become summary constants and stay
    editable. Operators and variables of a frozen candidate are locked. A
    candidate that fails the test is returned as a plain copy, keeping
    whatever was locked in earlier rounds.
    """
    out = tree.copy()
    scores = np.asarray(outcome.scores, dtype=float)
    frozen = outcome.trials == K and bool(np.all(scores <= zero_threshold))
    if not frozen:
        return out, FreezeDecision(False, [], np.empty(0))
    C = np.asarray(outcome.constants, dtype=float).reshape(outcome.trials, -1)
    variances = C.var(axis=0)
    means = C.mean(axis=0)
    slots = expr.constant_slots(out)
    roles = []
    for slot, v, mu in zip(slots, variances, means):
        slot.value = float(mu)
        if v <= variance_threshold:
            slot.role, slot.editable = expr.STANDALONE, False
        else:
            slot.role, slot.editable = expr.SUMMARY, True
        roles.append(slot.role)
    for node in out.preorder():
        if not node.is_const:
            node.editable = False
    return out, FreezeDecision(True, roles, variances)


@dataclass
class RoundRecord:
    variable: int
    candidates: int
    frozen: int
    best_fitness: float  # best global fitness held in Q after the round
    evaluations: int


@dataclass
class VsrResult:
    best: Node
    fitness: float
    Q: list[tuple[float, Node]]
    rounds: list[RoundRecord]

    @property
    def evaluations(self) -> int:
        return sum(r.evaluations for r in self.rounds)


def _update_q(Q: list[tuple[float, Node]], entries, capacity: int) -> list[tuple[float, Node]]:
    merged = sorted(Q + list(entries), key=lambda e: (e[0], e[1].size()))
    seen, out = set(), []
    for fit, tree in merged:
        key = tree.signature()
        if key not in seen:
            seen.add(key)
            out.append((fit, tree))
    return out[:capacity]


def run_vsr(
    oracle: Oracle,
    op_set: Sequence[str],
    config: VsrConfig | None = None,
    rng: np.random.Generator | None = None,
    on_round: Callable[[int, list[Node], list[tuple[float, Node]]], None] | None = None,
) -> VsrResult:
    """Free x1, x2, ... in turn; returns the best member of Q."""
    config = config or VsrConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    m = oracle.get_nvars()
    global_sampler = TrialSampler(oracle, ControlSpec.all_free(m))
    P: list[Node] = []
    Q: list[tuple[float, Node]] = []
    rounds = []
    for i in range(m):
        ctrl = ControlSpec(range(i + 1, m), range(i + 1))
        sampler = TrialSampler(oracle, ctrl)
        if config.regressor == "gp":
            res = run_gp(P, sampler, op_set, [i], config.gp, rng)
            P, evals = [ind.tree for ind in res.pool], res.evaluations
        else:
            res = run_mcts(P[0] if P else None, sampler, op_set, [i], config.mcts, rng)
            P, evals = [res.best], res.evaluations

        frozen_count = 0
        refreshed = []
        for phi in P:
            outcome = cv_experiment(
                phi, ctrl, oracle, config.K, config.batch, config.optimizer, rng,
                max_iter=config.max_iter, restarts=config.restarts, stop_above=config.zero_threshold,
            )
            evals += outcome.trials
            phi, decision = freeze_equation(phi, outcome, config.K, config.zero_threshold, config.variance_threshold)
            frozen_count += decision.structure_frozen
            refreshed.append(phi)
        P = refreshed

        Xg, yg, _ = global_sampler(config.batch)
        entries = []
        for phi in P:
            g = phi.copy()
            fit = fit_constants(g, Xg, yg, config.optimizer, config.max_iter, config.restarts, rng)
            evals += 1
            entries.append((fit.fitness if math.isfinite(fit.fitness) else math.inf, g))
        Q = _update_q(Q, entries, config.q_capacity)
        rounds.append(RoundRecord(i, len(P), frozen_count, Q[0][0], evals))
        if on_round is not None:
            on_round(i, P, Q)
    return VsrResult(Q[0][1], Q[0][0], Q, rounds)
