"""Monte Carlo tree search over sentential forms of an expression grammar.

The grammar has one nonterminal ``A``. A sentential form is a preorder token
tuple in which ``A`` marks an unexpanded sub-expression; rules always rewrite
the leftmost ``A``. Tokens copied from a previous round's expression are kept
as they are, so they can never be rewritten.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import expr
from .expr import Node
from .gp import split_ops
from .optimize import CachedFitter, FitSettings

A = ("A",)
_OPEN_CONST = ("const", None, "unfitted", True)

# Form tokens: ("A",), ("op", name, editable), ("var", index, editable),
# ("const", value, role, editable).


@dataclass(frozen=True)
class GrammarRule:
    lhs: str
    rhs: tuple  # replacement tokens in preorder

    def __str__(self) -> str:
        def show(tok):
            if tok == A:
                return "A"
            if tok[0] == "var":
                return f"x{tok[1] + 1}"
            return tok[1] if tok[0] == "op" else "const"

        return f"{self.lhs} -> " + " ".join(show(t) for t in self.rhs)


@dataclass(frozen=True)
class Grammar:
    rules: tuple[GrammarRule, ...]

    def __len__(self) -> int:
        return len(self.rules)


def build_grammar(op_set: Sequence[str], permitted_vars: Sequence[int]) -> Grammar:
    """One rule per operator, one per permitted variable and ``A -> const``."""
    binary, unary = split_ops(op_set)
    if not binary and not unary:
        raise ValueError("op_set must contain at least one operator")
    rules = [GrammarRule("A", (("op", name, True), A, A)) for name in binary]
    rules += [GrammarRule("A", (("op", name, True), A)) for name in unary]
    rules += [GrammarRule("A", (("var", i, True),)) for i in permitted_vars]
    rules.append(GrammarRule("A", (_OPEN_CONST,)))
    return Grammar(tuple(rules))


def tree_to_form(tree: Node) -> tuple:
    """Form of ``tree`` where every maximal fully editable subtree becomes ``A``.

    Frozen structures keep operators, variables and stand-alone constants, and
    their summary constants turn into ``A``. A fully editable tree gives ``(A,)``.
    """
    out: list = []

    def whole(node: Node) -> bool:
        return node.editable and all(whole(c) for c in node.children)

    def visit(node: Node) -> None:
        if whole(node):
            out.append(A)
            return
        if node.name == "var":
            out.append(("var", node.index, node.editable))
        elif node.name == "const":
            out.append(("const", node.value, node.role, node.editable))
        else:
            out.append(("op", node.name, node.editable))
        for child in node.children:
            visit(child)

    visit(tree)
    return tuple(out)


def form_to_tree(form: Sequence) -> Node:
    """Parse a form without nonterminals into a tree."""
    it = iter(form)

    def parse() -> Node:
        tok = next(it)
        if tok == A:
            raise expr.ExpressionError("form still contains a nonterminal")
        if tok[0] == "var":
            return expr.var(tok[1], editable=tok[2])
        if tok[0] == "const":
            return expr.const(tok[1], editable=tok[3], role=tok[2])
        name = tok[1]
        children = [parse() for _ in range(expr.ARITY[name])]
        return expr.op(name, *children, editable=tok[2])

    try:
        tree = parse()
    except StopIteration:
        raise expr.ExpressionError("form ended early") from None
    if next(it, None) is not None:
        raise expr.ExpressionError("form has leftover tokens")
    return tree


def is_terminal(form: Sequence) -> bool:
    return A not in form


def apply_rule(form: tuple, rule: GrammarRule) -> tuple:
    """Rewrite the leftmost nonterminal."""
    try:
        k = form.index(A)
    except ValueError:
        raise expr.ExpressionError("form has no nonterminal to expand") from None
    return form[:k] + rule.rhs + form[k + 1 :]


@dataclass(eq=False)
class SearchNode:
    """Search-tree node. ``visits`` and ``total`` are the statistics of the
    edge from the parent, i.e. N(s, a) and the summed reward of that edge;
    N(s) is the sum over the children's edges."""

    form: tuple
    parent: SearchNode | None = field(default=None, repr=False)
    rule: int | None = None
    children: dict[int, SearchNode] = field(default_factory=dict, repr=False)
    visits: int = 0
    total: float = 0.0

    @property
    def reward(self) -> float:
        return self.total / self.visits if self.visits else 0.0

    @property
    def parent_visits(self) -> int:
        return sum(c.visits for c in self.children.values())

    @property
    def is_leaf(self) -> bool:
        return not self.children


def seed_root(best_prev: Node | None) -> SearchNode:
    """Root node: ``A`` for a fresh search, otherwise the previous best with its
    open (summary) parts replaced by ``A``."""
    return SearchNode((A,) if best_prev is None else tree_to_form(best_prev))


def ucb(child: SearchNode, n_parent: int, c: float) -> float:
    if child.visits == 0:
        return math.inf
    return child.reward + c * math.sqrt(math.log(max(n_parent, 1)) / child.visits)


def select_best_leaf(root: SearchNode, c: float = 1.4) -> SearchNode:
    """Follow the highest-UCB child until reaching a node without children.
    Ties go to the lowest rule index."""
    node = root
    while node.children:
        n_parent = node.parent_visits
        node = max(node.children.values(), key=lambda ch: (ucb(ch, n_parent, c), -ch.rule))
    return node


def expand(node: SearchNode, grammar: Grammar) -> list[SearchNode]:
    if is_terminal(node.form):
        raise expr.ExpressionError("cannot expand a terminal form")
    for k, rule in enumerate(grammar.rules):
        node.children[k] = SearchNode(apply_rule(node.form, rule), parent=node, rule=k)
    return list(node.children.values())


def rollout(
    form: tuple,
    grammar: Grammar,
    rng: np.random.Generator,
    n_sim: int = 10,
    max_len: int = 64,
    retries: int = 5,
) -> list[tuple]:
    """Up to ``n_sim`` random completions of ``form``. A completion that grows
    past ``max_len`` tokens is retried up to ``retries`` times, then skipped."""
    if n_sim < 1:
        raise ValueError("n_sim must be >= 1")
    if is_terminal(form):
        return [form] * n_sim
    out = []
    n_rules = len(grammar.rules)
    for _ in range(n_sim):
        for _attempt in range(retries + 1):
            cur = form
            while A in cur and len(cur) <= max_len:
                cur = apply_rule(cur, grammar.rules[int(rng.integers(n_rules))])
            if A not in cur and len(cur) <= max_len:
                out.append(cur)
                break
    return out


def backpropagate(node: SearchNode, rewards: Sequence[float]) -> None:
    """Add the signals to ``node``'s edge and every edge above it."""
    n, s = len(rewards), float(sum(rewards))
    while node is not None and node.parent is not None:
        node.visits += n
        node.total += s
        node = node.parent


@dataclass
class MctsConfig:
    episodes: int = 200
    n_sim: int = 10
    c: float = 1.4
    max_len: int = 64
    retries: int = 5
    stop_fitness: float | None = 1e-10
    patience: int = 20  # extra episodes after the first exact hit, looking for a smaller one
    fit: FitSettings = field(default_factory=FitSettings)

    def __post_init__(self):
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")
        if self.n_sim < 1:
            raise ValueError("n_sim must be >= 1")


@dataclass
class MctsResult:
    best: Node
    fitness: float
    root: SearchNode = field(repr=False)
    episodes_run: int
    evaluations: int
    fits: int
    history: list[float] = field(default_factory=list)


def run_mcts(
    phi_init: Node | None,
    sampler,
    op_set: Sequence[str],
    variables: Sequence[int],
    config: MctsConfig | None = None,
    rng: np.random.Generator | None = None,
    observer: Callable[[int, SearchNode], None] | None = None,
) -> MctsResult:
    """Search for the best completion of ``phi_init`` (or of ``A`` when None).

    Every episode draws one batch from ``sampler``; each rollout is fitted on
    it and rewarded with 1/(1+NMSE). The result is the lowest-MSE expression
    among all rollouts.
    """
    config = config or MctsConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    grammar = build_grammar(op_set, variables)
    fitter = CachedFitter(sampler, config.fit, rng)
    root = seed_root(phi_init)
    best_tree, best_fit = None, math.inf
    history = []
    episode = 0
    floor = config.stop_fitness or 0.0
    hit_at = None

    def rank(mse: float, tree: Node):
        return (0.0 if mse <= floor else mse, tree.size())

    def simulate(forms: list[tuple]) -> list[float]:
        nonlocal best_tree, best_fit
        rewards = []
        for f in forms:
            tree = form_to_tree(f)
            mse, reward = fitter.score(tree)
            rewards.append(reward)
            if best_tree is None or rank(mse, tree) < rank(best_fit, best_tree):
                best_tree, best_fit = tree, mse
        return rewards

    for episode in range(1, config.episodes + 1):
        fitter.new_batch()
        current = select_best_leaf(root, config.c)
        targets = [current] if is_terminal(current.form) else expand(current, grammar)
        for child in targets:
            forms = rollout(child.form, grammar, rng, config.n_sim, config.max_len, config.retries)
            backpropagate(child, simulate(forms))
        history.append(best_fit)
        if observer is not None:
            observer(episode, root)
        if config.stop_fitness is not None and best_fit <= config.stop_fitness:
            hit_at = episode if hit_at is None else hit_at
            if episode - hit_at >= config.patience:
                break

    if best_tree is None:
        # every rollout was skipped; fall back to completing with constants
        best_tree = form_to_tree(tuple(_OPEN_CONST if t == A else t for t in root.form))
        best_fit = fitter.score(best_tree)[0]
    return MctsResult(best_tree, best_fit, root, episode, fitter.evaluations, fitter.fits, history)
