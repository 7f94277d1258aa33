"""Genetic programming over expression trees, respecting per-node edit masks.

Classic GP and the vertical variant run through the same code: the vertical
loop only hands in partially frozen trees and a sampler with controlled
variables.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import expr
from .expr import Node
from .optimize import CachedFitter, FitSettings


@dataclass
class GpConfig:
    pool_size: int = 100
    generations: int = 200
    p_mutate: float = 0.8
    p_crossover: float = 0.8
    keep_fraction: float = 0.5
    survivor_fraction: float = 0.1  # random non-elite survivors kept for diversity
    inject_fraction: float = 0.1  # fresh random trees added each generation
    init_depth: int = 4
    leaf_prob: float = 0.4
    max_nodes: int = 31
    stop_fitness: float | None = 1e-10
    patience: int = 5  # extra generations after the first exact hit
    fit: FitSettings = field(default_factory=FitSettings)

    def __post_init__(self):
        for name in ("p_mutate", "p_crossover", "keep_fraction", "survivor_fraction", "inject_fraction", "leaf_prob"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.pool_size < 2:
            raise ValueError("pool_size must be >= 2")
        if self.generations < 0:
            raise ValueError("generations must be >= 0")


@dataclass(eq=False)
class Individual:
    tree: Node
    fitness: float = math.nan  # NaN until scored
    birth: int = 0

    @property
    def scored(self) -> bool:
        return not math.isnan(self.fitness)

    def rank_key(self, floor: float = 0.0):
        """Fitness at or below ``floor`` counts as exact; exact ties go to smaller trees."""
        f = 0.0 if self.fitness <= floor else self.fitness
        return (f, self.tree.size(), self.birth)


def split_ops(op_set: Sequence[str]) -> tuple[list[str], list[str]]:
    """Binary and unary operator tokens of an operator set; leaf tokens are ignored."""
    ops = [t for t in op_set if t not in ("const", "var")]
    unknown = [t for t in ops if t not in expr.ARITY]
    if unknown:
        raise ValueError(f"unknown operator {unknown[0]!r}")
    return [t for t in ops if expr.ARITY[t] == 2], [t for t in ops if expr.ARITY[t] == 1]


def random_leaf(variables: Sequence[int], rng: np.random.Generator) -> Node:
    k = int(rng.integers(len(variables) + 1))
    return expr.const() if k == len(variables) else expr.var(variables[k])


def random_tree(
    op_set: Sequence[str],
    variables: Sequence[int],
    rng: np.random.Generator,
    max_depth: int = 4,
    leaf_prob: float = 0.4,
) -> Node:
    """Grow-method tree. The root is an operator whenever ``max_depth >= 1``."""
    binary, unary = split_ops(op_set)
    ops = binary + unary
    if not ops:
        return random_leaf(variables, rng)

    def grow(depth: int) -> Node:
        if depth == max_depth or (depth > 0 and rng.random() < leaf_prob):
            return random_leaf(variables, rng)
        name = ops[int(rng.integers(len(ops)))]
        return expr.op(name, *(grow(depth + 1) for _ in range(expr.ARITY[name])))

    return grow(0)


def editable_roots(tree: Node) -> list[tuple[Node, Node | None, int | None]]:
    """``(node, parent, slot)`` for every node whose whole subtree is editable."""
    out = []

    def visit(node: Node, parent, slot) -> bool:
        flags = [visit(child, node, k) for k, child in enumerate(node.children)]
        ok = node.editable and all(flags)
        if ok:
            out.append((node, parent, slot))
        return ok

    visit(tree, None, None)
    return out


def _replace(tree: Node, parent: Node | None, slot: int | None, new: Node) -> Node:
    if parent is None:
        return new
    parent.children[slot] = new
    return tree


def mutate(
    tree: Node,
    op_set: Sequence[str],
    variables: Sequence[int],
    rng: np.random.Generator,
    subtree_depth: int = 2,
) -> Node:
    """Change one editable site of a copy of ``tree``.

    The site is drawn uniformly from the editable nodes. A leaf becomes another
    leaf or a fresh subtree of depth <= ``subtree_depth``; an operator becomes
    another operator of the same arity, or, when everything below it is
    editable, a fresh subtree. New leaves use ``const`` and ``variables`` only.
    """
    tree = tree.copy()
    sites = [(n, p, s) for n, p, s in tree.walk() if n.editable]
    if not sites:
        return tree
    node, parent, slot = sites[int(rng.integers(len(sites)))]
    binary, unary = split_ops(op_set)
    whole = all(n.editable for n in node.preorder())
    fresh = lambda: random_tree(op_set, variables, rng, subtree_depth, 0.5)  # noqa: E731

    if node.is_leaf:
        leaves = [("const", None)] + [("var", i) for i in variables]
        leaves = [lf for lf in leaves if not (lf[0] == node.name and (lf[0] == "const" or lf[1] == node.index))]
        if leaves and (rng.random() < 0.5 or not (binary or unary)):
            kind, index = leaves[int(rng.integers(len(leaves)))]
            return _replace(tree, parent, slot, expr.const() if kind == "const" else expr.var(index))
        return _replace(tree, parent, slot, fresh())

    same = [t for t in (binary if node.arity == 2 else unary) if t != node.name]
    if same and (not whole or rng.random() < 0.5):
        node.name = same[int(rng.integers(len(same)))]
        return tree
    if whole:
        return _replace(tree, parent, slot, fresh())
    return tree


def crossover(a: Node, b: Node, rng: np.random.Generator) -> tuple[Node, Node]:
    """Swap one fully editable subtree of a copy of ``a`` with one of a copy of ``b``."""
    a, b = a.copy(), b.copy()
    ra, rb = editable_roots(a), editable_roots(b)
    if not ra or not rb:
        return a, b
    na, pa, sa = ra[int(rng.integers(len(ra)))]
    nb, pb, sb = rb[int(rng.integers(len(rb)))]
    return _replace(a, pa, sa, nb), _replace(b, pb, sb, na)


def select(
    pool: list[Individual],
    keep: int,
    survivors: int,
    rng: np.random.Generator,
    floor: float = 0.0,
) -> list[Individual]:
    """Top ``keep`` by fitness (ties: fewer nodes, then earlier birth) plus
    ``survivors`` random others. Duplicate structures keep their best copy.
    Fitness values at or below ``floor`` tie with each other."""
    ranked = sorted(pool, key=lambda ind: ind.rank_key(floor))
    seen: set[str] = set()
    unique = []
    for ind in ranked:
        key = ind.tree.signature()
        if key not in seen:
            seen.add(key)
            unique.append(ind)
    top, rest = unique[:keep], unique[keep:]
    if survivors > 0 and rest:
        picks = rng.choice(len(rest), size=min(survivors, len(rest)), replace=False)
        top += [rest[i] for i in sorted(picks)]
    return top


@dataclass
class GpResult:
    pool: list[Individual]
    generations_run: int
    history: list[float]  # fitness of the top-ranked individual after each generation
    evaluations: int
    fits: int

    @property
    def best(self) -> Individual:
        return self.pool[0]


def run_gp(
    pool_init: Sequence[Node],
    sampler,
    op_set: Sequence[str],
    variables: Sequence[int],
    config: GpConfig | None = None,
    rng: np.random.Generator | None = None,
    observer: Callable[[int, list[Individual]], None] | None = None,
) -> GpResult:
    """Evolve a pool against data drawn from ``sampler(n)``.

    Each generation draws one fresh batch; offspring are fitted on it while
    survivors keep their scores, so the incumbent never gets worse. An empty
    ``pool_init`` is filled with random trees. Returns the top ``pool_size``
    individuals, best first.
    """
    config = config or GpConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    fitter = CachedFitter(sampler, config.fit, rng)
    M = config.pool_size
    births = itertools.count()

    def new(tree: Node) -> Individual:
        return Individual(tree, birth=next(births))

    def randoms(n: int) -> list[Individual]:
        return [new(random_tree(op_set, variables, rng, config.init_depth, config.leaf_prob)) for _ in range(n)]

    pool = [new(t.copy()) for t in pool_init] or randoms(M)
    history: list[float] = []

    def score_pending() -> None:
        fitter.new_batch()
        for ind in pool:
            if not ind.scored:
                ind.fitness = fitter.score(ind.tree)[0]

    score_pending()
    keep = max(1, int(round(config.keep_fraction * M)))
    n_surv = int(round(config.survivor_fraction * M))
    n_inject = int(round(config.inject_fraction * M))
    floor = config.stop_fitness or 0.0
    hit_at = None
    gen = 0
    for gen in range(1, config.generations + 1):
        parents = select(pool, keep, n_surv, rng, floor)
        offspring: list[Individual] = []
        want = max(0, M - len(parents) - n_inject)
        while len(offspring) < want:
            if len(parents) >= 2 and rng.random() < config.p_crossover:
                i, j = rng.choice(len(parents), size=2, replace=False)
                kids = list(crossover(parents[i].tree, parents[j].tree, rng))
            else:
                kids = [parents[int(rng.integers(len(parents)))].tree.copy()]
            for kid in kids:
                if rng.random() < config.p_mutate:
                    kid = mutate(kid, op_set, variables, rng)
                if kid.size() <= config.max_nodes:
                    offspring.append(new(kid))
        pool = parents + offspring[:want] + randoms(n_inject)
        score_pending()
        pool.sort(key=lambda ind: ind.rank_key(floor))
        history.append(pool[0].fitness)
        if observer is not None:
            observer(gen, pool)
        if config.stop_fitness is not None and pool[0].fitness <= config.stop_fitness:
            hit_at = gen if hit_at is None else hit_at
            if gen - hit_at >= config.patience:
                break

    final = select(pool, M, 0, rng, floor)
    return GpResult(final, gen, history, fitter.evaluations, fitter.fits)
