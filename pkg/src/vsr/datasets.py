"""Trigonometric benchmark generator and the bundled equation files."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from . import expr
from .expr import Node
from .oracle import EquationSpec, load_equation, save_equation

__all__ = [
    "TrigConfig",
    "TrigEquation",
    "InfeasibleConfigError",
    "generate_trig",
    "gen_trig_expression",
    "audit_terms",
    "bundled_paths",
    "load_bundled",
    "load_equation",
    "save_equation",
]

_POSITIVE_DOMAIN_OPS = {"inv", "log", "sqrt"}  # wrappers with poles or restricted domains


class InfeasibleConfigError(ValueError):
    """The requested term counts cannot be met with distinct terms."""


@dataclass(frozen=True)
class TrigConfig:
    l1: int  # number of variables
    l2: int  # singular terms
    l3: int  # pairwise terms
    op_set: tuple[str, ...] = ("sin", "cos", "add", "sub", "mul")
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "op_set", tuple(self.op_set))
        if self.l1 < 1 or self.l2 < 0 or self.l3 < 0:
            raise ValueError("need l1 >= 1 and l2, l3 >= 0")
        if "mul" not in self.op_set or not ({"add", "sub"} & set(self.op_set)):
            raise ValueError("op_set must contain mul and one of add/sub")

    @classmethod
    def parse(cls, text: str, op_set: Sequence[str], seed: int = 0) -> TrigConfig:
        """From ``"l1,l2,l3"``."""
        parts = [int(p) for p in text.split(",")]
        if len(parts) != 3:
            raise ValueError(f"config must be l1,l2,l3, got {text!r}")
        return cls(*parts, op_set=tuple(op_set), seed=seed)

    @property
    def label(self) -> str:
        return f"({self.l1},{self.l2},{self.l3})"


Factor = tuple  # (wrapper or None, variable index)


@dataclass
class TrigEquation:
    spec: EquationSpec
    singular: list[Factor]
    pairwise: list[tuple[Factor, Factor]]
    coefficients: list[float] = field(default_factory=list)  # offset first

    @property
    def n_coefficients(self) -> int:
        return len(self.coefficients)


def _coefficient(rng: np.random.Generator) -> float:
    while True:
        c = round(float(rng.uniform(-1.0, 1.0)), 3)
        if c != 0.0:
            return c


def _factor_node(f: Factor) -> Node:
    wrapper, i = f
    leaf = expr.var(i)
    return leaf if wrapper is None else expr.op(wrapper, leaf)


def generate_trig(config: TrigConfig) -> TrigEquation:
    """Offset + ``l2`` singular terms + ``l3`` pairwise terms, each with a
    coefficient drawn from uniform[-1, 1] and rounded to 3 decimals.

    A singular term is ``c * f(x_i)`` and a pairwise term ``c * f(x_i) * g(x_j)``
    with ``i != j``, where ``f`` and ``g`` are either the identity or a unary
    operator from ``op_set``. All terms are distinct.
    """
    rng = np.random.default_rng(config.seed)
    m = config.l1
    wrappers = [None] + [t for t in config.op_set if expr.ARITY.get(t) == 1]
    factors = [(w, i) for i in range(m) for w in wrappers]
    if config.l2 > len(factors):
        raise InfeasibleConfigError(f"only {len(factors)} distinct singular terms exist for {config.label}")
    if config.l3 > 0 and m < 2:
        raise InfeasibleConfigError("pairwise terms need two distinct variables (l1 >= 2)")
    pairs = [(a, b) for a, b in itertools.combinations(factors, 2) if a[1] != b[1]]
    if config.l3 > len(pairs):
        raise InfeasibleConfigError(f"only {len(pairs)} distinct pairwise terms exist for {config.label}")

    singular = [factors[k] for k in rng.choice(len(factors), size=config.l2, replace=False)]
    pairwise = [pairs[k] for k in rng.choice(len(pairs), size=config.l3, replace=False)]
    # randomize factor order within each pair so either variable may come first
    pairwise = [p if rng.random() < 0.5 else (p[1], p[0]) for p in pairwise]

    join = "add" if "add" in config.op_set else "sub"
    coefficients = [_coefficient(rng)]
    tree = expr.const(coefficients[0])
    for f in singular:
        coefficients.append(_coefficient(rng))
        term = expr.op("mul", expr.const(coefficients[-1]), _factor_node(f))
        tree = expr.op(join, tree, term)
    for f, g in pairwise:
        coefficients.append(_coefficient(rng))
        term = expr.op("mul", expr.op("mul", expr.const(coefficients[-1]), _factor_node(f)), _factor_node(g))
        tree = expr.op(join, tree, term)

    positive = bool(_POSITIVE_DOMAIN_OPS & set(config.op_set))
    domain = (0.1, 5.0) if positive else (-5.0, 5.0)
    function_set = [t for t in config.op_set if t != "const"] + ["const"]
    spec = EquationSpec.from_tree(tree, m, [domain] * m, function_set)
    return TrigEquation(spec, singular, pairwise, coefficients)


def gen_trig_expression(config: TrigConfig) -> EquationSpec:
    return generate_trig(config).spec


def _flatten(node: Node, names: set[str]) -> list[Node]:
    if node.name in names:
        return [leaf for child in node.children for leaf in _flatten(child, names)]
    return [node]


def audit_terms(tree: Node) -> dict[str, int]:
    """Count offset, singular and pairwise terms of a sum-of-products tree by
    the number of non-constant factors in each summand."""
    counts = {"offset": 0, "singular": 0, "pairwise": 0, "other": 0}
    for term in _flatten(tree, {"add", "sub"}):
        n = sum(1 for f in _flatten(term, {"mul"}) if not f.is_const)
        key = {0: "offset", 1: "singular", 2: "pairwise"}.get(n, "other")
        counts[key] += 1
    return counts


def _data_root() -> Path:
    return Path(str(resources.files("vsr") / "data"))


def bundled_paths(group: str | None = None) -> list[Path]:
    """Bundled equation files, sorted; ``group`` is ``feynman`` or ``livermore2``."""
    root = _data_root()
    pattern = f"{group}/*.json" if group else "*/*.json"
    return sorted(root.glob(pattern), key=_natural_key)


def _natural_key(path: Path):
    return [(0, int(tok), "") if tok.isdigit() else (1, 0, tok) for tok in _split_digits(path.stem)]


def _split_digits(text: str) -> list[str]:
    return ["".join(g) for _, g in itertools.groupby(text, str.isdigit)]


def load_bundled(equation_id: str) -> EquationSpec:
    """Load a bundled file by id, e.g. ``I.39.22`` or ``Vars4-1``."""
    for path in bundled_paths():
        if path.stem == equation_id:
            return load_equation(path)
    raise KeyError(f"no bundled equation {equation_id!r}")
