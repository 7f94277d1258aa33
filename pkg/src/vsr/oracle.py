"""Data oracle: a hidden ground-truth equation answering controlled queries.

The oracle only exposes what an experimenter could observe: the number of
inputs, the operator set, their domains and (noisy) outputs for chosen inputs.
Equation files use the JSON layout::

    {"num_vars": 3,
     "var_domains": [[0, 1], [0, 1], [0, 1]],
     "function_set": ["add", "sub", "mul", "div", "const"],
     "equation": [["mul", "binary"], ["mul", "binary"], ["8.31", "const"],
                  ["x1", "var"], ["div", "binary"], ["x2", "var"], ["x3", "var"]]}
"""

from __future__ import annotations

import ast
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from . import expr
from .expr import Node

log = logging.getLogger(__name__)

SCHEMA_KEYS = ("num_vars", "var_domains", "function_set", "equation")


class SchemaError(ValueError):
    """An equation file does not match the expected layout."""


@dataclass
class EquationSpec:
    num_vars: int
    var_domains: list[tuple[float, float]]
    function_set: list[str]
    equation: list[tuple[str, str]]
    tree: Node = field(init=False, repr=False)

    def __post_init__(self):
        if not isinstance(self.num_vars, int) or self.num_vars < 1:
            raise SchemaError("num_vars: must be a positive integer")
        if len(self.var_domains) != self.num_vars:
            raise SchemaError(f"var_domains: expected {self.num_vars} intervals, got {len(self.var_domains)}")
        domains = []
        for d in self.var_domains:
            if len(d) != 2:
                raise SchemaError(f"var_domains: interval {d!r} is not a (low, high) pair")
            low, high = float(d[0]), float(d[1])
            if not low < high:
                raise SchemaError(f"var_domains: interval {d!r} needs low < high")
            domains.append((low, high))
        self.var_domains = domains
        self.function_set = [str(t) for t in self.function_set]
        for token in self.function_set:
            if token not in expr.ARITY or token == "var":
                raise SchemaError(f"function_set: unknown token {token!r}")
        self.equation = [(str(tok), str(kind)) for tok, kind in self.equation]
        try:
            self.tree = expr.from_preorder(self.equation)
        except expr.ExpressionError as exc:
            raise SchemaError(f"equation: {exc}") from None
        used = self.tree.variables()
        if used and max(used) >= self.num_vars:
            raise SchemaError(f"equation: references x{max(used) + 1} beyond num_vars={self.num_vars}")
        allowed = set(self.function_set) | {"const", "var"}
        for node in self.tree.preorder():
            if node.name not in allowed:
                raise SchemaError(f"equation: token {node.name!r} is not in function_set")
            if node.is_const and node.value is None:
                raise SchemaError("equation: ground-truth constants need numeric values")

    @classmethod
    def from_tree(cls, tree: Node, num_vars: int, var_domains, function_set: Iterable[str]) -> EquationSpec:
        return cls(num_vars, [tuple(d) for d in var_domains], list(function_set), expr.to_preorder(tree))

    def to_dict(self) -> dict:
        return {
            "num_vars": self.num_vars,
            "var_domains": [list(d) for d in self.var_domains],
            "function_set": list(self.function_set),
            "equation": [list(item) for item in self.equation],
        }

    def dumps(self) -> str:
        """Stable JSON text: one key per line and one equation token per line."""
        d = self.to_dict()
        lines = [
            "{",
            f'  "num_vars": {json.dumps(d["num_vars"])},',
            f'  "var_domains": {json.dumps(d["var_domains"])},',
            f'  "function_set": {json.dumps(d["function_set"])},',
            '  "equation": [',
            ",\n".join(f"    {json.dumps(item)}" for item in d["equation"]),
            "  ]",
            "}",
        ]
        return "\n".join(lines) + "\n"


def parse_equation(text: str) -> EquationSpec:
    """Parse an equation file body. Strict JSON first; Python-literal syntax
    (single quotes, tuples) is accepted as well."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        try:
            data = ast.literal_eval(text.strip())
        except (ValueError, SyntaxError) as exc:
            raise SchemaError(f"not JSON or a Python literal: {exc}") from None
    if not isinstance(data, dict):
        raise SchemaError("top level must be an object")
    for key in SCHEMA_KEYS:
        if key not in data:
            raise SchemaError(f"{key}: missing key")
    extra = sorted(set(data) - set(SCHEMA_KEYS))
    if extra:
        raise SchemaError(f"{extra[0]}: unexpected key")
    if not isinstance(data["equation"], (list, tuple)):
        raise SchemaError("equation: must be a list of [token, kind] pairs")
    if not isinstance(data["function_set"], (list, tuple)):
        raise SchemaError("function_set: must be a list of tokens")
    if not isinstance(data["var_domains"], (list, tuple)):
        raise SchemaError("var_domains: must be a list of intervals")
    for item in data["equation"]:
        if not isinstance(item, (list, tuple)) or len(item) != 2:
            raise SchemaError(f"equation: entry {item!r} is not a [token, kind] pair")
    return EquationSpec(data["num_vars"], list(data["var_domains"]), list(data["function_set"]), list(data["equation"]))


def load_equation(path: str | Path) -> EquationSpec:
    path = Path(path)
    try:
        return parse_equation(path.read_text())
    except SchemaError as exc:
        raise SchemaError(f"{path}: {exc}") from None


def save_equation(spec: EquationSpec, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(spec.dumps())


@dataclass(frozen=True)
class ControlSpec:
    """Partition of the variable indices into controlled and free sets."""

    controlled: frozenset[int]
    free: frozenset[int]

    def __init__(self, controlled: Iterable[int], free: Iterable[int]):
        object.__setattr__(self, "controlled", frozenset(controlled))
        object.__setattr__(self, "free", frozenset(free))
        if self.controlled & self.free:
            raise ValueError("a variable cannot be both controlled and free")

    def check(self, num_vars: int) -> None:
        if self.controlled | self.free != frozenset(range(num_vars)):
            raise ValueError(f"control spec does not cover variables 0..{num_vars - 1}")

    @classmethod
    def all_free(cls, num_vars: int) -> ControlSpec:
        return cls((), range(num_vars))

    @classmethod
    def first_free(cls, num_vars: int, k: int) -> ControlSpec:
        """The first ``k`` variables free, the rest controlled."""
        return cls(range(k, num_vars), range(k))


@dataclass(frozen=True)
class OracleConfig:
    noise_sigma: float = 0.0
    seed: int | None = None

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")


class Oracle:
    """Answers queries about a hidden equation, optionally with Gaussian noise.

    One instance owns one RNG stream. Share it between workers only with
    external serialization, or hand each worker a :meth:`spawn` clone.
    """

    def __init__(self, spec: EquationSpec, config: OracleConfig | None = None):
        self.spec = spec
        self.config = config or OracleConfig()
        self.rng = np.random.default_rng(self.config.seed)
        self.query_count = 0
        self._low = np.array([d[0] for d in spec.var_domains])
        self._high = np.array([d[1] for d in spec.var_domains])
        self._f = expr.compile_tree(spec.tree)
        self._c = expr.get_constants(spec.tree)

    def get_nvars(self) -> int:
        return self.spec.num_vars

    def get_function_set(self) -> list[str]:
        return list(self.spec.function_set)

    @property
    def domains(self) -> list[tuple[float, float]]:
        return list(self.spec.var_domains)

    def spawn(self, seed) -> Oracle:
        return Oracle(self.spec, OracleConfig(self.config.noise_sigma, seed))

    def exact(self, X: np.ndarray) -> np.ndarray:
        """Noise-free ground truth; does not count as a query."""
        X = np.asarray(X, dtype=float)
        with np.errstate(all="ignore"):
            return np.asarray(self._f(X.T, self._c), dtype=float)

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.spec.num_vars:
            raise ValueError(f"expected an (n, {self.spec.num_vars}) input, got shape {X.shape}")
        outside = (X < self._low) | (X > self._high)
        if outside.any():
            log.debug("%d query entries fall outside the declared domains", int(outside.sum()))
        self.query_count += X.shape[0]
        y = self.exact(X)
        if self.config.noise_sigma > 0:
            y = y + self.rng.normal(0.0, self.config.noise_sigma, size=y.shape)
        return y

    def sample_inputs(self, ctrl: ControlSpec, n: int, controlled_values: dict[int, float] | None = None):
        m = self.spec.num_vars
        ctrl.check(m)
        X = self.rng.uniform(self._low, self._high, size=(n, m))
        values = {}
        for i in sorted(ctrl.controlled):
            if controlled_values is not None and i in controlled_values:
                v = float(controlled_values[i])
            else:
                v = float(self.rng.uniform(self._low[i], self._high[i]))
            X[:, i] = v
            values[i] = v
        return X, values

    def sample_trial(self, ctrl: ControlSpec, n: int = 256, controlled_values: dict[int, float] | None = None):
        """One trial batch: controlled columns fixed to one draw, free columns i.i.d. uniform.

        ``controlled_values`` pins chosen controlled variables instead of drawing them.
        Returns ``(X, y, controlled_values)``.
        """
        if n < 1:
            raise ValueError("batch size must be >= 1")
        X, values = self.sample_inputs(ctrl, n, controlled_values)
        return X, self.evaluate(X), values

    def sample(self, n: int = 256):
        """A batch with no variables controlled."""
        X, y, _ = self.sample_trial(ControlSpec.all_free(self.spec.num_vars), n)
        return X, y


@dataclass
class TrialSampler:
    """An oracle bound to one control setting, i.e. the D_o handed to a regressor."""

    oracle: Oracle
    ctrl: ControlSpec

    def __call__(self, n: int = 256, controlled_values: dict[int, float] | None = None):
        return self.oracle.sample_trial(self.ctrl, n, controlled_values)

    @property
    def num_vars(self) -> int:
        return self.oracle.get_nvars()

