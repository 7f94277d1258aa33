"""Expression trees: construction, evaluation, serialization and counting.

A tree is represented by its root :class:`Node`. Leaves are variables
(0-based ``index``) or constant slots; internal nodes carry an operator token
whose arity fixes the number of children. Every node has an ``editable`` flag
that search operators must respect, and constant slots carry a ``role``
recording how a control-variable experiment classified them.
"""

from __future__ import annotations

import ast
import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterator, Sequence

import numpy as np

BINARY_OPS = ("add", "sub", "mul", "div")
UNARY_OPS = ("inv", "sin", "cos", "exp", "log", "sqrt")
ARITY = {**{name: 2 for name in BINARY_OPS}, **{name: 1 for name in UNARY_OPS}, "const": 0, "var": 0}

# constant slot roles
UNFITTED = "unfitted"
STANDALONE = "standalone"
SUMMARY = "summary"

_INFIX_SYMBOL = {"add": "+", "sub": "-", "mul": "*", "div": "/"}
_NUMPY_EXPR = {
    "inv": "(1.0 / {})",
    "sin": "np.sin({})",
    "cos": "np.cos({})",
    "exp": "np.exp({})",
    "log": "np.log({})",
    "sqrt": "np.sqrt({})",
}


class ExpressionError(ValueError):
    """Structural problem with a tree or a serialized record."""


class UnfittedConstantError(ExpressionError):
    pass


@dataclass(frozen=True)
class OpSymbol:
    name: str
    arity: int

    @classmethod
    def lookup(cls, name: str) -> OpSymbol:
        if name not in ARITY:
            raise ExpressionError(f"unknown token {name!r}")
        return cls(name, ARITY[name])


@dataclass(eq=False)
class Node:
    """One node of an expression tree; the root node stands for the whole tree."""

    name: str
    children: list[Node] = field(default_factory=list)
    index: int | None = None
    value: float | None = None
    editable: bool = True
    role: str = UNFITTED

    def __post_init__(self):
        if self.name not in ARITY:
            raise ExpressionError(f"unknown token {self.name!r}")
        if len(self.children) != ARITY[self.name]:
            raise ExpressionError(
                f"{self.name} expects {ARITY[self.name]} children, got {len(self.children)}"
            )
        if self.name == "var" and (self.index is None or self.index < 0):
            raise ExpressionError("variable node needs a non-negative index")

    @property
    def arity(self) -> int:
        return ARITY[self.name]

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @property
    def is_const(self) -> bool:
        return self.name == "const"

    @property
    def is_open(self) -> bool:
        """True for constant slots whose value is still subject to fitting."""
        return self.name == "const" and self.role != STANDALONE

    def preorder(self) -> Iterator[Node]:
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def walk(self, parent: Node | None = None, slot: int | None = None):
        """Yield ``(node, parent, child_slot)`` triples in preorder."""
        yield self, parent, slot
        for k, child in enumerate(self.children):
            yield from child.walk(self, k)

    def size(self) -> int:
        return sum(1 for _ in self.preorder())

    def depth(self) -> int:
        """Number of levels; a single leaf has depth 1."""
        if not self.children:
            return 1
        return 1 + max(child.depth() for child in self.children)

    def copy(self) -> Node:
        return Node(
            self.name,
            [child.copy() for child in self.children],
            index=self.index,
            value=self.value,
            editable=self.editable,
            role=self.role,
        )

    def fully_editable(self) -> bool:
        return all(node.editable for node in self.preorder())

    def variables(self) -> set[int]:
        return {node.index for node in self.preorder() if node.name == "var"}

    def signature(self) -> str:
        """Structure key: open constants are rendered as ``C``, frozen ones by value."""
        parts = []
        for node in self.preorder():
            if node.name == "var":
                parts.append(f"x{node.index + 1}")
            elif node.name == "const":
                parts.append(_format_const(node.value) if not node.is_open else "C")
            else:
                parts.append(node.name)
        return " ".join(parts)

    def __repr__(self) -> str:
        return f"Node({to_infix(self)})"


def var(index: int, editable: bool = True) -> Node:
    return Node("var", index=index, editable=editable)


def const(value: float | None = None, editable: bool = True, role: str = UNFITTED) -> Node:
    return Node("const", value=None if value is None else float(value), editable=editable, role=role)


def op(name: str, *children: Node, editable: bool = True) -> Node:
    return Node(name, list(children), editable=editable)


def structurally_equal(a: Node, b: Node) -> bool:
    """Same tokens, same variable indices and same constant values, node by node."""
    for x, y in itertools.zip_longest(a.preorder(), b.preorder()):
        if x is None or y is None or x.name != y.name:
            return False
        if x.name == "var" and x.index != y.index:
            return False
        if x.name == "const" and x.value != y.value:
            if not (x.value is not None and y.value is not None and math.isnan(x.value) and math.isnan(y.value)):
                return False
    return True


# --------------------------------------------------------------------------- #
# constants


def constant_slots(tree: Node, open_only: bool = True) -> list[Node]:
    """Constant nodes in preorder; this order defines the columns of a constants matrix."""
    return [n for n in tree.preorder() if n.name == "const" and (n.is_open or not open_only)]


def count_open_constants(tree: Node) -> int:
    return len(constant_slots(tree))


def get_constants(tree: Node) -> np.ndarray:
    slots = constant_slots(tree)
    return np.array([np.nan if s.value is None else s.value for s in slots], dtype=float)


def set_constants(tree: Node, values: Sequence[float]) -> None:
    slots = constant_slots(tree)
    if len(slots) != len(values):
        raise ExpressionError(f"tree has {len(slots)} open constants, got {len(values)} values")
    for slot, v in zip(slots, values):
        slot.value = float(v)


# --------------------------------------------------------------------------- #
# evaluation


def _format_const(value: float | None) -> str:
    if value is None:
        return "const"
    return repr(float(value))


def _source(node: Node, counter: list[int]) -> str:
    if node.name == "var":
        return f"X[{node.index}]"
    if node.name == "const":
        if node.is_open:
            k = counter[0]
            counter[0] += 1
            return f"c[{k}]"
        return f"({_format_const(node.value)})"
    args = [_source(child, counter) for child in node.children]
    if node.arity == 2:
        return f"({args[0]} {_INFIX_SYMBOL[node.name]} {args[1]})"
    return _NUMPY_EXPR[node.name].format(args[0])


@lru_cache(maxsize=20000)
def _compile_source(src: str) -> Callable:
    return eval(f"lambda X, c: {src}", {"np": np})  # noqa: S307 - generated from a closed token set


def compile_tree(tree: Node) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Compile to ``f(XT, c)``, where ``XT`` is the transposed input (m x n) and
    ``c`` the open constants in preorder. Frozen constants are baked in."""
    counter = [0]
    src = _source(tree, counter)
    if "X[" not in src:
        # constant-only expressions still need to broadcast to the batch
        src = f"(np.zeros(X.shape[1]) + {src})"
    return _compile_source(src)


def _eval_node(node: Node, X: np.ndarray) -> np.ndarray:
    name = node.name
    if name == "var":
        return X[:, node.index]
    if name == "const":
        if node.value is None:
            raise UnfittedConstantError("unfitted constant slot encountered during evaluation")
        return np.full(X.shape[0], node.value)
    a = _eval_node(node.children[0], X)
    if name == "add":
        return a + _eval_node(node.children[1], X)
    if name == "sub":
        return a - _eval_node(node.children[1], X)
    if name == "mul":
        return a * _eval_node(node.children[1], X)
    if name == "div":
        return a / _eval_node(node.children[1], X)
    if name == "inv":
        return 1.0 / a
    return getattr(np, name)(a)


def evaluate(tree: Node, X: np.ndarray) -> np.ndarray:
    """Evaluate row-wise on an (n, m) input. Zero denominators propagate as inf/nan."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ExpressionError("inputs must be a 2-d array")
    used = tree.variables()
    if used and max(used) >= X.shape[1]:
        raise ExpressionError(f"tree references x{max(used) + 1} but input has {X.shape[1]} columns")
    with np.errstate(all="ignore"):
        return _eval_node(tree, X)


# --------------------------------------------------------------------------- #
# serialization


def to_preorder(tree: Node) -> list[tuple[str, str]]:
    """Extended preorder record: ``(token, kind)`` pairs, variables 1-indexed."""
    record = []
    for node in tree.preorder():
        if node.name == "var":
            record.append((f"x{node.index + 1}", "var"))
        elif node.name == "const":
            record.append((_format_const(node.value), "const"))
        else:
            record.append((node.name, "binary" if node.arity == 2 else "unary"))
    return record


def _leaf_from_token(token: str, kind: str) -> Node:
    if kind == "var":
        if not (token.startswith("x") and token[1:].isdigit() and int(token[1:]) >= 1):
            raise ExpressionError(f"bad variable token {token!r}")
        return var(int(token[1:]) - 1)
    if token in ("const", "C", "c"):
        return const()
    try:
        return const(float(token))
    except ValueError:
        raise ExpressionError(f"bad constant token {token!r}") from None


def from_preorder(record: Sequence[Sequence[str]]) -> Node:
    """Inverse of :func:`to_preorder`; the record must be consumed exactly."""
    items = [tuple(item) for item in record]
    for item in items:
        if len(item) != 2:
            raise ExpressionError(f"record entries are (token, kind) pairs, got {item!r}")
    pos = 0

    def parse() -> Node:
        nonlocal pos
        if pos >= len(items):
            raise ExpressionError("record ended early: missing operands")
        token, kind = items[pos]
        pos += 1
        if kind in ("var", "const"):
            return _leaf_from_token(token, kind)
        if kind not in ("binary", "unary"):
            raise ExpressionError(f"unknown kind {kind!r}")
        if token not in ARITY or ARITY[token] == 0:
            raise ExpressionError(f"unknown token {token!r}")
        if (ARITY[token] == 2) != (kind == "binary"):
            raise ExpressionError(f"{token} declared {kind} but has arity {ARITY[token]}")
        children = [parse() for _ in range(ARITY[token])]
        return Node(token, children)

    tree = parse()
    if pos != len(items):
        raise ExpressionError(f"{len(items) - pos} leftover tokens after a complete expression")
    return tree


def to_infix(tree: Node) -> str:
    if tree.name == "var":
        return f"x{tree.index + 1}"
    if tree.name == "const":
        return "C" if tree.value is None else _format_const(tree.value)
    if tree.arity == 2:
        a, b = (to_infix(ch) for ch in tree.children)
        return f"({a} {_INFIX_SYMBOL[tree.name]} {b})"
    return f"{tree.name}({to_infix(tree.children[0])})"


_AST_BINOPS = {ast.Add: "add", ast.Sub: "sub", ast.Mult: "mul", ast.Div: "div"}


def from_infix(text: str) -> Node:
    """Parse a Python-style infix expression over ``x1..xm``.

    ``C`` (or ``c``) denotes an open constant. Integer powers expand into
    products; ``**0.5`` becomes ``sqrt``.
    """
    try:
        body = ast.parse(text.strip(), mode="eval").body
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from None

    def power(base: ast.AST, exponent: float) -> Node:
        if exponent == 0.5:
            return op("sqrt", conv(base))
        if exponent == 0.25:
            return op("sqrt", op("sqrt", conv(base)))
        if exponent == 1.5:
            return op("mul", conv(base), op("sqrt", conv(base)))
        if exponent == int(exponent) and exponent >= 1:
            node = conv(base)
            for _ in range(int(exponent) - 1):
                node = op("mul", node, conv(base))
            return node
        if exponent == int(exponent) and exponent <= -1:
            return op("inv", power(base, -exponent))
        raise ExpressionError(f"unsupported exponent {exponent}")

    def conv(n: ast.AST) -> Node:
        if isinstance(n, ast.BinOp):
            if isinstance(n.op, ast.Pow):
                exp_node = n.right
                sign = 1.0
                if isinstance(exp_node, ast.UnaryOp) and isinstance(exp_node.op, ast.USub):
                    sign, exp_node = -1.0, exp_node.operand
                if isinstance(exp_node, ast.BinOp) and isinstance(exp_node.op, ast.Div):
                    value = float(ast.literal_eval(exp_node.left)) / float(ast.literal_eval(exp_node.right))
                else:
                    value = float(ast.literal_eval(exp_node))
                return power(n.left, sign * value)
            if type(n.op) not in _AST_BINOPS:
                raise ExpressionError(f"unsupported operator in {text!r}")
            return op(_AST_BINOPS[type(n.op)], conv(n.left), conv(n.right))
        if isinstance(n, ast.UnaryOp) and isinstance(n.op, ast.USub):
            if isinstance(n.operand, ast.Constant):
                return const(-float(n.operand.value))
            return op("mul", const(-1.0), conv(n.operand))
        if isinstance(n, ast.UnaryOp) and isinstance(n.op, ast.UAdd):
            return conv(n.operand)
        if isinstance(n, ast.Constant) and isinstance(n.value, (int, float)):
            return const(float(n.value))
        if isinstance(n, ast.Name):
            if n.id in ("C", "c"):
                return const()
            if n.id.startswith("x") and n.id[1:].isdigit() and int(n.id[1:]) >= 1:
                return var(int(n.id[1:]) - 1)
            raise ExpressionError(f"unknown name {n.id!r}")
        if isinstance(n, ast.Call) and isinstance(n.func, ast.Name) and len(n.args) == 1:
            if n.func.id in UNARY_OPS:
                return op(n.func.id, conv(n.args[0]))
        raise ExpressionError(f"unsupported syntax in {text!r}")

    return conv(body)


# --------------------------------------------------------------------------- #
# counting trees


def tree_space_size(l: int, m: int, o: int) -> int:
    """Closed-form count of binary-operator trees with exactly ``l`` nodes."""
    if l < 1 or l % 2 == 0:
        raise ValueError("l must be a positive odd integer")
    internal = (l - 1) // 2
    catalan = math.comb(2 * internal, internal) // (internal + 1)
    return catalan * (m + 1) ** ((l + 1) // 2) * o ** internal


def iter_trees(l: int, m: int, o: int) -> Iterator[tuple]:
    """Every tree of exactly ``l`` nodes as a nested tuple.

    Leaves are ``("x", i)`` or ``("c",)``; internal nodes ``(k, left, right)``
    for operator number ``k < o``.
    """
    if l == 1:
        for i in range(m):
            yield ("x", i)
        yield ("c",)
        return
    for left_size in range(1, l - 1, 2):
        right_size = l - 1 - left_size
        for k in range(o):
            for left in iter_trees(left_size, m, o):
                for right in iter_trees(right_size, m, o):
                    yield (k, left, right)


def enumerate_trees(l: int, m: int, o: int) -> int:
    """Brute-force count of distinct trees with exactly ``l`` nodes."""
    if l < 1 or l % 2 == 0 or l > 11:
        raise ValueError("enumeration needs an odd l with 1 <= l <= 11")
    if l <= 9:
        return len(set(iter_trees(l, m, o)))
    return sum(1 for _ in iter_trees(l, m, o))
