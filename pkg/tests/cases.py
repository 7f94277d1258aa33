"""Ground truths with a known split into summary and stand-alone constants."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from vsr import expr
from vsr.expr import STANDALONE, SUMMARY
from vsr.oracle import ControlSpec, EquationSpec, Oracle, OracleConfig

C = expr.const
x = expr.var


@dataclass
class FreezeCase:
    oracle: Oracle
    candidate: expr.Node  # reduced form with open constants, x1 free
    roles: list[str]  # expected role per open constant, preorder


def _templates(a: float, b: float):
    # (ground truth over x1..x3, reduced-form candidate, expected roles)
    return [
        (f"{a} * x1 + {b} * x2", expr.op("add", expr.op("mul", C(), x(0)), C()), [STANDALONE, SUMMARY]),
        (f"x1 * x2 + {a}", expr.op("add", expr.op("mul", C(), x(0)), C()), [SUMMARY, STANDALONE]),
        (f"{a} * x1 * x2 + {b}", expr.op("add", expr.op("mul", C(), x(0)), C()), [SUMMARY, STANDALONE]),
        (f"{a} * sin(x1) + x2 * x3", expr.op("add", expr.op("mul", C(), expr.op("sin", x(0))), C()), [STANDALONE, SUMMARY]),
        (f"(x1 + {a}) * x2", expr.op("mul", expr.op("add", x(0), C()), C()), [STANDALONE, SUMMARY]),
    ]


def freeze_cases(n: int = 20, seed: int = 0) -> list[FreezeCase]:
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        a = round(float(rng.uniform(0.5, 2.0)) * rng.choice([-1, 1]), 3)
        b = round(float(rng.uniform(0.5, 2.0)) * rng.choice([-1, 1]), 3)
        for truth, candidate, roles in _templates(a, b):
            tree = expr.from_infix(truth)
            spec = EquationSpec.from_tree(tree, 3, [(0.1, 5.0)] * 3, ["add", "sub", "mul", "sin", "const"])
            oracle = Oracle(spec, OracleConfig(seed=int(rng.integers(2**31))))
            out.append(FreezeCase(oracle, candidate, roles))
    return out[:n]


ROUND_ONE = ControlSpec([1, 2], [0])
