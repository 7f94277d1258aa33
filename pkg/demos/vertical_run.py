"""Recover (x1 + x2) * (x3 + x4) one variable at a time and print each round."""

import sys

import numpy as np

from vsr import expr
from vsr.gp import GpConfig
from vsr.oracle import EquationSpec, Oracle, OracleConfig
from vsr.vertical import VsrConfig, run_vsr

regressor = sys.argv[1] if len(sys.argv) > 1 else "gp"
ops = ["add", "sub", "mul", "div"]
truth = expr.from_infix("(x1 + x2) * (x3 + x4)")
oracle = Oracle(EquationSpec.from_tree(truth, 4, [(0.1, 5.0)] * 4, ops + ["const"]), OracleConfig(seed=1))


def show(tree):
    def tok(n):
        if n.name == "var":
            s = f"x{n.index + 1}"
        elif n.name == "const":
            s = {"summary": "S", "standalone": f"{n.value:.3g}"}.get(n.role, "C")
        else:
            s = n.name
        return s if n.editable else s + "*"

    return " ".join(tok(n) for n in tree.preorder())


def on_round(i, P, Q):
    print(f"round {i + 1} (x{i + 1} free): best global mse {Q[0][0]:.2e}")
    print("   top candidate:", show(P[0]), "   (* = locked, S = summary constant)")


cfg = VsrConfig(regressor=regressor, gp=GpConfig(pool_size=30))
result = run_vsr(oracle, ops, cfg, np.random.default_rng(0), on_round)
print("result:", expr.to_infix(result.best))
print("evaluations:", result.evaluations, " oracle queries:", oracle.query_count)
