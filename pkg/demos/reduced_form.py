"""Control-variable trials on x1*x3 - x2*x4: with x2, x3, x4 held fixed the data
look like C1*x1 - C2, and the fitted constants move from trial to trial."""

import numpy as np

from vsr import expr
from vsr.optimize import cv_experiment
from vsr.oracle import ControlSpec, EquationSpec, Oracle, OracleConfig
from vsr.vertical import freeze_equation

truth = expr.from_infix("x1 * x3 - x2 * x4")
oracle = Oracle(EquationSpec.from_tree(truth, 4, [(0.1, 1.0)] * 4, ["add", "sub", "mul", "const"]), OracleConfig(seed=0))
phi = expr.op("sub", expr.op("mul", expr.const(), expr.var(0)), expr.const())

out = cv_experiment(phi, ControlSpec([1, 2, 3], [0]), oracle, K=5, rng=np.random.default_rng(0))
for k, (values, c, score) in enumerate(zip(out.controlled_values, out.constants, out.scores)):
    fixed = ", ".join(f"x{i + 1}={v:.3f}" for i, v in values.items())
    print(f"trial {k}: {fixed}  ->  C1={c[0]:.4f}  C2={c[1]:.4f}  mse={score:.1e}")

frozen, decision = freeze_equation(phi, out)
print("frozen:", decision.structure_frozen, "roles:", decision.roles, "variances:", np.round(decision.variances, 4))
