"""Regenerate the bundled equation files under src/vsr/data/.

Livermore2 equations are read from livermore2_n4.txt (id <TAB> infix) and
sampled on (0.1, 5) for every variable. The ideal-gas file follows the
documented data-oracle layout.
"""

from pathlib import Path

from vsr import expr
from vsr.oracle import EquationSpec, save_equation

HERE = Path(__file__).parent
DATA = HERE.parent / "src" / "vsr" / "data"
BASE_OPS = ["add", "sub", "mul", "div"]


def main() -> None:
    gas = expr.from_infix("8.31*x1*(x2/x3)")
    spec = EquationSpec.from_tree(
        gas, 3, [(0.01, 1e4), (10.0, 1e3), (1e-3, 1e4)], BASE_OPS + ["const"]
    )
    save_equation(spec, DATA / "feynman" / "I.39.22.json")

    for line in (HERE / "livermore2_n4.txt").read_text().splitlines():
        eq_id, infix = line.split("\t")
        tree = expr.from_infix(infix)
        used = {n.name for n in tree.preorder()} - {"var", "const"}
        ops = BASE_OPS + sorted(used - set(BASE_OPS)) + ["const"]
        spec = EquationSpec.from_tree(tree, 4, [(0.1, 5.0)] * 4, ops)
        save_equation(spec, DATA / "livermore2" / f"{eq_id}.json")


if __name__ == "__main__":
    main()
