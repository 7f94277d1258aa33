"""Vertical symbolic regression: grow an expression one controlled variable at a time."""

from .expr import Node, evaluate, from_infix, from_preorder, to_infix, to_preorder
from .gp import GpConfig, run_gp
from .mcts import MctsConfig, run_mcts
from .metrics import MetricReport, accuracy_at, compute_metrics
from .optimize import cv_experiment, fit_constants
from .oracle import ControlSpec, EquationSpec, Oracle, OracleConfig, load_equation, save_equation
from .vertical import VsrConfig, VsrResult, freeze_equation, run_vsr

__version__ = "0.1.0"

__all__ = [
    "Node",
    "evaluate",
    "from_infix",
    "from_preorder",
    "to_infix",
    "to_preorder",
    "GpConfig",
    "run_gp",
    "MctsConfig",
    "run_mcts",
    "MetricReport",
    "accuracy_at",
    "compute_metrics",
    "cv_experiment",
    "fit_constants",
    "ControlSpec",
    "EquationSpec",
    "Oracle",
    "OracleConfig",
    "load_equation",
    "save_equation",
    "VsrConfig",
    "VsrResult",
    "freeze_equation",
    "run_vsr",
]
