"""Fitting open constants and running control-variable experiments."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import expr
from .expr import Node
from .oracle import ControlSpec, Oracle

OPTIMIZERS = ("bfgs", "nelder-mead")
_PENALTY = 1e300


@dataclass
class FitResult:
    fitness: float  # batch MSE, lower is better; inf when the fit is non-finite
    constants: np.ndarray
    converged: bool
    iterations: int

    def __post_init__(self):
        if not math.isfinite(self.fitness):
            self.fitness = math.inf
            self.converged = False


@dataclass
class ExperimentOutcome:
    scores: np.ndarray  # (K,)
    constants: np.ndarray  # (K, L)
    fitted: list[Node] = field(repr=False)
    controlled_values: list[dict[int, float]] = field(default_factory=list, repr=False)

    @property
    def trials(self) -> int:
        return len(self.scores)


def mse_loss(f, XT: np.ndarray, y: np.ndarray, c) -> float:
    r = f(XT, c) - y
    value = float(r @ r) / y.size
    return value if math.isfinite(value) else math.inf


def central_gradient(loss, c: np.ndarray) -> np.ndarray:
    """Central differences with step 1e-6 * max(1, |c_j|)."""
    c = np.asarray(c, dtype=float)
    g = np.empty_like(c)
    for j in range(c.size):
        h = 1e-6 * max(1.0, abs(c[j]))
        up = c.copy()
        down = c.copy()
        up[j] += h
        down[j] -= h
        g[j] = (loss(up) - loss(down)) / (2.0 * h)
    return g


class _Objective:
    """Batch MSE of a compiled tree; the gradient evaluates all 2L perturbed
    constant vectors in one broadcast call."""

    def __init__(self, f, XT: np.ndarray, y: np.ndarray):
        self.f, self.XT, self.y = f, XT, y
        self.n = y.size

    def __call__(self, c) -> float:
        return mse_loss(self.f, self.XT, self.y, c)

    def bounded(self, c) -> float:
        v = self(c)
        return v if v < _PENALTY else _PENALTY

    def gradient(self, c) -> np.ndarray:
        c = np.asarray(c, dtype=float)
        L = c.size
        h = 1e-6 * np.maximum(1.0, np.abs(c))
        C = np.repeat(c[:, None], 2 * L, axis=1)
        idx = np.arange(L)
        C[idx, idx] += h
        C[idx, L + idx] -= h
        pred = self.f(self.XT, C[:, :, None])
        if pred.shape != (2 * L, self.n):
            pred = np.broadcast_to(pred, (2 * L, self.n))
        r = pred - self.y
        losses = np.einsum("ij,ij->i", r, r) / self.n
        losses[~(losses < _PENALTY)] = _PENALTY
        return (losses[:L] - losses[L:]) / (2.0 * h)


def bfgs(fun, grad, x0: np.ndarray, max_iter: int = 500, gtol: float = 1e-10, ftol: float = 1e-10):
    """Quasi-Newton minimisation with an inverse-Hessian BFGS update and
    backtracking Armijo line search.

    Stops on a small gradient, a relative decrease below ``ftol``, an exact
    zero, or a failed line search. Returns ``(x, f, converged, iterations)``.
    """
    x = np.asarray(x0, dtype=float).copy()
    n = x.size
    fx = fun(x)
    g = grad(x)
    H = np.eye(n)
    first = True
    for it in range(1, max_iter + 1):
        if fx == 0.0 or np.max(np.abs(g)) <= gtol:
            return x, fx, True, it - 1
        p = -H @ g
        slope = float(g @ p)
        if not slope < 0.0:
            H = np.eye(n)
            p = -g
            slope = -float(g @ g)
        t = 1.0
        while True:
            x_new = x + t * p
            f_new = fun(x_new)
            if f_new <= fx + 1e-4 * t * slope:
                break
            t *= 0.5
            if t < 1e-14:
                return x, fx, False, it
        g_new = grad(x_new)
        s = x_new - x
        yv = g_new - g
        sy = float(s @ yv)
        if sy > 1e-300:
            if first:
                H *= sy / float(yv @ yv)
                first = False
            rho = 1.0 / sy
            Hy = H @ yv
            H += (rho * rho * float(yv @ Hy) + rho) * np.outer(s, s) - rho * (np.outer(Hy, s) + np.outer(s, Hy))
        decrease = fx - f_new
        x, fx, g = x_new, f_new, g_new
        if decrease <= ftol * max(fx, 1e-300):
            return x, fx, True, it
    return x, fx, False, max_iter


def _local_fit(loss: _Objective, x0: np.ndarray, optimizer: str, max_iter: int):
    """One local run; returns (best_x, best_loss, converged, iterations).
    BFGS falls back to Nelder-Mead when it makes no progress."""
    start = loss(x0)
    iterations = 0
    best_x, best_f, converged = x0, start, False
    if optimizer == "bfgs":
        x, f, ok, nit = bfgs(loss.bounded, loss.gradient, x0, max_iter)
        iterations += nit
        f = loss(x)
        if f < best_f:
            best_x, best_f, converged = x, f, ok
    if optimizer == "nelder-mead" or not best_f < start:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = minimize(
                loss.bounded,
                best_x,
                method="Nelder-Mead",
                options={"maxiter": max_iter, "xatol": 1e-12, "fatol": 1e-16},
            )
        iterations += int(res.nit)
        f = loss(res.x)
        if f <= best_f:
            best_x, best_f, converged = res.x, f, bool(res.success)
    return np.asarray(best_x, dtype=float), best_f, converged, iterations


def fit_constants(
    tree: Node,
    X: np.ndarray,
    y: np.ndarray,
    optimizer: str = "bfgs",
    max_iter: int = 500,
    restarts: int = 3,
    rng: np.random.Generator | None = None,
    restart_tol: float = 1e-12,
) -> FitResult:
    """Fit the open constants of ``tree`` to minimise batch MSE, in place.

    The first start uses the slot values already in the tree (uniform[-1, 1]
    for unset ones). Up to ``restarts`` further starts are drawn from
    uniform[-1, 1] while the best loss is above ``restart_tol``.
    """
    if optimizer not in OPTIMIZERS:
        raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
    rng = rng if rng is not None else np.random.default_rng(0)
    XT = np.ascontiguousarray(np.asarray(X, dtype=float).T)
    y = np.asarray(y, dtype=float)
    f = expr.compile_tree(tree)
    slots = expr.constant_slots(tree)
    if not slots:
        with np.errstate(all="ignore"):
            return FitResult(mse_loss(f, XT, y, ()), np.empty(0), True, 0)

    loss = _Objective(f, XT, y)
    x0 = expr.get_constants(tree)
    unset = np.isnan(x0)
    x0[unset] = rng.uniform(-1.0, 1.0, size=int(unset.sum()))

    with np.errstate(all="ignore"):
        best = _local_fit(loss, x0, optimizer, max_iter)
        total_iter = best[3]
        for _ in range(restarts):
            if best[1] <= restart_tol:
                break
            trial = _local_fit(loss, rng.uniform(-1.0, 1.0, size=len(slots)), optimizer, max_iter)
            total_iter += trial[3]
            if trial[1] < best[1]:
                best = trial
    x, fitness, converged, _ = best
    expr.set_constants(tree, x)
    return FitResult(fitness, x.copy(), converged, total_iter)


def cv_experiment(
    tree: Node,
    ctrl: ControlSpec,
    oracle: Oracle,
    K: int = 5,
    batch: int = 256,
    optimizer: str = "bfgs",
    rng: np.random.Generator | None = None,
    controlled_values: list[dict[int, float]] | None = None,
    max_iter: int = 500,
    restarts: int = 3,
    stop_above: float | None = None,
) -> ExperimentOutcome:
    """K trials: each draws a fresh controlled batch and fits a fresh copy of ``tree``.

    ``controlled_values[k]`` pins the controlled variables of trial ``k``.
    With ``stop_above`` set, trials end early once a score exceeds it; the
    outcome then holds fewer than K rows.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    rng = rng if rng is not None else np.random.default_rng(0)
    L = expr.count_open_constants(tree)
    scores = np.empty(K)
    C = np.empty((K, L))
    fitted = []
    used_values = []
    for k in range(K):
        pinned = controlled_values[k] if controlled_values is not None else None
        X, y, values = oracle.sample_trial(ctrl, batch, pinned)
        candidate = tree.copy()
        result = fit_constants(candidate, X, y, optimizer, max_iter, restarts, rng)
        scores[k] = result.fitness
        C[k] = result.constants
        fitted.append(candidate)
        used_values.append(values)
        if stop_above is not None and not result.fitness <= stop_above:
            k += 1
            return ExperimentOutcome(scores[:k], C[:k], fitted, used_values)
    return ExperimentOutcome(scores, C, fitted, used_values)


@dataclass
class FitSettings:
    """Constant-fitting settings used inside a search loop.

    Lighter than the :func:`fit_constants` defaults: a search only needs a
    ranking, and the freeze and global refits use the full settings.
    """

    optimizer: str = "bfgs"
    max_iter: int = 100
    restarts: int = 1
    batch: int = 256
    polish_below: float | None = 1e-6  # NMSE under which a fit is rerun at full length
    polish_iter: int = 500

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if self.batch < 2:
            raise ValueError("batch must be >= 2")


class CachedFitter:
    """Fits candidates against the current data batch of a sampler.

    Results are remembered by structure (:meth:`Node.signature`), so a
    structure seen before is not fitted again; it inherits the earlier
    fitness and constants. ``evaluations`` counts every scoring request and
    ``fits`` only the ones that ran the optimizer.
    """

    def __init__(self, sampler, settings: FitSettings | None = None, rng: np.random.Generator | None = None):
        self.sampler = sampler
        self.settings = settings or FitSettings()
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.cache: dict[str, tuple[float, np.ndarray, float]] = {}
        self.evaluations = 0
        self.fits = 0
        self.X = self.y = None
        self._var = 0.0

    def new_batch(self) -> None:
        self.X, self.y, _ = self.sampler(self.settings.batch)
        self._var = float(np.var(self.y))

    def score(self, tree: Node) -> tuple[float, float]:
        """Fit ``tree`` in place; returns ``(mse, reward)`` with reward = 1/(1+NMSE)."""
        if self.X is None:
            self.new_batch()
        self.evaluations += 1
        key = tree.signature()
        hit = self.cache.get(key)
        if hit is None:
            s = self.settings
            result = fit_constants(tree, self.X, self.y, s.optimizer, s.max_iter, s.restarts, self.rng)
            if s.polish_below is not None and result.fitness <= s.polish_below * max(self._var, 1e-300):
                # near-exact fits are often stalled in a narrow valley; continue from there
                polished = fit_constants(tree, self.X, self.y, s.optimizer, s.polish_iter, 0, self.rng)
                if polished.fitness < result.fitness:
                    result = polished
                else:
                    expr.set_constants(tree, result.constants)
            hit = (result.fitness, result.constants, reward_from_mse(result.fitness, self._var))
            self.cache[key] = hit
            self.fits += 1
        else:
            expr.set_constants(tree, hit[1])
        return hit[0], hit[2]


def reward_from_mse(mse: float, var: float) -> float:
    """1/(1+NMSE); falls back to 1/(1+MSE) when the batch has no spread."""
    if not math.isfinite(mse):
        return 0.0
    return 1.0 / (1.0 + (mse / var if var > 0.0 else mse))
