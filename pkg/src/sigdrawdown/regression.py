"""Feature scaling, elastic net by coordinate descent, k-fold CV."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from ._accel import njit, resolve_backend
from .errors import DomainError, SizeError

DEFAULT_LAMBDA_SCALE = 4e-5
DEFAULT_L1_L2_RATIO = 0.5


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Scaler:
    means: np.ndarray
    stds: np.ndarray
    flagged: np.ndarray  # zero-variance columns; their std is stored as 1

    def transform(self, X):
        X = np.asarray(X, dtype=float)
        Z = (X - self.means) / self.stds
        Z[..., self.flagged] = 0.0
        return Z

    def inverse(self, Z):
        return np.asarray(Z, dtype=float) * self.stds + self.means


def fit_scaler(X) -> Scaler:
    """Column means and population standard deviations."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise SizeError(f"need a 2-d matrix with at least 2 rows, got {X.shape}")
    means = X.mean(axis=0)
    stds = X.std(axis=0)
    flagged = stds <= 1e-12 * np.maximum(np.abs(means), 1e-300)
    stds = np.where(flagged, 1.0, stds)
    return Scaler(means, stds, flagged)


def apply_scaler(scaler: Scaler, X) -> np.ndarray:
    return scaler.transform(X)


@dataclass(frozen=True)
class ElasticNetModel:
    intercept: float
    weights: np.ndarray
    lambda1: float
    lambda2: float
    converged: bool = True
    n_iter: int = 0
    objective: np.ndarray = field(default=None, repr=False)

    def predict(self, X):
        return self.intercept + np.asarray(X, dtype=float) @ self.weights


@dataclass(frozen=True)
class CVConfig:
    folds: int = 10
    grid: tuple = None
    max_iter: int = 20000
    tol: float = 1e-9
    temporal: bool = False

    def __post_init__(self):
        if self.folds < 2:
            raise DomainError(f"need at least 2 folds, got {self.folds}")
        if not self.tol > 0:
            raise DomainError(f"tolerance must be positive, got {self.tol}")
        if self.grid is None:
            object.__setattr__(self, "grid", default_lambda_grid())
        for l1, l2 in self.grid:
            if l1 < 0 or l2 < 0:
                raise DomainError(f"penalties must be nonnegative, got ({l1}, {l2})")


def default_lambda_grid(scale=DEFAULT_LAMBDA_SCALE, ratio=DEFAULT_L1_L2_RATIO,
                        decades=2.0, num=9) -> tuple:
    """Pairs with ``lambda1 / lambda2 = ratio`` and ``lambda1 + lambda2``
    log-spaced over ``scale * 10**[-decades, decades]``."""
    totals = scale * 10.0 ** np.linspace(-decades, decades, num)
    return tuple((float(a * ratio / (1 + ratio)), float(a / (1 + ratio))) for a in totals)


@njit(cache=True)
def _cd_gram_nb(G, c, w, gw, yy, l1, l2, max_iter, tol, obj):
    p = w.size
    n_iter = 0
    converged = False
    for it in range(max_iter):
        max_change = 0.0
        for j in range(p):
            z = c[j] - gw[j] + G[j, j] * w[j]
            denom = G[j, j] + l2
            if denom <= 0.0:
                new = 0.0
            elif z > l1:
                new = (z - l1) / denom
            elif z < -l1:
                new = (z + l1) / denom
            else:
                new = 0.0
            delta = new - w[j]
            if delta != 0.0:
                for k in range(p):
                    gw[k] += delta * G[k, j]
                w[j] = new
                if abs(delta) > max_change:
                    max_change = abs(delta)
        n_iter = it + 1
        if obj.size > 0:
            s = 0.5 * yy
            for j in range(p):
                s += -c[j] * w[j] + 0.5 * w[j] * gw[j] + l1 * abs(w[j]) + 0.5 * l2 * w[j] * w[j]
            obj[it] = s
        if max_change < tol:
            converged = True
            break
    return n_iter, converged


def _cd_gram_np(G, c, w, gw, yy, l1, l2, max_iter, tol, obj):
    p = w.size
    n_iter = 0
    converged = False
    diag = np.diag(G)
    for it in range(max_iter):
        max_change = 0.0
        for j in range(p):
            z = c[j] - gw[j] + diag[j] * w[j]
            denom = diag[j] + l2
            new = 0.0 if denom <= 0 else np.sign(z) * max(abs(z) - l1, 0.0) / denom
            delta = new - w[j]
            if delta != 0.0:
                gw += delta * G[:, j]
                w[j] = new
                max_change = max(max_change, abs(delta))
        n_iter = it + 1
        if obj.size > 0:
            obj[it] = (0.5 * yy - c @ w + 0.5 * w @ gw + l1 * np.abs(w).sum()
                       + 0.5 * l2 * w @ w)
        if max_change < tol:
            converged = True
            break
    return n_iter, converged


@dataclass
class _GramProblem:
    G: np.ndarray
    c: np.ndarray
    yy: float
    x_mean: np.ndarray
    y_mean: float


def _gram_problem(X, y) -> _GramProblem:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise SizeError(f"X has shape {X.shape} but y has length {y.shape[0]}")
    n = X.shape[0]
    x_mean = X.mean(axis=0)
    y_mean = float(y.mean())
    Xc = X - x_mean
    yc = y - y_mean
    return _GramProblem(Xc.T @ Xc / n, Xc.T @ yc / n, float(yc @ yc) / n, x_mean, y_mean)


def _solve(prob: _GramProblem, l1, l2, max_iter, tol, w0=None, record=False, backend=None):
    p = prob.c.size
    w = np.zeros(p) if w0 is None else np.array(w0, dtype=float)
    gw = prob.G @ w
    obj = np.full(max_iter if record else 0, np.nan)
    kernel = _cd_gram_nb if resolve_backend(backend) == "numba" else _cd_gram_np
    n_iter, converged = kernel(prob.G, prob.c, w, gw, prob.yy, float(l1), float(l2),
                               int(max_iter), float(tol), obj)
    intercept = prob.y_mean - float(prob.x_mean @ w)
    return ElasticNetModel(intercept, w, float(l1), float(l2), bool(converged), int(n_iter),
                           obj[:n_iter] if record else None)


def fit_elastic_net(X, y, lambda1: float, lambda2: float, cfg: CVConfig = None,
                    warm_start=None, record_objective=False, backend=None) -> ElasticNetModel:
    """Minimise ``(1/2n)|y - w0 - Xw|^2 + lambda1 |w|_1 + (lambda2/2) |w|^2``.

    Cyclic coordinate descent on the Gram matrix; the intercept is not
    penalised. Stops when the largest coefficient change in a sweep drops
    below ``cfg.tol``. Running out of sweeps emits a ``ConvergenceWarning``
    and returns the last iterate with ``converged=False``.
    """
    cfg = cfg or CVConfig()
    if lambda1 < 0 or lambda2 < 0:
        raise DomainError(f"penalties must be nonnegative, got ({lambda1}, {lambda2})")
    prob = _gram_problem(X, y)
    model = _solve(prob, lambda1, lambda2, cfg.max_iter, cfg.tol, warm_start,
                   record_objective, backend)
    if not model.converged:
        warnings.warn(f"coordinate descent did not converge in {cfg.max_iter} sweeps "
                      f"(lambda1={lambda1:g}, lambda2={lambda2:g})", ConvergenceWarning)
    return model


def rmse(pred, actual) -> float:
    p = np.asarray(pred, dtype=float)
    a = np.asarray(actual, dtype=float)
    if p.shape != a.shape:
        raise SizeError(f"length mismatch: {p.shape} vs {a.shape}")
    return float(np.sqrt(np.mean((p - a) ** 2)))


def fold_indices(n: int, folds: int, temporal: bool, seed: int) -> list[np.ndarray]:
    """Validation index sets: contiguous chunks, or chunks of a seeded permutation."""
    if n < folds:
        raise SizeError(f"{n} rows cannot be split into {folds} folds")
    order = np.arange(n) if temporal else np.random.default_rng(seed).permutation(n)
    return [np.sort(chunk) for chunk in np.array_split(order, folds)]


def cross_validate(X, y, cfg: CVConfig = None, seed: int = 0, backend=None):
    """Pick the penalty pair with the lowest mean validation RMSE.

    Returns ``((lambda1, lambda2), table)`` where ``table`` holds one dict per
    grid point in grid order. Within a fold the grid is solved from the
    heaviest to the lightest penalty with warm starts.
    """
    cfg = cfg or CVConfig()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    grid = list(cfg.grid)
    order = sorted(range(len(grid)), key=lambda i: -(grid[i][0] + grid[i][1]))
    scores = np.zeros((cfg.folds, len(grid)))
    n_iters = np.zeros(len(grid), dtype=int)
    for f, val in enumerate(fold_indices(len(y), cfg.folds, cfg.temporal, seed)):
        if val.size == 0 or val.size == len(y):
            raise SizeError("degenerate fold")
        mask = np.ones(len(y), dtype=bool)
        mask[val] = False
        prob = _gram_problem(X[mask], y[mask])
        w = None
        for i in order:
            l1, l2 = grid[i]
            m = _solve(prob, l1, l2, cfg.max_iter, cfg.tol, w, backend=backend)
            w = m.weights
            n_iters[i] = max(n_iters[i], m.n_iter)
            scores[f, i] = rmse(m.predict(X[val]), y[val])
    mean = scores.mean(axis=0)
    best = int(np.argmin(mean))
    table = [dict(lambda1=grid[i][0], lambda2=grid[i][1], mean_rmse=float(mean[i]),
                  std_rmse=float(scores[:, i].std()), max_sweeps=int(n_iters[i]))
             for i in range(len(grid))]
    return grid[best], table
