"""Distribution comparisons between synthetic and empirical drawdowns."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .drawdown import drawdown_target
from .errors import DomainError, SizeError
from .paths import FbmConfig, generate_fbm_paths

TAIL_LEVELS = (0.90, 0.95, 0.99)


def _sample(x, name="sample"):
    a = np.asarray(x, dtype=float).ravel()
    if a.size == 0:
        raise SizeError(f"{name} is empty")
    return a


def ks_statistic(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov statistic ``sup |F_a - F_b|``."""
    a = np.sort(_sample(a, "first sample"))
    b = np.sort(_sample(b, "second sample"))
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def quantiles(x, levels) -> np.ndarray:
    """Linear interpolation between order statistics (``type 7``)."""
    q = np.asarray(levels, dtype=float)
    if np.any((q < 0) | (q > 1)):
        raise DomainError(f"quantile levels must lie in [0, 1], got {levels}")
    return np.quantile(_sample(x), q, method="linear")


def qq_points(a, b, levels=None) -> np.ndarray:
    """Rows ``(q, quantile_a(q), quantile_b(q))``."""
    if levels is None:
        levels = np.linspace(0.01, 0.99, 99)
    q = np.asarray(levels, dtype=float)
    return np.column_stack([q, quantiles(a, q), quantiles(b, q)])


@dataclass(frozen=True)
class DistComparison:
    ks: float
    qq: np.ndarray
    tail_levels: tuple
    tail_synthetic: np.ndarray
    tail_actual: np.ndarray

    @property
    def tail_abs_error(self) -> np.ndarray:
        return np.abs(self.tail_synthetic - self.tail_actual)


def compare(synthetic, actual, levels=None) -> DistComparison:
    return DistComparison(ks_statistic(synthetic, actual), qq_points(synthetic, actual, levels),
                          TAIL_LEVELS, quantiles(synthetic, TAIL_LEVELS),
                          quantiles(actual, TAIL_LEVELS))


def increment_sigma(blocks) -> float:
    """Pooled standard deviation of one-step increments of the blocks."""
    b = np.atleast_2d(np.asarray(blocks, dtype=float))
    return float(np.diff(b, axis=1).std())


def bm_baseline(sigma: float, n: int, k: int, seed: int, mu: float = 0.0,
                kind="integrated") -> np.ndarray:
    """Drawdown targets of ``k`` Brownian paths with volatility ``sigma``."""
    paths = generate_fbm_paths(FbmConfig(0.5, n, k, mu, sigma, seed=seed))
    return drawdown_target(paths, kind)


def histogram(x, bins=50, range_=None):
    counts, edges = np.histogram(_sample(x), bins=bins, range=range_)
    return edges, counts


def _write(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def write_qq_csv(path, synthetic, actual, levels=None) -> None:
    _write(path, ("q", "synthetic", "actual"), qq_points(synthetic, actual, levels))


def write_scatter_csv(path, actual, synthetic) -> None:
    """Paired drawdowns, e.g. a held-out block and its reconstruction."""
    a, s = _sample(actual), _sample(synthetic)
    if a.size != s.size:
        raise SizeError(f"scatter needs paired samples, got {a.size} and {s.size}")
    _write(path, ("actual", "synthetic"), zip(a, s))


def write_histogram_csv(path, samples: dict, bins=50) -> None:
    allv = np.concatenate([_sample(v) for v in samples.values()])
    rng = (float(allv.min()), float(allv.max()))
    names = list(samples)
    hists = [histogram(samples[k], bins, rng) for k in names]
    edges = hists[0][0]
    rows = [[edges[i], edges[i + 1]] + [int(h[1][i]) for h in hists] for i in range(bins)]
    _write(path, ["lo", "hi"] + names, rows)
