"""Price paths: fractional Gaussian noise, fBM level paths, time augmentation
and overlapping blocks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericalError, SizeError

CHOLESKY_MAX_N = 1024
FBM_SCALINGS = ("step", "horizon")


@dataclass(frozen=True)
class SeriesPath:
    """Ordered price levels sampled every ``dt`` days."""

    values: np.ndarray
    dt: float = 1.0

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1 or v.size < 2:
            raise SizeError(f"a path needs at least 2 values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DomainError("path values must be finite")
        if not self.dt > 0:
            raise DomainError(f"dt must be positive, got {self.dt}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size


@dataclass(frozen=True)
class AugmentedPath:
    """Piecewise-linear path in (time, value) coordinates."""

    points: np.ndarray

    def __post_init__(self):
        p = np.array(self.points, dtype=float)
        if p.ndim != 2 or p.shape[1] != 2 or p.shape[0] < 2:
            raise SizeError(f"expected an (n>=2, 2) array of points, got {p.shape}")
        if not np.all(np.isfinite(p)):
            raise DomainError("augmented path coordinates must be finite")
        if np.any(np.diff(p[:, 0]) <= 0):
            raise DomainError("time coordinate must be strictly increasing")
        p.setflags(write=False)
        object.__setattr__(self, "points", p)

    def __len__(self):
        return self.points.shape[0]


@dataclass(frozen=True)
class FbmConfig:
    hurst: float
    n: int
    k: int
    mu: float = 0.0
    sigma: float = 1.0
    seed: int = 0
    start: float = 1.0
    scaling: str = "step"

    def __post_init__(self):
        if not 0.0 < self.hurst < 1.0:
            raise DomainError(f"Hurst exponent must lie in (0, 1), got {self.hurst}")
        if self.n < 2:
            raise SizeError(f"paths need n >= 2 points, got {self.n}")
        if self.k < 1:
            raise SizeError(f"need k >= 1 paths, got {self.k}")
        if self.sigma < 0:
            raise DomainError(f"sigma must be nonnegative, got {self.sigma}")
        if self.scaling not in FBM_SCALINGS:
            raise DomainError(f"scaling must be one of {FBM_SCALINGS}, got {self.scaling!r}")


def as_values(path) -> np.ndarray:
    """Values of a ``SeriesPath`` or anything array-like, as a float array."""
    if isinstance(path, SeriesPath):
        return path.values
    return np.asarray(path, dtype=float)


def fgn_autocovariance(hurst: float, lags) -> np.ndarray:
    """Autocovariance of unit-variance fractional Gaussian noise.

    gamma(k) = (|k+1|^{2H} - 2|k|^{2H} + |k-1|^{2H}) / 2
    """
    k = np.abs(np.asarray(lags, dtype=float))
    h2 = 2.0 * hurst
    return 0.5 * (np.abs(k + 1) ** h2 - 2.0 * k ** h2 + np.abs(k - 1) ** h2)


def _check_hurst(hurst):
    if not 0.0 < hurst < 1.0:
        raise DomainError(f"Hurst exponent must lie in (0, 1), got {hurst}")


def _cholesky_factor(hurst, n):
    gamma = fgn_autocovariance(hurst, np.arange(n))
    idx = np.arange(n)
    cov = gamma[np.abs(idx[:, None] - idx[None, :])]
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"fGn covariance is not positive definite for H={hurst}, n={n}") from exc


def _circulant_eigenvalues(hurst, n):
    gamma = fgn_autocovariance(hurst, np.arange(n + 1))
    row = np.concatenate([gamma, gamma[-2:0:-1]])
    lam = np.fft.fft(row).real
    if np.any(lam < -1e-10 * lam.max()):
        raise NumericalError(
            f"circulant embedding has negative eigenvalues for H={hurst}, n={n}")
    return np.clip(lam, 0.0, None)


def fgn_batch(hurst: float, n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """``k`` independent fGn sequences of length ``n``, shape ``(k, n)``.

    Exact Cholesky sampling up to ``CHOLESKY_MAX_N`` points, circulant
    embedding (Davies-Harte) beyond that.
    """
    _check_hurst(hurst)
    if n < 1:
        raise SizeError(f"need n >= 1 increments, got {n}")
    if n <= CHOLESKY_MAX_N:
        chol = _cholesky_factor(hurst, n)
        z = rng.standard_normal((k, n))
        return z @ chol.T
    lam = _circulant_eigenvalues(hurst, n)
    m = lam.size
    w = rng.standard_normal((k, m)) + 1j * rng.standard_normal((k, m))
    y = np.fft.fft(np.sqrt(lam / m) * w, axis=1)
    # real and imaginary parts are independent exact samples; use the real one
    return y[:, :n].real


def generate_fgn(hurst: float, n: int, seed: int) -> np.ndarray:
    """One fGn sequence of length ``n``; deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    return fgn_batch(hurst, n, 1, rng)[0]


def fbm_increment_scale(cfg: FbmConfig) -> float:
    """Multiplier applied to unit-variance fGn.

    ``"step"``: every increment has standard deviation ``sigma``.
    ``"horizon"``: the path is fBM sampled on the unit time interval, so
    increments scale like ``(1/(n-1))**H``; the factor ``sigma * sqrt(n-1)``
    keeps H = 0.5 identical to the step convention. Under this convention
    the terminal variance does not depend on H.
    """
    if cfg.scaling == "step":
        return cfg.sigma
    steps = cfg.n - 1
    return cfg.sigma * steps ** (0.5 - cfg.hurst)


def generate_fbm_paths(cfg: FbmConfig) -> np.ndarray:
    """Level paths ``start + cumsum(mu + scale * fGn)``, shape ``(k, n)``.

    Each path has ``n`` points and ``n - 1`` increments; the first point is
    ``cfg.start``. See :func:`fbm_increment_scale` for ``scale``.
    """
    rng = np.random.default_rng(cfg.seed)
    incr = cfg.mu + fbm_increment_scale(cfg) * fgn_batch(cfg.hurst, cfg.n - 1, cfg.k, rng)
    out = np.empty((cfg.k, cfg.n))
    out[:, 0] = cfg.start
    np.cumsum(incr, axis=1, out=out[:, 1:])
    out[:, 1:] += cfg.start
    return out


def time_grid(n: int) -> np.ndarray:
    """Normalised time stamps ``i / (n - 1)`` on [0, 1]."""
    if n < 2:
        raise SizeError(f"need at least 2 points, got {n}")
    return np.arange(n) / (n - 1)


def time_augment(path) -> AugmentedPath:
    """Embed a scalar path as (normalised time, value) points."""
    v = as_values(path)
    return AugmentedPath(np.column_stack([time_grid(v.size), v]))


def make_blocks(path, tau: int, rebase: bool = False) -> np.ndarray:
    """Overlapping windows of ``tau`` consecutive values.

    Returns ``len(path) - tau`` blocks, block ``b`` being ``values[b:b+tau]``.
    With ``rebase`` every block is divided by its first value.
    """
    v = as_values(path)
    if tau < 2:
        raise SizeError(f"block length tau must be >= 2, got {tau}")
    if v.size <= tau:
        raise SizeError(f"series of length {v.size} is too short for tau={tau}")
    idx = np.arange(v.size - tau)[:, None] + np.arange(tau)[None, :]
    blocks = v[idx]
    if rebase:
        if np.any(blocks[:, 0] == 0):
            raise DomainError("cannot rebase a block starting at zero")
        blocks = blocks / blocks[:, :1]
    return blocks


def inf_distance(a, b) -> float:
    """Sup-norm distance between two equal-length paths."""
    x, y = as_values(a), as_values(b)
    if x.shape != y.shape:
        raise SizeError(f"length mismatch: {x.shape} vs {y.shape}")
    return float(np.max(np.abs(x - y)))


def paths_to_csv(paths, fh) -> None:
    """Write one row per path with columns ``t0..t{n-1}``."""
    arr = np.atleast_2d(np.asarray(paths, dtype=float))
    fh.write(",".join(f"t{i}" for i in range(arr.shape[1])) + "\n")
    for row in arr:
        fh.write(",".join(repr(float(x)) for x in row) + "\n")


def paths_from_csv(fh) -> np.ndarray:
    header = fh.readline()
    if not header.startswith("t0"):
        raise SizeError("path CSV must start with a t0,t1,... header")
    rows = [list(map(float, line.split(","))) for line in fh if line.strip()]
    return np.array(rows, dtype=float)
