"""Price tables, buy-and-hold portfolio paths and random portfolio weights."""
from __future__ import annotations

import csv
import datetime as _dt
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import DataError, DomainError, SizeError
from .paths import SeriesPath

MISSING = {"", "na", "nan", "null", "none"}
BUNDLED_CSV = "synthetic_prices.csv"


@dataclass(frozen=True)
class PriceTable:
    dates: tuple
    assets: tuple
    prices: np.ndarray
    dropped_rows: int = 0

    def __post_init__(self):
        p = np.array(self.prices, dtype=float)
        if p.ndim != 2 or p.shape != (len(self.dates), len(self.assets)):
            raise SizeError(f"prices of shape {p.shape} do not match "
                            f"{len(self.dates)} dates x {len(self.assets)} assets")
        if len(self.assets) < 1:
            raise SizeError("need at least one asset")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise DataError("dates must be strictly increasing")
        p.setflags(write=False)
        object.__setattr__(self, "prices", p)

    def __len__(self):
        return len(self.dates)


@dataclass(frozen=True)
class PortfolioSpec:
    weights: np.ndarray
    label: str = ""

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 1 or w.size < 1:
            raise SizeError("weights must be a nonempty vector")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise DomainError(f"weights must be nonnegative and sum to 1, got {w}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)


def load_prices(path) -> PriceTable:
    """Read ``date,<asset1>,...`` with ISO dates.

    Rows with a missing cell are dropped (counted in ``dropped_rows``);
    malformed rows, duplicate dates and nonpositive prices are errors.
    Rows are sorted by date.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if not header or header[0].strip().lower() != "date" or len(header) < 2:
            raise DataError(f"{path}: header must be 'date,<asset1>,...'")
        assets = tuple(h.strip() for h in header[1:])
        rows = {}
        dropped = 0
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: row {lineno} has {len(row)} fields, "
                                f"expected {len(header)}")
            try:
                date = _dt.date.fromisoformat(row[0].strip())
            except ValueError:
                raise DataError(f"{path}: row {lineno}: bad date {row[0]!r}") from None
            cells = [c.strip() for c in row[1:]]
            if any(c.lower() in MISSING for c in cells):
                dropped += 1
                continue
            try:
                values = [float(c) for c in cells]
            except ValueError:
                raise DataError(f"{path}: row {lineno}: unparseable price in {row!r}") from None
            if date in rows:
                raise DataError(f"{path}: row {lineno}: duplicate date {date.isoformat()}")
            if not all(np.isfinite(values)) or min(values) <= 0:
                raise DataError(f"{path}: row {lineno}: prices must be finite and positive")
            rows[date] = values
    if len(rows) < 2:
        raise SizeError(f"{path}: need at least 2 complete rows, got {len(rows)}")
    dates = tuple(sorted(rows))
    return PriceTable(dates, assets, np.array([rows[d] for d in dates]), dropped)


def write_prices(table: PriceTable, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("date",) + table.assets)
        for d, row in zip(table.dates, table.prices):
            w.writerow([d.isoformat()] + [repr(float(x)) for x in row])


def portfolio_series(table: PriceTable, spec: PortfolioSpec) -> SeriesPath:
    """Buy-and-hold level path ``sum_i w_i * price_i(t) / price_i(0)``."""
    w = spec.weights if isinstance(spec, PortfolioSpec) else PortfolioSpec(spec).weights
    if w.size != len(table.assets):
        raise SizeError(f"{w.size} weights for {len(table.assets)} assets")
    gross = table.prices / table.prices[0]
    return SeriesPath(gross @ w)


def random_weights(U: int, P: int, seed: int) -> list[PortfolioSpec]:
    """``P`` weight vectors uniform on the simplex (normalised exponentials)."""
    if U < 1 or P < 1:
        raise SizeError(f"need U >= 1 and P >= 1, got U={U}, P={P}")
    e = np.random.default_rng(seed).exponential(size=(P, U))
    w = e / e.sum(axis=1, keepdims=True)
    return [PortfolioSpec(row, label=f"p{i:03d}") for i, row in enumerate(w)]


# ---------------------------------------------------------------------------
# synthetic data

SYNTHETIC_ASSETS = ("equity", "treasury", "commodity", "reit")
# annual drift, annual vol, return AR(1), vol persistence
_SYNTH_PARAMS = np.array([
    [0.08, 0.18, 0.08, 0.97],
    [0.04, 0.06, 0.03, 0.95],
    [0.03, 0.22, 0.10, 0.97],
    [0.07, 0.20, 0.15, 0.98],
])
_SYNTH_CORR = np.array([
    [1.00, -0.20, 0.25, 0.60],
    [-0.20, 1.00, -0.10, 0.00],
    [0.25, -0.10, 1.00, 0.20],
    [0.60, 0.00, 0.20, 1.00],
])


def synthetic_prices(n_days: int = 8449, seed: int = 20220531,
                     start=_dt.date(1989, 1, 3)) -> PriceTable:
    """Four business-day price series with heterogeneous drawdown behaviour.

    Log returns follow an AR(1) in the mean with stochastic (log-AR(1))
    volatility and Student-t(4) shocks correlated across assets.
    """
    rng = np.random.default_rng(seed)
    mu, vol, phi, rho = (_SYNTH_PARAMS[:, i] for i in range(4))
    U = len(SYNTHETIC_ASSETS)
    chol = np.linalg.cholesky(_SYNTH_CORR)
    df = 4.0
    shocks = rng.standard_normal((n_days, U)) @ chol.T
    shocks *= np.sqrt((df - 2) / rng.chisquare(df, size=(n_days, 1)))
    vol_eta = 0.12
    log_v = np.zeros(U)
    r_prev = np.zeros(U)
    daily_vol = vol / np.sqrt(252)
    stat_sd = vol_eta / np.sqrt(1 - rho ** 2)
    rets = np.empty((n_days, U))
    for t in range(n_days):
        log_v = rho * log_v + vol_eta * rng.standard_normal(U)
        sigma_t = daily_vol * np.exp(log_v - 0.5 * stat_sd ** 2)
        eps = sigma_t * np.sqrt(1 - phi ** 2) * shocks[t]
        r_prev = phi * r_prev + eps
        rets[t] = mu / 252 + r_prev
    prices = 100.0 * np.exp(np.vstack([np.zeros(U), np.cumsum(rets[1:], axis=0)]))
    dates = np.busday_offset(np.datetime64(start, "D"), np.arange(n_days), roll="forward")
    dates = tuple(d.astype(_dt.date) for d in dates)
    return PriceTable(dates, SYNTHETIC_ASSETS, np.round(prices, 6))


def bundled_prices() -> PriceTable:
    """The synthetic sample shipped with the package."""
    with resources.as_file(resources.files("sigdrawdown.data") / BUNDLED_CSV) as p:
        return load_prices(p)
