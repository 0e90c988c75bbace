"""Exact drawdown functionals."""
from __future__ import annotations

from enum import Enum

import numpy as np

from .paths import as_values


class DrawdownTargetKind(str, Enum):
    TERMINAL = "terminal"
    MAXIMUM = "maximum"
    INTEGRATED = "integrated"


def drawdown_series(path) -> np.ndarray:
    """Running-maximum gap ``max_{k<=t} s_k - s_t``; works row-wise on 2-d input."""
    v = as_values(path)
    dd = np.maximum.accumulate(v, axis=-1) - v
    # the running max includes s_t, so dd >= 0 already; clamp -0.0 only
    return np.maximum(dd, 0.0)


def drawdown_target(path, kind="integrated"):
    """Scalar (or per-row) reduction of the drawdown series.

    ``integrated`` is the trapezoid rule on a unit grid.
    """
    kind = DrawdownTargetKind(kind)
    dd = drawdown_series(path)
    if kind is DrawdownTargetKind.TERMINAL:
        out = dd[..., -1]
    elif kind is DrawdownTargetKind.MAXIMUM:
        out = dd.max(axis=-1)
    else:
        out = dd[..., 1:-1].sum(axis=-1) + 0.5 * (dd[..., 0] + dd[..., -1])
    return float(out) if np.ndim(out) == 0 else out
