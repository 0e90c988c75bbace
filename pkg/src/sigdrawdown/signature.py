"""Truncated signatures of piecewise-linear paths.

Coefficients are stored densely. Words of length ``m`` over the letters
``1..d`` are ordered level by level and lexicographically inside a level,
which is the row-major flattening of the level-``m`` tensor. For
time-augmented paths letter 1 is time and letter 2 is the value.

Internally the kernels work on "full" vectors that carry the level-0
coefficient at index 0; :func:`features` drops it.

Every hot routine has a numba kernel (``*_nb``) and a batched numpy
implementation (``*_np``); ``backend=None`` picks one according to
``SIGDRAWDOWN_NUMBA``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import factorial

import numpy as np

from ._accel import njit, resolve_backend
from .errors import DomainError, SizeError
from .paths import AugmentedPath, time_grid

WORD_ORDER = "level-lex;time=1,value=2"


def num_terms(d: int, M: int) -> int:
    """Number of signature coefficients of levels 1..M over ``d`` letters."""
    if d < 1 or M < 1:
        raise DomainError(f"need d >= 1 and M >= 1, got d={d}, M={M}")
    return sum(d ** m for m in range(1, M + 1))


def level_offsets(d: int, M: int) -> np.ndarray:
    """Start index of every level inside a full vector, plus the end."""
    sizes = [d ** m for m in range(M + 1)]
    return np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)


def words(d: int, M: int) -> list[tuple[int, ...]]:
    """Words in feature order (level 0 excluded)."""
    out = []
    for m in range(1, M + 1):
        out.extend(itertools.product(range(1, d + 1), repeat=m))
    return out


@dataclass(frozen=True)
class TruncatedSignature:
    """Signature levels 1..M; level 0 is implicitly 1."""

    d: int
    M: int
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.shape != (num_terms(self.d, self.M),):
            raise SizeError(
                f"expected {num_terms(self.d, self.M)} coefficients, got {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    def level(self, m: int) -> np.ndarray:
        """Level-``m`` block as a flat array (``m = 0`` gives ``[1.0]``)."""
        if m == 0:
            return np.ones(1)
        off = level_offsets(self.d, self.M)
        return self.coeffs[off[m] - 1:off[m + 1] - 1]

    def full(self) -> np.ndarray:
        return np.concatenate([[1.0], self.coeffs])

    @classmethod
    def from_full(cls, d, M, full):
        return cls(d, M, np.asarray(full)[1:])

    @classmethod
    def identity(cls, d, M):
        return cls(d, M, np.zeros(num_terms(d, M)))


@dataclass(frozen=True)
class SignatureGradient:
    """Jacobian of the feature vector: rows are words, columns path points."""

    jacobian: np.ndarray


# ---------------------------------------------------------------------------
# numba kernels

@njit(cache=True)
def _mul_nb(a, b, out, d, M, off):
    out[:] = 0.0
    out[0] = a[0] * b[0]
    for m in range(1, M + 1):
        base = off[m]
        for i in range(m + 1):
            j = m - i
            nj = d ** j
            oi = off[i]
            oj = off[j]
            for u in range(d ** i):
                au = a[oi + u]
                if au == 0.0:
                    continue
                row = base + u * nj
                for v in range(nj):
                    out[row + v] += au * b[oj + v]


@njit(cache=True)
def _exp_nb(h, out, d, M, off):
    out[:] = 0.0
    out[0] = 1.0
    for m in range(1, M + 1):
        prev = off[m - 1]
        cur = off[m]
        for u in range(d ** (m - 1)):
            pu = out[prev + u] / m
            for c in range(d):
                out[cur + u * d + c] = pu * h[c]


@njit(cache=True)
def _dexp_nb(h, coord, ex, out, d, M, off):
    # derivative of exp(h) along the unit vector e_coord; ex = exp(h)
    out[:] = 0.0
    if M >= 1:
        out[off[1] + coord] = 1.0
    for m in range(2, M + 1):
        prev = off[m - 1]
        cur = off[m]
        for u in range(d ** (m - 1)):
            du = out[prev + u] / m
            for c in range(d):
                out[cur + u * d + c] = du * h[c]
            out[cur + u * d + coord] += ex[prev + u] / m


@njit(cache=True)
def _append_segment_nb(sig, h, d, M, off, buf_a, buf_b):
    # sig <- sig (x) exp(h), top level first so lower levels are still old
    for m in range(M, 0, -1):
        src = buf_a
        dst = buf_b
        src[0] = sig[0]
        size = 1
        for j in range(1, m + 1):
            scale = 1.0 / (m - j + 1)
            oj = off[j]
            for u in range(size):
                bu = src[u] * scale
                for c in range(d):
                    dst[u * d + c] = bu * h[c] + sig[oj + u * d + c]
            size *= d
            src, dst = dst, src
        om = off[m]
        for u in range(size):
            sig[om + u] = src[u]


@njit(cache=True)
def _batch_signature_nb(paths, M, off):
    n_paths, n_pts, d = paths.shape
    total = off[M + 1]
    out = np.zeros((n_paths, total))
    width = d ** M
    buf_a = np.empty(width)
    buf_b = np.empty(width)
    h = np.empty(d)
    for p in range(n_paths):
        sig = out[p]
        sig[0] = 1.0
        for k in range(1, n_pts):
            for c in range(d):
                h[c] = paths[p, k, c] - paths[p, k - 1, c]
            _append_segment_nb(sig, h, d, M, off, buf_a, buf_b)
    return out


@njit(cache=True)
def _batch_jacobian_nb(paths, M, off, coord):
    n_paths, n_pts, d = paths.shape
    total = off[M + 1]
    n_seg = n_pts - 1
    jac = np.zeros((n_paths, total - 1, n_pts))
    ex = np.empty((n_seg, total))
    prefix = np.empty((n_seg + 1, total))
    suffix = np.empty((n_seg + 2, total))
    dex = np.empty(total)
    tmp = np.empty(total)
    g = np.empty((n_seg + 2, total))
    h = np.empty(d)
    for p in range(n_paths):
        for k in range(n_seg):
            for c in range(d):
                h[c] = paths[p, k + 1, c] - paths[p, k, c]
            _exp_nb(h, ex[k], d, M, off)
        prefix[0, :] = 0.0
        prefix[0, 0] = 1.0
        for k in range(n_seg):
            _mul_nb(prefix[k], ex[k], prefix[k + 1], d, M, off)
        suffix[n_seg, :] = 0.0
        suffix[n_seg, 0] = 1.0
        for k in range(n_seg - 1, -1, -1):
            _mul_nb(ex[k], suffix[k + 1], suffix[k], d, M, off)
        # g[k+1] = d sig / d h_k[coord] for segment k = 0..n_seg-1
        g[0, :] = 0.0
        g[n_seg + 1, :] = 0.0
        for k in range(n_seg):
            for c in range(d):
                h[c] = paths[p, k + 1, c] - paths[p, k, c]
            _dexp_nb(h, coord, ex[k], dex, d, M, off)
            _mul_nb(prefix[k], dex, tmp, d, M, off)
            _mul_nb(tmp, suffix[k + 1], g[k + 1], d, M, off)
        # point j enters segment j-1 with + and segment j with -
        for j in range(n_pts):
            for w in range(total - 1):
                jac[p, w, j] = g[j, w + 1] - g[j + 1, w + 1]
    return jac


# ---------------------------------------------------------------------------
# numpy implementations, vectorised over the leading batch axis

def _mul_np(a, b, d, M, off):
    n = a.shape[0]
    out = np.zeros_like(a)
    out[:, 0] = a[:, 0] * b[:, 0]
    for m in range(1, M + 1):
        acc = np.zeros((n, d ** m))
        for i in range(m + 1):
            j = m - i
            ai = a[:, off[i]:off[i + 1]]
            bj = b[:, off[j]:off[j + 1]]
            acc += (ai[:, :, None] * bj[:, None, :]).reshape(n, -1)
        out[:, off[m]:off[m + 1]] = acc
    return out


def _exp_np(h, d, M, off):
    n = h.shape[0]
    out = np.zeros((n, off[M + 1]))
    out[:, 0] = 1.0
    for m in range(1, M + 1):
        prev = out[:, off[m - 1]:off[m]]
        out[:, off[m]:off[m + 1]] = (prev[:, :, None] * h[:, None, :]).reshape(n, -1) / m
    return out


def _dexp_np(h, coord, ex, d, M, off):
    n = h.shape[0]
    out = np.zeros_like(ex)
    e = np.zeros(d)
    e[coord] = 1.0
    if M >= 1:
        out[:, off[1] + coord] = 1.0
    for m in range(2, M + 1):
        dprev = out[:, off[m - 1]:off[m]]
        eprev = ex[:, off[m - 1]:off[m]]
        lvl = dprev[:, :, None] * h[:, None, :] + eprev[:, :, None] * e[None, None, :]
        out[:, off[m]:off[m + 1]] = lvl.reshape(n, -1) / m
    return out


def _batch_signature_np(paths, M, off):
    n_paths, n_pts, d = paths.shape
    levels = [np.ones((n_paths, 1))] + [np.zeros((n_paths, d ** m)) for m in range(1, M + 1)]
    incr = np.diff(paths, axis=1)
    for k in range(n_pts - 1):
        h = incr[:, k, :]
        for m in range(M, 0, -1):
            acc = levels[0]
            for j in range(1, m + 1):
                acc = (acc[:, :, None] * h[:, None, :]).reshape(n_paths, -1) / (m - j + 1)
                acc = acc + levels[j]
            levels[m] = acc
    return np.concatenate(levels, axis=1)


def _batch_jacobian_np(paths, M, off, coord):
    n_paths, n_pts, d = paths.shape
    n_seg = n_pts - 1
    total = off[M + 1]
    incr = np.diff(paths, axis=1)
    ex = [_exp_np(incr[:, k], d, M, off) for k in range(n_seg)]
    unit = np.zeros((n_paths, total))
    unit[:, 0] = 1.0
    prefix = [unit]
    for k in range(n_seg):
        prefix.append(_mul_np(prefix[-1], ex[k], d, M, off))
    suffix = [unit] * (n_seg + 1)
    for k in range(n_seg - 1, -1, -1):
        suffix[k] = _mul_np(ex[k], suffix[k + 1], d, M, off)
    zero = np.zeros((n_paths, total))
    g = [zero]
    for k in range(n_seg):
        dex = _dexp_np(incr[:, k], coord, ex[k], d, M, off)
        g.append(_mul_np(_mul_np(prefix[k], dex, d, M, off), suffix[k + 1], d, M, off))
    g.append(zero)
    g = np.stack(g, axis=2)
    return g[:, 1:, :-1] - g[:, 1:, 1:]


# ---------------------------------------------------------------------------
# public API

def _as_points(p) -> np.ndarray:
    if isinstance(p, AugmentedPath):
        return p.points
    pts = np.asarray(p, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    return pts


def _full_from_sig(sig: TruncatedSignature) -> np.ndarray:
    return sig.full()


def segment_signature(increment, M: int) -> TruncatedSignature:
    """Signature of a straight segment: the truncated tensor exponential."""
    h = np.atleast_1d(np.asarray(increment, dtype=float))
    d = h.size
    off = level_offsets(d, M)
    full = _exp_np(h[None, :], d, M, off)[0]
    return TruncatedSignature.from_full(d, M, full)


def chen_product(a: TruncatedSignature, b: TruncatedSignature,
                 backend=None) -> TruncatedSignature:
    """Truncated tensor-algebra product ``a (x) b``."""
    if a.d != b.d or a.M != b.M:
        raise SizeError(f"cannot multiply signatures of shape (d={a.d}, M={a.M}) "
                        f"and (d={b.d}, M={b.M})")
    d, M = a.d, a.M
    off = level_offsets(d, M)
    fa, fb = _full_from_sig(a), _full_from_sig(b)
    if resolve_backend(backend) == "numba":
        out = np.empty_like(fa)
        _mul_nb(fa, fb, out, d, M, off)
    else:
        out = _mul_np(fa[None], fb[None], d, M, off)[0]
    return TruncatedSignature.from_full(d, M, out)


def batch_signature(paths, M: int, backend=None) -> np.ndarray:
    """Full signature vectors (level 0 first) for ``paths`` of shape (N, L, d)."""
    pts = np.ascontiguousarray(paths, dtype=float)
    if pts.ndim != 3 or pts.shape[1] < 2:
        raise SizeError(f"expected paths of shape (N, L>=2, d), got {pts.shape}")
    if M < 1:
        raise DomainError(f"truncation level must be >= 1, got {M}")
    off = level_offsets(pts.shape[2], M)
    if resolve_backend(backend) == "numba":
        return _batch_signature_nb(pts, M, off)
    return _batch_signature_np(pts, M, off)


def path_signature(p, M: int, backend=None) -> TruncatedSignature:
    """Signature of the piecewise-linear path through the given points."""
    pts = _as_points(p)
    full = batch_signature(pts[None], M, backend=backend)[0]
    return TruncatedSignature.from_full(pts.shape[1], M, full)


def features(sig: TruncatedSignature) -> np.ndarray:
    """Flat coefficient vector without the constant level-0 term."""
    return np.array(sig.coeffs)


def augment_batch(values) -> np.ndarray:
    """Time-augment rows of a (N, L) value array into (N, L, 2) points."""
    v = np.asarray(values, dtype=float)
    if v.ndim == 1:
        v = v[None]
    t = np.broadcast_to(time_grid(v.shape[1]), v.shape)
    return np.stack([t, v], axis=2)


def batch_features(values, M: int, backend=None) -> np.ndarray:
    """Signature features of the time-augmented rows of ``values``, (N, terms)."""
    return batch_signature(augment_batch(values), M, backend=backend)[:, 1:]


def batch_jacobian(paths, M: int, coord: int = -1, backend=None) -> np.ndarray:
    """d features / d coordinate ``coord`` of every point, shape (N, terms, L)."""
    pts = np.ascontiguousarray(paths, dtype=float)
    if pts.ndim != 3 or pts.shape[1] < 2:
        raise SizeError(f"expected paths of shape (N, L>=2, d), got {pts.shape}")
    d = pts.shape[2]
    coord = coord % d
    off = level_offsets(d, M)
    if resolve_backend(backend) == "numba":
        return _batch_jacobian_nb(pts, M, off, coord)
    return _batch_jacobian_np(pts, M, off, coord)


def batch_feature_jacobian(values, M: int, backend=None) -> np.ndarray:
    """Jacobian of :func:`batch_features` with respect to the path values."""
    return batch_jacobian(augment_batch(values), M, coord=1, backend=backend)


def signature_jacobian(p, M: int, backend=None) -> SignatureGradient:
    """Exact derivatives of every feature with respect to every path value.

    Time coordinates are held fixed. The derivative along segment ``k`` is
    ``prefix(k-1) (x) dexp(h_k) (x) suffix(k+1)``, with prefix and suffix
    products accumulated in a forward and a backward sweep.
    """
    pts = _as_points(p)
    return SignatureGradient(batch_jacobian(pts[None], M, coord=-1, backend=backend)[0])


def exp_level_oracle(x: float, M: int) -> np.ndarray:
    """Levels ``x**m / m!`` of a 1-d straight path, m = 1..M."""
    return np.array([x ** m / factorial(m) for m in range(1, M + 1)])
