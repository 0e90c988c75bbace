"""Linear drawdown approximation on truncated signatures, and the fBM and
portfolio grid studies built on it."""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .drawdown import DrawdownTargetKind, drawdown_target
from .errors import DataError, DomainError, SizeError
from .paths import FbmConfig, as_values, generate_fbm_paths, make_blocks
from .regression import (CVConfig, ConvergenceWarning, ElasticNetModel, Scaler,
                         cross_validate, fit_elastic_net, fit_scaler, rmse)
from .signature import (WORD_ORDER, batch_feature_jacobian, batch_features,
                        num_terms)

MODEL_FORMAT = "sigdrawdown.drawdown_model"
MODEL_VERSION = 1

# grids of the full-scale study; the defaults below are a desk-scale subset
FULL_H_GRID = tuple(round(0.40 + 0.05 * i, 2) for i in range(7))
FULL_M_GRID = tuple(range(1, 11))
FULL_K_GRID = (1000, 5000, 10000, 20000, 50000)
BASE_MU = 0.01 / 252
BASE_SIGMA = 0.20 / 252


@dataclass(frozen=True)
class DrawdownModel:
    scaler: Scaler
    net: ElasticNetModel
    d: int
    M: int
    tau: int
    target: DrawdownTargetKind
    cv_table: list = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.net.weights.size != num_terms(self.d, self.M):
            raise SizeError("weight vector does not match the signature size")

    def _check(self, values):
        v = np.atleast_2d(as_values(values))
        if v.shape[1] != self.tau:
            raise SizeError(f"model was fitted on paths of length {self.tau}, got {v.shape[1]}")
        return v

    @property
    def feature_weights(self) -> np.ndarray:
        """Weights acting on raw (unscaled) signature features."""
        w = self.net.weights / self.scaler.stds
        return np.where(self.scaler.flagged, 0.0, w)

    def predict(self, values, backend=None) -> np.ndarray:
        """Approximate drawdown of each row of ``values``."""
        v = self._check(values)
        Z = self.scaler.transform(batch_features(v, self.M, backend=backend))
        return self.net.predict(Z)

    def gradient(self, values, backend=None) -> np.ndarray:
        """d prediction / d path values, one row per path."""
        v = self._check(values)
        jac = batch_feature_jacobian(v, self.M, backend=backend)
        return np.einsum("nwl,w->nl", jac, self.feature_weights)


def approximate_drawdown(model: DrawdownModel, path, backend=None) -> float:
    """``intercept + <weights, scaled features>`` for a single path."""
    v = as_values(path)
    if v.ndim != 1:
        raise SizeError("expected a single path")
    return float(model.predict(v, backend=backend)[0])


def fit_drawdown_approximator(blocks, M: int, target="integrated", cv: CVConfig = None,
                              seed: int = 0, feats=None, backend=None) -> DrawdownModel:
    """Signature features and drawdown targets per block, standard scaling,
    CV over the penalty grid, then a final fit on every block."""
    blocks = np.atleast_2d(np.asarray(blocks, dtype=float))
    cv = cv or CVConfig()
    if blocks.shape[0] < 2:
        raise SizeError("need at least 2 blocks")
    if blocks.shape[0] < cv.folds:
        raise SizeError(f"{blocks.shape[0]} blocks cannot fill {cv.folds} CV folds")
    target = DrawdownTargetKind(target)
    p = num_terms(2, M)
    if feats is None:
        feats = batch_features(blocks, M, backend=backend)
    feats = feats[:, :p]
    y = drawdown_target(blocks, target)
    scaler = fit_scaler(feats)
    X = scaler.transform(feats)
    (l1, l2), table = cross_validate(X, y, cv, seed=seed, backend=backend)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        net = fit_elastic_net(X, y, l1, l2, cv, backend=backend)
    return DrawdownModel(scaler, net, 2, M, blocks.shape[1], target, table)


# ---------------------------------------------------------------------------
# persistence

def model_to_dict(model: DrawdownModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "d": model.d,
        "M": model.M,
        "tau": model.tau,
        "word_order": WORD_ORDER,
        "target": model.target.value,
        "scaler": {"means": model.scaler.means.tolist(),
                   "stds": model.scaler.stds.tolist(),
                   "flagged": model.scaler.flagged.tolist()},
        "intercept": model.net.intercept,
        "weights": model.net.weights.tolist(),
        "lambda1": model.net.lambda1,
        "lambda2": model.net.lambda2,
        "converged": model.net.converged,
    }


def model_from_dict(doc: dict) -> DrawdownModel:
    if doc.get("format") != MODEL_FORMAT:
        raise DataError(f"not a drawdown model file (format={doc.get('format')!r})")
    if doc.get("version") != MODEL_VERSION:
        raise DataError(f"unsupported model version {doc.get('version')}")
    if doc.get("word_order") != WORD_ORDER:
        raise DataError(f"unknown word order {doc.get('word_order')!r}")
    sc = doc["scaler"]
    scaler = Scaler(np.array(sc["means"], dtype=float), np.array(sc["stds"], dtype=float),
                    np.array(sc["flagged"], dtype=bool))
    net = ElasticNetModel(float(doc["intercept"]), np.array(doc["weights"], dtype=float),
                          float(doc["lambda1"]), float(doc["lambda2"]),
                          bool(doc.get("converged", True)))
    return DrawdownModel(scaler, net, int(doc["d"]), int(doc["M"]), int(doc["tau"]),
                         DrawdownTargetKind(doc["target"]))


def save_model(model: DrawdownModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=1)
        fh.write("\n")


def load_model(path) -> DrawdownModel:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: not valid JSON ({exc})") from exc
    return model_from_dict(doc)


# ---------------------------------------------------------------------------
# studies

REPORT_FIELDS = ("H", "M", "K", "split", "rmse", "lambda1", "lambda2", "converged")


@dataclass(frozen=True)
class StudyConfig:
    h_grid: tuple = (0.4, 0.55, 0.7)
    m_grid: tuple = tuple(range(1, 7))
    k_grid: tuple = (1000, 5000)
    p_test: float = 0.1
    seed: int = 0
    target: str = "integrated"
    n: int = 20
    mu: float = BASE_MU
    sigma: float = BASE_SIGMA
    scaling: str = "horizon"
    cv: CVConfig = field(default_factory=CVConfig)

    def __post_init__(self):
        if not 0.0 < self.p_test < 1.0:
            raise DomainError(f"p_test must lie in (0, 1), got {self.p_test}")
        if not self.h_grid or not self.m_grid or not self.k_grid:
            raise DomainError("study grids must be nonempty")
        if min(self.m_grid) < 1:
            raise DomainError("truncation levels must be >= 1")
        DrawdownTargetKind(self.target)


def _fit_and_score(train, test, feats_train, feats_test, M, cfg, seed):
    model = fit_drawdown_approximator(train, M, cfg.target, cfg.cv, seed, feats=feats_train)
    p = num_terms(2, M)
    Z_tr = model.scaler.transform(feats_train[:, :p])
    Z_te = model.scaler.transform(feats_test[:, :p])
    y_tr = drawdown_target(train, cfg.target)
    y_te = drawdown_target(test, cfg.target)
    return model, rmse(model.net.predict(Z_tr), y_tr), rmse(model.net.predict(Z_te), y_te)


def run_fbm_study(cfg: StudyConfig) -> list[dict]:
    """Train/test RMSE for every (H, M, K) cell.

    Paths for a given (H, K) are simulated once from a seed derived from
    ``(cfg.seed, H index, K)`` and their features are computed once at the
    largest M; lower levels are prefixes of that vector.
    """
    rows = []
    m_max = max(cfg.m_grid)
    for hi, H in enumerate(cfg.h_grid):
        for K in cfg.k_grid:
            n_test = max(int(round(cfg.p_test * K)), 1)
            seed = int(np.random.SeedSequence([cfg.seed, hi, K]).generate_state(1)[0])
            paths = generate_fbm_paths(FbmConfig(H, cfg.n, K + n_test, cfg.mu, cfg.sigma,
                                                 seed=seed, scaling=cfg.scaling))
            feats = batch_features(paths, m_max)
            train, test = paths[:K], paths[K:]
            for M in cfg.m_grid:
                model, tr, te = _fit_and_score(train, test, feats[:K], feats[K:], M, cfg, seed)
                for split, value in (("train", tr), ("test", te)):
                    rows.append(dict(H=float(H), M=int(M), K=int(K), split=split, rmse=value,
                                     lambda1=model.net.lambda1, lambda2=model.net.lambda2,
                                     converged=model.net.converged))
    rows.sort(key=lambda r: (r["H"], r["M"], r["K"], r["split"] != "train"))
    return rows


def run_portfolio_study(table, weights_list, tau=20, m_grid=tuple(range(1, 7)), p_test=0.1,
                        target="integrated", cv: CVConfig = None, seed=0,
                        rebase=False) -> list[dict]:
    """Per-portfolio train/test RMSE with a strict time split of the blocks.

    The first ``(1 - p_test)`` share of blocks trains, the rest tests; CV
    folds are contiguous.
    """
    from .ingest import portfolio_series

    cv = cv or CVConfig(temporal=True)
    rows = []
    m_max = max(m_grid)
    for pi, spec in enumerate(weights_list):
        series = portfolio_series(table, spec)
        blocks = make_blocks(series, tau, rebase=rebase)
        n_train = int(round((1 - p_test) * blocks.shape[0]))
        feats = batch_features(blocks, m_max)
        y = drawdown_target(blocks, target)
        for M in m_grid:
            model = fit_drawdown_approximator(blocks[:n_train], M, target, cv, seed,
                                              feats=feats[:n_train])
            p = num_terms(2, M)
            pred = model.net.predict(model.scaler.transform(feats[:, :p]))
            for split, sl in (("train", slice(0, n_train)), ("test", slice(n_train, None))):
                rows.append(dict(portfolio=pi, M=int(M), K=int(n_train), split=split,
                                 rmse=rmse(pred[sl], y[sl]), lambda1=model.net.lambda1,
                                 lambda2=model.net.lambda2, converged=model.net.converged))
    return rows


def mean_rmse_by(rows, key, split):
    """Average RMSE per value of ``key`` over rows with the given split."""
    out = {}
    for r in rows:
        if r["split"] == split:
            out.setdefault(r[key], []).append(r["rmse"])
    return {k: float(np.mean(v)) for k, v in sorted(out.items())}


def train_test_gap(rows, key="K"):
    """Mean |train - test| RMSE per value of ``key``, pairing rows by cell."""
    cells = {}
    for r in rows:
        cell = tuple((k, r[k]) for k in r if k not in ("split", "rmse", "lambda1",
                                                         "lambda2", "converged"))
        cells.setdefault(cell, {})[r["split"]] = r["rmse"]
    out = {}
    for cell, d in cells.items():
        out.setdefault(dict(cell)[key], []).append(abs(d["train"] - d["test"]))
    return {k: float(np.mean(v)) for k, v in sorted(out.items())}


def write_report_csv(rows, path, fields=None) -> None:
    if not rows:
        raise SizeError("empty report")
    fields = list(fields or rows[0].keys())
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
