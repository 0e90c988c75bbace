"""Variational autoencoder market generator with a signature drawdown loss.

The network is a one-hidden-layer MLP encoder (tau -> hidden -> 2 x latent)
and decoder (latent -> hidden -> tau) with leaky ReLU activations. Gradients
are accumulated by hand, layer by layer; the drawdown term is differentiated
through the signature Jacobian of the frozen linear approximator.

Blocks enter the network standardised: every coordinate is centred on the
training mean path and divided by a single scale (the root mean coordinate
variance). The L2 term is measured in these standardised units, the
drawdown term on the de-standardised levels.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import approximator
from .approximator import DrawdownModel
from .errors import DataError, DomainError, NumericalError, SizeError

MODEL_FORMAT = "sigdrawdown.xi_vae"
MODEL_VERSION = 1
PARAM_NAMES = ("W1", "b1", "Wm", "bm", "Wl", "bl", "W3", "b3", "W4", "b4")
LOSS_FIELDS = ("step", "split", "total", "kl", "l2", "xi")


@dataclass(frozen=True)
class TrainConfig:
    tau: int = 20
    hidden: int = 50
    latent: int = 10
    lr: float = 0.001
    dropout: float = 0.01
    batch: int = 50
    steps: int = 200
    patience: int = 3
    alpha: float = 1e-4
    slope: float = 0.01
    seed: int = 0
    val_fraction: float = 0.1
    updates_per_step: int = 0  # 0: one pass over the training blocks
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.alpha < 0:
            raise DomainError(f"alpha must be >= 0, got {self.alpha}")
        if not 0 <= self.dropout < 1:
            raise DomainError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.patience < 1:
            raise DomainError(f"patience must be >= 1, got {self.patience}")
        if self.tau < 2 or self.hidden < 1 or self.latent < 1 or self.batch < 1:
            raise DomainError("tau >= 2 and positive layer and batch sizes required")
        if self.steps < 1 or self.updates_per_step < 0:
            raise DomainError("steps must be >= 1 and updates_per_step >= 0")
        if not 0 < self.val_fraction < 1:
            raise DomainError(f"val_fraction must lie in (0, 1), got {self.val_fraction}")
        if not self.lr > 0:
            raise DomainError(f"learning rate must be positive, got {self.lr}")


@dataclass(frozen=True)
class VAEParams:
    """Layer weights; ``W`` matrices act on row vectors (``x @ W + b``)."""

    W1: np.ndarray
    b1: np.ndarray
    Wm: np.ndarray
    bm: np.ndarray
    Wl: np.ndarray
    bl: np.ndarray
    W3: np.ndarray
    b3: np.ndarray
    W4: np.ndarray
    b4: np.ndarray

    def __post_init__(self):
        tau, hidden = self.W1.shape
        latent = self.Wm.shape[1]
        want = dict(W1=(tau, hidden), b1=(hidden,), Wm=(hidden, latent), bm=(latent,),
                    Wl=(hidden, latent), bl=(latent,), W3=(latent, hidden), b3=(hidden,),
                    W4=(hidden, tau), b4=(tau,))
        for name, shape in want.items():
            a = getattr(self, name)
            if a.shape != shape:
                raise SizeError(f"{name} has shape {a.shape}, expected {shape}")
            if not np.all(np.isfinite(a)):
                raise NumericalError(f"{name} contains non-finite values")

    @property
    def tau(self) -> int:
        return self.W1.shape[0]

    @property
    def latent(self) -> int:
        return self.Wm.shape[1]

    def arrays(self) -> dict:
        return {k: getattr(self, k) for k in PARAM_NAMES}

    def map(self, fn, *others) -> "VAEParams":
        return VAEParams(**{k: fn(getattr(self, k), *(getattr(o, k) for o in others))
                            for k in PARAM_NAMES})


def init_params(cfg: TrainConfig, rng: np.random.Generator) -> VAEParams:
    """Glorot-uniform weights, zero biases."""
    def glorot(n_in, n_out):
        lim = np.sqrt(6.0 / (n_in + n_out))
        return rng.uniform(-lim, lim, size=(n_in, n_out))

    t, h, l = cfg.tau, cfg.hidden, cfg.latent
    return VAEParams(glorot(t, h), np.zeros(h), glorot(h, l), np.zeros(l), glorot(h, l),
                     np.zeros(l), glorot(l, h), np.zeros(h), glorot(h, t), np.zeros(t))


def zero_params(cfg: TrainConfig) -> VAEParams:
    t, h, l = cfg.tau, cfg.hidden, cfg.latent
    return VAEParams(np.zeros((t, h)), np.zeros(h), np.zeros((h, l)), np.zeros(l),
                     np.zeros((h, l)), np.zeros(l), np.zeros((l, h)), np.zeros(h),
                     np.zeros((h, t)), np.zeros(t))


@dataclass(frozen=True)
class Normalizer:
    """``z = (x - mean) / scale`` with a per-coordinate mean and one scale."""

    mean: np.ndarray
    scale: float

    @classmethod
    def fit(cls, blocks) -> "Normalizer":
        b = np.asarray(blocks, dtype=float)
        scale = float(np.sqrt(b.var(axis=0).mean()))
        if not scale > 0:
            raise DataError("training blocks have zero variance")
        return cls(b.mean(axis=0), scale)

    def forward(self, x):
        return (np.asarray(x, dtype=float) - self.mean) / self.scale

    def inverse(self, z):
        return self.mean + self.scale * np.asarray(z, dtype=float)


@dataclass(frozen=True)
class LossParts:
    total: float
    latent_kl: float
    recon_l2: float
    recon_xi: float
    split: str = "train"


def leaky_relu(x, slope):
    return np.where(x >= 0, x, slope * x)


def encode(params: VAEParams, x, slope: float = 0.01):
    """``(mu, logvar)`` for one standardised path or a batch of rows."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != params.tau:
        raise SizeError(f"encoder expects length {params.tau}, got {x.shape[-1]}")
    h = leaky_relu(x @ params.W1 + params.b1, slope)
    return h @ params.Wm + params.bm, h @ params.Wl + params.bl


def reparameterize(mu, logvar, noise):
    mu, logvar, noise = (np.asarray(a, dtype=float) for a in (mu, logvar, noise))
    if not mu.shape == logvar.shape == noise.shape:
        raise SizeError("mu, logvar and noise must have equal shapes")
    return mu + np.exp(0.5 * logvar) * noise


def decode(params: VAEParams, z, slope: float = 0.01):
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != params.latent:
        raise SizeError(f"decoder expects latent size {params.latent}, got {z.shape[-1]}")
    h = leaky_relu(z @ params.W3 + params.b3, slope)
    return h @ params.W4 + params.b4


def kl_divergence(mu, logvar) -> float:
    """Batch mean of ``-1/2 sum(1 + logvar - mu^2 - exp(logvar))``."""
    mu = np.atleast_2d(mu)
    logvar = np.atleast_2d(logvar)
    return float(np.mean(-0.5 * np.sum(1 + logvar - mu ** 2 - np.exp(logvar), axis=1)))


def loss(X, X_rec, mu, logvar, drawdown_model: DrawdownModel | None, alpha: float,
         split="train") -> LossParts:
    """Loss parts for standardised inputs ``X`` and reconstructions ``X_rec``.

    Both must already be in the units the L2 term is measured in; the
    drawdown term is evaluated on whatever ``X`` and ``X_rec`` hold, so pass
    levels when calling this directly.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    X_rec = np.atleast_2d(np.asarray(X_rec, dtype=float))
    if X.shape != X_rec.shape:
        raise SizeError(f"shape mismatch {X.shape} vs {X_rec.shape}")
    kl = kl_divergence(mu, logvar)
    l2 = float(np.mean(np.sum((X - X_rec) ** 2, axis=1)))
    xi = 0.0
    if drawdown_model is not None:
        xi = float(np.mean((drawdown_model.predict(X) - drawdown_model.predict(X_rec)) ** 2))
    return LossParts(kl + l2 + alpha * xi, kl, l2, xi, split)


# ---------------------------------------------------------------------------
# forward and backward passes on standardised batches

@dataclass
class _Cache:
    x: np.ndarray
    a1: np.ndarray
    m1: np.ndarray
    h1: np.ndarray
    mu: np.ndarray
    logvar: np.ndarray
    eps: np.ndarray
    z: np.ndarray
    a2: np.ndarray
    m2: np.ndarray
    h2: np.ndarray
    out: np.ndarray


def _forward(p: VAEParams, x, eps, m1, m2, slope) -> _Cache:
    a1 = x @ p.W1 + p.b1
    h1 = leaky_relu(a1, slope) * m1
    mu = h1 @ p.Wm + p.bm
    logvar = h1 @ p.Wl + p.bl
    z = mu + np.exp(0.5 * logvar) * eps
    a2 = z @ p.W3 + p.b3
    h2 = leaky_relu(a2, slope) * m2
    out = h2 @ p.W4 + p.b4
    return _Cache(x, a1, m1, h1, mu, logvar, eps, z, a2, m2, h2, out)


def _dropout_mask(rng, shape, rate):
    if rate == 0.0:
        return np.ones(shape)
    return (rng.random(shape) >= rate) / (1.0 - rate)


class _Objective:
    """Loss and gradient on standardised batches for a fixed approximator."""

    def __init__(self, norm: Normalizer, dd: DrawdownModel | None, alpha: float, slope: float):
        self.norm = norm
        self.dd = dd
        self.alpha = alpha
        self.slope = slope

    def parts(self, c: _Cache, split="train", y_true=None) -> LossParts:
        B = c.x.shape[0]
        kl = float(np.sum(-0.5 * (1 + c.logvar - c.mu ** 2 - np.exp(c.logvar)))) / B
        l2 = float(np.sum((c.x - c.out) ** 2)) / B
        xi = 0.0
        if self.dd is not None:
            if y_true is None:
                y_true = self.dd.predict(self.norm.inverse(c.x))
            diff = y_true - self.dd.predict(self.norm.inverse(c.out))
            xi = float(diff @ diff) / B
        return LossParts(kl + l2 + self.alpha * xi, kl, l2, xi, split)

    def grad(self, p: VAEParams, c: _Cache, y_true=None) -> VAEParams:
        B = c.x.shape[0]
        s = self.slope
        dout = 2.0 * (c.out - c.x) / B
        if self.dd is not None and self.alpha > 0:
            rec = self.norm.inverse(c.out)
            if y_true is None:
                y_true = self.dd.predict(self.norm.inverse(c.x))
            diff = y_true - self.dd.predict(rec)
            dout += (self.alpha * self.norm.scale * (-2.0 / B)) * diff[:, None] * self.dd.gradient(rec)
        dW4 = c.h2.T @ dout
        db4 = dout.sum(axis=0)
        da2 = (dout @ p.W4.T) * c.m2 * np.where(c.a2 >= 0, 1.0, s)
        dW3 = c.z.T @ da2
        db3 = da2.sum(axis=0)
        dz = da2 @ p.W3.T
        sd = np.exp(0.5 * c.logvar)
        dmu = dz + c.mu / B
        dlv = dz * c.eps * 0.5 * sd + 0.5 * (np.exp(c.logvar) - 1.0) / B
        dWm = c.h1.T @ dmu
        dWl = c.h1.T @ dlv
        dh1 = dmu @ p.Wm.T + dlv @ p.Wl.T
        da1 = dh1 * c.m1 * np.where(c.a1 >= 0, 1.0, s)
        dW1 = c.x.T @ da1
        return VAEParams(dW1, da1.sum(axis=0), dWm, dmu.sum(axis=0), dWl, dlv.sum(axis=0),
                         dW3, db3, dW4, db4)


def loss_and_grad(params: VAEParams, x, eps, norm: Normalizer, dd: DrawdownModel | None,
                  alpha: float, slope: float = 0.01):
    """Deterministic (dropout-free) loss parts and exact parameter gradient
    for a standardised batch ``x`` and fixed latent noise ``eps``."""
    obj = _Objective(norm, dd, alpha, slope)
    c = _forward(params, x, eps, 1.0, 1.0, slope)
    return obj.parts(c), obj.grad(params, c)


def finite_difference_check(params: VAEParams, x, eps, norm, dd, alpha, slope=0.01,
                            h=1e-5, floor=None):
    """Max relative error between analytic and central-difference gradients
    over every parameter entry.

    The denominator is ``max(|analytic|, |numeric|, floor)``. By default
    ``floor`` is the gradient size at which the rounding error of the
    central difference, about ``machine_eps * |loss| / h``, would alone
    give a relative error of 1e-4; smaller entries are compared in
    absolute terms.
    """
    parts, g = loss_and_grad(params, x, eps, norm, dd, alpha, slope)
    if floor is None:
        floor = 1e4 * np.finfo(float).eps * max(abs(parts.total), 1.0) / h
    obj = _Objective(norm, dd, alpha, slope)
    y_true = dd.predict(norm.inverse(x)) if dd is not None else None
    worst = 0.0
    for name in PARAM_NAMES:
        base = getattr(params, name)
        ga = getattr(g, name).ravel()
        for i in range(base.size):
            vals = []
            for sign in (1.0, -1.0):
                arr = base.copy()
                arr.ravel()[i] += sign * h
                p = replace(params, **{name: arr})
                vals.append(obj.parts(_forward(p, x, eps, 1.0, 1.0, slope), y_true=y_true).total)
            num = (vals[0] - vals[1]) / (2 * h)
            err = abs(num - ga[i]) / max(abs(num), abs(ga[i]), floor)
            worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# optimiser

@dataclass(frozen=True)
class AdamState:
    params: VAEParams
    m: VAEParams
    v: VAEParams
    t: int = 0


def adam_init(params: VAEParams) -> AdamState:
    zeros = params.map(np.zeros_like)
    return AdamState(params, zeros, zeros, 0)


def adam_step(state: AdamState, grads: VAEParams, lr: float, beta1=0.9, beta2=0.999,
              eps=1e-8) -> AdamState:
    """One bias-corrected Adam update; returns a new state."""
    t = state.t + 1
    m = state.m.map(lambda m_, g: beta1 * m_ + (1 - beta1) * g, grads)
    v = state.v.map(lambda v_, g: beta2 * v_ + (1 - beta2) * g * g, grads)
    c1 = 1 - beta1 ** t
    c2 = 1 - beta2 ** t
    params = state.params.map(lambda p, m_, v_: p - lr * (m_ / c1) / (np.sqrt(v_ / c2) + eps),
                              m, v)
    return AdamState(params, m, v, t)


# ---------------------------------------------------------------------------
# training

@dataclass(frozen=True)
class XiVAE:
    """Trained generator: weights, input normaliser, config and approximator."""

    params: VAEParams
    norm: Normalizer
    cfg: TrainConfig
    drawdown_model: DrawdownModel | None
    stopped_at: int = 0
    early_stopped: bool = False
    history: list = field(default=None, compare=False, repr=False)


def split_train_validation(blocks, val_fraction):
    """Temporal split: the last ``val_fraction`` of blocks validate."""
    b = np.asarray(blocks, dtype=float)
    n_val = max(int(round(val_fraction * b.shape[0])), 1)
    if b.shape[0] - n_val < 1:
        raise SizeError(f"{b.shape[0]} blocks leave nothing to train on")
    return b[:-n_val], b[-n_val:]


def train(blocks, drawdown_model: DrawdownModel | None, cfg: TrainConfig = None,
          log=None) -> XiVAE:
    """Fit the generator on rebased blocks of length ``cfg.tau``.

    Each step is one pass of ``n_train // batch`` minibatch updates (or
    ``cfg.updates_per_step`` if set), with batches drawn with replacement,
    fresh latent noise and dropout on both hidden layers. After every step
    the train and validation loss parts are recorded; validation uses
    fixed noise and no dropout. Training stops early once none of total,
    KL, L2 and (for ``alpha > 0``) the drawdown term has reached a new
    validation minimum for ``cfg.patience`` consecutive steps.
    """
    cfg = cfg or TrainConfig()
    blocks = np.atleast_2d(np.asarray(blocks, dtype=float))
    if blocks.size == 0 or blocks.shape[0] < 2:
        raise SizeError("need at least 2 blocks to train")
    if blocks.shape[1] != cfg.tau:
        raise SizeError(f"blocks have length {blocks.shape[1]}, config says tau={cfg.tau}")
    if drawdown_model is not None and drawdown_model.tau != cfg.tau:
        raise SizeError(f"approximator fitted for tau={drawdown_model.tau}, config tau={cfg.tau}")
    if cfg.alpha > 0 and drawdown_model is None:
        raise DomainError("alpha > 0 needs a drawdown approximator")

    train_b, val_b = split_train_validation(blocks, cfg.val_fraction)
    norm = Normalizer.fit(train_b)
    x_train, x_val = norm.forward(train_b), norm.forward(val_b)
    rng = np.random.default_rng(cfg.seed)
    state = adam_init(init_params(cfg, rng))
    eps_val = rng.standard_normal((x_val.shape[0], cfg.latent))
    obj = _Objective(norm, drawdown_model, cfg.alpha, cfg.slope)
    y_train = y_val = None
    if drawdown_model is not None:
        y_train = drawdown_model.predict(train_b)
        y_val = drawdown_model.predict(val_b)

    n_updates = cfg.updates_per_step or max(x_train.shape[0] // cfg.batch, 1)
    keys = ("total", "latent_kl", "recon_l2") + (("recon_xi",) if cfg.alpha > 0 else ())
    best = {k: np.inf for k in keys}
    since_best = 0
    history = []
    stopped, early = cfg.steps, False
    for step in range(1, cfg.steps + 1):
        train_parts = []
        for _ in range(n_updates):
            idx = rng.integers(0, x_train.shape[0], size=cfg.batch)
            eps = rng.standard_normal((cfg.batch, cfg.latent))
            m1 = _dropout_mask(rng, (cfg.batch, cfg.hidden), cfg.dropout)
            m2 = _dropout_mask(rng, (cfg.batch, cfg.hidden), cfg.dropout)
            c = _forward(state.params, x_train[idx], eps, m1, m2, cfg.slope)
            yt = None if y_train is None else y_train[idx]
            parts = obj.parts(c, "train", yt)
            if not np.isfinite(parts.total):
                raise NumericalError(f"non-finite loss at step {step}: {parts}")
            train_parts.append(parts)
            state = adam_step(state, obj.grad(state.params, c, yt), cfg.lr,
                              cfg.beta1, cfg.beta2, cfg.eps)
        tr = LossParts(*(float(np.mean([getattr(p, k) for p in train_parts]))
                         for k in ("total", "latent_kl", "recon_l2", "recon_xi")), "train")
        va = obj.parts(_forward(state.params, x_val, eps_val, 1.0, 1.0, cfg.slope),
                       "validation", y_val)
        if not np.isfinite(va.total):
            raise NumericalError(f"non-finite validation loss at step {step}: {va}")
        history.append((step, tr))
        history.append((step, va))
        if log:
            log(f"step {step}: train {tr.total:.6g} validation {va.total:.6g}")
        improved = False
        for k in keys:
            if getattr(va, k) < best[k]:
                best[k] = getattr(va, k)
                improved = True
        since_best = 0 if improved else since_best + 1
        if since_best >= cfg.patience:
            stopped, early = step, True
            if log:
                log(f"early stop at step {step}")
            break
    return XiVAE(state.params, norm, cfg, drawdown_model, stopped, early, history)


def sample(model: XiVAE, n: int, seed: int) -> np.ndarray:
    """``n`` synthetic rebased paths, shape ``(n, tau)``.

    Latents are standard normal, decoded without dropout, de-standardised
    and divided by their first level.
    """
    if n < 1:
        raise SizeError(f"need n >= 1, got {n}")
    z = np.random.default_rng(seed).standard_normal((n, model.params.latent))
    levels = model.norm.inverse(decode(model.params, z, model.cfg.slope))
    if np.any(levels[:, 0] == 0):
        raise NumericalError("decoded path starts at zero and cannot be rebased")
    return levels / levels[:, :1]


def reconstruct(model: XiVAE, blocks, seed: int) -> np.ndarray:
    """Encode, sample the posterior once and decode, in level units."""
    x = model.norm.forward(np.atleast_2d(blocks))
    mu, logvar = encode(model.params, x, model.cfg.slope)
    eps = np.random.default_rng(seed).standard_normal(mu.shape)
    return model.norm.inverse(decode(model.params, reparameterize(mu, logvar, eps),
                                     model.cfg.slope))


# ---------------------------------------------------------------------------
# persistence

def history_rows(history):
    for step, p in history:
        yield (step, p.split, p.total, p.latent_kl, p.recon_l2, p.recon_xi)


def write_history_csv(history, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOSS_FIELDS)
        for row in history_rows(history):
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def model_to_dict(model: XiVAE) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "config": asdict(model.cfg),
        "shapes": {k: list(v.shape) for k, v in model.params.arrays().items()},
        "params": {k: v.ravel().tolist() for k, v in model.params.arrays().items()},
        "normalizer": {"mean": model.norm.mean.tolist(), "scale": model.norm.scale},
        "drawdown_model": (None if model.drawdown_model is None
                           else approximator.model_to_dict(model.drawdown_model)),
        "training": {"seed": model.cfg.seed, "stopped_at": model.stopped_at,
                     "early_stopped": model.early_stopped},
    }


def model_from_dict(doc: dict) -> XiVAE:
    if doc.get("format") != MODEL_FORMAT:
        raise DataError(f"not a generator model file (format={doc.get('format')!r})")
    if doc.get("version") != MODEL_VERSION:
        raise DataError(f"unsupported generator model version {doc.get('version')}")
    cfg = TrainConfig(**doc["config"])
    arrays = {k: np.array(doc["params"][k], dtype=float).reshape(doc["shapes"][k])
              for k in PARAM_NAMES}
    nd = doc["normalizer"]
    dd = doc.get("drawdown_model")
    tr = doc.get("training", {})
    return XiVAE(VAEParams(**arrays), Normalizer(np.array(nd["mean"], dtype=float),
                                                 float(nd["scale"])),
                 cfg, None if dd is None else approximator.model_from_dict(dd),
                 int(tr.get("stopped_at", 0)), bool(tr.get("early_stopped", False)))


def save_generator(model: XiVAE, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=1)
        fh.write("\n")


def load_generator(path) -> XiVAE:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: not valid JSON ({exc})") from exc
    return model_from_dict(doc)
