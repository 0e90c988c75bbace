"""Command-line interface.

Every subcommand writes into ``--out`` and records its artifacts in
``manifest.json`` together with a hash of the resolved configuration.
Options may also come from a flat ``key = value`` file passed with
``--config``; keys use the long option names (``p-test`` or ``p_test``) and
command-line flags take precedence.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .errors import DataError, DomainError, NumericalError, SizeError

log = logging.getLogger("sigdrawdown")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4
MANIFEST = "manifest.json"


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# value parsers

def float_list(text) -> tuple:
    try:
        return tuple(float(x) for x in str(text).split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def int_list(text) -> tuple:
    """``"1,2,5"`` or an inclusive range ``"1..6"``."""
    s = str(text).strip()
    try:
        if ".." in s:
            lo, hi = s.split("..")
            return tuple(range(int(lo), int(hi) + 1))
        return tuple(int(x) for x in s.split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"expected integers or a range like 1..6, got {text!r}") from None


def boolean(text) -> bool:
    s = str(text).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def labelled_paths(text) -> tuple:
    """``"vae=a.json,xivae=b.json"``; a bare path is labelled by its stem."""
    out = []
    for item in str(text).split(","):
        item = item.strip()
        if not item:
            continue
        label, _, path = item.rpartition("=")
        if not label:
            label = os.path.splitext(os.path.basename(path))[0]
        out.append((label, path))
    if not out:
        raise ConfigError("no model paths given")
    return tuple(out)


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


# ---------------------------------------------------------------------------
# option table: (flag, type, default, help) per subcommand

COMMON = [
    ("out", str, "out", "output directory (created if missing)"),
    ("seed", int, 0, "global seed"),
]
DATA = [
    ("prices", str, "", "price CSV (default: bundled synthetic sample)"),
    ("weights", float_list, None, "portfolio weights (default: equal)"),
    ("tau", int, 20, "block length"),
    ("rebase", boolean, True, "divide every block by its first value"),
    ("block_start", int, 0, "index of the first block used"),
    ("train_blocks", int, 2000, "number of blocks for fitting/training; 0 = all"),
]
APPROX = [
    ("m", int, 4, "signature truncation level"),
    ("target", str, "integrated", "drawdown target: terminal, maximum or integrated"),
    ("folds", int, 10, "cross-validation folds"),
]
OPTIONS = {
    "fbm-study": COMMON + [
        ("h", float_list, (0.4, 0.55, 0.7), "Hurst exponents"),
        ("m", int_list, tuple(range(1, 7)), "truncation levels, e.g. 1..6"),
        ("k", int_list, (1000, 5000), "training sample sizes"),
        ("p_test", float, 0.1, "test share relative to K"),
        ("n", int, 20, "points per path"),
        ("mu", float, 0.01 / 252, "drift per step"),
        ("sigma", float, 0.20 / 252, "volatility scale"),
        ("scaling", str, "horizon", "fBM scaling: step or horizon"),
        ("target", str, "integrated", "drawdown target"),
        ("folds", int, 10, "cross-validation folds"),
    ],
    "fit": COMMON + DATA + APPROX,
    "train": COMMON + DATA + APPROX + [
        ("drawdown_model", str, "", "pre-fitted approximator (default: fit one)"),
        ("alpha", float, 1e-4, "weight of the drawdown term; 0 = plain VAE"),
        ("hidden", int, 50, "hidden units"),
        ("latent", int, 10, "latent dimension"),
        ("lr", float, 0.001, "Adam learning rate"),
        ("dropout", float, 0.01, "dropout rate"),
        ("batch", int, 50, "batch size"),
        ("steps", int, 200, "maximum training steps"),
        ("patience", int, 3, "early-stopping patience"),
        ("slope", float, 0.01, "leaky ReLU slope"),
        ("val_fraction", float, 0.1, "validation share (last blocks)"),
    ],
    "generate": COMMON + [
        ("model", str, "generator.json", "generator model file"),
        ("n", int, 1000, "number of paths"),
        ("tau", int, 0, "expected path length (0 = model's)"),
    ],
    "report": COMMON + DATA + [
        ("models", labelled_paths, None, "generator models, label=path,..."),
        ("n", int, 5000, "synthetic paths per model"),
        ("holdout_blocks", int, 0, "held-out blocks after the training range; 0 = all"),
        ("target", str, "integrated", "drawdown target"),
        ("bins", int, 50, "histogram bins"),
    ],
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sigdrawdown", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, opts in OPTIONS.items():
        p = sub.add_parser(name)
        for key, _, default, help_ in opts:
            # parsed later so config-file values go through the same converters
            if "default:" not in help_:
                help_ = f"{help_} (default: {default})"
            p.add_argument("--" + key.replace("_", "-"), dest=key, default=None, help=help_)
    return parser


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults, config file and flags (flags win) and convert types."""
    file_values = read_config_file(args.config) if args.config else {}
    known = {k for k, *_ in OPTIONS[args.command]}
    unknown = sorted(set(file_values) - known)
    if unknown:
        raise ConfigError(f"unknown config keys for {args.command}: {', '.join(unknown)}")
    cfg = {}
    for key, conv, default, _ in OPTIONS[args.command]:
        raw = getattr(args, key)
        if raw is None:
            raw = file_values.get(key)
        if raw is None:
            cfg[key] = default
            continue
        try:
            cfg[key] = conv(raw)
        except ConfigError:
            raise
        except (TypeError, ValueError):
            raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return cfg


def config_hash(command: str, cfg: dict) -> str:
    """SHA-256 of the resolved config; the output directory is not hashed."""
    body = {k: v for k, v in cfg.items() if k != "out"}
    doc = json.dumps({"command": command, **body}, sort_keys=True, default=list)
    return hashlib.sha256(doc.encode()).hexdigest()


def _sha256(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def write_manifest(out_dir, command, cfg, artifacts) -> None:
    """Record this run's artifacts; entries of other subcommands are kept."""
    path = os.path.join(out_dir, MANIFEST)
    doc = {"format": "sigdrawdown.manifest", "version": 1, "runs": {}}
    if os.path.exists(path):
        try:
            with open(path) as fh:
                old = json.load(fh)
            doc["runs"] = dict(old.get("runs", {}))
        except (OSError, json.JSONDecodeError):
            pass
    h = config_hash(command, cfg)
    doc["runs"][command] = {
        # the output directory is left out so reruns elsewhere stay byte-identical
        "config": json.loads(json.dumps({k: v for k, v in cfg.items() if k != "out"},
                                        default=list)),
        "config_hash": h,
        "artifacts": [{"path": name, "sha256": _sha256(os.path.join(out_dir, name)),
                       "config_hash": h} for name in artifacts],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# shared data plumbing

def _blocks(cfg):
    from .ingest import PortfolioSpec, bundled_prices, load_prices, portfolio_series
    from .paths import make_blocks

    if cfg["tau"] < 2:
        raise ConfigError(f"tau must be >= 2, got {cfg['tau']}")
    table = load_prices(cfg["prices"]) if cfg["prices"] else bundled_prices()
    U = len(table.assets)
    weights = cfg["weights"] or (1.0 / U,) * U
    try:
        spec = PortfolioSpec(np.array(weights))
    except (DomainError, SizeError) as exc:
        raise ConfigError(str(exc)) from None
    blocks = make_blocks(portfolio_series(table, spec), cfg["tau"], rebase=cfg["rebase"])
    start = cfg["block_start"]
    if start < 0 or start >= blocks.shape[0]:
        raise ConfigError(f"block_start {start} outside 0..{blocks.shape[0] - 1}")
    n = cfg["train_blocks"] or blocks.shape[0] - start
    if start + n > blocks.shape[0]:
        raise DataError(f"only {blocks.shape[0] - start} blocks after block_start, "
                        f"{n} requested")
    return blocks[start:start + n], blocks[start + n:]


def _fit_cv(cfg):
    from .regression import CVConfig

    return CVConfig(folds=cfg["folds"])


def _write_csv(path, header, rows):
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


# ---------------------------------------------------------------------------
# subcommands

def cmd_fbm_study(cfg, out):
    from .approximator import REPORT_FIELDS, StudyConfig, run_fbm_study, write_report_csv

    study = StudyConfig(h_grid=cfg["h"], m_grid=cfg["m"], k_grid=cfg["k"],
                        p_test=cfg["p_test"], seed=cfg["seed"], target=cfg["target"],
                        n=cfg["n"], mu=cfg["mu"], sigma=cfg["sigma"], scaling=cfg["scaling"],
                        cv=_fit_cv(cfg))
    rows = run_fbm_study(study)
    write_report_csv(rows, os.path.join(out, "fbm_study.csv"), REPORT_FIELDS)
    return ["fbm_study.csv"]


def cmd_fit(cfg, out):
    from .approximator import fit_drawdown_approximator, save_model

    train_b, _ = _blocks(cfg)
    model = fit_drawdown_approximator(train_b, cfg["m"], cfg["target"], _fit_cv(cfg),
                                      cfg["seed"])
    save_model(model, os.path.join(out, "drawdown_model.json"))
    _write_csv(os.path.join(out, "cv_table.csv"),
               ("lambda1", "lambda2", "mean_rmse", "std_rmse", "max_sweeps"),
               [tuple(r[k] for k in ("lambda1", "lambda2", "mean_rmse", "std_rmse",
                                     "max_sweeps")) for r in model.cv_table])
    return ["drawdown_model.json", "cv_table.csv"]


def cmd_train(cfg, out):
    from .approximator import fit_drawdown_approximator, load_model
    from .generator import TrainConfig, save_generator, train, write_history_csv

    train_b, _ = _blocks(cfg)
    dd = None
    if cfg["drawdown_model"]:
        dd = load_model(cfg["drawdown_model"])
    else:
        # fitted for alpha = 0 too, so the plain VAE's history reports the drawdown term
        n_fit = train_b.shape[0] - max(int(round(cfg["val_fraction"] * train_b.shape[0])), 1)
        dd = fit_drawdown_approximator(train_b[:n_fit], cfg["m"], cfg["target"],
                                       _fit_cv(cfg), cfg["seed"])
    tc = TrainConfig(tau=cfg["tau"], hidden=cfg["hidden"], latent=cfg["latent"], lr=cfg["lr"],
                     dropout=cfg["dropout"], batch=cfg["batch"], steps=cfg["steps"],
                     patience=cfg["patience"], alpha=cfg["alpha"], slope=cfg["slope"],
                     seed=cfg["seed"], val_fraction=cfg["val_fraction"])
    model = train(train_b, dd, tc, log=log.debug)
    if model.early_stopped:
        log.info("early stop at step %d", model.stopped_at)
    else:
        log.info("ran all %d steps", model.stopped_at)
    save_generator(model, os.path.join(out, "generator.json"))
    write_history_csv(model.history, os.path.join(out, "loss_history.csv"))
    return ["generator.json", "loss_history.csv"]


def cmd_generate(cfg, out):
    from .generator import load_generator, sample
    from .paths import paths_to_csv

    model = load_generator(cfg["model"])
    if cfg["tau"] and cfg["tau"] != model.params.tau:
        raise ConfigError(f"model produces tau={model.params.tau}, requested {cfg['tau']}")
    if cfg["n"] < 1:
        raise ConfigError(f"n must be >= 1, got {cfg['n']}")
    paths = sample(model, cfg["n"], cfg["seed"])
    with open(os.path.join(out, "samples.csv"), "w", newline="") as fh:
        paths_to_csv(paths, fh)
    return ["samples.csv"]


def cmd_report(cfg, out):
    from .drawdown import drawdown_target
    from .evaluate import (TAIL_LEVELS, bm_baseline, compare, increment_sigma,
                           write_histogram_csv, write_qq_csv, write_scatter_csv)
    from .generator import load_generator, reconstruct, sample

    if not cfg["models"]:
        raise ConfigError("report needs --models label=path[,label=path]")
    train_b, held = _blocks(cfg)
    if cfg["holdout_blocks"]:
        held = held[:cfg["holdout_blocks"]]
    if held.shape[0] < 2:
        raise DataError("no held-out blocks after the training range")
    target = cfg["target"]
    actual = drawdown_target(held, target)
    samples = {"empirical": actual}
    artifacts = []
    ks_rows, tail_rows = [], []
    for i, (label, path) in enumerate(cfg["models"]):
        model = load_generator(path)
        if model.params.tau != cfg["tau"]:
            raise ConfigError(f"{label}: model tau={model.params.tau}, data tau={cfg['tau']}")
        seed = cfg["seed"] + i
        synth = drawdown_target(sample(model, cfg["n"], seed), target)
        samples[label] = synth
        comp = compare(synth, actual)
        ks_rows.append((label, comp.ks))
        for q, s, a in zip(TAIL_LEVELS, comp.tail_synthetic, comp.tail_actual):
            tail_rows.append((label, q, s, a, abs(s - a)))
        write_qq_csv(os.path.join(out, f"qq_{label}.csv"), synth, actual)
        recon = drawdown_target(reconstruct(model, held, seed), target)
        write_scatter_csv(os.path.join(out, f"scatter_{label}.csv"), actual, recon)
        artifacts += [f"qq_{label}.csv", f"scatter_{label}.csv"]
    bm = bm_baseline(increment_sigma(held), cfg["tau"], cfg["n"], cfg["seed"], kind=target)
    samples["bm"] = bm
    comp = compare(bm, actual)
    ks_rows.append(("bm", comp.ks))
    for q, s, a in zip(TAIL_LEVELS, comp.tail_synthetic, comp.tail_actual):
        tail_rows.append(("bm", q, s, a, abs(s - a)))
    _write_csv(os.path.join(out, "ks.csv"), ("model", "ks"), ks_rows)
    _write_csv(os.path.join(out, "tails.csv"), ("model", "q", "synthetic", "actual", "abs_error"),
               tail_rows)
    write_histogram_csv(os.path.join(out, "histogram.csv"), samples, cfg["bins"])
    return ["ks.csv", "tails.csv", "histogram.csv"] + artifacts


COMMANDS = {"fbm-study": cmd_fbm_study, "fit": cmd_fit, "train": cmd_train,
            "generate": cmd_generate, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = resolve(args)
        out = cfg["out"]
        os.makedirs(out, exist_ok=True)
        artifacts = COMMANDS[args.command](cfg, out)
        write_manifest(out, args.command, cfg, artifacts)
    except (ConfigError, DomainError) as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (DataError, SizeError, OSError) as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    except (NumericalError, FloatingPointError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL
    for name in artifacts:
        log.info("wrote %s", os.path.join(out, name))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
