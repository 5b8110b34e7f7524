"""Command line entry point: train, score, eval, analyze-likelihood, similarity.

Exit codes: 0 success, 2 configuration/usage error, 3 numeric divergence,
4 I/O or file-format error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import inference as inf
from . import metrics
from .data import fmt, load_scores_csv, read_kv, resolve_dataset, save_scores_csv, write_kv
from .errors import ConfigError, DegenerateInputError, FormatError, ParseError, TrainingError
from .likelihood import LikelihoodKind, max_ll_curve
from .scoring import METHODS, RAW_FIELDS, score_dataset

log = logging.getLogger("bae_ood")

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 2, 3, 4

EVAL_HEADER = ["method", "auroc", "auprc", "fpr80", "n_in", "n_out"]
PCC_HEADER = ["method", "quantity", "pcc_vs_zeros"]
HIST_HEADER = ["method", "bin_left", "bin_right", "count_in", "count_out"]
CURVE_HEADER = ["x", "max_ll_bernoulli", "max_ll_cb", "max_ll_gaussian"]
SIMILARITY_HEADER = ["index", "neg_bce", "neg_mse", "ssim", "nmi"]


@dataclass
class ExperimentConfig:
    family: str = "deterministic"
    likelihood: str = "gaussian"
    reg_scale: float = 0.01
    seed: int = 0
    epochs: int = 20
    batch_size: int = 100
    hidden: list[int] = field(default_factory=lambda: [128])
    latent_dim: int = 20
    samples: int = 100
    ensemble: int = 5
    p_drop: float = 0.2
    train_data: str = ""
    out_dir: str = "runs/default"
    lr_min: float | None = None
    lr_max: float | None = None
    workers: int | None = None
    sweep: bool = False

    def validate(self) -> None:
        if self.family not in inf.FAMILIES:
            raise ConfigError(f"family must be one of {inf.FAMILIES}, got {self.family!r}")
        LikelihoodKind.parse(self.likelihood)
        if not self.train_data:
            raise ConfigError("train_data is required")
        if self.samples < 1 or self.ensemble < 2:
            raise ConfigError("samples must be >= 1 and ensemble >= 2")
        if not 0.0 < self.p_drop < 1.0:
            raise ConfigError("p_drop must lie in (0, 1)")
        if (self.lr_min is None) != (self.lr_max is None):
            raise ConfigError("lr_min and lr_max must be given together")
        self.train_config()

    def train_config(self, reg_scale: float | None = None) -> inf.TrainConfig:
        return inf.TrainConfig(
            likelihood=self.likelihood,
            reg_scale=self.reg_scale if reg_scale is None else reg_scale,
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=self.seed,
            lr_min=self.lr_min,
            lr_max=self.lr_max,
            hidden=list(self.hidden),
            latent_dim=self.latent_dim,
            p_drop=self.p_drop,
        )


_CASTS = {
    "reg_scale": float,
    "seed": int,
    "epochs": int,
    "batch_size": int,
    "latent_dim": int,
    "samples": int,
    "ensemble": int,
    "p_drop": float,
    "lr_min": float,
    "lr_max": float,
    "workers": int,
}


def _parse_hidden(value: str) -> list[int]:
    value = value.strip()
    return [int(v) for v in value.split(",") if v.strip()] if value else []


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    raw: dict = {}
    if path:
        try:
            raw.update(read_kv(path))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {}
    try:
        for key, value in raw.items():
            if key == "hidden":
                kwargs[key] = _parse_hidden(value) if isinstance(value, str) else list(value)
            elif key == "sweep":
                kwargs[key] = value if isinstance(value, bool) else str(value).lower() in ("1", "true", "yes")
            elif key in _CASTS:
                kwargs[key] = _CASTS[key](value)
            else:
                kwargs[key] = str(value)
    except ValueError as exc:
        raise ConfigError(f"bad config value: {exc}") from exc
    cfg = ExperimentConfig(**kwargs)
    cfg.validate()
    return cfg


# --- train -----------------------------------------------------------------


def _write_train_log(histories: dict, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["component", "epoch", "loss"])
        for name, hist in histories.items():
            for epoch, loss in enumerate(hist, start=1):
                w.writerow([name, epoch, fmt(loss)])


def cmd_train(cfg: ExperimentConfig) -> list[Path]:
    """Train one model (or one per swept regularisation scale); returns checkpoint dirs."""
    data = resolve_dataset(cfg.train_data, split="train")
    scales = inf.REG_SWEEP if cfg.sweep else (cfg.reg_scale,)
    train_cfgs = [cfg.train_config(s) for s in scales]
    out = []
    for tcfg in train_cfgs:
        directory = Path(cfg.out_dir)
        if cfg.sweep:
            directory = directory / f"reg_{fmt(tcfg.reg_scale)}"
        directory.mkdir(parents=True, exist_ok=True)
        start = time.perf_counter()
        sampler, histories = inf.train_family(cfg.family, tcfg, data, M=cfg.ensemble, workers=cfg.workers)
        if cfg.family in ("vae", "mcdropout", "bayesbb"):
            sampler.default_T = cfg.samples
        inf.save_sampler(
            sampler,
            directory,
            tcfg,
            extra={"height": data.height, "width": data.width, "train_data": cfg.train_data},
        )
        _write_train_log(histories, directory / "train_log.csv")
        log.info("trained %s (reg %s) in %.1fs -> %s", cfg.family, tcfg.reg_scale, time.perf_counter() - start, directory)
        out.append(directory)
    return out


# --- score -----------------------------------------------------------------


def cmd_score(checkpoints, data_source: str, out_path, samples: int | None = None, label=None,
              likelihood=None, seed: int = 0) -> Path:
    sampler, manifest = inf.load_sampler(checkpoints)
    if likelihood is not None and LikelihoodKind.parse(likelihood) is not sampler.likelihood:
        raise ConfigError(
            f"checkpoint was trained with {sampler.likelihood.value}, not {LikelihoodKind.parse(likelihood).value}"
        )
    data = resolve_dataset(data_source, split="test")
    if data.dim != sampler.input_dim:
        raise ConfigError(f"dataset has {data.dim} pixels, checkpoint expects {sampler.input_dim}")
    reports = score_dataset(sampler, data.images, sampler.likelihood, label or data.name, samples, seed=seed)
    save_scores_csv(reports, out_path)
    return Path(out_path)


# --- eval ------------------------------------------------------------------


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _pcc_or_nan(a, b) -> float:
    try:
        return metrics.pearson(a, b)
    except (DegenerateInputError, ValueError):
        return math.nan


def cmd_eval(in_csv, ood_csv, out_dir) -> dict:
    """AUROC/AUPRC/FPR80 per method plus pooled PCC against the proportion of zeros."""
    rep_in = load_scores_csv(in_csv)
    rep_out = load_scores_csv(ood_csv)
    if not rep_in or not rep_out:
        raise ParseError("both score files must contain at least one row")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results, eval_rows, pcc_rows, hist_rows = {}, [], [], []
    pooled = rep_in + rep_out
    zeros = [r.proportion_zeros for r in pooled]
    for m in METHODS:
        s_in = [getattr(r, "score_" + m) for r in rep_in]
        s_out = [getattr(r, "score_" + m) for r in rep_out]
        res = metrics.evaluate(s_out, s_in)
        results[m] = res
        eval_rows.append([m, fmt(res.auroc), fmt(res.auprc), fmt(res.fpr80), res.n_in, res.n_out])
        raw = RAW_FIELDS[m]
        pcc = _pcc_or_nan([getattr(r, raw) for r in pooled], zeros)
        results[m + "_pcc"] = pcc
        pcc_rows.append([m, raw, fmt(pcc)])
        hist_rows.extend(metrics.histogram_rows(m, s_in, s_out))
    _write_csv(out_dir / "eval.csv", EVAL_HEADER, eval_rows)
    _write_csv(out_dir / "pcc.csv", PCC_HEADER, pcc_rows)
    _write_csv(
        out_dir / "histogram.csv",
        HIST_HEADER,
        [[m, fmt(lo), fmt(hi), ci, co] for m, lo, hi, ci, co in hist_rows],
    )
    write_kv(
        {
            "score_orientation": "higher_is_more_ood",
            "zero_threshold": fmt(metrics.ZERO_THRESHOLD),
            "ssim_window": f"{metrics.SSIM_WINDOW}x{metrics.SSIM_WINDOW}_uniform",
            "nmi_bins": metrics.NMI_BINS,
            "in_scores": in_csv,
            "ood_scores": ood_csv,
        },
        out_dir / "eval_meta.txt",
    )
    return results


def load_eval_csv(path) -> dict[str, metrics.EvalResult]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        return {}
    if rows[0] != EVAL_HEADER:
        raise ParseError(f"unexpected header {rows[0]}", line=1)
    out = {}
    for lineno, row in enumerate(rows[1:], start=2):
        try:
            out[row[0]] = metrics.EvalResult(float(row[1]), float(row[2]), float(row[3]), int(row[4]), int(row[5]))
        except (ValueError, IndexError) as exc:
            raise ParseError(str(exc), line=lineno) from exc
    return out


# --- analyze-likelihood / similarity --------------------------------------------


def likelihood_curves(grid_size: int) -> list[list[float]]:
    if grid_size < 2:
        raise ConfigError("grid size must be >= 2")
    grid = np.linspace(0.0, 1.0, grid_size)
    cols = [max_ll_curve(k, grid) for k in LikelihoodKind]
    return [[float(x), *(c[i][1] for c in cols)] for i, x in enumerate(grid)]


def cmd_analyze_likelihood(grid_size: int, out=None) -> list[list[float]]:
    rows = likelihood_curves(grid_size)
    formatted = [[fmt(v) for v in row] for row in rows]
    if out is None:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(CURVE_HEADER)
        w.writerows(formatted)
    else:
        _write_csv(out, CURVE_HEADER, formatted)
    return rows


def cmd_similarity(checkpoints, data_source: str, out_path, samples=None, seed: int = 0) -> Path:
    """Image similarity between each input and its posterior-mean reconstruction."""
    sampler, _ = inf.load_sampler(checkpoints)
    data = resolve_dataset(data_source)
    if data.dim != sampler.input_dim:
        raise ConfigError(f"dataset has {data.dim} pixels, checkpoint expects {sampler.input_dim}")
    rows = []
    for k, start in enumerate(range(0, len(data), 100)):
        xb = data.images[start : start + 100]
        recon = np.mean(inf.sample_predictions(sampler, xb, samples, rng=np.random.default_rng([seed, k])), axis=0)
        for i, (x, xh) in enumerate(zip(xb, recon)):
            s = metrics.similarity(x.reshape(data.height, data.width), xh.reshape(data.height, data.width))
            rows.append([start + i, fmt(s.neg_bce), fmt(s.neg_mse), fmt(s.ssim), fmt(s.nmi)])
    _write_csv(out_path, SIMILARITY_HEADER, rows)
    return Path(out_path)


# --- argument parsing -----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bae-ood", description="Bayesian autoencoders for OOD detection")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model family and write a checkpoint directory")
    t.add_argument("--config")
    t.add_argument("--family", choices=inf.FAMILIES)
    t.add_argument("--likelihood")
    t.add_argument("--reg-scale", type=float, dest="reg_scale")
    t.add_argument("--seed", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", type=int, dest="batch_size")
    t.add_argument("--hidden", help="comma separated hidden widths, e.g. 128,64")
    t.add_argument("--latent-dim", type=int, dest="latent_dim")
    t.add_argument("--samples", type=int, help="posterior samples T stored as the scoring default")
    t.add_argument("--ensemble", type=int, help="ensemble size M")
    t.add_argument("--p-drop", type=float, dest="p_drop")
    t.add_argument("--train-data", dest="train_data")
    t.add_argument("--lr-min", type=float, dest="lr_min")
    t.add_argument("--lr-max", type=float, dest="lr_max")
    t.add_argument("--sweep", action="store_const", const=True, default=None)
    t.add_argument("--out-dir", dest="out_dir")
    t.add_argument("--workers", type=int)

    s = sub.add_parser("score", help="score a dataset with a trained checkpoint directory")
    s.add_argument("--checkpoints", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--samples", type=int)
    s.add_argument("--label")
    s.add_argument("--likelihood")
    s.add_argument("--seed", type=int, default=0)

    e = sub.add_parser("eval", help="AUROC/AUPRC/FPR80 and PCC from two score files")
    e.add_argument("--in-scores", required=True)
    e.add_argument("--ood-scores", required=True)
    e.add_argument("--out-dir", required=True)

    a = sub.add_parser("analyze-likelihood", help="maximum attainable log-likelihood curves")
    a.add_argument("--grid-size", type=int, default=101)
    a.add_argument("--out")

    m = sub.add_parser("similarity", help="-BCE, -MSE, SSIM and NMI of reconstructions")
    m.add_argument("--checkpoints", required=True)
    m.add_argument("--data", required=True)
    m.add_argument("--out", required=True)
    m.add_argument("--samples", type=int)
    m.add_argument("--seed", type=int, default=0)
    return p


_TRAIN_KEYS = [
    "family", "likelihood", "reg_scale", "seed", "epochs", "batch_size", "hidden", "latent_dim",
    "samples", "ensemble", "p_drop", "train_data", "lr_min", "lr_max", "sweep", "out_dir", "workers",
]


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "train":
            overrides = {k: getattr(args, k) for k in _TRAIN_KEYS}
            cfg = load_config(args.config, overrides)
            for d in cmd_train(cfg):
                print(d)
        elif args.command == "score":
            print(cmd_score(args.checkpoints, args.data, args.out, args.samples, args.label, args.likelihood, args.seed))
        elif args.command == "eval":
            results = cmd_eval(args.in_scores, args.ood_scores, args.out_dir)
            for m in METHODS:
                r = results[m]
                print(f"{m:6s} auroc={r.auroc:.3f} auprc={r.auprc:.3f} fpr80={r.fpr80:.3f} pcc_zeros={results[m + '_pcc']:.3f}")
        elif args.command == "analyze-likelihood":
            cmd_analyze_likelihood(args.grid_size, args.out)
        elif args.command == "similarity":
            print(cmd_similarity(args.checkpoints, args.data, args.out, args.samples, args.seed))
    except (ConfigError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, FormatError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
