"""Turn posterior reconstructions into E(LL), Var(LL), WAIC and Var(x_hat) scores."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .likelihood import LikelihoodKind, log_likelihood

METHODS = ("ell", "varll", "waic", "varx")
RAW_FIELDS = {"ell": "e_ll", "varll": "var_ll", "waic": "waic", "varx": "mean_pred_var"}


@dataclass
class ScoreReport:
    """Per-input summary; every ``score_*`` is oriented so higher means more OOD."""

    dataset: str
    e_ll: float
    var_ll: float
    waic: float
    mean_pred_var: float
    proportion_zeros: float

    @property
    def score_ell(self) -> float:
        return -self.e_ll

    @property
    def score_varll(self) -> float:
        return self.var_ll

    @property
    def score_waic(self) -> float:
        return -self.waic

    @property
    def score_varx(self) -> float:
        return self.mean_pred_var

    def ood_scores(self) -> dict[str, float]:
        return ood_scores(self)


def _stack(samples) -> np.ndarray:
    samples = [np.asarray(s, dtype=np.float64) for s in samples]
    if not samples:
        raise ValueError("need at least one posterior sample")
    shape = samples[0].shape
    if any(s.shape != shape for s in samples):
        raise ValueError("posterior samples have inconsistent shapes")
    # sorting along the sample axis makes every reduction independent of sample order
    return np.sort(np.stack(samples), axis=0)


def _population_moments(stacked: np.ndarray):
    """Moments along axis 0 of data already sorted along that axis."""
    mean = stacked.mean(axis=0)
    var = ((stacked - mean) ** 2).mean(axis=0)
    # identical samples must give exactly their common value and zero spread
    flat = stacked[0] == stacked[-1]
    mean = np.where(flat, stacked[0], mean)
    var = np.where(flat, 0.0, var)
    return mean, var


def predictive_moments(samples) -> tuple[np.ndarray, np.ndarray]:
    """Elementwise mean and population variance (divide by T) over the samples."""
    return _population_moments(_stack(samples))


def ll_values(x, samples, kind) -> np.ndarray:
    """Log-likelihood of ``x`` under each reconstruction; shape (T,) or (T, batch)."""
    kind = LikelihoodKind.parse(kind)
    return np.stack([np.asarray(log_likelihood(kind, x, s)) for s in samples])


def ll_moments(x, samples, kind):
    """Mean and population variance of the log-likelihood over the T samples."""
    mean, var = _population_moments(np.sort(ll_values(x, samples, kind), axis=0))
    if mean.ndim == 0:
        return float(mean), float(var)
    return mean, var


def waic(e_ll, var_ll):
    return e_ll - var_ll


def ood_scores(report: ScoreReport) -> dict[str, float]:
    return {
        "ell": -report.e_ll,
        "varll": report.var_ll,
        "waic": -report.waic,
        "varx": report.mean_pred_var,
    }


def reports_from_samples(x, samples, kind, label: str) -> list[ScoreReport]:
    """One report per row of ``x`` given T reconstructions of the whole batch."""
    from .metrics import proportion_zeros

    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    samples = [np.atleast_2d(np.asarray(s, dtype=np.float64)) for s in samples]
    e_ll, var_ll = ll_moments(x, samples, kind)
    _, pred_var = predictive_moments(samples)
    mean_pred_var = pred_var.mean(axis=-1)
    zeros = proportion_zeros(x)
    return [
        ScoreReport(
            label,
            float(e_ll[i]),
            float(var_ll[i]),
            float(waic(e_ll[i], var_ll[i])),
            float(mean_pred_var[i]),
            float(zeros[i]),
        )
        for i in range(x.shape[0])
    ]


def score_dataset(sampler, images, kind, label: str, T: int | None = None, chunk: int = 100, seed: int = 0):
    """Score every row of ``images`` in chunks; reproducible for a fixed ``seed``."""
    from .inference import sample_predictions

    images = np.asarray(images, dtype=np.float64)
    out = []
    for k, start in enumerate(range(0, images.shape[0], chunk)):
        xb = images[start : start + chunk]
        rng = np.random.default_rng([seed, k])
        samples = sample_predictions(sampler, xb, T, rng=rng)
        out.extend(reports_from_samples(xb, samples, kind, label))
    return out
