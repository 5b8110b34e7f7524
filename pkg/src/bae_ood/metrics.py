"""OOD detection metrics, confoundedness statistics and image similarity measures.

Every detection metric treats OOD as the positive class and expects scores
oriented so that higher means more OOD.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.stats import rankdata

from .errors import DegenerateInputError, DimensionError
from .likelihood import CLAMP, bernoulli_ll

ZERO_THRESHOLD = 1.0 / 255.0
SSIM_WINDOW = 7
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2
NMI_BINS = 32


@dataclass(frozen=True)
class EvalResult:
    auroc: float
    auprc: float
    fpr80: float
    n_in: int
    n_out: int


def _scores(scores_ood, scores_in):
    s_out = np.asarray(scores_ood, dtype=np.float64).ravel()
    s_in = np.asarray(scores_in, dtype=np.float64).ravel()
    if s_out.size == 0 or s_in.size == 0:
        raise ValueError("both score lists must be nonempty")
    return s_out, s_in


def auroc(scores_ood, scores_in) -> float:
    """P(s_out > s_in) + P(s_out == s_in) / 2, from the Mann-Whitney rank sum."""
    s_out, s_in = _scores(scores_ood, scores_in)
    ranks = rankdata(np.concatenate([s_out, s_in]))
    n_out, n_in = s_out.size, s_in.size
    # rank sums are multiples of 1/2, so this numerator is exact
    u = ranks[:n_out].sum() - n_out * (n_out + 1) / 2.0
    return float(u / (n_out * n_in))


def _confusion_by_threshold(s_out, s_in):
    """TP and FP counts when flagging ``score >= t`` for each distinct t, descending."""
    scores = np.concatenate([s_out, s_in])
    labels = np.concatenate([np.ones(s_out.size), np.zeros(s_in.size)])
    order = np.argsort(-scores, kind="mergesort")
    scores, labels = scores[order], labels[order]
    last_of_run = np.r_[np.flatnonzero(np.diff(scores)), scores.size - 1]
    tp = np.cumsum(labels)[last_of_run]
    fp = (last_of_run + 1) - tp
    return tp, fp


def auprc(scores_ood, scores_in) -> float:
    """Average precision: sum over distinct thresholds of (recall step) * precision."""
    s_out, s_in = _scores(scores_ood, scores_in)
    tp, fp = _confusion_by_threshold(s_out, s_in)
    recall = tp / s_out.size
    precision = tp / (tp + fp)
    steps = np.diff(np.r_[0.0, recall])
    return float(np.sum(steps * precision))


def fpr_at_tpr(scores_ood, scores_in, tpr_target: float = 0.8) -> float:
    """Smallest false positive rate over thresholds whose TPR reaches ``tpr_target``."""
    if not 0.0 < tpr_target <= 1.0:
        raise ValueError("tpr_target must be in (0, 1]")
    s_out, s_in = _scores(scores_ood, scores_in)
    tp, fp = _confusion_by_threshold(s_out, s_in)
    ok = tp / s_out.size >= tpr_target - 1e-12
    return float(np.min(fp[ok]) / s_in.size)


def evaluate(scores_ood, scores_in) -> EvalResult:
    s_out, s_in = _scores(scores_ood, scores_in)
    return EvalResult(
        auroc(s_out, s_in), auprc(s_out, s_in), fpr_at_tpr(s_out, s_in, 0.8), s_in.size, s_out.size
    )


def pearson(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise DimensionError("pearson needs two equal-length vectors of length >= 2")
    da, db = a - a.mean(), b - b.mean()
    saa, sbb = float(np.dot(da, da)), float(np.dot(db, db))
    if saa == 0.0 or sbb == 0.0:
        raise DegenerateInputError("pearson correlation undefined for a constant input")
    r = float(np.dot(da, db)) / math.sqrt(saa * sbb)
    return min(1.0, max(-1.0, r))


def proportion_zeros(x) -> float | np.ndarray:
    """Share of pixels at or below 1/255, per image for a batch."""
    x = np.asarray(x, dtype=np.float64)
    out = np.mean(x <= ZERO_THRESHOLD, axis=-1)
    return float(out) if out.ndim == 0 else out


# --- image similarity ----------------------------------------------------


def _image_pair(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 2:
        raise DimensionError("expected two 2-D images of equal shape")
    return x, y


def ssim(x, y, window: int = SSIM_WINDOW) -> float:
    """Mean SSIM over all fully contained ``window x window`` uniform windows (data range 1)."""
    x, y = _image_pair(x, y)
    if window > min(x.shape):
        raise ValueError(f"window {window} larger than image {x.shape}")
    wx = sliding_window_view(x, (window, window))
    wy = sliding_window_view(y, (window, window))
    mx, my = wx.mean(axis=(-2, -1)), wy.mean(axis=(-2, -1))
    vx = wx.var(axis=(-2, -1))
    vy = wy.var(axis=(-2, -1))
    cov = ((wx - mx[..., None, None]) * (wy - my[..., None, None])).mean(axis=(-2, -1))
    num = (2 * mx * my + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mx**2 + my**2 + SSIM_C1) * (vx + vy + SSIM_C2)
    return float(np.mean(num / den))


def _entropy(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def nmi(x, y, bins: int = NMI_BINS) -> float:
    """2 I(X;Y) / (H(X) + H(Y)) from a joint intensity histogram on [0, 1]."""
    x, y = _image_pair(x, y)
    joint, _, _ = np.histogram2d(x.ravel(), y.ravel(), bins=bins, range=[[0, 1], [0, 1]])
    joint /= joint.sum()
    hx = _entropy(joint.sum(axis=1))
    hy = _entropy(joint.sum(axis=0))
    if hx == 0.0 or hy == 0.0:
        raise DegenerateInputError("normalised mutual information undefined for a constant image")
    mi = hx + hy - _entropy(joint.ravel())
    return float(min(1.0, max(0.0, 2.0 * mi / (hx + hy))))


def neg_bce(x, xhat) -> float:
    return bernoulli_ll(np.ravel(x), np.clip(np.ravel(xhat), CLAMP, 1 - CLAMP))


def neg_mse(x, xhat) -> float:
    return -float(np.mean((np.asarray(x, dtype=np.float64) - xhat) ** 2))


@dataclass(frozen=True)
class SimilarityScores:
    neg_bce: float
    neg_mse: float
    ssim: float
    nmi: float


def similarity(x, xhat) -> SimilarityScores:
    x, xhat = _image_pair(x, xhat)
    try:
        mi = nmi(x, xhat)
    except DegenerateInputError:
        mi = float("nan")
    window = min(SSIM_WINDOW, *x.shape)
    return SimilarityScores(neg_bce(x, xhat), neg_mse(x, xhat), ssim(x, xhat, window), mi)


def histogram_rows(method: str, scores_in, scores_ood, bins: int = 30):
    """(method, bin_left, bin_right, count_in, count_out) rows on a shared grid."""
    s_in = np.asarray(scores_in, dtype=np.float64)
    s_out = np.asarray(scores_ood, dtype=np.float64)
    lo = min(s_in.min(), s_out.min())
    hi = max(s_in.max(), s_out.max())
    if hi == lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    c_in, _ = np.histogram(s_in, edges)
    c_out, _ = np.histogram(s_out, edges)
    return [
        (method, float(edges[i]), float(edges[i + 1]), int(c_in[i]), int(c_out[i]))
        for i in range(bins)
    ]
