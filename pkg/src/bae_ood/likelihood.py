"""Reconstruction log-likelihoods and their maximum-attainable curves.

All log-likelihoods are reported as a per-pixel mean in nats. Inputs may be
1-D (a single image, returns a float) or 2-D (a batch, returns one value per
row).
"""

from __future__ import annotations

import enum
import math

import numpy as np

from .errors import ConfigError, DimensionError, NumericError

CLAMP = 1e-7
# |lambda - 0.5| below this switches the normalizer to its series expansion
_TAYLOR_RADIUS = 1e-4
_GOLDEN_TOL = 1e-10


class LikelihoodKind(enum.Enum):
    BERNOULLI = "bernoulli"
    CONTINUOUS_BERNOULLI = "cb"
    GAUSSIAN = "gaussian"

    @classmethod
    def parse(cls, value: "str | LikelihoodKind") -> "LikelihoodKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {
            "bernoulli": cls.BERNOULLI,
            "ber": cls.BERNOULLI,
            "cb": cls.CONTINUOUS_BERNOULLI,
            "continuous_bernoulli": cls.CONTINUOUS_BERNOULLI,
            "cont_bernoulli": cls.CONTINUOUS_BERNOULLI,
            "gaussian": cls.GAUSSIAN,
            "gaussian_unit": cls.GAUSSIAN,
            "normal": cls.GAUSSIAN,
        }
        if key not in aliases:
            raise ConfigError(f"unknown likelihood {value!r}")
        return aliases[key]


def _pair(x, xhat):
    x = np.asarray(x, dtype=np.float64)
    xhat = np.asarray(xhat, dtype=np.float64)
    if x.shape != xhat.shape:
        raise DimensionError(f"shape mismatch: {x.shape} vs {xhat.shape}")
    if x.ndim not in (1, 2):
        raise DimensionError("expected a vector or a batch matrix")
    return x, xhat


def _reduce(per_pixel: np.ndarray):
    out = per_pixel.mean(axis=-1)
    return float(out) if out.ndim == 0 else out


def _check_open_unit(xhat: np.ndarray) -> None:
    if np.any(xhat <= 0.0) or np.any(xhat >= 1.0):
        raise NumericError("reconstruction must lie strictly inside (0, 1); clamp it first")


def log_cb_normalizer(lam):
    """log C(lam) for the continuous Bernoulli, C(lam) = 2 atanh(1-2 lam) / (1-2 lam)."""
    lam = np.asarray(lam, dtype=np.float64)
    u = 1.0 - 2.0 * lam
    near = np.abs(lam - 0.5) < _TAYLOR_RADIUS
    safe_u = np.where(near, 0.5, u)
    exact = np.log(2.0 * np.arctanh(safe_u) / safe_u)
    u2 = u * u
    # log(atanh(u)/u) = u^2/3 + 13 u^4/90 + O(u^6)
    series = math.log(2.0) + u2 / 3.0 + 13.0 * u2 * u2 / 90.0
    out = np.where(near, series, exact)
    return float(out) if out.ndim == 0 else out


def _dlog_cb_normalizer(lam):
    lam = np.asarray(lam, dtype=np.float64)
    u = 1.0 - 2.0 * lam
    near = np.abs(lam - 0.5) < _TAYLOR_RADIUS
    safe_u = np.where(near, 0.5, u)
    d_du = 1.0 / (np.arctanh(safe_u) * (1.0 - safe_u * safe_u)) - 1.0 / safe_u
    d_du = np.where(near, 2.0 * u / 3.0 + 52.0 * u ** 3 / 90.0, d_du)
    return -2.0 * d_du


def bernoulli_ll(x, xhat):
    x, xhat = _pair(x, xhat)
    _check_open_unit(xhat)
    return _reduce(x * np.log(xhat) + (1.0 - x) * np.log1p(-xhat))


def cont_bernoulli_ll(x, xhat):
    x, xhat = _pair(x, xhat)
    _check_open_unit(xhat)
    per_pixel = x * np.log(xhat) + (1.0 - x) * np.log1p(-xhat) + log_cb_normalizer(xhat)
    return _reduce(per_pixel)


def gaussian_ll(x, xhat):
    """Unit-variance diagonal Gaussian, without the 2*pi constant; equals -MSE/2."""
    x, xhat = _pair(x, xhat)
    return _reduce(-0.5 * (x - xhat) ** 2)


_LL = {
    LikelihoodKind.BERNOULLI: bernoulli_ll,
    LikelihoodKind.CONTINUOUS_BERNOULLI: cont_bernoulli_ll,
    LikelihoodKind.GAUSSIAN: gaussian_ll,
}


def log_likelihood(kind, x, xhat):
    return _LL[LikelihoodKind.parse(kind)](x, xhat)


def nll_and_grad(kind, x: np.ndarray, xhat: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean NLL over batch and pixels, and its derivative with respect to ``xhat``."""
    kind = LikelihoodKind.parse(kind)
    x, xhat = _pair(x, xhat)
    n = x.size
    if kind is LikelihoodKind.GAUSSIAN:
        diff = xhat - x
        return 0.5 * float(np.sum(diff * diff)) / n, diff / n
    _check_open_unit(xhat)
    per_pixel = x * np.log(xhat) + (1.0 - x) * np.log1p(-xhat)
    grad = -(x / xhat - (1.0 - x) / (1.0 - xhat))
    if kind is LikelihoodKind.CONTINUOUS_BERNOULLI:
        per_pixel = per_pixel + log_cb_normalizer(xhat)
        grad = grad - _dlog_cb_normalizer(xhat)
    loss = -float(np.sum(per_pixel)) / n
    if not math.isfinite(loss):
        raise NumericError("non-finite reconstruction loss")
    return loss, grad / n


def golden_section_max(f, lo: float, hi: float, tol: float = _GOLDEN_TOL) -> tuple[float, float]:
    """Maximise a unimodal scalar function on [lo, hi]; returns (argmax, max)."""
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
    # endpoints matter when the optimum sits on the clamp boundary
    best = max((f(a), a), (f(b), b), (fc, c), (fd, d))
    return best[1], best[0]


def _bernoulli_entropy_term(x: float) -> float:
    if x <= 0.0 or x >= 1.0:
        return 0.0
    return x * math.log(x) + (1.0 - x) * math.log1p(-x)


def _cb_max(x: float) -> float:
    def objective(lam: float) -> float:
        return (
            x * math.log(lam)
            + (1.0 - x) * math.log1p(-lam)
            + float(log_cb_normalizer(lam))
        )

    _, value = golden_section_max(objective, CLAMP, 1.0 - CLAMP)
    return value


def max_ll_curve(kind, grid) -> list[tuple[float, float]]:
    """Largest per-pixel log-likelihood attainable by any reconstruction, per pixel value."""
    kind = LikelihoodKind.parse(kind)
    out = []
    for x in grid:
        x = float(x)
        if not 0.0 <= x <= 1.0:
            raise ValueError(f"grid value {x} outside [0, 1]")
        if kind is LikelihoodKind.BERNOULLI:
            out.append((x, _bernoulli_entropy_term(x)))
        elif kind is LikelihoodKind.CONTINUOUS_BERNOULLI:
            out.append((x, _cb_max(x)))
        else:
            out.append((x, 0.0))
    return out
