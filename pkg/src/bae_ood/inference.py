"""Training for the five autoencoder families and their posterior samplers.

Every family is trained with Adam under a sawtooth cyclic learning rate.
Random streams are derived from the run seed so that each concern (weight
init, batch order, anchors, dropout masks / weight noise) has its own
generator; changing one never perturbs another.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .errors import ConfigError, FinderError, FormatError, NumericError, TrainingError
from .likelihood import LikelihoodKind

log = logging.getLogger(__name__)

FAMILIES = ("deterministic", "vae", "mcdropout", "bayesbb", "ensemble")
REG_SWEEP = (10.0, 2.0, 1.0, 0.1, 0.01, 0.001)
DEFAULT_LR = (1e-4, 1e-3)

_SHUFFLE, _ANCHOR, _NOISE = 1, 2, 3


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, stream])


@dataclass
class TrainConfig:
    likelihood: LikelihoodKind = LikelihoodKind.GAUSSIAN
    reg_scale: float = 0.01
    epochs: int = 20
    batch_size: int = 100
    seed: int = 0
    lr_min: float | None = None
    lr_max: float | None = None
    hidden: list[int] = field(default_factory=lambda: [128])
    latent_dim: int = 20
    cycle_epochs: int = 10
    p_drop: float = 0.2
    # initial softplus^-1 of the Bayes-by-Backprop posterior scale
    rho_init: float = -6.0

    def __post_init__(self):
        self.likelihood = LikelihoodKind.parse(self.likelihood)
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if not self.reg_scale >= 0:
            raise ConfigError("reg_scale must be non-negative")
        if self.cycle_epochs < 1:
            raise ConfigError("cycle_epochs must be >= 1")
        if self.latent_dim < 1:
            raise ConfigError("latent_dim must be >= 1")


# --- optimisation ----------------------------------------------------------


class Adam:
    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads, lr: float) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class SGD:
    def __init__(self, params):
        self.params = params

    def step(self, grads, lr: float) -> None:
        for p, g in zip(self.params, grads):
            p -= lr * g


def cyclic_lr(step: int, period: int, lr_min: float, lr_max: float) -> float:
    """Sawtooth: linear rise from lr_min towards lr_max, then an instant reset."""
    if period < 1:
        raise ValueError("period must be >= 1")
    if lr_min > lr_max:
        raise ValueError("lr_min must not exceed lr_max")
    return lr_min + (lr_max - lr_min) * (step % period) / period


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    return [order[i : i + batch_size] for i in range(0, n, batch_size)]


def _images(data) -> np.ndarray:
    images = getattr(data, "images", data)
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 2 or images.shape[0] == 0:
        raise ConfigError("training data must be a nonempty (N, D) array")
    if images.min() < 0.0 or images.max() > 1.0:
        raise ConfigError("training pixels must lie in [0, 1]")
    return images


def fit(params, loss_grad, images, cfg: TrainConfig, lr_range, seed: int) -> list[float]:
    """Adam over shuffled minibatches; ``loss_grad(params, xb, noise_rng)``.

    Returns the mean training loss of each epoch. Raises TrainingError on a
    non-finite loss.
    """
    shuffle_rng = _rng(seed, _SHUFFLE)
    noise_rng = _rng(seed, _NOISE)
    opt = Adam(params)
    n = images.shape[0]
    steps_per_epoch = math.ceil(n / cfg.batch_size)
    period = cfg.cycle_epochs * steps_per_epoch
    lr_min, lr_max = lr_range
    history = []
    step = 0
    for _ in range(cfg.epochs):
        total = 0.0
        for idx in _batches(n, cfg.batch_size, shuffle_rng):
            try:
                # overflow is caught below as a non-finite loss
                with np.errstate(over="ignore", invalid="ignore"):
                    loss, grads = loss_grad(params, images[idx], noise_rng)
            except NumericError as exc:
                raise TrainingError(f"numeric failure: {exc}", step) from exc
            if not math.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
                raise TrainingError("training diverged", step)
            opt.step(grads, cyclic_lr(step, period, lr_min, lr_max))
            total += loss * len(idx)
            step += 1
        history.append(total / n)
    return history


def find_lr(
    loss_grad,
    params,
    batches,
    n_steps: int = 100,
    lr_start: float = 1e-6,
    lr_end: float = 1.0,
    optimizer: str = "adam",
    smoothing: float = 0.9,
    skip_start: int = 10,
    noise_rng=None,
):
    """Exponential learning-rate sweep; returns (lr_min, lr_max, lrs, smoothed_losses).

    ``lr_max`` is the rate where the smoothed loss falls fastest per unit of
    log learning rate, searched between ``skip_start`` and the smoothed
    minimum. ``lr_min = lr_max / 10``. ``params`` is left untouched.
    """
    params = [p.copy() for p in params]
    opt = Adam(params) if optimizer == "adam" else SGD(params)
    lrs = lr_start * (lr_end / lr_start) ** (np.arange(n_steps) / max(n_steps - 1, 1))
    avg = 0.0
    smoothed = []
    for k, lr in enumerate(lrs):
        xb = batches[k % len(batches)]
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                loss, grads = loss_grad(params, xb, noise_rng)
        except (NumericError, FloatingPointError):
            break
        if not math.isfinite(loss):
            break
        avg = smoothing * avg + (1.0 - smoothing) * loss
        smoothed.append(avg / (1.0 - smoothing ** (k + 1)))
        with np.errstate(over="ignore", invalid="ignore"):
            opt.step(grads, float(lr))
        if not all(np.all(np.isfinite(p)) for p in params):
            break
    smoothed = np.asarray(smoothed)
    lrs = lrs[: smoothed.size]
    if smoothed.size < skip_start + 3:
        raise FinderError("learning-rate sweep stopped before it could measure a slope")
    slope = np.gradient(smoothed, np.log(lrs))
    stop = skip_start + int(np.argmin(smoothed[skip_start:])) + 1
    window = slope[skip_start:stop]
    k = skip_start + int(np.argmin(window))
    if slope[k] >= 0:
        raise FinderError("loss never decreased during the learning-rate sweep")
    lr_max = float(lrs[k])
    return lr_max / 10.0, lr_max, lrs, smoothed


# --- models and losses -------------------------------------------------------


def build_model(input_dim: int, cfg: TrainConfig, seed: int, variational: bool = False) -> nn.AeModel:
    enc, dec = nn.mlp_specs(input_dim, list(cfg.hidden), cfg.latent_dim, variational)
    return nn.init_params(enc, dec, seed, variational)


def draw_anchors(model: nn.AeModel, seed: int) -> list[np.ndarray]:
    """Anchors from the initialisation distribution: N(0, 1/in_dim) weights, zero biases."""
    rng = _rng(seed, _ANCHOR)
    out = []
    for layer in model.layers:
        s = layer.spec
        out.append(rng.normal(0.0, math.sqrt(1.0 / s.in_dim), size=layer.W.shape))
        out.append(np.zeros_like(layer.b))
    for a in out:
        a.setflags(write=False)
    return out


def dropout_masks(model: nn.AeModel, batch: int, p_drop: float, rng) -> dict[int, np.ndarray]:
    """Inverted-dropout masks for every layer output except the reconstruction."""
    keep = 1.0 - p_drop
    masks = {}
    for i, layer in enumerate(model.layers[:-1]):
        masks[i] = (rng.random((batch, layer.spec.out_dim)) < keep) / keep
    return masks


def weight_penalty(params, reg_scale: float, n_data: int, anchors=None):
    """(reg_scale / n_data) * ||w - anchors||^2 and its gradient."""
    coef = reg_scale / n_data
    diffs = params if anchors is None else [p - a for p, a in zip(params, anchors)]
    value = coef * sum(float(np.sum(d * d)) for d in diffs)
    return value, [2.0 * coef * d for d in diffs]


def map_loss(model, params, x, kind, reg_scale, n_data, anchors=None, masks=None):
    """NLL plus the (optionally anchored) weight penalty; shared by the AE, ensemble and dropout."""
    nll, grads = nn.backward(model, x, kind, masks=masks, params=params)
    penalty, pgrads = weight_penalty(params, reg_scale, n_data, anchors)
    return nll + penalty, [g + p for g, p in zip(grads, pgrads)]


def vae_loss(model, params, x, kind, eps, reg_scale):
    return nn.backward(model, x, kind, latent_noise=eps, kl_weight=reg_scale, params=params)


def softplus(r):
    return np.logaddexp(0.0, r)


def _sigmoid(r):
    return 0.5 * (1.0 + np.tanh(0.5 * r))


def gaussian_kl(mu, sigma, prior_sigma) -> float:
    """KL(N(mu, sigma^2) || N(0, prior_sigma^2)) summed over elements."""
    mu, sigma = np.asarray(mu, dtype=np.float64), np.asarray(sigma, dtype=np.float64)
    ratio = sigma / prior_sigma
    return float(np.sum(-np.log(ratio) + 0.5 * (ratio**2 + (mu / prior_sigma) ** 2) - 0.5))


def prior_sigmas(model: nn.AeModel) -> list[float]:
    out = []
    for layer in model.layers:
        s = math.sqrt(1.0 / layer.spec.in_dim)
        out.extend((s, s))
    return out


def bbb_loss(model, mu, rho, x, kind, eps, reg_scale, n_data, priors):
    """NLL at w = mu + softplus(rho) * eps plus reg_scale * KL(q || prior) / n_data.

    Returns (loss, grads_mu, grads_rho).
    """
    sigma = [softplus(r) for r in rho]
    w = [m + s * e for m, s, e in zip(mu, sigma, eps)]
    nll, gw = nn.backward(model, x, kind, params=w)
    coef = reg_scale / n_data
    kl = sum(gaussian_kl(m, s, p) for m, s, p in zip(mu, sigma, priors))
    g_mu, g_rho = [], []
    for m, r, s, e, g, p in zip(mu, rho, sigma, eps, gw, priors):
        g_mu.append(g + coef * m / p**2)
        dsigma = g * e + coef * (-1.0 / s + s / p**2)
        g_rho.append(dsigma * _sigmoid(r))
    return nll + coef * kl, g_mu, g_rho


# --- samplers --------------------------------------------------------------


class PosteriorSampler:
    family = ""
    default_T = 100

    def __init__(self, likelihood, seed: int = 0):
        self.likelihood = LikelihoodKind.parse(likelihood)
        self.seed = seed

    @property
    def input_dim(self) -> int:
        raise NotImplementedError

    def _draw(self, x, T, rng):
        raise NotImplementedError

    def sample(self, x, T=None, rng=None) -> list[np.ndarray]:
        T = self.default_T if T is None else T
        if T < 1:
            raise ConfigError("number of posterior samples must be >= 1")
        rng = _rng(self.seed, _NOISE) if rng is None else rng
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return self._draw(x, T, rng)


class DeterministicSampler(PosteriorSampler):
    family = "deterministic"

    def __init__(self, model, likelihood, seed=0):
        super().__init__(likelihood, seed)
        self.model = model

    @property
    def input_dim(self):
        return self.model.input_dim

    def _draw(self, x, T, rng):
        out = nn.forward(self.model, x)
        return [out] * T


class EnsembleSampler(PosteriorSampler):
    family = "ensemble"

    def __init__(self, models, anchors, likelihood, seed=0):
        super().__init__(likelihood, seed)
        self.models = list(models)
        self.anchors = list(anchors)

    @property
    def default_T(self):
        return len(self.models)

    @property
    def input_dim(self):
        return self.models[0].input_dim

    def sample(self, x, T=None, rng=None):
        # the ensemble size fixes the sample count
        return super().sample(x, len(self.models), rng)

    def _draw(self, x, T, rng):
        return [nn.forward(m, x) for m in self.models]


class DropoutSampler(PosteriorSampler):
    family = "mcdropout"

    def __init__(self, model, p_drop, likelihood, seed=0):
        super().__init__(likelihood, seed)
        self.model = model
        self.p_drop = p_drop

    @property
    def input_dim(self):
        return self.model.input_dim

    def _draw(self, x, T, rng):
        return [
            nn.forward(self.model, x, masks=dropout_masks(self.model, x.shape[0], self.p_drop, rng))
            for _ in range(T)
        ]


class BayesByBackpropSampler(PosteriorSampler):
    family = "bayesbb"

    def __init__(self, model, mu, rho, likelihood, seed=0):
        super().__init__(likelihood, seed)
        self.model = model
        self.mu = list(mu)
        self.rho = list(rho)

    @property
    def input_dim(self):
        return self.model.input_dim

    @property
    def sigma(self):
        return [softplus(r) for r in self.rho]

    def weights(self, eps) -> list[np.ndarray]:
        return [m + s * e for m, s, e in zip(self.mu, self.sigma, eps)]

    def _draw(self, x, T, rng):
        out = []
        for _ in range(T):
            eps = [rng.standard_normal(m.shape) for m in self.mu]
            out.append(nn.forward(self.model, x, params=self.weights(eps)))
        return out


class VaeSampler(PosteriorSampler):
    family = "vae"

    def __init__(self, model, likelihood, seed=0):
        super().__init__(likelihood, seed)
        self.model = model

    @property
    def input_dim(self):
        return self.model.input_dim

    def _draw(self, x, T, rng):
        k = self.model.latent_dim
        return [
            nn.forward(self.model, x, latent_noise=rng.standard_normal((x.shape[0], k)))
            for _ in range(T)
        ]


def sample_predictions(sampler: PosteriorSampler, x, T: int | None = None, rng=None) -> list[np.ndarray]:
    """T reconstructions of ``x`` (M for an ensemble); reproducible for a fixed sampler seed."""
    return sampler.sample(x, T, rng)


# --- training entry points ---------------------------------------------------


def _lr_range(cfg, images, input_dim):
    if cfg.lr_min is not None and cfg.lr_max is not None:
        return cfg.lr_min, cfg.lr_max
    try:
        return lr_finder(cfg, images)
    except FinderError as exc:
        log.warning("learning-rate finder failed (%s); using defaults %s", exc, DEFAULT_LR)
        return DEFAULT_LR


def lr_finder(cfg: TrainConfig, data) -> tuple[float, float]:
    """Sweep 1e-6 -> 1 on a plain autoencoder for one epoch (at least 100 steps)."""
    images = _images(data)
    model = build_model(images.shape[1], cfg, cfg.seed)
    n = images.shape[0]
    batches = [images[i] for i in _batches(n, cfg.batch_size, _rng(cfg.seed, _SHUFFLE))]
    n_steps = max(len(batches), 100)

    def loss_grad(params, xb, _rng_unused):
        return map_loss(model, params, xb, cfg.likelihood, cfg.reg_scale, n)

    lr_min, lr_max, _, _ = find_lr(loss_grad, model.parameters(), batches, n_steps)
    return lr_min, lr_max


def train_deterministic(cfg: TrainConfig, data, lr_range=None):
    """MAP autoencoder; returns (sampler, per-epoch loss history)."""
    images = _images(data)
    n = images.shape[0]
    model = build_model(images.shape[1], cfg, cfg.seed)
    lr_range = lr_range or _lr_range(cfg, images, images.shape[1])
    params = model.parameters()

    def loss_grad(p, xb, _):
        return map_loss(model, p, xb, cfg.likelihood, cfg.reg_scale, n)

    history = fit(params, loss_grad, images, cfg, lr_range, cfg.seed)
    return DeterministicSampler(model, cfg.likelihood, cfg.seed), history


def _train_member(cfg, images, seed, lr_range):
    n = images.shape[0]
    model = build_model(images.shape[1], cfg, seed)
    anchors = draw_anchors(model, seed)
    params = model.parameters()

    def loss_grad(p, xb, _):
        return map_loss(model, p, xb, cfg.likelihood, cfg.reg_scale, n, anchors=anchors)

    history = fit(params, loss_grad, images, cfg, lr_range, seed)
    return model, anchors, history


def member_seeds(seed: int, M: int) -> list[int]:
    return [seed + j for j in range(M)]


def train_anchored_ensemble(cfg: TrainConfig, data, M: int = 5, workers: int | None = None, lr_range=None):
    """M anchored members trained independently; returns (sampler, list of histories)."""
    if M < 2:
        raise ConfigError("an anchored ensemble needs M >= 2")
    images = _images(data)
    lr_range = lr_range or _lr_range(cfg, images, images.shape[1])
    seeds = member_seeds(cfg.seed, M)
    workers = M if workers is None else max(1, workers)
    if workers == 1:
        results = [_train_member(cfg, images, s, lr_range) for s in seeds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda s: _train_member(cfg, images, s, lr_range), seeds))
    models, anchors, histories = zip(*results)
    return EnsembleSampler(models, anchors, cfg.likelihood, cfg.seed), list(histories)


def train_mc_dropout(cfg: TrainConfig, data, p_drop: float | None = None, lr_range=None):
    p_drop = cfg.p_drop if p_drop is None else p_drop
    if not 0.0 < p_drop < 1.0:
        raise ConfigError("p_drop must lie in (0, 1)")
    images = _images(data)
    n = images.shape[0]
    model = build_model(images.shape[1], cfg, cfg.seed)
    lr_range = lr_range or _lr_range(cfg, images, images.shape[1])

    def loss_grad(p, xb, rng):
        masks = dropout_masks(model, xb.shape[0], p_drop, rng)
        return map_loss(model, p, xb, cfg.likelihood, cfg.reg_scale, n, masks=masks)

    history = fit(model.parameters(), loss_grad, images, cfg, lr_range, cfg.seed)
    return DropoutSampler(model, p_drop, cfg.likelihood, cfg.seed), history


def train_bayes_by_backprop(cfg: TrainConfig, data, lr_range=None):
    images = _images(data)
    n = images.shape[0]
    model = build_model(images.shape[1], cfg, cfg.seed)
    lr_range = lr_range or _lr_range(cfg, images, images.shape[1])
    mu = model.parameters()
    rho = [np.full_like(m, cfg.rho_init) for m in mu]
    priors = prior_sigmas(model)
    k = len(mu)

    def loss_grad(p, xb, rng):
        eps = [rng.standard_normal(m.shape) for m in p[:k]]
        loss, g_mu, g_rho = bbb_loss(model, p[:k], p[k:], xb, cfg.likelihood, eps, cfg.reg_scale, n, priors)
        return loss, g_mu + g_rho

    history = fit(mu + rho, loss_grad, images, cfg, lr_range, cfg.seed)
    return BayesByBackpropSampler(model, mu, rho, cfg.likelihood, cfg.seed), history


def train_vae(cfg: TrainConfig, data, lr_range=None):
    images = _images(data)
    model = build_model(images.shape[1], cfg, cfg.seed, variational=True)
    lr_range = lr_range or _lr_range(cfg, images, images.shape[1])

    def loss_grad(p, xb, rng):
        eps = rng.standard_normal((xb.shape[0], model.latent_dim))
        return vae_loss(model, p, xb, cfg.likelihood, eps, cfg.reg_scale)

    history = fit(model.parameters(), loss_grad, images, cfg, lr_range, cfg.seed)
    return VaeSampler(model, cfg.likelihood, cfg.seed), history


def train_family(family: str, cfg: TrainConfig, data, M: int = 5, workers=None):
    """Dispatch by family name; returns (sampler, histories keyed by component)."""
    images = _images(data)
    lr_range = _lr_range(cfg, images, images.shape[1])
    if family == "deterministic":
        s, h = train_deterministic(cfg, images, lr_range)
        return s, {"model": h}
    if family == "ensemble":
        s, hs = train_anchored_ensemble(cfg, images, M, workers, lr_range)
        return s, {f"member_{j}": h for j, h in enumerate(hs)}
    if family == "mcdropout":
        s, h = train_mc_dropout(cfg, images, lr_range=lr_range)
        return s, {"model": h}
    if family == "bayesbb":
        s, h = train_bayes_by_backprop(cfg, images, lr_range)
        return s, {"model": h}
    if family == "vae":
        s, h = train_vae(cfg, images, lr_range)
        return s, {"model": h}
    raise ConfigError(f"unknown family {family!r}; expected one of {FAMILIES}")


# --- checkpoint directories --------------------------------------------------


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def save_sampler(sampler: PosteriorSampler, directory, cfg: TrainConfig, extra: dict | None = None) -> Path:
    """One BAE1 file per posterior component plus ``manifest.txt`` (key=value)."""
    from .data import write_kv

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if isinstance(sampler, EnsembleSampler):
        model = sampler.models[0]
        for j, (m, a) in enumerate(zip(sampler.models, sampler.anchors)):
            nn.save_checkpoint(m, directory / f"member_{j}.bae")
            nn.save_checkpoint(m.with_parameters(a), directory / f"anchor_{j}.bae")
        seeds = member_seeds(sampler.seed, len(sampler.models))
        samples = len(sampler.models)
    else:
        model = sampler.model
        seeds = [sampler.seed]
        samples = sampler.default_T
        if isinstance(sampler, BayesByBackpropSampler):
            nn.save_checkpoint(model.with_parameters(sampler.mu), directory / "mu.bae")
            nn.save_checkpoint(model.with_parameters(sampler.rho), directory / "rho.bae")
        else:
            nn.save_checkpoint(model, directory / "model.bae")
    manifest = {
        "family": sampler.family,
        "likelihood": sampler.likelihood.value,
        "reg_scale": _fmt(cfg.reg_scale),
        "seed": sampler.seed,
        "seeds": ",".join(str(s) for s in seeds),
        "samples": samples,
        "members": len(sampler.models) if isinstance(sampler, EnsembleSampler) else 1,
        "p_drop": _fmt(getattr(sampler, "p_drop", 0.0)),
        "input_dim": model.input_dim,
        "latent_dim": model.latent_dim,
        "encoder_layers": len(model.encoder),
        "variational": int(model.variational),
        "epochs": cfg.epochs,
        "batch_size": cfg.batch_size,
    }
    manifest.update(extra or {})
    write_kv(manifest, directory / "manifest.txt")
    return directory


def load_sampler(directory) -> tuple[PosteriorSampler, dict[str, str]]:
    from .data import read_kv

    directory = Path(directory)
    try:
        manifest = read_kv(directory / "manifest.txt")
        family = manifest["family"]
        likelihood = LikelihoodKind.parse(manifest["likelihood"])
        seed = int(manifest["seed"])
        n_enc = int(manifest["encoder_layers"])
        variational = bool(int(manifest["variational"]))
    except (OSError, KeyError, ValueError) as exc:
        raise FormatError(f"{directory}: unreadable manifest ({exc})") from exc

    def load(name):
        return nn.load_checkpoint(directory / name, n_enc, variational)

    if family == "ensemble":
        M = int(manifest["members"])
        models = [load(f"member_{j}.bae") for j in range(M)]
        anchors = [load(f"anchor_{j}.bae").parameters() for j in range(M)]
        sampler = EnsembleSampler(models, anchors, likelihood, seed)
    elif family == "bayesbb":
        mu_model = load("mu.bae")
        rho = load("rho.bae").parameters()
        sampler = BayesByBackpropSampler(mu_model, mu_model.parameters(), rho, likelihood, seed)
    elif family == "deterministic":
        sampler = DeterministicSampler(load("model.bae"), likelihood, seed)
    elif family == "mcdropout":
        sampler = DropoutSampler(load("model.bae"), float(manifest["p_drop"]), likelihood, seed)
    elif family == "vae":
        sampler = VaeSampler(load("model.bae"), likelihood, seed)
    else:
        raise FormatError(f"{directory}: unknown family {family!r}")
    if family not in ("ensemble",):
        sampler.default_T = int(manifest.get("samples", 100))
    return sampler, manifest


