"""Fully connected autoencoders with hand-written reverse-mode gradients.

Parameters are plain float64 numpy arrays. A weight matrix has shape
``(in_dim, out_dim)`` and is applied as ``x @ W + b``. The flat parameter
order used everywhere (gradients, optimisers, anchors) is
``[W0, b0, W1, b1, ...]`` over the encoder layers followed by the decoder
layers.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError, FormatError, NumericError
from .likelihood import CLAMP, nll_and_grad

LEAKY_SLOPE = 0.01
CHECKPOINT_MAGIC = b"BAE1"


class Activation(enum.IntEnum):
    # values are the on-disk tags
    LEAKY_RELU = 0
    SIGMOID = 1
    IDENTITY = 2


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: Activation = Activation.LEAKY_RELU
    slope: float = LEAKY_SLOPE

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1:
            raise DimensionError("layer dimensions must be positive")


@dataclass
class Layer:
    spec: LayerSpec
    W: np.ndarray
    b: np.ndarray


@dataclass
class AeModel:
    """Encoder/decoder stack.

    With ``variational=True`` the encoder's last layer emits ``2 * latent_dim``
    values (mean, log-variance) and the decoder consumes ``latent_dim``.
    """

    encoder: list[Layer]
    decoder: list[Layer]
    variational: bool = False

    def __post_init__(self):
        if not self.encoder or not self.decoder:
            raise DimensionError("encoder and decoder need at least one layer")
        for stack in (self.encoder, self.decoder):
            for a, b in zip(stack, stack[1:]):
                if a.spec.out_dim != b.spec.in_dim:
                    raise DimensionError("consecutive layer dimensions disagree")
        width = self.encoder[-1].spec.out_dim
        expected = 2 * self.decoder[0].spec.in_dim if self.variational else self.decoder[0].spec.in_dim
        if width != expected:
            raise DimensionError("encoder output does not match decoder input")
        if self.decoder[-1].spec.out_dim != self.encoder[0].spec.in_dim:
            raise DimensionError("decoder output must match input dimension")
        if self.decoder[-1].spec.activation is not Activation.SIGMOID:
            raise DimensionError("final decoder activation must be sigmoid")

    @property
    def input_dim(self) -> int:
        return self.encoder[0].spec.in_dim

    @property
    def latent_dim(self) -> int:
        return self.decoder[0].spec.in_dim

    @property
    def layers(self) -> list[Layer]:
        return self.encoder + self.decoder

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend((layer.W, layer.b))
        return out

    def with_parameters(self, params) -> "AeModel":
        params = list(params)
        if len(params) != 2 * len(self.layers):
            raise DimensionError("parameter count does not match model")
        new = []
        for i, layer in enumerate(self.layers):
            W, b = params[2 * i], params[2 * i + 1]
            if W.shape != layer.W.shape or b.shape != layer.b.shape:
                raise DimensionError("parameter shape does not match model")
            new.append(Layer(layer.spec, np.array(W, dtype=np.float64), np.array(b, dtype=np.float64)))
        n_enc = len(self.encoder)
        return AeModel(new[:n_enc], new[n_enc:], self.variational)

    def copy(self) -> "AeModel":
        return self.with_parameters(self.parameters())


def mlp_specs(input_dim: int, hidden: list[int], latent_dim: int, variational: bool = False):
    """Symmetric encoder/decoder layer specs: leaky ReLU throughout, sigmoid output."""
    enc_dims = [input_dim, *hidden]
    encoder = [LayerSpec(a, b) for a, b in zip(enc_dims, enc_dims[1:])]
    if variational:
        encoder.append(LayerSpec(enc_dims[-1], 2 * latent_dim, Activation.IDENTITY))
    else:
        encoder.append(LayerSpec(enc_dims[-1], latent_dim))
    dec_dims = [latent_dim, *reversed(hidden)]
    decoder = [LayerSpec(a, b) for a, b in zip(dec_dims, dec_dims[1:])]
    decoder.append(LayerSpec(dec_dims[-1], input_dim, Activation.SIGMOID))
    return encoder, decoder


def init_params(encoder_specs, decoder_specs, seed: int, variational: bool = False) -> AeModel:
    """Gaussian weights with variance 1/in_dim, zero biases; deterministic in ``seed``."""
    rng = np.random.default_rng(seed)

    def build(specs):
        return [
            Layer(
                s,
                rng.normal(0.0, np.sqrt(1.0 / s.in_dim), size=(s.in_dim, s.out_dim)),
                np.zeros(s.out_dim),
            )
            for s in specs
        ]

    return AeModel(build(encoder_specs), build(decoder_specs), variational)


# --- forward / backward ---------------------------------------------------


def _activate(spec: LayerSpec, z: np.ndarray) -> np.ndarray:
    if spec.activation is Activation.LEAKY_RELU:
        return np.where(z > 0, z, spec.slope * z)
    if spec.activation is Activation.SIGMOID:
        # split form avoids overflow in exp for large |z|
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    return z


def _activation_grad(spec: LayerSpec, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if spec.activation is Activation.LEAKY_RELU:
        return np.where(z > 0, 1.0, spec.slope)
    if spec.activation is Activation.SIGMOID:
        return a * (1.0 - a)
    return np.ones_like(z)


def _stack_forward(layers, x, masks=None, mask_offset=0, params=None):
    """Run a layer stack, caching what backward needs.

    ``masks`` maps a global layer index to a multiplicative mask applied to
    that layer's post-activation output. ``params`` overrides the stored
    weights with ``[(W, b), ...]``.
    """
    cache = []
    h = x
    for i, layer in enumerate(layers):
        W, b = (layer.W, layer.b) if params is None else params[i]
        z = h @ W + b
        a = _activate(layer.spec, z)
        m = None if masks is None else masks.get(mask_offset + i)
        out = a if m is None else a * m
        cache.append((h, z, a, m, W))
        h = out
    return h, cache


def _stack_backward(layers, cache, dout):
    grads = []
    for layer, (h, z, a, m, W) in zip(reversed(layers), reversed(cache)):
        if m is not None:
            dout = dout * m
        dz = dout * _activation_grad(layer.spec, z, a)
        grads.append((h.T @ dz, dz.sum(axis=0)))
        dout = dz @ W.T
    grads.reverse()
    flat = [g for pair in grads for g in pair]
    return flat, dout


def _check_input(model: AeModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise DimensionError(f"expected input with {model.input_dim} columns, got shape {x.shape}")
    return x


def clamp_output(xhat: np.ndarray) -> np.ndarray:
    return np.clip(xhat, CLAMP, 1.0 - CLAMP)


def encode(model: AeModel, x) -> np.ndarray:
    """Latent embedding; for a variational model this is the posterior mean."""
    x = _check_input(model, x)
    h, _ = _stack_forward(model.encoder, x)
    return h[:, : model.latent_dim] if model.variational else h


def decode(model: AeModel, z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    out, _ = _stack_forward(model.decoder, z)
    return clamp_output(out)


def forward(model: AeModel, x, masks=None, latent_noise=None, params=None) -> np.ndarray:
    """Reconstruction ``decoder(encoder(x))`` clamped to [CLAMP, 1 - CLAMP].

    ``latent_noise`` is the standard-normal draw used by a variational model;
    ``None`` decodes the latent mean.
    """
    return _run(model, _check_input(model, x), masks, latent_noise, params)[0]


def _run(model, x, masks, latent_noise, params):
    n_enc = len(model.encoder)
    enc_params = dec_params = None
    if params is not None:
        pairs = [(params[2 * i], params[2 * i + 1]) for i in range(len(model.layers))]
        enc_params, dec_params = pairs[:n_enc], pairs[n_enc:]
    h, enc_cache = _stack_forward(model.encoder, x, masks, 0, enc_params)
    vae = None
    if model.variational:
        k = model.latent_dim
        mu, logvar = h[:, :k], h[:, k:]
        if latent_noise is None:
            z = mu
            std = eps = None
        else:
            std = np.exp(0.5 * logvar)
            eps = np.asarray(latent_noise, dtype=np.float64)
            z = mu + std * eps
        vae = (mu, logvar, std, eps)
        h = z
    raw, dec_cache = _stack_forward(model.decoder, h, masks, n_enc, dec_params)
    return clamp_output(raw), (raw, enc_cache, dec_cache, vae)


def latent_kl(mu: np.ndarray, logvar: np.ndarray) -> np.ndarray:
    """KL(N(mu, exp(logvar)) || N(0, I)) per row."""
    return 0.5 * np.sum(mu * mu + np.exp(logvar) - 1.0 - logvar, axis=1)


def backward(
    model: AeModel,
    x,
    loss_kind,
    masks=None,
    latent_noise=None,
    kl_weight: float = 0.0,
    params=None,
) -> tuple[float, list[np.ndarray]]:
    """Mean NLL over batch and pixels and its gradient for every parameter.

    For a variational model ``kl_weight * KL / D`` (batch-averaged) is added,
    where KL is the latent divergence to the standard normal.
    """
    x = _check_input(model, x)
    xhat, (raw, enc_cache, dec_cache, vae) = _run(model, x, masks, latent_noise, params)
    loss, dxhat = nll_and_grad(loss_kind, x, xhat)
    # the clamp passes no gradient where it is active
    dxhat = np.where((raw > CLAMP) & (raw < 1.0 - CLAMP), dxhat, 0.0)
    dec_grads, dh = _stack_backward(model.decoder, dec_cache, dxhat)
    if vae is not None:
        mu, logvar, std, eps = vae
        batch, dim = x.shape
        dmu = dh
        dlogvar = np.zeros_like(logvar) if std is None else dh * eps * std * 0.5
        if kl_weight:
            kl = latent_kl(mu, logvar)
            loss += kl_weight * float(kl.mean()) / dim
            scale = kl_weight / (dim * batch)
            dmu = dmu + scale * mu
            dlogvar = dlogvar + scale * 0.5 * (np.exp(logvar) - 1.0)
        dh = np.concatenate([dmu, dlogvar], axis=1)
    enc_grads, _ = _stack_backward(model.encoder, enc_cache, dh)
    if not np.isfinite(loss):
        raise NumericError("non-finite loss")
    return loss, enc_grads + dec_grads


# --- checkpoint format ----------------------------------------------------
#
#   b"BAE1" | u32 layer count | per layer:
#     u32 in_dim | u32 out_dim | u8 activation tag | f64[in*out] W | f64[out] b
#
# All integers and floats little-endian; W is row-major (in_dim, out_dim).
# The leaky-ReLU slope is not stored and is always 0.01 on load.


def save_checkpoint(model_or_layers, path) -> None:
    layers = model_or_layers.layers if isinstance(model_or_layers, AeModel) else model_or_layers
    chunks = [CHECKPOINT_MAGIC, struct.pack("<I", len(layers))]
    for layer in layers:
        s = layer.spec
        chunks.append(struct.pack("<IIB", s.in_dim, s.out_dim, int(s.activation)))
        chunks.append(np.ascontiguousarray(layer.W, dtype="<f8").tobytes())
        chunks.append(np.ascontiguousarray(layer.b, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_layers(path) -> list[Layer]:
    buf = Path(path).read_bytes()
    if buf[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a BAE1 checkpoint")
    pos = 4
    try:
        (count,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        layers = []
        for _ in range(count):
            in_dim, out_dim, tag = struct.unpack_from("<IIB", buf, pos)
            pos += 9
            n_w = in_dim * out_dim
            W = np.frombuffer(buf, dtype="<f8", count=n_w, offset=pos).reshape(in_dim, out_dim)
            pos += 8 * n_w
            b = np.frombuffer(buf, dtype="<f8", count=out_dim, offset=pos)
            pos += 8 * out_dim
            spec = LayerSpec(in_dim, out_dim, Activation(tag))
            layers.append(Layer(spec, W.astype(np.float64), b.astype(np.float64)))
    except (struct.error, ValueError) as exc:
        raise FormatError(f"{path}: truncated or corrupt checkpoint ({exc})") from exc
    if pos != len(buf):
        raise FormatError(f"{path}: {len(buf) - pos} trailing bytes")
    return layers


def load_checkpoint(path, n_encoder_layers: int, variational: bool = False) -> AeModel:
    layers = load_layers(path)
    if not 0 < n_encoder_layers < len(layers):
        raise FormatError("encoder layer count out of range for checkpoint")
    return AeModel(layers[:n_encoder_layers], layers[n_encoder_layers:], variational)
