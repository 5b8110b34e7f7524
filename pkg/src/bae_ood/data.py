"""Datasets: IDX image files, synthetic zero-proportion generators, score CSVs."""

from __future__ import annotations

import csv
import gzip
import math
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DimensionError, FormatError, ParseError
from .scoring import ScoreReport

IDX_IMAGE_MAGIC = 0x00000803


@dataclass(frozen=True)
class Dataset:
    name: str
    images: np.ndarray  # (N, height * width), values in [0, 1]
    height: int
    width: int
    split: str = "test"

    def __post_init__(self):
        images = np.asarray(self.images, dtype=np.float64)
        if images.ndim != 2 or images.shape[1] != self.height * self.width:
            raise DimensionError(
                f"images of shape {images.shape} do not match {self.height}x{self.width}"
            )
        if images.size and (images.min() < 0.0 or images.max() > 1.0):
            raise FormatError("pixel values must lie in [0, 1]")
        images.setflags(write=False)
        object.__setattr__(self, "images", images)

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def dim(self) -> int:
        return self.height * self.width

    def image(self, i: int) -> np.ndarray:
        return self.images[i].reshape(self.height, self.width)


# --- IDX -----------------------------------------------------------------


def _open(path):
    path = Path(path)
    return gzip.open(path, "rb") if path.suffix == ".gz" else open(path, "rb")


def load_idx(images_path, expected: tuple[int, int] | None = None, name=None, split="test") -> Dataset:
    """Read an IDX3 unsigned-byte image file (optionally gzipped) into [0, 1] floats."""
    with _open(images_path) as fh:
        buf = fh.read()
    if len(buf) < 16:
        raise FormatError(f"{images_path}: file too short for an IDX header")
    magic, n, rows, cols = struct.unpack(">IIII", buf[:16])
    if magic != IDX_IMAGE_MAGIC:
        raise FormatError(f"{images_path}: magic 0x{magic:08x} is not an IDX image file")
    payload = n * rows * cols
    if len(buf) - 16 != payload:
        raise FormatError(
            f"{images_path}: payload has {len(buf) - 16} bytes, header implies {payload}"
        )
    if expected is not None and (rows, cols) != tuple(expected):
        raise DimensionError(f"{images_path}: images are {rows}x{cols}, expected {expected}")
    pixels = np.frombuffer(buf, dtype=np.uint8, offset=16).reshape(n, rows * cols)
    return Dataset(name or Path(images_path).name, pixels / 255.0, rows, cols, split)


def write_idx(dataset: Dataset, path) -> None:
    raw = np.rint(dataset.images * 255.0).astype(np.uint8)
    header = struct.pack(">IIII", IDX_IMAGE_MAGIC, len(dataset), dataset.height, dataset.width)
    Path(path).write_bytes(header + raw.tobytes())


# --- synthetic generators ------------------------------------------------


@dataclass(frozen=True)
class SyntheticSpec:
    kind: str  # "zeroheavy" or "midgray"
    n: int
    side: int = 16
    zero_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("zeroheavy", "midgray"):
            raise ConfigError(f"unknown synthetic kind {self.kind!r}")
        if self.n < 1 or self.side < 4:
            raise ConfigError("synthetic data needs n >= 1 and side >= 4")


_STEPS = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


def _zero_heavy_image(rng, side: int, zero_fraction: float) -> np.ndarray:
    # per-image zero share spreads around the target, never below 0.6
    lo = max(0.6, zero_fraction - 0.15)
    hi = min(0.97, zero_fraction + 0.15)
    target = rng.uniform(lo, hi)
    n_lit = max(1, int(round((1.0 - target) * side * side)))
    img = np.zeros((side, side))
    r, c = rng.integers(0, side, size=2)
    direction = _STEPS[rng.integers(len(_STEPS))]
    lit = 0
    while lit < n_lit:
        if img[r, c] == 0.0:
            img[r, c] = rng.uniform(0.6, 1.0)
            lit += 1
        if rng.random() < 0.25:
            direction = _STEPS[rng.integers(len(_STEPS))]
        if rng.random() < 0.05:
            r, c = rng.integers(0, side, size=2)
            continue
        r = min(max(r + direction[0], 0), side - 1)
        c = min(max(c + direction[1], 0), side - 1)
    return img


def _mid_gray_image(rng, side: int) -> np.ndarray:
    yy, xx = np.mgrid[0:side, 0:side] / (side - 1)
    img = np.zeros((side, side))
    for _ in range(rng.integers(2, 5)):
        cy, cx = rng.uniform(0, 1, size=2)
        width = rng.uniform(0.15, 0.4)
        img += rng.uniform(-1, 1) * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * width**2))
    span = img.max() - img.min()
    img = (img - img.min()) / span if span > 0 else np.zeros_like(img)
    lo = rng.uniform(0.2, 0.35)
    hi = rng.uniform(0.65, 0.8)
    return lo + (hi - lo) * img


def generate_synthetic(spec: SyntheticSpec, split: str = "train") -> Dataset:
    """Deterministic stand-in images with a controlled share of zero pixels.

    ``zeroheavy``: bright random-walk strokes on a zero background.
    ``midgray``: smooth blobs rescaled into [0.2, 0.8], so no zero pixels.
    """
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "zeroheavy":
        imgs = [_zero_heavy_image(rng, spec.side, spec.zero_fraction) for _ in range(spec.n)]
    else:
        imgs = [_mid_gray_image(rng, spec.side) for _ in range(spec.n)]
    images = np.stack(imgs).reshape(spec.n, -1)
    return Dataset(f"{spec.kind}-{spec.seed}", images, spec.side, spec.side, split)


def resolve_dataset(source: str, split: str = "test") -> Dataset:
    """Load ``synthetic:<kind>:<n>:<side>:<seed>[:<zero_fraction>]`` or an IDX path.

    Relative paths that do not exist are retried under ``$BAE_DATA_DIR``.
    """
    if source.startswith("synthetic:"):
        parts = source.split(":")[1:]
        if len(parts) not in (4, 5):
            raise ConfigError(f"bad synthetic source {source!r}")
        try:
            kind, n, side, seed = parts[0].lower(), int(parts[1]), int(parts[2]), int(parts[3])
            zf = float(parts[4]) if len(parts) == 5 else 0.8
        except ValueError as exc:
            raise ConfigError(f"bad synthetic source {source!r}") from exc
        return generate_synthetic(SyntheticSpec(kind, n, side, zf, seed), split)
    path = Path(source)
    if not path.exists() and not path.is_absolute() and os.environ.get("BAE_DATA_DIR"):
        path = Path(os.environ["BAE_DATA_DIR"]) / source
    if not path.exists():
        raise ConfigError(f"dataset not found: {source}")
    return load_idx(path, split=split)


# --- score CSVs ----------------------------------------------------------


SCORE_HEADER = [
    "dataset",
    "e_ll",
    "var_ll",
    "waic",
    "mean_pred_var",
    "score_ell",
    "score_varll",
    "score_waic",
    "score_varx",
    "proportion_zeros",
]
_REAL_FIELDS = ["e_ll", "var_ll", "waic", "mean_pred_var", "proportion_zeros"]


def fmt(value: float) -> str:
    """17 significant digits: enough for an exact float64 round trip."""
    return format(float(value), ".17g")


def save_scores_csv(reports, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCORE_HEADER)
        for r in reports:
            w.writerow(
                [
                    r.dataset,
                    fmt(r.e_ll),
                    fmt(r.var_ll),
                    fmt(r.waic),
                    fmt(r.mean_pred_var),
                    fmt(r.score_ell),
                    fmt(r.score_varll),
                    fmt(r.score_waic),
                    fmt(r.score_varx),
                    fmt(r.proportion_zeros),
                ]
            )


def load_scores_csv(path) -> list[ScoreReport]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        return []
    if rows[0] != SCORE_HEADER:
        raise ParseError(f"unexpected header {rows[0]}", line=1)
    idx = {name: SCORE_HEADER.index(name) for name in SCORE_HEADER}
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(SCORE_HEADER):
            raise ParseError(f"expected {len(SCORE_HEADER)} fields, got {len(row)}", line=lineno)
        try:
            values = {name: float(row[idx[name]]) for name in _REAL_FIELDS}
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from exc
        if not all(math.isfinite(v) for v in values.values()):
            raise ParseError("non-finite value", line=lineno)
        out.append(ScoreReport(dataset=row[0], **values))
    return out


# --- flat key=value files ------------------------------------------------


def read_kv(path) -> dict[str, str]:
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParseError(f"expected key=value, got {line!r}", line=lineno)
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def write_kv(mapping: dict, path) -> None:
    Path(path).write_text("".join(f"{k}={v}\n" for k, v in mapping.items()))
