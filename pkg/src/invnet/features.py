"""Frame feature pipeline: dynamic features, context splicing, mean/variance
normalization.

The pipeline runs in this order and only this order:

1. ``add_deltas``  — append first- and second-order dynamic features
   (F -> 3F per frame);
2. ``splice``      — concatenate a symmetric context window of +-``context``
   neighboring frames (3F -> (2*context+1)*3F);
3. ``apply_norm``  — per-dimension zero-mean/unit-variance scaling with
   statistics fit on the training set only.

With the default 40-dim frames and context 5 that is 40 -> 120 -> 1320
inputs per frame.  Normalization statistics are stored next to the model
checkpoint so evaluation reproduces the training-time transform exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from invnet.ops import as_matrix
from invnet.serial import FormatError, Reader, Writer

#: Half-width of the splicing window (frames on each side).
DEFAULT_CONTEXT = 5

#: Variance floor: dimensions with tiny spread are scaled by 1/STD_FLOOR
#: at most, never divided by ~0.
STD_FLOOR = 1e-8

NORM_MAGIC = b"NORM1"

# Two-tap regression filter for dynamic features: the least-squares slope
# of a +-2 frame window, i.e. sum_k k*(c[t+k]-c[t-k]) / (2*sum_k k^2).
_DELTA_DENOM = 10.0


def _pad_edges(frames: np.ndarray, n: int) -> np.ndarray:
    """Replicate the first and last frame ``n`` times at each end."""
    return np.concatenate([
        np.repeat(frames[:1], n, axis=0),
        frames,
        np.repeat(frames[-1:], n, axis=0),
    ])


def _delta(frames: np.ndarray) -> np.ndarray:
    p = _pad_edges(frames, 2)
    t = frames.shape[0]
    return ((p[3:t + 3] - p[1:t + 1]) + 2.0 * (p[4:t + 4] - p[0:t])) \
        / _DELTA_DENOM


def add_deltas(frames) -> np.ndarray:
    """Append first- and second-order deltas: (T, F) -> (T, 3F).

    Deltas use the standard 2-tap regression filter with edge frames
    replicated, so a sequence rising at constant slope ``a`` per frame has
    interior deltas exactly ``a``.  The second-order block applies the same
    filter to the first-order block.
    """
    frames = as_matrix(frames, "frames")
    if frames.shape[0] < 1:
        raise ValueError("add_deltas: need at least one frame")
    d1 = _delta(frames)
    d2 = _delta(d1)
    return np.concatenate([frames, d1, d2], axis=1)


def splice(feats, context: int = DEFAULT_CONTEXT) -> np.ndarray:
    """Concatenate frames t-context .. t+context along the feature axis.

    Edges are handled by frame replication, so output row t is the window
    centered at t with out-of-range neighbors clamped to the sequence
    boundary: (T, D) -> (T, (2*context+1)*D), window ordered left to right.
    """
    feats = as_matrix(feats, "feats")
    if context < 0:
        raise ValueError(f"splice: context must be >= 0, got {context}")
    if feats.shape[0] < 1:
        raise ValueError("splice: need at least one frame")
    if context == 0:
        return feats.copy()
    t = feats.shape[0]
    p = _pad_edges(feats, context)
    return np.concatenate([p[k:k + t] for k in range(2 * context + 1)], axis=1)


def featurize(frames, context: int = DEFAULT_CONTEXT) -> np.ndarray:
    """Deltas then splicing; normalization is applied separately."""
    return splice(add_deltas(frames), context)


@dataclass(frozen=True)
class NormStats:
    """Per-dimension mean and floored standard deviation."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.ascontiguousarray(self.mean, dtype=np.float64)
        std = np.ascontiguousarray(self.std, dtype=np.float64)
        if mean.ndim != 1 or std.shape != mean.shape:
            raise ValueError(
                f"mean/std must be matching 1-D vectors, got "
                f"{np.shape(self.mean)} and {np.shape(self.std)}"
            )
        if mean.size == 0:
            raise ValueError("norm stats must not be empty")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(std))):
            raise ValueError("norm stats must be finite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", np.maximum(std, STD_FLOOR))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def fit_norm_stats(feats) -> NormStats:
    """Column means and standard deviations of a (N, D) feature matrix.

    Population (not sample) standard deviation, floored at STD_FLOOR.
    """
    feats = as_matrix(feats, "feats")
    if feats.shape[0] < 1:
        raise ValueError("fit_norm_stats: need at least one frame")
    return NormStats(mean=feats.mean(axis=0), std=feats.std(axis=0))


def apply_norm(feats, stats: NormStats) -> np.ndarray:
    """Return ``(feats - mean) / std`` as a new array."""
    feats = as_matrix(feats, "feats")
    if feats.shape[1] != stats.dim:
        raise ValueError(
            f"apply_norm: feats have {feats.shape[1]} dims, stats have "
            f"{stats.dim}"
        )
    return (feats - stats.mean) / stats.std


def save_norm_stats(stats: NormStats, path):
    w = Writer()
    w.magic(NORM_MAGIC)
    w.u32(stats.dim)
    w.f64_array(stats.mean)
    w.f64_array(stats.std)
    with open(path, "wb") as fh:
        fh.write(w.getvalue())


def load_norm_stats(path) -> NormStats:
    with open(path, "rb") as fh:
        r = Reader(fh.read(), name=str(path))
    r.magic(NORM_MAGIC)
    dim = r.u32()
    if dim == 0 or dim > 10**6:
        raise FormatError(f"{path}: implausible dimension {dim}")
    mean = r.f64_array(dim)
    std = r.f64_array(dim)
    r.done()
    try:
        return NormStats(mean=mean, std=std)
    except ValueError as exc:
        raise FormatError(f"{path}: invalid statistics: {exc}") from exc
