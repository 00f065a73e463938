"""Dense differentiable building blocks: affine layers, ReLU, softmax, sigmoid.

Conventions, shared by every module in the package:

* the single numeric carrier is a C-contiguous float64 2-D numpy array,
  batch-first (rows are examples);
* an affine layer stores ``weights`` with shape (out, in) and ``biases``
  with shape (out,);
* every forward is a pure, deterministic function of its inputs; backward
  passes are exact analytic gradients of the matching forward.

The heavy lifting is delegated to the active kernel backend (compiled
extension or numpy fallback, see ``invnet.backend``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from invnet.backend import kernels as _k


class ShapeError(ValueError):
    """Raised when operand shapes do not match an operation's contract."""


def as_matrix(a, name: str = "array") -> np.ndarray:
    """Coerce to a C-contiguous float64 2-D array, or raise ShapeError."""
    out = np.ascontiguousarray(a, dtype=np.float64)
    if out.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {np.shape(a)}")
    return out


@dataclass(frozen=True)
class AffineLayer:
    """One affine layer: ``x @ weights.T + biases``.

    weights: (out, in); biases: (out,).
    """

    weights: np.ndarray
    biases: np.ndarray

    def __post_init__(self):
        w = as_matrix(self.weights, "weights")
        b = np.ascontiguousarray(self.biases, dtype=np.float64)
        if b.ndim != 1 or b.shape[0] != w.shape[0]:
            raise ShapeError(
                f"biases must have shape ({w.shape[0]},) to match weights "
                f"{w.shape}, got {np.shape(self.biases)}"
            )
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "biases", b)

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]


def affine_forward(x, layer: AffineLayer) -> np.ndarray:
    x = as_matrix(x, "input")
    if x.shape[1] != layer.in_dim:
        raise ShapeError(
            f"affine_forward: input has shape {x.shape} but layer weights "
            f"have shape {layer.weights.shape} (need input cols == {layer.in_dim})"
        )
    return _k.affine_forward(x, layer.weights, layer.biases)


def affine_backward(grad_out, x, layer: AffineLayer):
    """Return (grad_x, grad_weights, grad_biases) for the matching forward."""
    g = as_matrix(grad_out, "grad_out")
    x = as_matrix(x, "input")
    if x.shape[1] != layer.in_dim or g.shape[1] != layer.out_dim:
        raise ShapeError(
            f"affine_backward: grad_out {g.shape} / input {x.shape} do not "
            f"match layer weights {layer.weights.shape}"
        )
    if g.shape[0] != x.shape[0]:
        raise ShapeError(
            f"affine_backward: grad_out has {g.shape[0]} rows but input has "
            f"{x.shape[0]}"
        )
    return _k.affine_backward(g, x, layer.weights)


def relu(x) -> np.ndarray:
    return _k.relu(as_matrix(x, "input"))


def relu_backward(grad_out, x) -> np.ndarray:
    """Pass gradient where x > 0; the subgradient at exactly 0 is 0."""
    g = as_matrix(grad_out, "grad_out")
    x = as_matrix(x, "input")
    if g.shape != x.shape:
        raise ShapeError(
            f"relu_backward: grad_out shape {g.shape} != input shape {x.shape}"
        )
    return _k.relu_backward(g, x)


def softmax_rows(logits) -> np.ndarray:
    """Row-wise softmax with max-subtraction; each row sums to 1."""
    z = as_matrix(logits, "logits")
    if z.shape[1] < 2:
        raise ShapeError(f"softmax_rows needs >= 2 columns, got shape {z.shape}")
    return _k.softmax_rows(z)


def sigmoid(z) -> np.ndarray:
    """Elementwise logistic function, output strictly inside (0, 1)."""
    return _k.sigmoid(as_matrix(z, "input"))
