"""Pure-numpy kernel implementations.

This module and the compiled extension ``invnet._kernels`` implement the
same contract; ``invnet.backend`` picks one at import time.  All functions
take and return C-contiguous float64 arrays and perform no validation --
that is the caller's job (see ``invnet.ops``).
"""

import numpy as np

# Clamp bounds keeping sigmoid outputs strictly inside (0, 1) even when the
# exponential under/overflows in float64.
_SIG_LO = np.finfo(np.float64).tiny
_SIG_HI = np.nextafter(1.0, 0.0)


def affine_forward(x, w, b):
    """out[i, j] = sum_k x[i, k] * w[j, k] + b[j]."""
    return x @ w.T + b


def affine_backward(g, x, w):
    """Gradients of ``affine_forward`` w.r.t. input, weights and biases."""
    grad_x = g @ w
    grad_w = g.T @ x
    grad_b = g.sum(axis=0)
    return grad_x, grad_w, grad_b


def relu(x):
    return np.maximum(x, 0.0)


def relu_backward(g, x):
    # Subgradient at exactly 0 is 0, so the mask is strict.
    return np.where(x > 0.0, g, 0.0)


def softmax_rows(z):
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    e /= e.sum(axis=1, keepdims=True)
    return e


def sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return np.clip(out, _SIG_LO, _SIG_HI)
