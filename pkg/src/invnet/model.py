"""Three-branch classifier: shared encoder, class recognizer, domain discriminator.

The encoder maps the input to a hidden representation ``h`` (ReLU after
every encoder layer).  Two branches read ``h``: the recognizer predicts the
class posterior ``y_hat`` (softmax), the discriminator predicts the
probability ``d_hat`` that the frame comes from a noisy condition
(sigmoid).  At test time the discriminator branch is discarded entirely;
``predict`` never evaluates it.

Training minimizes

    recognition_loss + alpha * domain_loss - beta * confusion_loss

with each term scoped to one parameter subset in the backward pass:

* recognizer weights receive only the recognition term;
* discriminator weights receive only ``alpha * domain_loss`` (the confusion
  term passes through them as a fixed conduit, contributing nothing);
* encoder weights receive the recognition term plus ``beta`` times the
  confusion term, whose gradient flows backward through the frozen
  discriminator into ``h``.  The domain term's flow into ``h`` is masked.

``confusion_loss`` is the flipped-label form: it rewards the encoder for
making the discriminator assign high probability to the *wrong* domain, and
its gradient does not vanish while the discriminator is winning.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from invnet import ops
from invnet.serial import FormatError, Reader, Writer

# Probabilities are clamped here before any log; keeps losses finite and is
# far below the finite-difference tolerance used to verify gradients.
PROB_CLAMP = 1e-12

CHECKPOINT_MAGIC = b"YNET1"

SUBSETS = ("encoder", "recognizer", "discriminator")


@dataclass(frozen=True)
class NetConfig:
    """Layer widths for the three subnetworks.

    ``encoder_layers`` are the widths up to and including the branch point;
    ``recognizer_layers`` end in the class count; ``discriminator_layers``
    end in 1 (binary domain output).  Hidden activations are ReLU.
    """

    input_dim: int
    encoder_layers: tuple[int, ...]
    recognizer_layers: tuple[int, ...]
    discriminator_layers: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "encoder_layers", tuple(self.encoder_layers))
        object.__setattr__(self, "recognizer_layers", tuple(self.recognizer_layers))
        object.__setattr__(
            self, "discriminator_layers", tuple(self.discriminator_layers)
        )
        if self.input_dim < 1:
            raise ValueError(f"input_dim must be positive, got {self.input_dim}")
        for name in ("encoder_layers", "recognizer_layers", "discriminator_layers"):
            widths = getattr(self, name)
            if not widths:
                raise ValueError(f"{name} must not be empty")
            if any(w < 1 for w in widths):
                raise ValueError(f"{name} must be positive, got {widths}")
        if self.recognizer_layers[-1] < 2:
            raise ValueError(
                f"need >= 2 classes, got {self.recognizer_layers[-1]}"
            )
        if self.discriminator_layers[-1] != 1:
            raise ValueError(
                f"discriminator output width must be 1, got "
                f"{self.discriminator_layers[-1]}"
            )

    @property
    def num_classes(self) -> int:
        return self.recognizer_layers[-1]

    @property
    def hidden_dim(self) -> int:
        """Width of the branch-point representation h."""
        return self.encoder_layers[-1]

    def subset_dims(self, subset: str) -> list[int]:
        """Full dimension chain (input included) of one subnetwork."""
        if subset == "encoder":
            return [self.input_dim, *self.encoder_layers]
        if subset == "recognizer":
            return [self.hidden_dim, *self.recognizer_layers]
        if subset == "discriminator":
            return [self.hidden_dim, *self.discriminator_layers]
        raise ValueError(f"unknown subset {subset!r}")


def default_net_config(input_dim: int, num_classes: int,
                       hidden: int = 64) -> NetConfig:
    """Default shape: 4 hidden encoder layers, 2 hidden recognizer layers,
    and a deliberately small 1-hidden-layer discriminator (hidden/4, min 16).
    """
    return NetConfig(
        input_dim=input_dim,
        encoder_layers=(hidden,) * 4,
        recognizer_layers=(hidden, hidden, num_classes),
        discriminator_layers=(max(16, hidden // 4), 1),
    )


@dataclass(frozen=True)
class NetParams:
    """The three disjoint parameter subsets; treat as immutable snapshots."""

    encoder: tuple[ops.AffineLayer, ...]
    recognizer: tuple[ops.AffineLayer, ...]
    discriminator: tuple[ops.AffineLayer, ...]

    def __post_init__(self):
        object.__setattr__(self, "encoder", tuple(self.encoder))
        object.__setattr__(self, "recognizer", tuple(self.recognizer))
        object.__setattr__(self, "discriminator", tuple(self.discriminator))

    def subset(self, name: str) -> tuple[ops.AffineLayer, ...]:
        if name not in SUBSETS:
            raise ValueError(f"unknown subset {name!r}")
        return getattr(self, name)

    def to_config(self) -> NetConfig:
        return NetConfig(
            input_dim=self.encoder[0].in_dim,
            encoder_layers=tuple(l.out_dim for l in self.encoder),
            recognizer_layers=tuple(l.out_dim for l in self.recognizer),
            discriminator_layers=tuple(l.out_dim for l in self.discriminator),
        )


class LayerGrads(NamedTuple):
    weights: np.ndarray
    biases: np.ndarray


@dataclass(frozen=True)
class Gradients:
    """Per-subset gradients, mirroring the NetParams structure."""

    encoder: tuple[LayerGrads, ...]
    recognizer: tuple[LayerGrads, ...]
    discriminator: tuple[LayerGrads, ...]

    def subset(self, name: str) -> tuple[LayerGrads, ...]:
        if name not in SUBSETS:
            raise ValueError(f"unknown parameter subset {name!r}")
        return getattr(self, name)


@dataclass(frozen=True)
class BatchLabels:
    """Per-frame class indices and binary domain labels (0 clean, 1 noisy)."""

    y: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        y = np.ascontiguousarray(self.y, dtype=np.int64)
        d = np.ascontiguousarray(self.d, dtype=np.int64)
        if y.ndim != 1 or d.ndim != 1 or y.shape != d.shape:
            raise ValueError(
                f"labels must be equal-length 1-D sequences, got "
                f"{np.shape(self.y)} and {np.shape(self.d)}"
            )
        if y.size and y.min() < 0:
            raise ValueError("class labels must be non-negative")
        if not np.all((d == 0) | (d == 1)):
            raise ValueError("domain labels must be binary (0 clean, 1 noisy)")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "d", d)


@dataclass
class ForwardTrace:
    """All activations of one forward pass, cached for the backward pass."""

    params: NetParams
    x: np.ndarray
    enc_ins: list
    enc_pres: list
    h: np.ndarray
    rec_ins: list
    rec_pres: list
    logits: np.ndarray
    y_hat: np.ndarray
    disc_ins: list
    disc_pres: list
    d_logits: np.ndarray
    d_hat: np.ndarray


def init_params(config: NetConfig, seed: int) -> NetParams:
    """Uniform(+-sqrt(6/(fan_in+fan_out))) weights, zero biases.

    Each layer draws from its own seed stream keyed by (subset, layer), so
    the encoder/recognizer draws do not depend on the discriminator's
    presence or shape.
    """
    subsets = {}
    for s_idx, subset in enumerate(SUBSETS):
        dims = config.subset_dims(subset)
        layers = []
        for l_idx, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            rng = np.random.default_rng(
                np.random.SeedSequence(seed, spawn_key=(s_idx, l_idx))
            )
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            weights = rng.uniform(-limit, limit, size=(fan_out, fan_in))
            layers.append(ops.AffineLayer(weights, np.zeros(fan_out)))
        subsets[subset] = tuple(layers)
    return NetParams(**subsets)


def _stack_forward(layers, x, relu_final: bool):
    """Run an affine/ReLU stack; ReLU is skipped on the last layer unless
    ``relu_final``.  Returns (layer inputs, pre-activations, output)."""
    ins, pres = [], []
    a = x
    last = len(layers) - 1
    for i, layer in enumerate(layers):
        ins.append(a)
        z = ops.affine_forward(a, layer)
        pres.append(z)
        a = ops.relu(z) if (i < last or relu_final) else z
    return ins, pres, a


def _stack_backward(layers, ins, pres, grad_out, relu_final: bool):
    """Backward through a stack; returns (per-layer grads, grad wrt input)."""
    grads = [None] * len(layers)
    g = grad_out
    last = len(layers) - 1
    for i in range(last, -1, -1):
        if i < last or relu_final:
            g = ops.relu_backward(g, pres[i])
        g, grad_w, grad_b = ops.affine_backward(g, ins[i], layers[i])
        grads[i] = LayerGrads(grad_w, grad_b)
    return tuple(grads), g


def forward(params: NetParams, x) -> ForwardTrace:
    """Full forward pass through encoder and both branches."""
    x = ops.as_matrix(x, "input")
    enc_ins, enc_pres, h = _stack_forward(params.encoder, x, relu_final=True)
    rec_ins, rec_pres, logits = _stack_forward(params.recognizer, h,
                                               relu_final=False)
    y_hat = ops.softmax_rows(logits)
    disc_ins, disc_pres, d_logits = _stack_forward(params.discriminator, h,
                                                   relu_final=False)
    d_hat = ops.sigmoid(d_logits)
    return ForwardTrace(
        params=params, x=x,
        enc_ins=enc_ins, enc_pres=enc_pres, h=h,
        rec_ins=rec_ins, rec_pres=rec_pres, logits=logits, y_hat=y_hat,
        disc_ins=disc_ins, disc_pres=disc_pres, d_logits=d_logits, d_hat=d_hat,
    )


def predict(params: NetParams, x) -> np.ndarray:
    """Class posteriors only; the discriminator branch is never evaluated."""
    x = ops.as_matrix(x, "input")
    _, _, h = _stack_forward(params.encoder, x, relu_final=True)
    _, _, logits = _stack_forward(params.recognizer, h, relu_final=False)
    return ops.softmax_rows(logits)


def _check_class_labels(y: np.ndarray, num_classes: int):
    if y.size and (y.min() < 0 or y.max() >= num_classes):
        raise ValueError(
            f"class labels must lie in [0, {num_classes}), got range "
            f"[{y.min()}, {y.max()}]"
        )


def recognition_loss(y_hat, y) -> float:
    """Mean cross-entropy of the class posteriors against true classes."""
    y_hat = ops.as_matrix(y_hat, "y_hat")
    y = np.ascontiguousarray(y, dtype=np.int64)
    _check_class_labels(y, y_hat.shape[1])
    picked = y_hat[np.arange(y_hat.shape[0]), y]
    return float(np.mean(-np.log(np.maximum(picked, PROB_CLAMP))))


def domain_loss(d_hat, d) -> float:
    """Mean binary cross-entropy of the discriminator output."""
    p = ops.as_matrix(d_hat, "d_hat").ravel()
    d = np.ascontiguousarray(d, dtype=np.float64)
    return float(np.mean(-(
        d * np.log(np.maximum(p, PROB_CLAMP))
        + (1.0 - d) * np.log(np.maximum(1.0 - p, PROB_CLAMP))
    )))


def confusion_loss(d_hat, d) -> float:
    """Mean log-probability of the *incorrect* domain label (always <= 0).

    Identity: ``-confusion_loss(d_hat, d) == domain_loss(d_hat, 1 - d)``.
    Maximizing this term makes the encoder fool the discriminator, and its
    per-frame gradient w.r.t. ``d_hat`` grows without bound as the
    discriminator approaches a confident correct answer.
    """
    p = ops.as_matrix(d_hat, "d_hat").ravel()
    d = np.ascontiguousarray(d, dtype=np.float64)
    return float(np.mean(
        d * np.log(np.maximum(1.0 - p, PROB_CLAMP))
        + (1.0 - d) * np.log(np.maximum(p, PROB_CLAMP))
    ))


def _zero_grads(layers) -> tuple[LayerGrads, ...]:
    return tuple(
        LayerGrads(np.zeros_like(l.weights), np.zeros_like(l.biases))
        for l in layers
    )


def composite_backward(trace: ForwardTrace, labels: BatchLabels,
                       alpha: float, beta: float) -> Gradients:
    """One backward pass of the composite objective with subset masking.

    alpha and beta are non-negative influence weights; see the module
    docstring for the exact scoping.  The alpha == 0 and beta == 0 branches
    are short-circuited so the masked-out flows are not merely zero but
    never computed, which keeps beta == 0 training bit-identical to a
    branch-free network.
    """
    if alpha < 0 or beta < 0:
        raise ValueError(f"alpha and beta must be >= 0, got {alpha}, {beta}")
    params = trace.params
    batch = trace.x.shape[0]
    y = labels.y
    d = labels.d
    if y.shape[0] != batch:
        raise ValueError(f"labels have {y.shape[0]} rows, batch has {batch}")
    _check_class_labels(y, trace.y_hat.shape[1])

    # Recognition head: d(recognition_loss)/d(logits) = (y_hat - onehot)/batch.
    g_logits = trace.y_hat.copy()
    g_logits[np.arange(batch), y] -= 1.0
    g_logits /= batch
    rec_grads, g_h = _stack_backward(params.recognizer, trace.rec_ins,
                                     trace.rec_pres, g_logits,
                                     relu_final=False)

    d_col = d.astype(np.float64).reshape(batch, 1)

    # Discriminator parameters: alpha * d(domain_loss)/d(d_logits)
    #   = alpha * (d_hat - d)/batch.  Nothing else reaches them.
    if alpha > 0:
        g_dlogits = alpha * (trace.d_hat - d_col) / batch
        disc_grads, _ = _stack_backward(params.discriminator, trace.disc_ins,
                                        trace.disc_pres, g_dlogits,
                                        relu_final=False)
    else:
        disc_grads = _zero_grads(params.discriminator)

    # Encoder-side confusion flow: -beta * d(confusion_loss)/d(d_logits)
    #   = beta * (d*d_hat - (1-d)*(1-d_hat))/batch,
    # propagated through the discriminator as a fixed conduit (its own
    # parameter grads from this flow are discarded).
    if beta > 0:
        g_conf = beta * (d_col * trace.d_hat
                         - (1.0 - d_col) * (1.0 - trace.d_hat)) / batch
        _, g_h_conf = _stack_backward(params.discriminator, trace.disc_ins,
                                      trace.disc_pres, g_conf,
                                      relu_final=False)
        g_h = g_h + g_h_conf

    enc_grads, _ = _stack_backward(params.encoder, trace.enc_ins,
                                   trace.enc_pres, g_h, relu_final=True)
    return Gradients(encoder=enc_grads, recognizer=rec_grads,
                     discriminator=disc_grads)


def domain_predictions(d_hat) -> np.ndarray:
    """Hard domain decisions from sigmoid scores: 1 where d_hat > 0.5.

    Ties at exactly 0.5 count as predicting 0 (clean).
    """
    d_hat = np.asarray(d_hat)
    return (d_hat.reshape(-1) > 0.5).astype(np.int64)


def discriminator_accuracy(d_hat, d) -> float:
    """Fraction of frames where the hard domain decision matches the label."""
    d = np.ascontiguousarray(d, dtype=np.int64)
    preds = domain_predictions(d_hat)
    if preds.shape != d.shape:
        raise ValueError(f"score/label count mismatch: {preds.shape[0]} vs {d.shape[0]}")
    return float(np.mean(preds == d))


# --- flat-vector views used by the gradient checker ---

def flatten_layers(layers) -> np.ndarray:
    parts = []
    for layer in layers:
        parts.append(np.ravel(layer.weights))
        parts.append(np.ravel(layer.biases))
    return np.concatenate(parts) if parts else np.empty(0)


def flatten_subset(params: NetParams, subset: str) -> np.ndarray:
    return flatten_layers(params.subset(subset))


def with_subset(params: NetParams, subset: str, flat: np.ndarray) -> NetParams:
    """Rebuild one parameter subset from a flat vector (shapes unchanged)."""
    flat = np.asarray(flat, dtype=np.float64).ravel()
    layers = []
    pos = 0
    for layer in params.subset(subset):
        n_w = layer.weights.size
        n_b = layer.biases.size
        layers.append(ops.AffineLayer(
            flat[pos:pos + n_w].reshape(layer.weights.shape),
            flat[pos + n_w:pos + n_w + n_b],
        ))
        pos += n_w + n_b
    if pos != flat.size:
        raise ValueError(
            f"flat vector has {flat.size} entries, subset {subset} needs {pos}"
        )
    replaced = {name: params.subset(name) for name in SUBSETS}
    replaced[subset] = tuple(layers)
    return NetParams(**replaced)


# --- checkpoint file ---

def save_params(params: NetParams, path):
    """Write the versioned binary checkpoint layout."""
    cfg = params.to_config()
    w = Writer()
    w.magic(CHECKPOINT_MAGIC)
    w.u32(cfg.input_dim)
    for subset in SUBSETS:
        widths = getattr(cfg, f"{subset}_layers")
        w.u32(len(widths))
        w.u32_array(widths)
    for subset in SUBSETS:
        for layer in params.subset(subset):
            w.f64_array(layer.weights)
            w.f64_array(layer.biases)
    with open(path, "wb") as fh:
        fh.write(w.getvalue())


def load_params(path, expect: NetConfig | None = None) -> NetParams:
    """Read a checkpoint; rejects bad magic, dims, truncation, trailing bytes.

    If ``expect`` is given the stored dimensions must match it exactly.
    """
    with open(path, "rb") as fh:
        r = Reader(fh.read(), name=str(path))
    r.magic(CHECKPOINT_MAGIC)
    input_dim = r.u32()
    widths = {}
    for subset in SUBSETS:
        count = r.u32()
        if count > 1024:
            raise FormatError(f"{path}: implausible layer count {count}")
        widths[f"{subset}_layers"] = tuple(int(v) for v in r.u32_array(count))
    try:
        cfg = NetConfig(input_dim=input_dim, **widths)
    except ValueError as exc:
        raise FormatError(f"{path}: invalid dimensions: {exc}") from exc
    if expect is not None and cfg != expect:
        raise FormatError(
            f"{path}: checkpoint dimensions {cfg} do not match expected {expect}"
        )
    subsets = {}
    for subset in SUBSETS:
        dims = cfg.subset_dims(subset)
        layers = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            weights = r.f64_array(fan_out * fan_in, shape=(fan_out, fan_in))
            biases = r.f64_array(fan_out)
            layers.append(ops.AffineLayer(weights, biases))
        subsets[subset] = tuple(layers)
    r.done()
    return NetParams(**subsets)
