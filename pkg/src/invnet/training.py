"""Momentum-SGD trainer: balanced clean/noisy batches, annealing, checkpoints.

One training run is: featurize the corpus (deltas, splicing, normalization
statistics fit on the training split only), hold out a seeded stratified
fraction of frames for validation, then loop epochs of balanced mini-batches
through the masked composite backward pass with classical momentum updates.
The learning rate follows the two-phase annealing rule (hold, then halve
every epoch once validation improvement stalls, then stop when improvement
vanishes), with a hard epoch cap.  The checkpoint returned is the one with
the best holdout accuracy.

Each mini-batch contains exactly half clean and half noisy frames; the
minority domain is oversampled with replacement, the majority domain is a
shuffled partition.  A single-domain pool (e.g. clean-only training) is
only allowed when the adversarial weight beta is 0, in which case plain
shuffled batches are used.

Everything is deterministic given (corpus, seeds, config): fixed RNG
streams key the holdout split and each epoch's shuffles, and linear algebra
is pinned to one thread so results do not depend on the host's core count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from invnet import features, model

EPOCH_LOG_HEADER = "epoch,L1,L2,L3,holdout_acc,disc_acc,lr"

_EVAL_CHUNK = 4096


class TrainingError(RuntimeError):
    """Raised when a training run cannot proceed (e.g. non-finite loss)."""


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training run.

    ``alpha`` scales the discriminator's own learning signal; ``beta``
    scales the adversarial confusion signal into the encoder.  ``beta = 0``
    is the multi-condition baseline.
    """

    learning_rate: float = 0.08
    momentum: float = 0.9
    max_epochs: int = 15
    batch_size: int = 256
    alpha: float = 1.0
    beta: float = 0.5
    newbob_start_threshold: float = 0.005
    newbob_stop_threshold: float = 0.001
    holdout_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.max_epochs < 1:
            raise ValueError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.batch_size < 2 or self.batch_size % 2 != 0:
            raise ValueError(
                f"batch_size must be an even count >= 2 (balanced halves), "
                f"got {self.batch_size}"
            )
        if self.alpha < 0 or self.beta < 0:
            raise ValueError(
                f"alpha and beta must be >= 0, got {self.alpha}, {self.beta}"
            )
        if self.newbob_start_threshold < 0 or self.newbob_stop_threshold < 0:
            raise ValueError("annealing thresholds must be >= 0")
        if not 0 < self.holdout_fraction < 0.5:
            raise ValueError(
                f"holdout_fraction must be in (0, 0.5), got "
                f"{self.holdout_fraction}"
            )


@dataclass(frozen=True)
class EpochLog:
    """Diagnostics for one completed epoch.

    Losses are frame-weighted training means for the epoch; accuracies are
    measured on the holdout split; ``learning_rate`` is the rate in effect
    during the epoch.
    """

    epoch: int
    loss_recognition: float
    loss_domain: float
    loss_confusion: float
    holdout_accuracy: float
    discriminator_accuracy: float
    learning_rate: float


@dataclass(frozen=True)
class TrainResult:
    """Best-holdout checkpoint plus per-epoch diagnostics and the feature
    normalization statistics needed to evaluate it."""

    params: model.NetParams
    logs: tuple[EpochLog, ...]
    stats: features.NormStats
    best_epoch: int


@dataclass(frozen=True)
class FramePool:
    """Flat frame-level training data: features, class labels, domain labels."""

    x: np.ndarray
    y: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        if not (self.x.ndim == 2 and self.y.ndim == 1 and self.d.ndim == 1
                and self.x.shape[0] == self.y.shape[0] == self.d.shape[0]):
            raise ValueError(
                f"misaligned pool: x {self.x.shape}, y {self.y.shape}, "
                f"d {self.d.shape}"
            )

    @property
    def size(self) -> int:
        return self.y.shape[0]


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def featurize_utterances(utterances,
                         context: int = features.DEFAULT_CONTEXT) -> FramePool:
    """Concatenate all utterances into one un-normalized frame pool."""
    if not utterances:
        raise ValueError("no utterances to featurize")
    xs = [features.featurize(u.frames, context) for u in utterances]
    ys = [u.class_labels for u in utterances]
    ds = [np.full(u.num_frames, int(u.condition != 0), dtype=np.int64)
          for u in utterances]
    return FramePool(x=np.concatenate(xs), y=np.concatenate(ys),
                     d=np.concatenate(ds))


def holdout_split(y, d, fraction: float, seed: int):
    """Seeded stratified split by (class, domain); returns (train, holdout)
    index arrays, both sorted ascending."""
    y = np.asarray(y)
    d = np.asarray(d)
    if not 0 < fraction < 0.5:
        raise ValueError(f"fraction must be in (0, 0.5), got {fraction}")
    rng = _rng(seed, 0)
    held = []
    for cls, dom in sorted(set(zip(y.tolist(), d.tolist()))):
        idx = np.flatnonzero((y == cls) & (d == dom))
        k = int(round(idx.size * fraction))
        perm = rng.permutation(idx)
        if k > 0:
            held.append(perm[:k])
    if not held:
        raise TrainingError("holdout split is empty; pool too small")
    ho = np.sort(np.concatenate(held))
    mask = np.ones(y.shape[0], dtype=bool)
    mask[ho] = False
    tr = np.flatnonzero(mask)
    if tr.size == 0:
        raise TrainingError("every frame fell into the holdout split")
    return tr, ho


def make_balanced_batches(pool: FramePool, batch_size: int, seed: int,
                          epoch: int) -> list:
    """Index batches with exactly batch_size/2 clean and noisy frames each.

    The majority domain is a shuffled partition (wrapping cyclically into
    the final batches when not divisible), the minority domain is sampled
    with replacement.  Equal-size domains are both partitioned, so nothing
    repeats within the epoch.  Batch count is
    ceil(majority / (batch_size/2)).
    """
    if batch_size < 2 or batch_size % 2 != 0:
        raise ValueError(f"batch_size must be even >= 2, got {batch_size}")
    clean = np.flatnonzero(pool.d == 0)
    noisy = np.flatnonzero(pool.d == 1)
    if clean.size == 0 or noisy.size == 0:
        raise ValueError(
            "balanced batches need both clean and noisy frames; "
            f"pool has {clean.size} clean and {noisy.size} noisy"
        )
    half = batch_size // 2
    rng = _rng(seed, 1, epoch)
    clean_perm = rng.permutation(clean)
    noisy_perm = rng.permutation(noisy)
    majority = max(clean.size, noisy.size)
    n_batches = math.ceil(majority / half)
    total = n_batches * half

    def rows(perm):
        if perm.size == majority:
            return perm[np.arange(total) % perm.size]
        return rng.choice(perm, size=total, replace=True)

    clean_rows = rows(clean_perm)
    noisy_rows = rows(noisy_perm)
    batches = []
    for b in range(n_batches):
        sl = slice(b * half, (b + 1) * half)
        idx = np.concatenate([clean_rows[sl], noisy_rows[sl]])
        assert np.all(pool.d[idx[:half]] == 0) and np.all(pool.d[idx[half:]] == 1)
        batches.append(idx)
    return batches


def _plain_batches(pool: FramePool, batch_size: int, seed: int,
                   epoch: int) -> list:
    """Shuffled partition for single-domain pools (beta = 0 only)."""
    perm = _rng(seed, 1, epoch).permutation(pool.size)
    return [perm[s:s + batch_size] for s in range(0, pool.size, batch_size)]


def zero_velocity(params: model.NetParams) -> model.Gradients:
    return model.Gradients(**{
        s: tuple(model.LayerGrads(np.zeros_like(l.weights),
                                  np.zeros_like(l.biases))
                 for l in params.subset(s))
        for s in model.SUBSETS
    })


def sgd_momentum_step(params: model.NetParams, grads: model.Gradients,
                      velocity: model.Gradients, learning_rate: float,
                      momentum: float):
    """Classical momentum: v' = momentum*v - lr*g; theta' = theta + v'.

    Returns (new params, new velocity); inputs are left untouched.
    """
    new_layers = {}
    new_vel = {}
    for subset in model.SUBSETS:
        layers, vels = [], []
        for layer, g, v in zip(params.subset(subset), getattr(grads, subset),
                               getattr(velocity, subset)):
            vw = momentum * v.weights - learning_rate * g.weights
            vb = momentum * v.biases - learning_rate * g.biases
            layers.append(type(layer)(layer.weights + vw, layer.biases + vb))
            vels.append(model.LayerGrads(vw, vb))
        new_layers[subset] = tuple(layers)
        new_vel[subset] = tuple(vels)
    return model.NetParams(**new_layers), model.Gradients(**new_vel)


def newbob_next(history, current_lr: float, config: TrainConfig) -> str:
    """Annealing decision after the latest epoch: 'keep', 'halve', or 'stop'.

    Phase 1 keeps the rate until an epoch's absolute holdout-accuracy
    improvement drops below ``newbob_start_threshold`` (that epoch answers
    'halve' and enters the decay phase).  In decay the answer is 'halve'
    every epoch until improvement drops below ``newbob_stop_threshold``,
    then 'stop'.  The decision is a pure function of the history; the
    current rate is accepted for interface symmetry but never changes the
    answer.  The hard epoch cap is enforced by the caller.
    """
    history = list(history)
    if not history:
        raise ValueError("newbob_next needs at least one epoch of history")
    del current_lr
    decision = "keep"
    in_decay = False
    for prev, cur in zip(history, history[1:]):
        improvement = cur - prev
        if not in_decay:
            if improvement < config.newbob_start_threshold:
                in_decay = True
                decision = "halve"
            else:
                decision = "keep"
        else:
            if improvement < config.newbob_stop_threshold:
                decision = "stop"
                break
            decision = "halve"
    return decision


def _eval_pool(params: model.NetParams, x, y, d):
    """Holdout pass: (class accuracy, discriminator accuracy)."""
    n = y.shape[0]
    correct = 0
    disc_correct = 0
    for start in range(0, n, _EVAL_CHUNK):
        sl = slice(start, min(start + _EVAL_CHUNK, n))
        t = model.forward(params, x[sl])
        correct += int(np.sum(np.argmax(t.y_hat, axis=1) == y[sl]))
        disc_correct += int(np.sum(model.domain_predictions(t.d_hat) == d[sl]))
    return correct / n, disc_correct / n


def train(net_config: model.NetConfig | None, params_seed: int, corpus_data,
          config: TrainConfig,
          context: int = features.DEFAULT_CONTEXT) -> TrainResult:
    """Run the full training recipe on a generated corpus.

    ``net_config=None`` uses the default architecture sized for the corpus.
    Raises TrainingError on non-finite losses (naming epoch and batch) and
    ValueError for impossible setups (beta > 0 on a single-domain corpus).
    """
    with threadpool_limits(limits=1):
        return _train_impl(net_config, params_seed, corpus_data, config,
                           context)


def _train_impl(net_config, params_seed, corpus_data, config, context):
    raw = featurize_utterances(corpus_data.train, context)
    stats = features.fit_norm_stats(raw.x)
    pool = FramePool(x=features.apply_norm(raw.x, stats), y=raw.y, d=raw.d)
    del raw

    if net_config is None:
        net_config = model.default_net_config(pool.x.shape[1],
                                              corpus_data.num_classes)
    if net_config.input_dim != pool.x.shape[1]:
        raise ValueError(
            f"network expects {net_config.input_dim}-dim input but features "
            f"have {pool.x.shape[1]} dims"
        )
    if int(pool.y.max()) >= net_config.num_classes:
        raise ValueError(
            f"corpus has class {int(pool.y.max())} but network only has "
            f"{net_config.num_classes} outputs"
        )

    tr_idx, ho_idx = holdout_split(pool.y, pool.d, config.holdout_fraction,
                                   config.seed)
    ho_x, ho_y, ho_d = pool.x[ho_idx], pool.y[ho_idx], pool.d[ho_idx]
    train_pool = FramePool(x=pool.x[tr_idx], y=pool.y[tr_idx],
                           d=pool.d[tr_idx])
    del pool

    single_domain = (train_pool.d.min() == train_pool.d.max())
    if single_domain and config.beta > 0:
        raise ValueError(
            "beta > 0 needs both clean and noisy training frames "
            "(adversarial term undefined on a single-domain pool)"
        )
    batcher = _plain_batches if single_domain else make_balanced_batches

    params = model.init_params(net_config, params_seed)
    velocity = zero_velocity(params)
    lr = config.learning_rate
    logs = []
    best_params = params
    best_acc = -1.0
    best_epoch = 0

    for epoch in range(1, config.max_epochs + 1):
        batches = batcher(train_pool, config.batch_size, config.seed, epoch)
        sums = np.zeros(3)
        frames = 0
        for b_num, idx in enumerate(batches, start=1):
            trace = model.forward(params, train_pool.x[idx])
            labels = model.BatchLabels(y=train_pool.y[idx],
                                       d=train_pool.d[idx])
            l_rec = model.recognition_loss(trace.y_hat, labels.y)
            l_dom = model.domain_loss(trace.d_hat, labels.d)
            l_conf = model.confusion_loss(trace.d_hat, labels.d)
            if not np.all(np.isfinite([l_rec, l_dom, l_conf])):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch {b_num}: "
                    f"recognition={l_rec}, domain={l_dom}, confusion={l_conf}"
                )
            grads = model.composite_backward(trace, labels, config.alpha,
                                             config.beta)
            params, velocity = sgd_momentum_step(params, grads, velocity, lr,
                                                 config.momentum)
            sums += np.array([l_rec, l_dom, l_conf]) * idx.size
            frames += idx.size

        acc, disc_acc = _eval_pool(params, ho_x, ho_y, ho_d)
        logs.append(EpochLog(
            epoch=epoch,
            loss_recognition=sums[0] / frames,
            loss_domain=sums[1] / frames,
            loss_confusion=sums[2] / frames,
            holdout_accuracy=acc,
            discriminator_accuracy=disc_acc,
            learning_rate=lr,
        ))
        if acc > best_acc:
            best_acc = acc
            best_params = params
            best_epoch = epoch
        decision = newbob_next([log.holdout_accuracy for log in logs], lr,
                               config)
        if decision == "stop":
            break
        if decision == "halve":
            lr *= 0.5

    return TrainResult(params=best_params, logs=tuple(logs), stats=stats,
                       best_epoch=best_epoch)


def write_epoch_log(logs, path):
    """Append-only CSV of per-epoch diagnostics."""
    lines = [EPOCH_LOG_HEADER]
    for log in logs:
        lines.append(
            f"{log.epoch},{log.loss_recognition:.6f},{log.loss_domain:.6f},"
            f"{log.loss_confusion:.6f},{log.holdout_accuracy:.6f},"
            f"{log.discriminator_accuracy:.6f},{log.learning_rate:.6g}"
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
