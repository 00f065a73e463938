"""Seeded synthetic multi-condition corpus generator.

The corpus imitates the structure of a noisy-speech benchmark without any
audio: each class owns a Gaussian prototype frame, a clean utterance is a
sequence of constant-class segments around those prototypes, and each noise
condition corrupts clean frames with a fixed additive bias, per-dimension
channel gain, and additive Gaussian noise.  Conditions shift the input
distribution without changing class identity, which is exactly the nuisance
structure that invariance training targets, and condition difficulty grows
monotonically with the noise scale ``sigma``.

Determinism: every random quantity is drawn from its own counter-keyed
seed stream derived from ``spec.seed``, so

* the test set does not depend on which conditions are selected for
  training (streams are keyed by (split, condition, utterance index)), and
* any subset of utterances can be regenerated independently and in
  parallel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from invnet.serial import FormatError, Reader, Writer

CORPUS_MAGIC = b"SYNC1"

#: Default names for the six noise conditions (ids 1..6); extra conditions
#: get synthetic names.
CONDITION_NAMES = ("airport", "babble", "car", "restaurant", "street", "train")

#: Condition id of uncorrupted data.
CLEAN_ID = 0

# Seed-stream keys (first element of the spawn key).
_STREAM_PROTO = 0
_STREAM_CONDITION = 1
_STREAM_TRAIN = 2
_STREAM_TEST = 3


@dataclass(frozen=True)
class CorpusSpec:
    """Shape and difficulty knobs of a generated corpus.

    The default sizes are a desk-scale benchmark corpus: 440 clean training
    utterances plus 45 per selected noise condition, 6 conditions, 60
    frames per utterance in constant-class segments of 12.
    """

    num_classes: int = 32
    base_dim: int = 40
    num_conditions: int = 6
    seed: int = 1234
    clean_utterances: int = 440
    noisy_utterances_per_condition: int = 45
    test_utterances_per_condition: int = 40
    frames_per_utterance: int = 60
    segment_length: int = 12
    proto_scale: float = 1.0
    sigma_clean: float = 0.4
    bias_scale: float = 0.5
    gain_low: float = 0.5
    gain_high: float = 2.0
    sigma_low: float = 0.4
    sigma_high: float = 1.0

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        for name in ("base_dim", "clean_utterances",
                     "noisy_utterances_per_condition",
                     "test_utterances_per_condition", "frames_per_utterance",
                     "segment_length"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.num_conditions < 0:
            raise ValueError(
                f"num_conditions must be >= 0, got {self.num_conditions}"
            )
        for name in ("proto_scale", "sigma_clean", "bias_scale"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        if not (0 < self.gain_low <= self.gain_high):
            raise ValueError(
                f"need 0 < gain_low <= gain_high, got "
                f"[{self.gain_low}, {self.gain_high}]"
            )
        if not (0 <= self.sigma_low <= self.sigma_high):
            raise ValueError(
                f"need 0 <= sigma_low <= sigma_high, got "
                f"[{self.sigma_low}, {self.sigma_high}]"
            )


@dataclass(frozen=True)
class NoiseCondition:
    """One stationary corruption: ``gain * (x + bias + sigma * noise)``."""

    id: int
    name: str
    bias: np.ndarray
    gain: np.ndarray
    sigma: float

    def __post_init__(self):
        bias = np.ascontiguousarray(self.bias, dtype=np.float64)
        gain = np.ascontiguousarray(self.gain, dtype=np.float64)
        if bias.ndim != 1 or gain.shape != bias.shape:
            raise ValueError(
                f"bias/gain must be matching 1-D vectors, got "
                f"{np.shape(self.bias)} and {np.shape(self.gain)}"
            )
        if np.any(gain <= 0):
            raise ValueError("gain elements must be strictly positive")
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if self.id < 1:
            raise ValueError(f"condition id must be >= 1, got {self.id}")
        object.__setattr__(self, "bias", bias)
        object.__setattr__(self, "gain", gain)


@dataclass(frozen=True)
class Utterance:
    """A time-ordered frame sequence with per-frame class labels and the
    condition it was generated under (0 = clean)."""

    frames: np.ndarray
    class_labels: np.ndarray
    condition: int

    def __post_init__(self):
        frames = np.ascontiguousarray(self.frames, dtype=np.float64)
        labels = np.ascontiguousarray(self.class_labels, dtype=np.int64)
        if frames.ndim != 2 or labels.ndim != 1 \
                or labels.shape[0] != frames.shape[0]:
            raise ValueError(
                f"frames {np.shape(self.frames)} and labels "
                f"{np.shape(self.class_labels)} do not align"
            )
        if self.condition < 0:
            raise ValueError(f"condition must be >= 0, got {self.condition}")
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "class_labels", labels)

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]


@dataclass(frozen=True)
class Corpus:
    """Generated train/test splits plus everything needed to describe them.

    ``test`` always covers clean plus every condition in the table;
    ``train`` covers clean plus ``train_conditions`` only.  ``prototypes``
    are the class mean frames (useful for oracle checks); they round-trip
    through save/load with everything else.
    """

    seed: int
    num_classes: int
    base_dim: int
    conditions: tuple[NoiseCondition, ...]
    train_conditions: tuple[int, ...]
    prototypes: np.ndarray
    train: tuple[Utterance, ...] = field(repr=False)
    test: tuple[Utterance, ...] = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "conditions", tuple(self.conditions))
        object.__setattr__(self, "train_conditions",
                           tuple(self.train_conditions))
        object.__setattr__(self, "train", tuple(self.train))
        object.__setattr__(self, "test", tuple(self.test))
        object.__setattr__(
            self, "prototypes",
            np.ascontiguousarray(self.prototypes, dtype=np.float64),
        )

    def condition_by_id(self, cid: int) -> NoiseCondition:
        for cond in self.conditions:
            if cond.id == cid:
                return cond
        raise KeyError(f"no condition with id {cid}")


def condition_name(cid: int) -> str:
    if 1 <= cid <= len(CONDITION_NAMES):
        return CONDITION_NAMES[cid - 1]
    return f"noise_{cid}"


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def make_conditions(spec: CorpusSpec) -> tuple[NoiseCondition, ...]:
    """The full condition table for a spec, ids 1..num_conditions.

    Per-condition parameters come from the condition's own seed stream:
    Gaussian bias (scale ``bias_scale``), log-uniform gain in
    [gain_low, gain_high], uniform sigma in [sigma_low, sigma_high].
    """
    conditions = []
    for cid in range(1, spec.num_conditions + 1):
        rng = _rng(spec.seed, _STREAM_CONDITION, cid)
        bias = rng.normal(scale=spec.bias_scale, size=spec.base_dim)
        gain = np.exp(rng.uniform(np.log(spec.gain_low),
                                  np.log(spec.gain_high), size=spec.base_dim))
        sigma = float(rng.uniform(spec.sigma_low, spec.sigma_high))
        conditions.append(NoiseCondition(id=cid, name=condition_name(cid),
                                         bias=bias, gain=gain, sigma=sigma))
    return tuple(conditions)


def make_prototypes(spec: CorpusSpec) -> np.ndarray:
    """Class mean frames, (num_classes, base_dim)."""
    rng = _rng(spec.seed, _STREAM_PROTO)
    return rng.normal(scale=spec.proto_scale,
                      size=(spec.num_classes, spec.base_dim))


def apply_condition(clean_frame, cond: NoiseCondition, noise_draw):
    """``gain * (clean_frame + bias + sigma * noise_draw)``, elementwise.

    Accepts a single frame or a (T, F) stack; broadcasting over rows.
    """
    clean_frame = np.asarray(clean_frame, dtype=np.float64)
    noise_draw = np.asarray(noise_draw, dtype=np.float64)
    if clean_frame.shape != noise_draw.shape:
        raise ValueError(
            f"frame shape {clean_frame.shape} != noise shape {noise_draw.shape}"
        )
    if clean_frame.shape[-1] != cond.bias.shape[0]:
        raise ValueError(
            f"frame dim {clean_frame.shape[-1]} != condition dim "
            f"{cond.bias.shape[0]}"
        )
    return cond.gain * (clean_frame + cond.bias + cond.sigma * noise_draw)


def _segment_labels(rng, spec: CorpusSpec) -> np.ndarray:
    """Constant-class segments so deltas and splicing carry information."""
    t = spec.frames_per_utterance
    n_segments = -(-t // spec.segment_length)
    classes = rng.integers(0, spec.num_classes, size=n_segments)
    return np.repeat(classes, spec.segment_length)[:t]


def _make_utterance(spec: CorpusSpec, prototypes: np.ndarray,
                    cond: NoiseCondition | None, stream: int,
                    index: int) -> Utterance:
    cid = CLEAN_ID if cond is None else cond.id
    rng = _rng(spec.seed, stream, cid, index)
    labels = _segment_labels(rng, spec)
    frames = prototypes[labels] + rng.normal(
        scale=spec.sigma_clean, size=(labels.shape[0], spec.base_dim)
    )
    if cond is not None:
        noise = rng.standard_normal(frames.shape)
        frames = apply_condition(frames, cond, noise)
    return Utterance(frames=frames, class_labels=labels, condition=cid)


def generate(spec: CorpusSpec, train_conditions) -> Corpus:
    """Generate a corpus whose training split sees only ``train_conditions``.

    ``train_conditions`` may be empty (clean-only training).  The test
    split always covers clean plus every condition, drawn from seed streams
    independent of the selection, so test data is identical across
    different selections of the same spec.
    """
    selected = sorted(set(int(c) for c in train_conditions))
    valid = set(range(1, spec.num_conditions + 1))
    bad = [c for c in selected if c not in valid]
    if bad:
        raise ValueError(
            f"invalid train condition ids {bad}; valid ids are 1.."
            f"{spec.num_conditions}"
        )
    prototypes = make_prototypes(spec)
    conditions = make_conditions(spec)
    by_id = {c.id: c for c in conditions}

    train = [
        _make_utterance(spec, prototypes, None, _STREAM_TRAIN, i)
        for i in range(spec.clean_utterances)
    ]
    for cid in selected:
        train.extend(
            _make_utterance(spec, prototypes, by_id[cid], _STREAM_TRAIN, i)
            for i in range(spec.noisy_utterances_per_condition)
        )

    test = [
        _make_utterance(spec, prototypes, None, _STREAM_TEST, i)
        for i in range(spec.test_utterances_per_condition)
    ]
    for cid in range(1, spec.num_conditions + 1):
        test.extend(
            _make_utterance(spec, prototypes, by_id[cid], _STREAM_TEST, i)
            for i in range(spec.test_utterances_per_condition)
        )

    return Corpus(
        seed=spec.seed,
        num_classes=spec.num_classes,
        base_dim=spec.base_dim,
        conditions=conditions,
        train_conditions=tuple(selected),
        prototypes=prototypes,
        train=tuple(train),
        test=tuple(test),
    )


def nearest_prototype_labels(frames, prototypes) -> np.ndarray:
    """Classify frames by nearest class prototype (Euclidean).

    A reference classifier for difficulty checks: exact on noiseless data,
    degrading as corruption grows.
    """
    frames = np.asarray(frames, dtype=np.float64)
    prototypes = np.asarray(prototypes, dtype=np.float64)
    d2 = (
        np.sum(frames**2, axis=1, keepdims=True)
        - 2.0 * frames @ prototypes.T
        + np.sum(prototypes**2, axis=1)
    )
    return np.argmin(d2, axis=1)


# --- corpus file ---

def _write_utterances(w: Writer, utterances):
    w.u32(len(utterances))
    for utt in utterances:
        w.u32(utt.condition)
        w.u32(utt.num_frames)
        w.u32_array(utt.class_labels)
        w.f64_array(utt.frames)


def save_corpus(corpus: Corpus, path):
    """Versioned binary layout; lossless round-trip with load_corpus."""
    w = Writer()
    w.magic(CORPUS_MAGIC)
    w.i64(corpus.seed)
    w.u32(corpus.num_classes)
    w.u32(corpus.base_dim)
    w.u32(len(corpus.conditions))
    for cond in corpus.conditions:
        w.u32(cond.id)
        w.text(cond.name)
        w.f64_array(cond.bias)
        w.f64_array(cond.gain)
        w.f64(cond.sigma)
    w.u32(len(corpus.train_conditions))
    w.u32_array(np.asarray(corpus.train_conditions, dtype=np.int64))
    w.f64_array(corpus.prototypes)
    _write_utterances(w, corpus.train)
    _write_utterances(w, corpus.test)
    with open(path, "wb") as fh:
        fh.write(w.getvalue())


_MAX_PLAUSIBLE = 2**28


def _read_utterances(r: Reader, base_dim: int, num_classes: int,
                     valid_ids: set, name: str):
    count = r.u32()
    if count > _MAX_PLAUSIBLE:
        raise FormatError(f"{name}: implausible utterance count {count}")
    utterances = []
    for _ in range(count):
        cid = r.u32()
        if cid != CLEAN_ID and cid not in valid_ids:
            raise FormatError(f"{name}: unknown condition id {cid}")
        t = r.u32()
        if t == 0 or t > _MAX_PLAUSIBLE:
            raise FormatError(f"{name}: implausible frame count {t}")
        labels = r.u32_array(t)
        if labels.size and labels.max() >= num_classes:
            raise FormatError(
                f"{name}: class label {labels.max()} out of range "
                f"(num_classes={num_classes})"
            )
        frames = r.f64_array(t * base_dim, shape=(t, base_dim))
        utterances.append(Utterance(frames=frames, class_labels=labels,
                                    condition=cid))
    return tuple(utterances)


def load_corpus(path) -> Corpus:
    with open(path, "rb") as fh:
        r = Reader(fh.read(), name=str(path))
    r.magic(CORPUS_MAGIC)
    seed = r.i64()
    num_classes = r.u32()
    base_dim = r.u32()
    if num_classes < 2 or base_dim < 1 or base_dim > _MAX_PLAUSIBLE:
        raise FormatError(
            f"{path}: implausible dimensions C={num_classes}, F={base_dim}"
        )
    n_cond = r.u32()
    if n_cond > 2**16:
        raise FormatError(f"{path}: implausible condition count {n_cond}")
    conditions = []
    for _ in range(n_cond):
        cid = r.u32()
        cname = r.text()
        bias = r.f64_array(base_dim)
        gain = r.f64_array(base_dim)
        sigma = r.f64()
        try:
            conditions.append(NoiseCondition(id=cid, name=cname, bias=bias,
                                             gain=gain, sigma=sigma))
        except ValueError as exc:
            raise FormatError(f"{path}: invalid condition: {exc}") from exc
    valid_ids = {c.id for c in conditions}
    n_train_cond = r.u32()
    train_conditions = tuple(int(v) for v in r.u32_array(n_train_cond))
    if not set(train_conditions) <= valid_ids:
        raise FormatError(f"{path}: train conditions not in condition table")
    prototypes = r.f64_array(num_classes * base_dim,
                             shape=(num_classes, base_dim))
    train = _read_utterances(r, base_dim, num_classes, valid_ids, str(path))
    test = _read_utterances(r, base_dim, num_classes, valid_ids, str(path))
    r.done()
    return Corpus(
        seed=seed, num_classes=num_classes, base_dim=base_dim,
        conditions=tuple(conditions), train_conditions=train_conditions,
        prototypes=prototypes, train=train, test=test,
    )
