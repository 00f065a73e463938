"""Tests for the Y-shaped network: forward, losses, masked backward, checkpoints.

The reference oracles here are deliberately naive: plain Python loops over
``math`` calls, independent finite differences, and hand-computed scalars.
They share no code with the vectorized implementation under test.
"""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from invnet import model
from invnet.ops import AffineLayer
from invnet.serial import FormatError, Writer


def tiny_config():
    """A minimal 3-input, 3-class network used by the loop oracles."""
    return model.NetConfig(
        input_dim=3,
        encoder_layers=(4,),
        recognizer_layers=(3,),
        discriminator_layers=(2, 1),
    )


def loop_forward(params, x_row):
    """Forward pass for one frame written as explicit Python loops."""

    def affine(layer, vec):
        out = []
        for r in range(layer.weights.shape[0]):
            acc = float(layer.biases[r])
            for c in range(layer.weights.shape[1]):
                acc += float(layer.weights[r, c]) * vec[c]
            out.append(acc)
        return out

    vec = [float(v) for v in x_row]
    for layer in params.encoder:
        vec = [max(0.0, v) for v in affine(layer, vec)]
    hidden = vec

    vec = hidden
    for layer in params.recognizer[:-1]:
        vec = [max(0.0, v) for v in affine(layer, vec)]
    logits = affine(params.recognizer[-1], vec)
    shift = max(logits)
    exps = [math.exp(v - shift) for v in logits]
    total = sum(exps)
    y_hat = [v / total for v in exps]

    vec = hidden
    for layer in params.discriminator[:-1]:
        vec = [max(0.0, v) for v in affine(layer, vec)]
    d_logit = affine(params.discriminator[-1], vec)[0]
    d_hat = 1.0 / (1.0 + math.exp(-d_logit))
    return hidden, y_hat, d_hat


class TestInit:
    """Parameter initialization: shapes, seeding, and weight statistics."""

    def test_shapes_follow_config(self):
        cfg = tiny_config()
        params = model.init_params(cfg, seed=0)
        assert [w.weights.shape for w in params.encoder] == [(4, 3)]
        assert [w.weights.shape for w in params.recognizer] == [(3, 4)]
        assert [w.weights.shape for w in params.discriminator] == [(2, 4), (1, 2)]
        for subset in model.SUBSETS:
            for layer in params.subset(subset):
                assert layer.biases.shape == (layer.weights.shape[0],)

    def test_same_seed_is_bitwise_identical(self):
        cfg = tiny_config()
        a = model.init_params(cfg, seed=7)
        b = model.init_params(cfg, seed=7)
        for subset in model.SUBSETS:
            for la, lb in zip(a.subset(subset), b.subset(subset)):
                assert_array_equal(la.weights, lb.weights)
                assert_array_equal(la.biases, lb.biases)

    def test_different_seeds_differ(self):
        cfg = tiny_config()
        a = model.init_params(cfg, seed=1)
        b = model.init_params(cfg, seed=2)
        assert not np.array_equal(a.encoder[0].weights, b.encoder[0].weights)

    def test_biases_start_at_zero(self):
        params = model.init_params(tiny_config(), seed=3)
        for subset in model.SUBSETS:
            for layer in params.subset(subset):
                assert_array_equal(layer.biases, np.zeros_like(layer.biases))

    def test_weight_variance_matches_glorot_target(self):
        # For a large square layer the empirical variance must sit within
        # 20% of 2 / (fan_in + fan_out).
        cfg = model.NetConfig(
            input_dim=512,
            encoder_layers=(512,),
            recognizer_layers=(2,),
            discriminator_layers=(1,),
        )
        params = model.init_params(cfg, seed=11)
        w = params.encoder[0].weights
        target = 2.0 / (512 + 512)
        assert abs(w.var() - target) / target < 0.20
        bound = math.sqrt(6.0 / (512 + 512))
        assert np.abs(w).max() <= bound

    def test_branch_layers_do_not_depend_on_other_branch_shape(self):
        # Reshaping the discriminator must not perturb encoder/recognizer
        # draws for the same seed: each layer consumes its own seed stream.
        base = model.NetConfig(
            input_dim=5,
            encoder_layers=(6, 6),
            recognizer_layers=(4,),
            discriminator_layers=(3, 1),
        )
        alt = model.NetConfig(
            input_dim=5,
            encoder_layers=(6, 6),
            recognizer_layers=(4,),
            discriminator_layers=(8, 8, 1),
        )
        a = model.init_params(base, seed=5)
        b = model.init_params(alt, seed=5)
        for la, lb in zip(a.encoder, b.encoder):
            assert_array_equal(la.weights, lb.weights)
        for la, lb in zip(a.recognizer, b.recognizer):
            assert_array_equal(la.weights, lb.weights)


class TestNetConfig:
    """Static validation of architecture descriptions."""

    def test_rejects_empty_stacks(self):
        with pytest.raises(ValueError):
            model.NetConfig(3, (), (2,), (1,))
        with pytest.raises(ValueError):
            model.NetConfig(3, (4,), (), (1,))

    def test_rejects_single_class_recognizer(self):
        with pytest.raises(ValueError):
            model.NetConfig(3, (4,), (1,), (1,))

    def test_discriminator_must_end_in_one_unit(self):
        with pytest.raises(ValueError):
            model.NetConfig(3, (4,), (2,), (2,))

    def test_rejects_nonpositive_widths(self):
        with pytest.raises(ValueError):
            model.NetConfig(3, (4, 0), (2,), (1,))
        with pytest.raises(ValueError):
            model.NetConfig(0, (4,), (2,), (1,))

    def test_derived_properties(self):
        cfg = tiny_config()
        assert cfg.num_classes == 3
        assert cfg.hidden_dim == 4


class TestForward:
    """Forward pass against the loop oracle and closed-form cases."""

    def test_matches_loop_oracle(self):
        cfg = tiny_config()
        params = model.init_params(cfg, seed=42)
        rng = np.random.default_rng(9)
        x = rng.normal(size=(6, 3))
        trace = model.forward(params, x)
        for i in range(6):
            hidden, y_hat, d_hat = loop_forward(params, x[i])
            assert_allclose(trace.h[i], hidden, rtol=0.0, atol=1e-12)
            assert_allclose(trace.y_hat[i], y_hat, rtol=0.0, atol=1e-12)
            assert_allclose(trace.d_hat[i, 0], d_hat, rtol=0.0, atol=1e-12)

    def test_all_zero_params_give_uniform_outputs(self):
        cfg = tiny_config()
        params = model.init_params(cfg, seed=0)
        zeroed = model.NetParams(
            encoder=tuple(
                AffineLayer(np.zeros_like(l.weights), np.zeros_like(l.biases))
                for l in params.encoder
            ),
            recognizer=tuple(
                AffineLayer(np.zeros_like(l.weights), np.zeros_like(l.biases))
                for l in params.recognizer
            ),
            discriminator=tuple(
                AffineLayer(np.zeros_like(l.weights), np.zeros_like(l.biases))
                for l in params.discriminator
            ),
        )
        trace = model.forward(zeroed, np.ones((5, 3)))
        assert_allclose(trace.y_hat, np.full((5, 3), 1.0 / 3.0), atol=1e-15)
        assert_allclose(trace.d_hat, np.full((5, 1), 0.5), atol=1e-15)

    def test_identical_rows_produce_identical_outputs(self):
        params = model.init_params(tiny_config(), seed=4)
        x = np.tile(np.array([[0.3, -1.2, 0.7]]), (4, 1))
        trace = model.forward(params, x)
        for i in range(1, 4):
            assert_array_equal(trace.y_hat[i], trace.y_hat[0])
            assert_array_equal(trace.d_hat[i], trace.d_hat[0])

    def test_probability_rows_sum_to_one(self):
        params = model.init_params(tiny_config(), seed=5)
        x = np.random.default_rng(1).normal(size=(32, 3), scale=3.0)
        trace = model.forward(params, x)
        assert_allclose(trace.y_hat.sum(axis=1), np.ones(32), atol=1e-12)
        assert np.all(trace.d_hat > 0.0) and np.all(trace.d_hat < 1.0)

    def test_rejects_wrong_input_width(self):
        params = model.init_params(tiny_config(), seed=6)
        with pytest.raises(Exception):
            model.forward(params, np.zeros((2, 5)))


class TestPredict:
    """Class posteriors for deployment: the discriminator plays no part."""

    def test_matches_forward_posteriors(self):
        params = model.init_params(tiny_config(), seed=8)
        x = np.random.default_rng(2).normal(size=(7, 3))
        assert_array_equal(model.predict(params, x), model.forward(params, x).y_hat)

    def test_discriminator_weights_are_ignored(self):
        params = model.init_params(tiny_config(), seed=8)
        x = np.random.default_rng(3).normal(size=(7, 3))
        poisoned = model.NetParams(
            encoder=params.encoder,
            recognizer=params.recognizer,
            discriminator=tuple(
                AffineLayer(np.full_like(l.weights, np.nan), np.full_like(l.biases, np.nan))
                for l in params.discriminator
            ),
        )
        assert_array_equal(model.predict(poisoned, x), model.predict(params, x))


class TestRecognitionLoss:
    """Cross-entropy over class posteriors."""

    def test_uniform_four_class_value(self):
        y_hat = np.full((10, 4), 0.25)
        y = np.arange(10, dtype=np.int64) % 4
        assert_allclose(model.recognition_loss(y_hat, y), math.log(4.0), atol=1e-12)
        assert_allclose(model.recognition_loss(y_hat, y), 1.386294, atol=1e-6)

    def test_perfect_prediction_is_zero(self):
        y_hat = np.eye(3)[[0, 1, 2, 1]]
        y = np.array([0, 1, 2, 1], dtype=np.int64)
        # Rows carry exact 1.0 on the true class, so the mean log is -log(1) = 0.
        assert model.recognition_loss(y_hat, y) == 0.0

    def test_loop_oracle_on_random_batch(self):
        rng = np.random.default_rng(12)
        raw = rng.uniform(0.05, 1.0, size=(9, 5))
        y_hat = raw / raw.sum(axis=1, keepdims=True)
        y = rng.integers(0, 5, size=9).astype(np.int64)
        expected = sum(-math.log(y_hat[i, y[i]]) for i in range(9)) / 9.0
        assert_allclose(model.recognition_loss(y_hat, y), expected, atol=1e-12)

    def test_zero_probability_is_clamped_finite(self):
        y_hat = np.array([[0.0, 1.0]])
        y = np.array([0], dtype=np.int64)
        value = model.recognition_loss(y_hat, y)
        assert math.isfinite(value)
        assert_allclose(value, -math.log(1e-12), atol=1e-6)

    def test_rejects_out_of_range_labels(self):
        y_hat = np.full((2, 3), 1.0 / 3.0)
        with pytest.raises(ValueError):
            model.recognition_loss(y_hat, np.array([0, 3], dtype=np.int64))
        with pytest.raises(ValueError):
            model.recognition_loss(y_hat, np.array([-1, 0], dtype=np.int64))


class TestDomainLoss:
    """Binary cross-entropy for the origin-of-frame head."""

    def test_confident_correct_is_zero_and_half_is_log_two(self):
        ones = np.array([1], dtype=np.int64)
        assert model.domain_loss(np.array([[1.0]]), ones) == 0.0
        assert_allclose(
            model.domain_loss(np.array([[0.5]]), ones), math.log(2.0), atol=1e-12
        )
        assert_allclose(model.domain_loss(np.array([[0.5]]), ones), 0.693147, atol=1e-6)

    def test_loop_oracle_on_mixed_batch(self):
        rng = np.random.default_rng(13)
        d_hat = rng.uniform(0.01, 0.99, size=(8, 1))
        d = rng.integers(0, 2, size=8).astype(np.int64)
        expected = (
            sum(
                -(d[i] * math.log(d_hat[i, 0]) + (1 - d[i]) * math.log(1.0 - d_hat[i, 0]))
                for i in range(8)
            )
            / 8.0
        )
        assert_allclose(model.domain_loss(d_hat, d), expected, atol=1e-12)

    def test_confident_wrong_is_clamped_finite(self):
        value = model.domain_loss(np.array([[0.0]]), np.array([1], dtype=np.int64))
        assert math.isfinite(value)
        assert_allclose(value, -math.log(1e-12), atol=1e-6)


class TestConfusionLoss:
    """The flipped-label objective the encoder descends."""

    def test_half_prediction_value(self):
        # d = 1, d_hat = 0.5: the flipped-label score is log(0.5) = -log 2.
        value = model.confusion_loss(np.array([[0.5]]), np.array([1], dtype=np.int64))
        assert_allclose(value, math.log(0.5), atol=1e-12)
        assert_allclose(value, -0.693147, atol=1e-6)

    def test_fooled_discriminator_drives_loss_to_zero(self):
        # A fooled discriminator calls the clean frame noisy (d = 0 with
        # d_hat -> 1): the score log(d_hat) approaches 0 from below.
        near = model.confusion_loss(
            np.array([[1.0 - 1e-9]]), np.array([0], dtype=np.int64)
        )
        assert -1e-8 < near < 0.0
        # Same limit for a noisy frame called clean (d = 1, d_hat -> 0).
        near = model.confusion_loss(np.array([[1e-9]]), np.array([1], dtype=np.int64))
        assert -1e-8 < near < 0.0

    def test_negated_value_equals_domain_loss_with_flipped_labels(self):
        rng = np.random.default_rng(14)
        for _ in range(100):
            n = int(rng.integers(1, 40))
            d_hat = rng.uniform(1e-6, 1.0 - 1e-6, size=(n, 1))
            d = rng.integers(0, 2, size=n).astype(np.int64)
            lhs = -model.confusion_loss(d_hat, d)
            rhs = model.domain_loss(d_hat, 1 - d)
            assert abs(lhs - rhs) <= 1e-12

    def test_loop_oracle(self):
        rng = np.random.default_rng(15)
        d_hat = rng.uniform(0.05, 0.95, size=(6, 1))
        d = np.array([0, 1, 0, 1, 1, 0], dtype=np.int64)
        expected = (
            sum(
                d[i] * math.log(1.0 - d_hat[i, 0]) + (1 - d[i]) * math.log(d_hat[i, 0])
                for i in range(6)
            )
            / 6.0
        )
        assert_allclose(model.confusion_loss(d_hat, d), expected, atol=1e-12)


class TestNonSaturation:
    """The flipped-label form keeps a live gradient where plain reversal stalls."""

    def test_gradient_magnitude_grows_as_discriminator_gets_confident(self):
        # For a noisy frame (d = 1) the encoder's pressure is the derivative
        # of -confusion w.r.t. d_hat.  It must grow monotonically as the
        # discriminator becomes more certain -- no vanishing-gradient plateau.
        d = np.array([1], dtype=np.int64)
        eps = 1e-7

        def pressure(p):
            lo = -model.confusion_loss(np.array([[p - eps]]), d)
            hi = -model.confusion_loss(np.array([[p + eps]]), d)
            return abs(hi - lo) / (2.0 * eps)

        values = [pressure(p) for p in (0.9, 0.99, 0.999)]
        assert values[0] < values[1] < values[2]
        # Closed form is 1 / (1 - d_hat): 10, 100, 1000.
        assert_allclose(values, [10.0, 100.0, 1000.0], rtol=1e-3)


def total_objective(params, x, labels, alpha, beta, frozen):
    """Composite objective with each term scoped to the parameters it trains.

    ``frozen`` holds the reference parameters: the domain term sees the frozen
    encoder, and the confusion term sees the frozen discriminator, mirroring
    the masking used by the backward pass.
    """
    trained = model.forward(params, x)
    l1 = model.recognition_loss(trained.y_hat, labels.y)

    frozen_enc = model.NetParams(
        encoder=frozen.encoder,
        recognizer=params.recognizer,
        discriminator=params.discriminator,
    )
    l2 = model.domain_loss(model.forward(frozen_enc, x).d_hat, labels.d)

    frozen_disc = model.NetParams(
        encoder=params.encoder,
        recognizer=params.recognizer,
        discriminator=frozen.discriminator,
    )
    l3 = model.confusion_loss(model.forward(frozen_disc, x).d_hat, labels.d)
    return l1 + alpha * l2 - beta * l3


def shift_params(params, grads, scale):
    """Return ``params + scale * grads`` as a new parameter tree."""

    def shifted(layers, grad_layers):
        return tuple(
            AffineLayer(l.weights + scale * g.weights, l.biases + scale * g.biases)
            for l, g in zip(layers, grad_layers)
        )

    return model.NetParams(
        encoder=shifted(params.encoder, grads.encoder),
        recognizer=shifted(params.recognizer, grads.recognizer),
        discriminator=shifted(params.discriminator, grads.discriminator),
    )


class TestCompositeBackward:
    """Gradient scoping and descent behaviour of the masked backward pass."""

    @staticmethod
    def random_problem(seed, batch=12):
        cfg = model.NetConfig(
            input_dim=4,
            encoder_layers=(6, 5),
            recognizer_layers=(4, 3),
            discriminator_layers=(3, 1),
        )
        rng = np.random.default_rng(seed)
        params = model.init_params(cfg, seed=seed)
        # Nudge parameters off the exact-zero pre-activation manifold so the
        # descent and equality checks do not sit on a kink.
        jittered = shift_params(
            params,
            model.Gradients(
                encoder=tuple(
                    model.LayerGrads(rng.normal(size=l.weights.shape), rng.normal(size=l.biases.shape))
                    for l in params.encoder
                ),
                recognizer=tuple(
                    model.LayerGrads(rng.normal(size=l.weights.shape), rng.normal(size=l.biases.shape))
                    for l in params.recognizer
                ),
                discriminator=tuple(
                    model.LayerGrads(rng.normal(size=l.weights.shape), rng.normal(size=l.biases.shape))
                    for l in params.discriminator
                ),
            ),
            0.05,
        )
        x = rng.normal(size=(batch, 4))
        labels = model.BatchLabels(
            y=rng.integers(0, 3, size=batch).astype(np.int64),
            d=rng.integers(0, 2, size=batch).astype(np.int64),
        )
        return jittered, x, labels

    def test_alpha_zero_yields_zero_discriminator_gradients(self):
        params, x, labels = self.random_problem(21)
        trace = model.forward(params, x)
        grads = model.composite_backward(trace, labels, alpha=0.0, beta=0.7)
        for g in grads.discriminator:
            assert_array_equal(g.weights, np.zeros_like(g.weights))
            assert_array_equal(g.biases, np.zeros_like(g.biases))

    def test_alpha_has_no_effect_on_encoder_or_recognizer_gradients(self):
        params, x, labels = self.random_problem(22)
        trace = model.forward(params, x)
        a = model.composite_backward(trace, labels, alpha=0.0, beta=0.5)
        b = model.composite_backward(trace, labels, alpha=3.5, beta=0.5)
        for ga, gb in zip(a.encoder, b.encoder):
            assert_array_equal(ga.weights, gb.weights)
            assert_array_equal(ga.biases, gb.biases)
        for ga, gb in zip(a.recognizer, b.recognizer):
            assert_array_equal(ga.weights, gb.weights)
            assert_array_equal(ga.biases, gb.biases)

    def test_beta_has_no_effect_on_discriminator_or_recognizer_gradients(self):
        params, x, labels = self.random_problem(23)
        trace = model.forward(params, x)
        a = model.composite_backward(trace, labels, alpha=1.2, beta=0.0)
        b = model.composite_backward(trace, labels, alpha=1.2, beta=4.0)
        for ga, gb in zip(a.discriminator, b.discriminator):
            assert_array_equal(ga.weights, gb.weights)
            assert_array_equal(ga.biases, gb.biases)
        for ga, gb in zip(a.recognizer, b.recognizer):
            assert_array_equal(ga.weights, gb.weights)
            assert_array_equal(ga.biases, gb.biases)

    def test_beta_zero_encoder_gradient_is_pure_recognition(self):
        # With beta = 0 the encoder gradient must be bitwise identical to the
        # gradient of the recognition term alone (alpha contributes nothing
        # to the encoder either way).
        params, x, labels = self.random_problem(24)
        trace = model.forward(params, x)
        masked = model.composite_backward(trace, labels, alpha=2.0, beta=0.0)
        plain = model.composite_backward(trace, labels, alpha=0.0, beta=0.0)
        for ga, gb in zip(masked.encoder, plain.encoder):
            assert_array_equal(ga.weights, gb.weights)
            assert_array_equal(ga.biases, gb.biases)

    def test_rejects_negative_weights(self):
        params, x, labels = self.random_problem(25)
        trace = model.forward(params, x)
        with pytest.raises(ValueError):
            model.composite_backward(trace, labels, alpha=-0.1, beta=0.5)
        with pytest.raises(ValueError):
            model.composite_backward(trace, labels, alpha=1.0, beta=-1.0)

    def test_small_step_against_gradient_decreases_objective(self):
        # Directional-derivative check: on 20 random batches a small step
        # along the negative gradient strictly decreases the composite
        # objective evaluated with the same scoping as the backward pass.
        decreases = 0
        for seed in range(100, 120):
            params, x, labels = self.random_problem(seed)
            rng = np.random.default_rng(seed)
            alpha = float(rng.uniform(0.2, 2.0))
            beta = float(rng.uniform(0.2, 2.0))
            trace = model.forward(params, x)
            grads = model.composite_backward(trace, labels, alpha=alpha, beta=beta)
            before = total_objective(params, x, labels, alpha, beta, frozen=params)
            stepped = shift_params(params, grads, -1e-4)
            after = total_objective(stepped, x, labels, alpha, beta, frozen=params)
            if after < before:
                decreases += 1
        assert decreases == 20

    def test_gradient_layout_matches_parameters(self):
        params, x, labels = self.random_problem(26)
        trace = model.forward(params, x)
        grads = model.composite_backward(trace, labels, alpha=1.0, beta=1.0)
        for subset in model.SUBSETS:
            for layer, grad in zip(params.subset(subset), grads.subset(subset)):
                assert grad.weights.shape == layer.weights.shape
                assert grad.biases.shape == layer.biases.shape


class TestDiscriminatorAccuracy:
    """Thresholded accuracy of the binary head."""

    def test_perfect_and_inverted_batches(self):
        d = np.array([1, 0, 1, 0], dtype=np.int64)
        sharp = np.array([[0.9], [0.1], [0.8], [0.2]])
        assert model.discriminator_accuracy(sharp, d) == 1.0
        assert model.discriminator_accuracy(1.0 - sharp, d) == 0.0

    def test_exact_half_predicts_domain_zero(self):
        half = np.full((4, 1), 0.5)
        assert model.discriminator_accuracy(half, np.zeros(4, dtype=np.int64)) == 1.0
        assert model.discriminator_accuracy(half, np.ones(4, dtype=np.int64)) == 0.0

    def test_random_scores_sit_near_half(self):
        rng = np.random.default_rng(30)
        d_hat = rng.uniform(size=(100_000, 1))
        d = rng.integers(0, 2, size=100_000).astype(np.int64)
        assert abs(model.discriminator_accuracy(d_hat, d) - 0.5) < 0.01


class TestBatchLabels:
    """Validation of the paired label container."""

    def test_rejects_length_mismatch(self):
        with pytest.raises(ValueError):
            model.BatchLabels(
                y=np.array([0, 1], dtype=np.int64), d=np.array([0], dtype=np.int64)
            )

    def test_rejects_non_binary_domain(self):
        with pytest.raises(ValueError):
            model.BatchLabels(
                y=np.array([0], dtype=np.int64), d=np.array([2], dtype=np.int64)
            )


class TestCheckpointFormat:
    """Binary save/load of the full parameter tree."""

    def test_roundtrip_is_bitwise_exact(self, tmp_path):
        cfg = model.NetConfig(
            input_dim=6,
            encoder_layers=(5, 4),
            recognizer_layers=(3, 4),
            discriminator_layers=(2, 1),
        )
        params = model.init_params(cfg, seed=17)
        path = tmp_path / "net.bin"
        model.save_params(params, path)
        loaded = model.load_params(path)
        assert loaded.to_config() == cfg
        for subset in model.SUBSETS:
            for la, lb in zip(params.subset(subset), loaded.subset(subset)):
                assert_array_equal(la.weights, lb.weights)
                assert la.weights.dtype == lb.weights.dtype == np.float64
                assert_array_equal(la.biases, lb.biases)

    def test_save_is_deterministic(self, tmp_path):
        params = model.init_params(tiny_config(), seed=18)
        a, b = tmp_path / "a.bin", tmp_path / "b.bin"
        model.save_params(params, a)
        model.save_params(params, b)
        assert a.read_bytes() == b.read_bytes()

    def saved_bytes(self, tmp_path):
        params = model.init_params(tiny_config(), seed=19)
        path = tmp_path / "net.bin"
        model.save_params(params, path)
        return path.read_bytes()

    def load_raw(self, tmp_path, data):
        path = tmp_path / "corrupt.bin"
        path.write_bytes(data)
        return model.load_params(path)

    def test_rejects_wrong_magic(self, tmp_path):
        data = bytearray(self.saved_bytes(tmp_path))
        data[:5] = b"XNET1"
        with pytest.raises(FormatError):
            self.load_raw(tmp_path, bytes(data))

    def test_rejects_truncated_file(self, tmp_path):
        data = self.saved_bytes(tmp_path)
        with pytest.raises(FormatError):
            self.load_raw(tmp_path, data[: len(data) - 9])

    def test_rejects_trailing_garbage(self, tmp_path):
        data = self.saved_bytes(tmp_path)
        with pytest.raises(FormatError):
            self.load_raw(tmp_path, data + b"\x00")

    def test_rejects_implausible_layer_count(self, tmp_path):
        w = Writer()
        w.magic(model.CHECKPOINT_MAGIC)
        w.u32(3)
        w.u32(70_000)  # encoder claims an absurd number of layers
        with pytest.raises(FormatError):
            self.load_raw(tmp_path, w.getvalue())

    def test_rejects_invalid_architecture(self, tmp_path):
        # A stored discriminator whose final width is not 1 must be refused
        # even though the payload is self-consistent.
        w = Writer()
        w.magic(model.CHECKPOINT_MAGIC)
        w.u32(2)
        w.u32(1)
        w.u32_array(np.array([3], dtype=np.uint32))  # encoder: 2 -> 3
        w.u32(1)
        w.u32_array(np.array([2], dtype=np.uint32))  # recognizer: 3 -> 2
        w.u32(1)
        w.u32_array(np.array([2], dtype=np.uint32))  # discriminator: 3 -> 2 (bad)
        for dims in [(3, 2), (2, 3), (2, 3)]:
            w.f64_array(np.zeros(dims[0] * dims[1]))
            w.f64_array(np.zeros(dims[0]))
        with pytest.raises(FormatError):
            self.load_raw(tmp_path, w.getvalue())

    def test_expected_config_mismatch_is_rejected(self, tmp_path):
        params = model.init_params(tiny_config(), seed=20)
        path = tmp_path / "net.bin"
        model.save_params(params, path)
        other = model.NetConfig(
            input_dim=3,
            encoder_layers=(4,),
            recognizer_layers=(5,),
            discriminator_layers=(2, 1),
        )
        with pytest.raises(FormatError):
            model.load_params(path, expect=other)


class TestFlatViews:
    """Flat-vector views used by the finite-difference harness."""

    def test_roundtrip_restores_subset(self):
        params = model.init_params(tiny_config(), seed=31)
        for subset in model.SUBSETS:
            flat = model.flatten_subset(params, subset)
            assert flat.ndim == 1
            rebuilt = model.with_subset(params, subset, flat)
            for la, lb in zip(params.subset(subset), rebuilt.subset(subset)):
                assert_array_equal(la.weights, lb.weights)
                assert_array_equal(la.biases, lb.biases)

    def test_perturbation_lands_in_the_right_place(self):
        params = model.init_params(tiny_config(), seed=32)
        flat = model.flatten_subset(params, "recognizer")
        flat = flat.copy()
        flat[0] += 1.0
        rebuilt = model.with_subset(params, "recognizer", flat)
        assert rebuilt.recognizer[0].weights[0, 0] == params.recognizer[0].weights[0, 0] + 1.0
        assert_array_equal(rebuilt.encoder[0].weights, params.encoder[0].weights)

    def test_wrong_length_is_rejected(self):
        params = model.init_params(tiny_config(), seed=33)
        with pytest.raises(ValueError):
            model.with_subset(params, "encoder", np.zeros(3))

    def test_default_net_config_shape(self):
        cfg = model.default_net_config(input_dim=1320, num_classes=32, hidden=64)
        assert cfg.input_dim == 1320
        assert cfg.hidden_dim == 64
        assert cfg.num_classes == 32
        assert cfg.discriminator_layers[-1] == 1
