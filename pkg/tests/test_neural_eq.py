import numpy as np
import pytest
from helpers import finite_difference_error, tiny_reference_net
from hypothesis import given, settings
from hypothesis import strategies as st

from mimo_semalign.channel import complex_gaussian, lift_channel, sample_channel
from mimo_semalign.codec import ChannelDims, DimensionError, FormatError, SyntheticSpec, generate_synthetic
from mimo_semalign.linear_eq import g_step, objective
from mimo_semalign.neural_eq import (
    ComplexMlp,
    Layer,
    ThresholdSchedule,
    TrainConfig,
    TrainingDivergedError,
    backward,
    forward,
    hard_threshold,
    load_neural,
    loss,
    make_mlp,
    normalize_power,
    phase_amplitude_activation,
    save_neural,
    sparsity,
    train,
    train_neural,
)


def linear_net(*weights):
    return ComplexMlp([Layer(w, np.zeros(w.shape[0], complex)) for w in weights])


class TestActivation:
    def test_examples(self):
        assert phase_amplitude_activation(np.array([0j]))[0] == 0
        np.testing.assert_allclose(phase_amplitude_activation(np.array([1 + 0j])), [0.76159415595 + 0j])

    def test_phase_preserved(self):
        z = complex_gaussian(np.random.default_rng(0), 1000)
        for alpha in ("tanh", "sigmoid", "identity"):
            out = phase_amplitude_activation(z, alpha)
            gap = np.angle(out * np.conj(z))
            assert np.abs(gap).max() <= 1e-12

    def test_magnitude(self):
        z = np.array([3 - 4j, -0.5j])
        np.testing.assert_allclose(np.abs(phase_amplitude_activation(z, "tanh")), np.tanh([5, 0.5]))
        np.testing.assert_allclose(phase_amplitude_activation(z, "identity"), z)

    def test_unknown_alpha(self):
        with pytest.raises(ValueError):
            phase_amplitude_activation(np.ones(2, complex), "relu")


class TestNormalizePower:
    def test_examples(self):
        x = np.array([2.0 + 0j, 0])
        np.testing.assert_allclose(normalize_power(x, 1.0), x / 2)
        np.testing.assert_array_equal(normalize_power(np.zeros(3, complex)), 0)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 8), st.floats(0.01, 100))
    def test_power_is_exact(self, seed, dim, p_t):
        x = complex_gaussian(np.random.default_rng(seed), (4, dim))
        out = normalize_power(x, p_t)
        np.testing.assert_allclose(np.sum(np.abs(out) ** 2, axis=1), p_t, rtol=1e-10)


class TestForward:
    def test_zero_network(self):
        rng = np.random.default_rng(1)
        pre, dec = make_mlp(3, [4], 2, rng), make_mlp(2, [4], 5, rng)
        for net in (pre, dec):
            for layer in net.layers:
                layer.w[:] = 0
        out = forward(pre, dec, complex_gaussian(rng, (2, 3)), np.eye(2), np.zeros((2, 2)))
        np.testing.assert_array_equal(out, 0)

    def test_single_linear_layers(self):
        rng = np.random.default_rng(2)
        q, _ = np.linalg.qr(complex_gaussian(rng, (3, 3)))
        wd = complex_gaussian(rng, (4, 3))
        x = complex_gaussian(rng, 3)
        x /= np.linalg.norm(x)
        out = forward(linear_net(q), linear_net(wd), x, np.eye(3), np.zeros(3))
        np.testing.assert_allclose(out, wd @ q @ x, atol=1e-12)

    def test_matches_composition_of_sub_ops(self):
        (pre, dec), x, _, h = tiny_reference_net(3)
        v = complex_gaussian(np.random.default_rng(4), (x.shape[0], 1), 0.1)

        def net_apply(net, a):
            for layer in net.layers:
                a = a @ layer.w.T + layer.b
                if layer.activation != "none":
                    a = phase_amplitude_activation(a, net.alpha)
            return a

        manual = net_apply(dec, normalize_power(net_apply(pre, x)) @ h.T + v)
        np.testing.assert_allclose(forward(pre, dec, x, h, v), manual, atol=1e-12)

    def test_shape_checks(self):
        (pre, dec), x, _, _ = tiny_reference_net(5)
        with pytest.raises(DimensionError):
            forward(pre, dec, x, np.eye(2), np.zeros((x.shape[0], 2)))


class TestLoss:
    def test_exact_targets(self):
        nets, x, _, h = tiny_reference_net(6)
        y = forward(*nets, x, h, np.zeros((x.shape[0], 1)))
        assert loss(x, y, h, 0.0, nets, 0) == pytest.approx(0, abs=1e-28)

    def test_zero_decoder(self):
        rng = np.random.default_rng(7)
        pre = linear_net(complex_gaussian(rng, (2, 3)))
        dec = linear_net(np.zeros((4, 2), complex))
        x, y = complex_gaussian(rng, (6, 3)), complex_gaussian(rng, (6, 4))
        expected = np.mean(np.sum(np.abs(y) ** 2, axis=1))
        assert loss(x, y, np.eye(2), 0.5, (pre, dec), 1) == pytest.approx(expected)

    def test_noise_term_for_linear_nets(self):
        rng = np.random.default_rng(8)
        wd = complex_gaussian(rng, (3, 2))
        nets = (linear_net(complex_gaussian(rng, (2, 3))), linear_net(wd))
        x, y = complex_gaussian(rng, (4, 3)), complex_gaussian(rng, (4, 3))
        h = complex_gaussian(rng, (2, 2))
        sigma2 = 0.2
        clean = loss(x, y, h, 0.0, nets, 0)
        expected = clean + sigma2 * np.linalg.norm(wd) ** 2
        mc = np.mean([loss(x, y, h, sigma2, nets, seed) for seed in range(10_000)])
        assert abs(mc / expected - 1) < 0.02


class TestBackward:
    @pytest.mark.parametrize("alpha", ["tanh", "sigmoid"])
    def test_finite_differences(self, alpha):
        nets, x, y, h = tiny_reference_net(9, alpha)
        assert finite_difference_error(nets, x, y, h, 0.1, seed=3) <= 1e-4

    def test_zero_loss_means_zero_gradient(self):
        nets, x, _, h = tiny_reference_net(10)
        y = forward(*nets, x, h, np.zeros((x.shape[0], 1)))
        value, grads = backward(nets, x, y, h, 0.0, 0)
        assert value == pytest.approx(0, abs=1e-28)
        for part in grads:
            for gw, gb in part:
                assert np.abs(gw).max() < 1e-14 and np.abs(gb).max() < 1e-14

    def test_masked_weights_get_exact_zero(self):
        nets, x, y, h = tiny_reference_net(11)
        nets[0].layers[0].mask[0, 1] = False
        nets[0].layers[0].w[0, 1] = 0
        _, (gp, _) = backward(nets, x, y, h, 0.1, 0)
        assert gp[0][0][0, 1] == 0


class TestThreshold:
    def test_example(self):
        sched = ThresholdSchedule.from_weights(10, 10, 1e-3)
        assert sched.tau_theta == pytest.approx(0.01)
        w = np.array([[0.005 + 0.005j, 0.02]])
        nets = (linear_net(w.copy()), linear_net(w.copy()))
        hard_threshold(nets, sched)
        for net in nets:
            np.testing.assert_array_equal(net.layers[0].w, [[0, 0.02]])
            np.testing.assert_array_equal(net.layers[0].mask, [[False, True]])

    def test_zero_threshold_changes_nothing(self):
        nets, *_ = tiny_reference_net(12)
        before = [l.w.copy() for net in nets for l in net.layers]
        hard_threshold(nets, ThresholdSchedule.from_weights(0, 0, 1e-3))
        for b, l in zip(before, [l for net in nets for l in net.layers]):
            np.testing.assert_array_equal(l.w, b)

    def test_biases_exempt_by_default(self):
        nets, *_ = tiny_reference_net(13)
        biases = [l.b.copy() for net in nets for l in net.layers]
        hard_threshold(nets, ThresholdSchedule(1e6, 1e6))
        assert sparsity(nets) == 1.0
        for b, l in zip(biases, [l for net in nets for l in net.layers]):
            np.testing.assert_array_equal(l.b, b)

    def test_negative_weights_rejected(self):
        with pytest.raises(ValueError):
            ThresholdSchedule.from_weights(-1, 0, 1e-3)


def small_task(seed=0):
    ds = generate_synthetic(SyntheticSpec(d=8, m=8, n=128, n_classes=4, map_kind="complex_linear", seed=seed))
    h = lift_channel(sample_channel(ChannelDims(1, 4, 4), seed))
    return ds, h


class TestTrain:
    def test_deterministic(self):
        ds, h = small_task()
        cfg = TrainConfig(eta=1e-2, epochs=3, seed=5)
        a, _ = train_neural(ds, h, 0.01, cfg)
        b, _ = train_neural(ds, h, 0.01, cfg)
        for la, lb in zip(a.precoder.layers + a.decoder.layers, b.precoder.layers + b.decoder.layers):
            np.testing.assert_array_equal(la.w, lb.w)
            np.testing.assert_array_equal(la.b, lb.b)

    @pytest.mark.parametrize("every", ["epoch", "step"])
    def test_masks_are_monotone(self, every):
        ds, h = small_task(1)
        cfg = TrainConfig(eta=1e-2, epochs=8, beta=20, gamma=20, seed=1, threshold_every=every)
        seen = []

        def record(rec, pre, dec):
            masks = [l.mask.copy() for l in pre.layers + dec.layers]
            for prev, cur in zip(seen[-1] if seen else masks, masks):
                assert not np.any(cur & ~prev)
            for l in pre.layers + dec.layers:
                assert np.all(l.w[~l.mask] == 0)
            seen.append(masks)

        x = ds.complex_tx().T
        y = ds.complex_rx().T
        _, _, history = train(x, y, h, 0.01, cfg, on_epoch=record)
        levels = [r["sparsity"] for r in history]
        assert all(b >= a for a, b in zip(levels, levels[1:]))
        assert levels[-1] > 0

    def test_linear_special_case_matches_closed_form(self):
        # scalar noiseless problem y = q x with unit-modulus x, so power normalization is inert
        rng = np.random.default_rng(14)
        x = np.exp(2j * np.pi * rng.uniform(size=(64, 1)))
        q, h = 0.7 - 1.2j, np.array([[0.9 + 0.3j]])
        y = q * x
        nets = (linear_net(np.array([[1.0 + 0j]])), linear_net(np.array([[0.5 + 0j]])))
        cfg = TrainConfig(eta=0.1, epochs=200, batch_size=16, seed=0)
        pre, dec, history = train(x, y, h, 0.0, cfg, nets=nets)
        neural_mse = loss(x, y, h, 0.0, (pre, dec), 0)
        f = np.array([[1.0 + 0j]])
        g = g_step(f, x.T, y.T, h, 0.0)
        linear_mse = objective(g, f, x.T, y.T, h, 0.0)
        assert abs(neural_mse - linear_mse) <= 1e-6

    def test_divergence_is_reported(self):
        ds, h = small_task(2)
        with pytest.raises(TrainingDivergedError):
            train_neural(ds, h, 0.01, TrainConfig(eta=1e4, epochs=50))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(eta=0)
        with pytest.raises(ValueError):
            TrainConfig(threshold_every="batch")

    def test_save_load_round_trip(self, tmp_path):
        ds, h = small_task(3)
        eq, _ = train_neural(ds, h, 0.01, TrainConfig(eta=1e-2, epochs=2, beta=30, gamma=30))
        dims = ChannelDims(1, 4, 4)
        save_neural(eq, dims, tmp_path)
        back, back_dims = load_neural(tmp_path)
        assert back_dims == dims
        for a, b in zip(eq.precoder.layers + eq.decoder.layers, back.precoder.layers + back.decoder.layers):
            np.testing.assert_array_equal(b.w, a.w.astype(np.complex64))
            np.testing.assert_array_equal(b.mask, a.mask)
            assert a.activation == b.activation
        assert back.precoder.alpha == eq.precoder.alpha

    def test_load_rejects_linear(self, tmp_path):
        (tmp_path / "model.json").write_text('{"kind": "linear"}')
        with pytest.raises(FormatError):
            load_neural(tmp_path)
