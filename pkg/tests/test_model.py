import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmpu.core import one_hot
from cmpu.model import (
    ARCH_LINEAR,
    ARCH_MLP,
    GradientBuffer,
    NumericalDivergenceError,
    SgdConfig,
    SoftmaxModel,
    forward,
    forward_batch,
    init_linear,
    init_mlp,
    load_model,
    loss_grad_wrt_logits,
    mae_loss,
    mae_loss_batch,
    save_model,
    sgd_step,
)


def _zero_linear(dim, num_pos, bias=None):
    k = num_pos + 1
    b = np.zeros(k) if bias is None else np.asarray(bias, dtype=float)
    return SoftmaxModel(ARCH_LINEAR, dim, num_pos, 0, (np.zeros((k, dim)), b), rng_seed=0)


class TestForward:
    def test_zero_model_is_uniform(self):
        model = _zero_linear(4, 2)
        p = forward(model, np.ones(4))
        np.testing.assert_allclose(p, np.full(3, 1.0 / 3.0), atol=0)

    def test_bias_softmax_matches_hand_oracle(self):
        # Independent oracle: softmax evaluated with scalar math.exp.
        model = _zero_linear(4, 2, bias=(10.0, 0.0, 0.0))
        p = forward(model, np.zeros(4))
        z = [10.0, 0.0, 0.0]
        denom = sum(math.exp(v) for v in z)
        expected = [math.exp(v) / denom for v in z]
        np.testing.assert_allclose(p, expected, rtol=1e-14)
        assert p[0] > 0.9999
        assert p[1] == pytest.approx(p[2])

    def test_dimension_mismatch(self):
        model = init_linear(4, 2, seed=0)
        with pytest.raises(ValueError, match="dimension mismatch"):
            forward(model, np.zeros(5))

    def test_deterministic(self):
        model = init_mlp(6, 2, hidden=5, seed=3)
        x = np.linspace(-1, 1, 6)
        np.testing.assert_array_equal(forward(model, x), forward(model, x))

    @given(st.integers(0, 2**31 - 1), st.integers(1, 4))
    @settings(max_examples=30)
    def test_output_on_simplex(self, seed, num_pos):
        rng = np.random.default_rng(seed)
        model = init_mlp(5, num_pos, hidden=4, seed=seed)
        x = rng.normal(size=5) * 10
        p = forward(model, x)
        assert np.all(p >= 0)
        assert abs(float(p.sum()) - 1.0) <= 1e-12


def _random_simplex(rng, k):
    v = rng.dirichlet(np.ones(k))
    return v


class TestMaeLoss:
    def test_identity_is_zero(self):
        y = one_hot(1, 3)
        assert mae_loss(y, y) == 0.0

    def test_uniform_hand_value(self):
        # (1/3) * (2/3 + 1/3 + 1/3) = 4/9
        p = np.full(3, 1.0 / 3.0)
        y = one_hot(0, 3)
        assert mae_loss(p, y) == pytest.approx(4.0 / 9.0, rel=1e-15)

    def test_bound_attained_exactly(self):
        p = np.array([0.0, 1.0, 0.0])
        y = one_hot(0, 3)
        assert mae_loss(p, y) == 2.0 / 3.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="length mismatch"):
            mae_loss(np.full(3, 1 / 3), one_hot(0, 4))

    def test_not_simplex_rejected(self):
        with pytest.raises(ValueError, match="simplex"):
            mae_loss(np.array([0.9, 0.9, 0.9]), one_hot(0, 3))

    @given(st.integers(0, 2**31 - 1), st.integers(1, 6))
    @settings(max_examples=200)
    def test_bounds_property(self, seed, num_pos):
        rng = np.random.default_rng(seed)
        k = num_pos + 1
        p = _random_simplex(rng, k)
        y = one_hot(int(rng.integers(k)), k)
        loss = mae_loss(p, y)
        assert 0.0 <= loss <= 2.0 / k

    def test_batch_matches_pointwise(self):
        rng = np.random.default_rng(7)
        probs = rng.dirichlet(np.ones(4), size=50)
        batch = mae_loss_batch(probs, 2)
        point = [mae_loss(row, one_hot(2, 4)) for row in probs]
        np.testing.assert_array_equal(batch, point)


def _fd_loss_grad(logits, y, step=1e-6):
    """Central finite differences of mae(softmax(z), y) wrt z."""

    def value(z):
        e = np.exp(z - z.max())
        p = e / e.sum()
        return float(np.abs(y - p).sum()) / z.size

    grad = np.zeros_like(logits)
    for j in range(logits.size):
        zp, zm = logits.copy(), logits.copy()
        zp[j] += step
        zm[j] -= step
        grad[j] = (value(zp) - value(zm)) / (2 * step)
    return grad


class TestLossGradWrtLogits:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(42)
        worst = 0.0
        for _ in range(100):
            k = int(rng.integers(2, 6))
            z = rng.normal(size=k) * 2.0
            y = np.zeros(k)
            y[rng.integers(k)] = 1.0
            e = np.exp(z - z.max())
            p = e / e.sum()
            if np.min(np.abs(p - y)) < 1e-8:  # keep clear of the |.| kink
                continue
            analytic = loss_grad_wrt_logits(p, y)
            fd = _fd_loss_grad(z, y)
            scale = max(np.abs(analytic).max(), np.abs(fd).max(), 1e-12)
            worst = max(worst, float(np.abs(analytic - fd).max() / scale))
        assert worst < 1e-5

    def test_sign_pattern_at_uniform(self):
        p = np.full(3, 1.0 / 3.0)
        y = one_hot(0, 3)
        g = loss_grad_wrt_logits(p, y)
        assert g[0] < 0  # raising the true-class logit lowers the loss
        assert g[1] > 0 and g[2] > 0

    def test_at_exact_prediction_uses_zero_subgradient(self):
        # p == y sits on every coordinate's kink; the convention gives 0.
        y = one_hot(0, 3)
        g = loss_grad_wrt_logits(y, y)
        np.testing.assert_array_equal(g, np.zeros(3))


class TestSgdStep:
    def test_zero_gradient_is_fixed_point(self):
        model = init_linear(3, 2, seed=1)
        cfg = SgdConfig(learning_rate=0.5, batch_size=1, epochs=1)
        out = sgd_step(model, GradientBuffer.zeros_like(model), cfg)
        for a, b in zip(out.params, model.params):
            np.testing.assert_array_equal(a, b)

    def test_scalar_arithmetic(self):
        model = SoftmaxModel(
            ARCH_LINEAR, 1, 1, 0, (np.array([[1.0], [0.0]]), np.zeros(2)), rng_seed=0
        )
        grads = GradientBuffer((np.array([[0.5], [0.0]]), np.zeros(2)))
        cfg = SgdConfig(learning_rate=0.1, batch_size=1, epochs=1)
        out = sgd_step(model, grads, cfg)
        assert out.params[0][0, 0] == pytest.approx(0.95, abs=0)

    def test_l2_decay(self):
        model = SoftmaxModel(
            ARCH_LINEAR, 1, 1, 0, (np.array([[1.0], [0.0]]), np.zeros(2)), rng_seed=0
        )
        cfg = SgdConfig(learning_rate=0.1, batch_size=1, epochs=1, l2=0.5)
        out = sgd_step(model, GradientBuffer.zeros_like(model), cfg)
        assert out.params[0][0, 0] == pytest.approx(1.0 - 0.1 * 0.5)

    def test_non_finite_gradient_raises(self):
        model = init_linear(3, 2, seed=1)
        grads = GradientBuffer.zeros_like(model)
        grads.arrays[0][0, 0] = np.nan
        with pytest.raises(NumericalDivergenceError, match="numerical divergence"):
            sgd_step(model, grads, SgdConfig(learning_rate=0.1, batch_size=1, epochs=1))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SgdConfig(learning_rate=0.0, batch_size=1, epochs=1)
        with pytest.raises(ValueError):
            SgdConfig(learning_rate=0.1, batch_size=0, epochs=1)
        with pytest.raises(ValueError):
            SgdConfig(learning_rate=0.1, batch_size=1, epochs=-1)
        # epochs == 0 is the documented no-op run
        SgdConfig(learning_rate=0.1, batch_size=1, epochs=0)


class TestSaveLoad:
    @pytest.mark.parametrize("arch", [ARCH_LINEAR, ARCH_MLP])
    def test_roundtrip_bit_exact(self, tmp_path, arch):
        if arch == ARCH_LINEAR:
            model = init_linear(7, 3, seed=11)
        else:
            model = init_mlp(7, 3, hidden=5, seed=11)
        path = tmp_path / "model.bin"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.arch == model.arch
        assert loaded.rng_seed == model.rng_seed
        assert (loaded.dim, loaded.hidden) == (model.dim, model.hidden)
        for a, b in zip(loaded.params, model.params):
            assert a.tobytes() == b.tobytes()

    def test_second_save_identical_bytes(self, tmp_path):
        model = init_mlp(4, 2, hidden=3, seed=5)
        p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
        save_model(model, p1)
        save_model(load_model(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOTAMODEL")
        with pytest.raises(ValueError, match="magic"):
            load_model(path)

    def test_truncated_file(self, tmp_path):
        model = init_linear(4, 2, seed=5)
        path = tmp_path / "model.bin"
        save_model(model, path)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(ValueError, match="truncated"):
            load_model(path)


class TestAnalyticGradVsFiniteDifferences:
    """Mean-loss gradients through both architectures vs central differences."""

    @pytest.mark.parametrize("arch", [ARCH_LINEAR, ARCH_MLP])
    def test_accumulate_mean_loss_grad(self, arch):
        from cmpu.model import accumulate_mean_loss_grad

        rng = np.random.default_rng(202)
        dim, num_pos = 4, 2
        if arch == ARCH_LINEAR:
            model = init_linear(dim, num_pos, seed=9)
        else:
            model = init_mlp(dim, num_pos, hidden=3, seed=9)
        x = rng.normal(size=(6, dim))
        label = 1
        buf = GradientBuffer.zeros_like(model)
        accumulate_mean_loss_grad(model, x, label, 1.0, buf)

        def risk_at(params):
            probe = SoftmaxModel(model.arch, dim, num_pos, model.hidden, params, 0)
            return float(mae_loss_batch(forward_batch(probe, x), label).mean())

        step = 1e-6
        for a_idx, analytic in enumerate(buf.arrays):
            flat = analytic.ravel()
            for j in range(flat.size):
                plus = [p.copy() for p in model.params]
                minus = [p.copy() for p in model.params]
                plus[a_idx].ravel()[j] += step
                minus[a_idx].ravel()[j] -= step
                fd = (risk_at(tuple(plus)) - risk_at(tuple(minus))) / (2 * step)
                assert flat[j] == pytest.approx(fd, abs=2e-9, rel=1e-5)
