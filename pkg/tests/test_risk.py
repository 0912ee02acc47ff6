import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmpu.core import PuDataset, make_priors
from cmpu.model import (
    ARCH_LINEAR,
    GradientBuffer,
    NumericalDivergenceError,
    SgdConfig,
    SoftmaxModel,
    forward_batch,
    init_linear,
    init_mlp,
    mae_loss_batch,
)
from cmpu.risk import (
    Branch,
    CmpuConfig,
    EstimatorKind,
    RiskComponents,
    TRACE_COLUMNS,
    cmpu_risk,
    mpn_risk,
    mpu_naive_risk,
    mpu_nn_risk,
    risk_components,
    risk_gradient_with_report,
    risk_report,
    train,
    unlabeled_gap,
    weighted_positive_risk,
    write_trace_csv,
)


def _components_c1(rp_plus, rp_minus, ru):
    return RiskComponents((rp_plus,), (rp_minus,), ru)


def _zero_linear(dim, num_pos, bias=None):
    k = num_pos + 1
    b = np.zeros(k) if bias is None else np.asarray(bias, dtype=float)
    return SoftmaxModel(ARCH_LINEAR, dim, num_pos, 0, (np.zeros((k, dim)), b), rng_seed=0)


class TestRiskComponents:
    def test_uniform_model_gives_four_ninths(self):
        model = _zero_linear(3, 2)
        ds = PuDataset(
            positives=(np.random.default_rng(0).normal(size=(4, 3)),
                       np.random.default_rng(1).normal(size=(5, 3))),
            unlabeled=np.random.default_rng(2).normal(size=(6, 3)),
        )
        c = risk_components(model, ds)
        for v in (*c.rp_plus, *c.rp_minus, c.ru_minus):
            assert v == pytest.approx(4.0 / 9.0, rel=1e-14)

    def test_exact_prediction_gives_zero_plus_risk(self):
        # Huge bias toward class 1 underflows the softmax to one-hot(1).
        model = _zero_linear(3, 2, bias=(0.0, 2000.0, 0.0))
        ds = PuDataset(
            positives=(np.zeros((4, 3)), np.zeros((2, 3))),
            unlabeled=np.zeros((3, 3)),
        )
        c = risk_components(model, ds)
        assert c.rp_plus[0] == 0.0

    def test_single_point_sets_equal_pointwise_loss(self):
        model = init_linear(3, 1, seed=4)
        x = np.array([[0.3, -0.2, 1.0]])
        ds = PuDataset(positives=(x,), unlabeled=x)
        c = risk_components(model, ds)
        probs = forward_batch(model, x)
        assert c.rp_plus[0] == float(mae_loss_batch(probs, 1)[0])
        assert c.ru_minus == float(mae_loss_batch(probs, 0)[0])

    def test_class_count_mismatch(self):
        model = init_linear(3, 2, seed=0)
        ds = PuDataset(positives=(np.zeros((2, 3)),), unlabeled=np.zeros((2, 3)))
        with pytest.raises(ValueError, match="classes"):
            risk_components(model, ds)

    def test_component_bounds_validated(self):
        with pytest.raises(ValueError, match="outside"):
            RiskComponents((1.1,), (0.1,), 0.1)  # 1.1 > 2/(C+1) = 1


class TestMpnRisk:
    def test_all_zero(self):
        priors = make_priors((0.3, 0.2))
        c = RiskComponents((0.0, 0.0), (0.0, 0.0), 0.0)
        assert mpn_risk(c, priors, 0.0) == 0.0

    def test_hand_value(self):
        # 0.3*0.4 + 0.2*0.2 + 0.5*0.1 = 0.21
        priors = make_priors((0.3, 0.2))
        c = RiskComponents((0.4, 0.2), (0.0, 0.0), 0.0)
        assert mpn_risk(c, priors, 0.1) == pytest.approx(0.21, rel=1e-15)

    @given(st.floats(min_value=0.0, max_value=2.0 / 3.0))
    def test_convex_combination(self, x):
        priors = make_priors((0.3, 0.2))
        c = RiskComponents((x, x), (0.0, 0.0), 0.0)
        assert mpn_risk(c, priors, x) == pytest.approx(x, rel=1e-12, abs=1e-15)


class TestMpuNaive:
    def test_hand_value_positive_gap(self):
        priors = make_priors((0.3,))
        report = mpu_naive_risk(_components_c1(0.4, 0.2, 0.10), priors)
        assert report.total == pytest.approx(0.16, rel=1e-15)
        assert report.branch is Branch.NA
        assert report.tau is None

    def test_hand_value_negative_gap(self):
        priors = make_priors((0.3,))
        report = mpu_naive_risk(_components_c1(0.4, 0.2, 0.05), priors)
        assert report.total == pytest.approx(0.11, rel=1e-14)

    def test_all_zero(self):
        priors = make_priors((0.3,))
        assert mpu_naive_risk(_components_c1(0.0, 0.0, 0.0), priors).total == 0.0


class TestMpuNonNegative:
    def test_lower_branch(self):
        priors = make_priors((0.3,))
        report = mpu_nn_risk(_components_c1(0.4, 0.2, 0.05), priors)
        assert report.total == pytest.approx(0.12, rel=1e-15)
        assert report.branch is Branch.LOWER

    def test_upper_branch(self):
        priors = make_priors((0.3,))
        report = mpu_nn_risk(_components_c1(0.4, 0.2, 0.10), priors)
        assert report.total == pytest.approx(0.16, rel=1e-15)
        assert report.branch is Branch.UPPER

    def test_tie_goes_upper(self):
        priors = make_priors((0.5,))
        # gap = ru - 0.5*rp_minus = 0.1 - 0.1 = 0 exactly
        report = mpu_nn_risk(_components_c1(0.4, 0.2, 0.1), priors)
        assert unlabeled_gap(report.components, priors) == 0.0
        assert report.branch is Branch.UPPER


class TestCmpu:
    def test_lower_branch_hand_value(self):
        priors = make_priors((0.3,))
        report = cmpu_risk(_components_c1(0.4, 0.2, 0.10), priors, CmpuConfig(0.5))
        assert report.total == pytest.approx(0.18, rel=1e-15)
        assert report.branch is Branch.LOWER
        assert report.tau == pytest.approx(1.0 / 3.0, rel=1e-15)

    def test_upper_branch_hand_value(self):
        priors = make_priors((0.3,))
        report = cmpu_risk(_components_c1(0.4, 0.2, 0.30), priors, CmpuConfig(0.5))
        assert report.total == pytest.approx(0.36, rel=1e-15)
        assert report.branch is Branch.UPPER
        assert report.tau == pytest.approx(2.0, rel=1e-15)

    def test_small_lambda_matches_nn_when_gap_positive(self):
        priors = make_priors((0.3,))
        c = _components_c1(0.4, 0.2, 0.10)
        tiny = cmpu_risk(c, priors, CmpuConfig(1e-12)).total
        assert tiny == mpu_nn_risk(c, priors).total

    def test_zero_denominator(self):
        priors = make_priors((0.3,))
        report = cmpu_risk(_components_c1(0.0, 0.2, 0.01), priors, CmpuConfig(0.5))
        assert report.tau is None
        assert report.branch is Branch.UPPER
        # gap = 0.01 - 0.06 < 0, so the total falls back to max(0, gap) = 0
        assert report.total == 0.0

    def test_lambda_validation(self):
        with pytest.raises(ValueError, match="lambda"):
            CmpuConfig(0.0)


def _random_components(rng, num_classes):
    bound = 2.0 / (num_classes + 1)
    return RiskComponents(
        tuple(rng.uniform(0, bound, num_classes)),
        tuple(rng.uniform(0, bound, num_classes)),
        float(rng.uniform(0, bound)),
    )


def _random_priors(rng, num_classes):
    raw = rng.uniform(0.05, 1.0, num_classes)
    return make_priors(raw / raw.sum() * rng.uniform(0.2, 0.9))


class TestEstimatorAlgebra:
    """Ordering and branch identities over random component sets."""

    @given(st.integers(0, 2**31 - 1), st.integers(1, 5))
    @settings(max_examples=300)
    def test_ordering_and_branch(self, seed, num_classes):
        rng = np.random.default_rng(seed)
        c = _random_components(rng, num_classes)
        priors = _random_priors(rng, num_classes)
        lam = float(rng.uniform(0.01, 3.0))
        cmpu = cmpu_risk(c, priors, CmpuConfig(lam))
        nn = mpu_nn_risk(c, priors)
        naive = mpu_naive_risk(c, priors)
        wp = weighted_positive_risk(c, priors)
        # lower bound evaluated with the same float expression as the estimator
        assert cmpu.total >= wp + lam * wp
        assert wp + lam * wp >= 0.0
        assert cmpu.total >= nn.total >= naive.total
        if cmpu.tau is not None:
            assert (cmpu.branch is Branch.LOWER) == (cmpu.tau < lam)
        assert nn.total >= wp >= 0.0

    @given(
        st.floats(-10, 10), st.floats(-10, 10), st.floats(-10, 10), st.floats(-10, 10)
    )
    @settings(max_examples=300)
    def test_max_is_contractive(self, x1, x2, x3, x4):
        # |max{a,b} - max{c,d}| <= |a-c| + |b-d|; underpins the clamp's
        # Lipschitz behavior.
        assert abs(max(x1, x2) - max(x3, x4)) <= abs(x1 - x3) + abs(x2 - x4) + 1e-12


class TestRiskGradient:
    def _dataset(self, rng, dim=4, num_classes=2):
        return PuDataset(
            positives=tuple(rng.normal(size=(3 + i, dim)) for i in range(num_classes)),
            unlabeled=rng.normal(size=(7, dim)),
        )

    def test_cmpu_lower_branch_is_scaled_positive_gradient(self):
        rng = np.random.default_rng(0)
        ds = self._dataset(rng)
        priors = make_priors((0.3, 0.2))
        # Bias strongly toward the negative class: rp_plus large, ru small,
        # gap strongly negative -> LOWER branch.
        model = _zero_linear(4, 2, bias=(6.0, 0.0, 0.0))
        lam = 0.7
        grads, report = risk_gradient_with_report(
            model, ds, priors, EstimatorKind.CMPU, CmpuConfig(lam)
        )
        assert report.branch is Branch.LOWER
        from cmpu.model import accumulate_mean_loss_grad

        expected = GradientBuffer.zeros_like(model)
        for i, block in enumerate(ds.positives):
            accumulate_mean_loss_grad(model, block, i + 1, priors.pi[i], expected)
        for got, want in zip(grads.arrays, expected.arrays):
            np.testing.assert_allclose(got, (1.0 + lam) * want, rtol=1e-12, atol=1e-15)

    def test_cmpu_upper_branch_equals_naive_gradient(self):
        rng = np.random.default_rng(1)
        ds = self._dataset(rng)
        priors = make_priors((0.3, 0.2))
        model = init_linear(4, 2, seed=3)
        upper, report = risk_gradient_with_report(
            model, ds, priors, EstimatorKind.CMPU, CmpuConfig(0.2)
        )
        assert report.branch is Branch.UPPER
        naive, _ = risk_gradient_with_report(model, ds, priors, EstimatorKind.MPU_NAIVE)
        for a, b in zip(upper.arrays, naive.arrays):
            np.testing.assert_array_equal(a, b)

    @pytest.mark.parametrize("kind", list(EstimatorKind))
    @pytest.mark.parametrize("arch", ["linear", "mlp"])
    def test_matches_finite_differences(self, kind, arch):
        rng = np.random.default_rng(17)
        dim, num_classes = 3, 2
        ds = self._dataset(rng, dim=dim, num_classes=num_classes)
        priors = make_priors((0.3, 0.2))
        cfg = CmpuConfig(0.4)
        if arch == "linear":
            model = init_linear(dim, num_classes, seed=8)
        else:
            model = init_mlp(dim, num_classes, hidden=3, seed=8)

        grads, report = risk_gradient_with_report(model, ds, priors, kind, cfg)
        if kind in (EstimatorKind.MPU_NN, EstimatorKind.CMPU):
            gap = unlabeled_gap(report.components, priors)
            threshold = 0.0 if kind is EstimatorKind.MPU_NN else cfg.lam * weighted_positive_risk(
                report.components, priors
            )
            assert abs(gap - threshold) > 1e-4  # stay off the branch boundary

        def total_at(params):
            probe = SoftmaxModel(model.arch, dim, num_classes, model.hidden, params, 0)
            return risk_report(kind, risk_components(probe, ds), priors, cfg).total

        # Relative error on the scale of the gradient vector: per-component
        # ratios on near-zero entries only measure finite-difference noise.
        step = 1e-6
        worst_abs = 0.0
        scale = 1e-12
        for a_idx, analytic in enumerate(grads.arrays):
            flat = analytic.ravel()
            scale = max(scale, float(np.abs(flat).max()))
            for j in range(flat.size):
                plus = [p.copy() for p in model.params]
                minus = [p.copy() for p in model.params]
                plus[a_idx].ravel()[j] += step
                minus[a_idx].ravel()[j] -= step
                fd = (total_at(tuple(plus)) - total_at(tuple(minus))) / (2 * step)
                worst_abs = max(worst_abs, abs(flat[j] - fd))
        assert worst_abs / scale < 1e-5


class TestTrain:
    def _setup(self, seed=0, dim=3, num_classes=2):
        rng = np.random.default_rng(seed)
        ds = PuDataset(
            positives=tuple(rng.normal(size=(12, dim)) + 2 * np.eye(dim)[i]
                            for i in range(num_classes)),
            unlabeled=rng.normal(size=(30, dim)),
        )
        priors = make_priors((0.3, 0.2))
        model = init_linear(dim, num_classes, seed=1)
        return model, ds, priors

    def test_zero_epochs_is_noop(self):
        model, ds, priors = self._setup()
        sgd = SgdConfig(learning_rate=0.5, batch_size=8, epochs=0, seed=2)
        out, rows = train(model, ds, priors, EstimatorKind.CMPU, CmpuConfig(), sgd)
        assert rows == []
        for a, b in zip(out.params, model.params):
            np.testing.assert_array_equal(a, b)

    def test_deterministic_traces(self):
        model, ds, priors = self._setup()
        sgd = SgdConfig(learning_rate=0.5, batch_size=8, epochs=3, seed=2)
        _, rows1 = train(model, ds, priors, EstimatorKind.CMPU, CmpuConfig(), sgd)
        _, rows2 = train(model, ds, priors, EstimatorKind.CMPU, CmpuConfig(), sgd)
        assert rows1 == rows2

    def test_every_batch_stratified(self):
        model, ds, priors = self._setup()
        sgd = SgdConfig(learning_rate=0.1, batch_size=4, epochs=1, seed=0)
        _, rows = train(model, ds, priors, EstimatorKind.MPU_NAIVE, None, sgd)
        # One row per batch; components were computable in all of them,
        # which requires every class present in every minibatch.
        assert len(rows) == math.ceil((12 + 12 + 30) / 4)

    def test_training_reduces_mpn_risk_on_separable_data(self):
        model, ds, priors = self._setup()
        sgd = SgdConfig(learning_rate=1.0, batch_size=16, epochs=25, seed=2)
        out, rows = train(model, ds, priors, EstimatorKind.MPN, None, sgd)
        assert rows[-1].total < rows[0].total

    def test_divergence_aborts_with_diagnostic(self):
        model, ds, priors = self._setup()
        bad = SoftmaxModel(
            model.arch, model.dim, model.num_positive_classes, 0,
            (np.full_like(model.params[0], np.nan), model.params[1]), 0,
        )
        sgd = SgdConfig(learning_rate=0.5, batch_size=8, epochs=1, seed=2)
        with pytest.raises(NumericalDivergenceError):
            train(bad, ds, priors, EstimatorKind.MPU_NAIVE, None, sgd)

    def test_trace_csv_schema(self):
        model, ds, priors = self._setup()
        sgd = SgdConfig(learning_rate=0.5, batch_size=16, epochs=1, seed=2)
        sink = io.StringIO()
        _, rows = train(model, ds, priors, EstimatorKind.CMPU, CmpuConfig(), sgd,
                        trace_sink=sink)
        lines = sink.getvalue().strip().split("\n")
        assert lines[0] == ",".join(TRACE_COLUMNS)
        assert len(lines) == len(rows) + 1
        first = lines[1].split(",")
        assert first[2] == "cmpu"
        assert first[7] in ("UPPER", "LOWER")

    def test_write_trace_csv_file(self, tmp_path):
        model, ds, priors = self._setup()
        sgd = SgdConfig(learning_rate=0.5, batch_size=16, epochs=1, seed=2)
        _, rows = train(model, ds, priors, EstimatorKind.MPU_NN, None, sgd)
        path = tmp_path / "trace.csv"
        write_trace_csv(rows, path)
        content = path.read_text()
        assert content.startswith(",".join(TRACE_COLUMNS))

    def test_cmpu_close_to_mpn_oracle_on_separable_data(self):
        """CMPU from PU data lands within 5 accuracy points of the
        supervised oracle trained with true negatives."""
        from cmpu.synthgen import default_mixture_spec, sample_pu_dataset

        spec = default_mixture_spec()
        rng_labels = np.random.default_rng(99)
        ds, _ = sample_pu_dataset(spec, n_p=(120, 80), n_u=600, seed=5)
        # Oracle dataset: positives by true label, pool holds true negatives.
        pool, labels = _big_sample(spec, 2000, seed=6)
        oracle_ds = PuDataset(
            positives=tuple(pool[labels == i] for i in (1, 2)),
            unlabeled=pool[labels == 0],
        )
        test_x, test_y = _big_sample(spec, 4000, seed=7)
        sgd = SgdConfig(learning_rate=2.0, batch_size=64, epochs=20, seed=3)
        model0 = init_linear(spec.dim, 2, seed=11)
        cmpu_model, _ = train(model0, ds, spec.priors, EstimatorKind.CMPU,
                              CmpuConfig(0.2), sgd)
        mpn_model, _ = train(model0, oracle_ds, spec.priors, EstimatorKind.MPN,
                             None, sgd)

        def accuracy(m):
            pred = forward_batch(m, test_x).argmax(axis=1)
            return float((pred == test_y).mean())

        assert accuracy(cmpu_model) >= accuracy(mpn_model) - 0.05


def _big_sample(spec, n, seed):
    from cmpu.synthgen import sample_marginal

    return sample_marginal(spec, n, seed=seed)
