import math

import numpy as np
import pytest

from barron_flow.core.barron_space import TrigExpansion, barron_norm, e_norm_upper, h1_norm
from barron_flow.core.errors import (
    DimensionMismatchError,
    EmptyMeasureError,
    NoStationaryPointError,
    PreconditionError,
)
from barron_flow.core.net_extract import (
    Activation,
    Normalization,
    Profile1D,
    TwoLayerNet,
    best_of_draws,
    build_measure,
    build_relu_net,
    cosine_h1_norm,
    default_pieces,
    eval_net,
    expected_relu_error_bound,
    grad_net,
    h1_net_error,
    measure_expectation,
    relu_box_audit,
    relu_interp_1d,
    sample_cosine_net,
)
from barron_flow.core.oracle_verify import TensorGL
from barron_flow.core.problems import builtin_problem, random_expansion, relu_rate_targets, sampling_targets

PI = math.pi
SINE_PROFILE = Profile1D(PI, -PI / 2, 1.0)


def _log_slope(widths, errors):
    return np.polyfit(np.log(widths), np.log(errors), 1)[0]


class TestTwoLayerNet:
    def test_cosine_value_and_gradient(self):
        net = TwoLayerNet(Activation.COSINE, [2.0], [[PI]], [0.0])
        assert eval_net(net, [0.0]) == pytest.approx(2.0)
        np.testing.assert_allclose(grad_net(net, [0.5]), [-2 * PI])

    def test_relu_value_and_gradient(self):
        net = TwoLayerNet(Activation.RELU, [1.0, -1.0], [[1.0], [1.0]], [0.0, -0.5], 0.25, Normalization.SUM)
        assert eval_net(net, [0.75]) == pytest.approx(0.75)
        assert eval_net(net, [0.25]) == pytest.approx(0.5)
        np.testing.assert_allclose(grad_net(net, np.array([[0.25], [0.75]])), [[1.0], [0.0]])

    def test_mean_normalization(self):
        net = TwoLayerNet(Activation.COSINE, [1.0, 3.0], [[0.0], [0.0]], [0.0, 0.0])
        assert net.scale == 0.5
        assert eval_net(net, [0.3]) == pytest.approx(2.0)

    def test_gradient_by_finite_differences(self, rng):
        net = TwoLayerNet(Activation.COSINE, rng.standard_normal(5), rng.standard_normal((5, 2)), rng.standard_normal(5))
        x = rng.random((20, 2))
        h = 1e-6
        for i in range(2):
            step = np.zeros(2)
            step[i] = h
            numeric = (eval_net(net, x + step) - eval_net(net, x - step)) / (2 * h)
            np.testing.assert_allclose(grad_net(net, x)[:, i], numeric, atol=1e-7)

    def test_inconsistent_shapes(self):
        with pytest.raises(PreconditionError):
            TwoLayerNet(Activation.RELU, [1.0, 2.0], [[1.0]], [0.0])

    def test_dimension_mismatch(self):
        net = TwoLayerNet(Activation.COSINE, [1.0], [[1.0, 0.0]], [0.0])
        with pytest.raises(DimensionMismatchError):
            eval_net(net, [0.5])


class TestSamplingMeasure:
    def test_sine_mode(self):
        measure = build_measure(TrigExpansion.basis("s", (1,)))
        np.testing.assert_array_equal(measure.modes, [[-1], [1]])
        np.testing.assert_allclose(measure.phases, [PI / 2, -PI / 2])
        np.testing.assert_allclose(measure.weights, [0.5, 0.5])
        assert measure.amplitude == pytest.approx(1.0)

    def test_constant(self):
        measure = build_measure(TrigExpansion.constant(2, -3.0))
        assert measure.size == 1
        assert measure.amplitude == pytest.approx(3.0)
        assert abs(measure.phases[0]) == pytest.approx(PI)

    def test_zero_expansion_is_empty(self):
        assert build_measure(TrigExpansion.zero(3)).is_empty()

    def test_expectation_reproduces_expansion(self, rng):
        for dim in (1, 2, 3):
            g = random_expansion(rng, dim, terms=6, max_freq=3)
            x = rng.random((100, dim))
            np.testing.assert_allclose(measure_expectation(build_measure(g), x), g.evaluate(x), atol=1e-12)

    def test_amplitude_bounded_by_norm(self, rng):
        for _ in range(20):
            g = random_expansion(rng, 2, terms=5, parity="ss")
            assert build_measure(g).amplitude <= barron_norm(g, 0) * (1 + 1e-12)


class TestCosineSampling:
    def test_empty_measure(self):
        with pytest.raises(EmptyMeasureError):
            sample_cosine_net(build_measure(TrigExpansion.zero(1)), 4, seed=0)

    def test_width_must_be_positive(self):
        with pytest.raises(PreconditionError):
            sample_cosine_net(build_measure(TrigExpansion.basis("s", (1,))), 0, seed=0)

    def test_single_function_atoms_are_exact(self):
        g = TrigExpansion.basis("s", (1,))
        net = sample_cosine_net(build_measure(g), 3, seed=7)
        assert h1_net_error(net, g).value <= 1e-12

    def test_cosine_mode_with_one_neuron(self):
        g = TrigExpansion.basis("c", (1,))
        net = sample_cosine_net(build_measure(g), 1, seed=1)
        assert h1_net_error(net, g).value <= 1e-12

    def test_reproducible(self):
        measure = build_measure(builtin_problem("anisotropic_d2").f)
        assert sample_cosine_net(measure, 8, seed=3, trial=2) == sample_cosine_net(measure, 8, seed=3, trial=2)
        assert sample_cosine_net(measure, 8, seed=3, trial=2) != sample_cosine_net(measure, 8, seed=3, trial=1)

    @pytest.mark.parametrize("name", list(sampling_targets()))
    def test_mean_squared_error_and_rate(self, name):
        g = sampling_targets()[name]
        measure = build_measure(g)
        widths = [4, 16, 64, 256]
        bound = (1 + 3 / math.sqrt(200)) * e_norm_upper(g, 2) ** 2
        means = []
        for k in widths:
            squared = [h1_net_error(sample_cosine_net(measure, k, seed=s), g).value ** 2 for s in range(200)]
            means.append(np.mean(squared))
            assert means[-1] <= bound / k
        assert _log_slope(widths, np.sqrt(means)) == pytest.approx(-0.5, abs=0.1)


class TestBestOfDraws:
    def test_single_trial_matches_sample(self):
        g = builtin_problem("anisotropic_d2").f
        selection = best_of_draws(g, 8, trials=1, seed=5)
        assert selection.net == sample_cosine_net(build_measure(g), 8, seed=5, trial=0)
        assert selection.best_trial == 0

    def test_best_is_minimum(self):
        g = builtin_problem("neumann_d2").f
        selection = best_of_draws(g, 8, trials=6, seed=0, workers=2)
        assert len(selection.errors) == 6
        assert selection.errors[selection.best_trial] == min(selection.errors)
        assert min(selection.errors) <= np.mean(selection.errors)

    def test_independent_of_workers(self):
        g = builtin_problem("anisotropic_d2").f
        assert best_of_draws(g, 8, 5, seed=2, workers=1).errors == best_of_draws(g, 8, 5, seed=2, workers=4).errors

    def test_trials_must_be_positive(self):
        with pytest.raises(PreconditionError):
            best_of_draws(TrigExpansion.basis("s", (1,)), 4, 0, seed=0)


class TestReluInterpolation:
    def test_stationary_point_nearest_zero(self):
        interpolant = relu_interp_1d(SINE_PROFILE, 8, 1)
        assert interpolant.stationary == pytest.approx(-0.5)
        assert interpolant.knots[8] == pytest.approx(-0.5)
        assert interpolant.knots.size == 17

    def test_matches_profile_at_knots(self):
        interpolant = relu_interp_1d(SINE_PROFILE, 8, 1)
        np.testing.assert_allclose(
            interpolant.evaluate(interpolant.knots), SINE_PROFILE.value(interpolant.knots), atol=1e-12
        )

    @pytest.mark.parametrize("m", [4, 8, 16, 32])
    def test_error_bound(self, m):
        assert relu_interp_1d(SINE_PROFILE, m, 1).h1_error(SINE_PROFILE) <= math.sqrt(10) * PI**2 / m

    def test_first_order_convergence(self):
        errors = [relu_interp_1d(SINE_PROFILE, m, 1).h1_error(SINE_PROFILE) for m in (4, 8, 16, 32)]
        for coarse, fine in zip(errors, errors[1:]):
            assert 1.7 <= coarse / fine <= 2.3

    def test_coefficient_boxes(self):
        d = 2
        interpolant = relu_interp_1d(SINE_PROFILE, 10, d)
        assert np.all(np.abs(interpolant.biases) <= math.sqrt(d) * (1 + 1e-15))
        assert np.all(np.abs(interpolant.signs) == 1.0)
        assert np.abs(interpolant.outer).sum() <= 8 * math.sqrt(d) * SINE_PROFILE.bound()
        assert np.all(np.abs(interpolant.outer) <= 4 * math.sqrt(d) * SINE_PROFILE.bound() / 10)

    def test_constant_profile(self):
        interpolant = relu_interp_1d(Profile1D(0.0, PI, 2.0), 4, 1)
        assert interpolant.outer.size == 0
        assert interpolant.constant == pytest.approx(-2.0)

    def test_no_stationary_point(self):
        with pytest.raises(NoStationaryPointError):
            relu_interp_1d(Profile1D(0.1, PI / 2, 1.0), 4, 1)


class TestReluNet:
    def test_default_pieces(self):
        assert default_pieces(1) == 1
        assert default_pieces(10) == 4
        assert default_pieces(16) == 4

    def test_constant_expansion(self):
        net = build_relu_net(TrigExpansion.constant(2, 2.5), 8)
        assert net.width == 0
        assert net.offset == pytest.approx(2.5)
        assert eval_net(net, [0.3, 0.7]) == pytest.approx(2.5)

    def test_boxes_on_random_expansions(self, rng):
        for trial in range(50):
            dim = int(rng.integers(1, 4))
            g = random_expansion(rng, dim, terms=4, max_freq=3)
            net = build_relu_net(g, 16, seed=0, trial=trial)
            assert net.activation is Activation.RELU
            assert relu_box_audit(net, barron_norm(g, 2, strict=False)).holds

    def test_reproducible(self):
        g = builtin_problem("anisotropic_d2").f
        assert build_relu_net(g, 32, seed=4, trial=1) == build_relu_net(g, 32, seed=4, trial=1)

    def test_error_within_expected_bound(self):
        g = TrigExpansion.basis("s", (1,))
        net = build_relu_net(g, 64, seed=0)
        assert h1_net_error(net, g).value <= expected_relu_error_bound(g, 64)

    @pytest.mark.slow
    @pytest.mark.parametrize("name", list(relu_rate_targets()))
    def test_rate(self, name):
        g = relu_rate_targets()[name]
        widths = [16, 64, 256, 1024]
        means = [
            np.mean([h1_net_error(build_relu_net(g, k, m=math.ceil(math.sqrt(k)), seed=s), g).value for s in range(20)])
            for k in widths
        ]
        assert -0.65 <= _log_slope(widths, means) <= -0.35


class TestH1NetError:
    def test_constant_net(self, single_mode_h1):
        net = TwoLayerNet(Activation.RELU, np.zeros(0), np.zeros((0, 1)), np.zeros(0), 0.0, Normalization.SUM)
        assert h1_net_error(net, TrigExpansion.basis("s", (1,))).value == pytest.approx(single_mode_h1)

    def test_cosine_closed_form_matches_quadrature(self, rng):
        for _ in range(5):
            g = random_expansion(rng, 2, terms=4, max_freq=3)
            net = TwoLayerNet(
                Activation.COSINE, rng.standard_normal(6), 4 * rng.standard_normal((6, 2)), rng.uniform(-PI, PI, 6)
            )
            closed = h1_net_error(net, g).value
            numeric = h1_net_error(net, g, scheme=TensorGL(24, 2)).value
            assert closed == pytest.approx(numeric, abs=1e-8)

    def test_closed_form_norm_of_expansion(self, rng):
        g = random_expansion(rng, 2, terms=5, max_freq=3)
        measure = build_measure(g)
        assert cosine_h1_norm(measure.magnitudes, measure.frequencies, measure.phases) == pytest.approx(
            h1_norm(g), rel=1e-12
        )

    def test_relu_1d_matches_panel_aligned_quadrature(self):
        # kinks at 1/4 and 1/2 sit on panel boundaries of the 4-panel rule
        g = TrigExpansion.basis("s", (1,))
        net = TwoLayerNet(Activation.RELU, [1.0, -2.0], [[1.0], [1.0]], [-0.25, -0.5], 0.1, Normalization.SUM)
        exact = h1_net_error(net, g).value
        numeric = h1_net_error(net, g, scheme=TensorGL(16, 4)).value
        assert exact == pytest.approx(numeric, rel=1e-10)

    def test_dimension_mismatch(self):
        net = TwoLayerNet(Activation.COSINE, [1.0], [[1.0]], [0.0])
        with pytest.raises(DimensionMismatchError):
            h1_net_error(net, TrigExpansion.basis("ss", (1, 1)))
