import math

import numpy as np
import pytest

from barron_flow.core.barron_space import (
    BoundaryCondition,
    TrigExpansion,
    axpy,
    barron_norm,
    derivative,
    e_norm_upper,
    h1_norm,
    hminus1_upper,
    inner,
    integrate,
    inv_shifted_laplacian,
    l2_norm,
    multiply,
    prune,
    shifted_laplacian,
)
from barron_flow.core.errors import (
    DimensionMismatchError,
    FrequencyOverflowError,
    ParityViolationError,
    PreconditionError,
)
from barron_flow.core.problems import random_expansion
from barron_flow.core.trig_core import INT32_MAX, pure_cos, pure_sin

PI = math.pi


def S(*k, a=1.0):
    return TrigExpansion.basis("s" * len(k), k, a)


def C(*k, a=1.0):
    return TrigExpansion.basis("c" * len(k), k, a)


class TestTrigExpansion:
    def test_zero_coefficients_are_dropped(self):
        g = TrigExpansion.from_terms(1, [("s", (1,), 1.0), ("s", (2,), 0.0)])
        assert g.support_size == 1

    def test_vanishing_sine_terms_are_dropped(self):
        g = TrigExpansion.from_terms(2, [("sc", (0, 1), 3.0), ("cc", (0, 0), 1.0)])
        assert g.parities == ("cc",)

    def test_duplicates_add_up(self):
        g = TrigExpansion.from_terms(1, [("c", (2,), 1.0), ("c", (2,), 0.5)])
        assert g.coefficient("c", (2,)) == 1.5

    def test_evaluate(self, rng):
        g = S(1, 2, a=2.0) + TrigExpansion.from_terms(2, [("cs", (1, 1), -0.5)])
        x = rng.random((20, 2))
        expected = 2 * np.sin(PI * x[:, 0]) * np.sin(2 * PI * x[:, 1]) - 0.5 * np.cos(PI * x[:, 0]) * np.sin(
            PI * x[:, 1]
        )
        np.testing.assert_allclose(g.evaluate(x), expected, atol=1e-14)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            axpy(1.0, S(1), 1.0, S(1, 1))


class TestBarronNorm:
    def test_single_term(self):
        assert barron_norm(S(1), 2) == pytest.approx(1 + PI**2, rel=1e-15)

    @pytest.mark.parametrize("n", [0, 0.5, 1, 2, 3])
    def test_zero_frequency_weight_is_one(self, n):
        assert barron_norm(C(0, 0), n) == 1.0

    def test_two_terms(self):
        g = S(1, 1, a=2.0) + S(2, 1, a=3.0)
        expected = 2 * (1 + PI * math.sqrt(2)) + 3 * (1 + PI * math.sqrt(5))
        assert barron_norm(g, 1) == pytest.approx(expected, rel=1e-14)

    def test_zero_expansion(self):
        assert barron_norm(TrigExpansion.zero(3), 2) == 0.0

    def test_mixed_family_rejected(self):
        with pytest.raises(PreconditionError):
            barron_norm(S(1) + C(1), 1)
        assert barron_norm(S(1) + C(1), 0, strict=False) == 4.0

    def test_negative_weight_rejected(self):
        with pytest.raises(PreconditionError):
            barron_norm(S(1), -1)

    def test_monotone_in_weight(self, rng):
        for _ in range(30):
            g = random_expansion(rng, int(rng.integers(1, 4)), terms=5, max_freq=4, parity=None)
            norms = [barron_norm(g, n, strict=False) for n in (0, 0.5, 1, 1.5, 2, 3)]
            assert all(a <= b * (1 + 1e-15) for a, b in zip(norms, norms[1:]))


class TestENormUpper:
    def test_values(self):
        assert e_norm_upper(S(1), 2) == pytest.approx(1 + PI**2)
        assert e_norm_upper(TrigExpansion.zero(1), 2) == 0.0
        assert e_norm_upper(C(1, 1), 0) == 2.0


class TestAxpy:
    def test_cancellation(self):
        assert axpy(1.0, S(1), -1.0, S(1)).is_zero()

    def test_scaling(self):
        assert axpy(2.0, S(1), 0.0, S(5)) == S(1, a=2.0)

    def test_merge(self):
        result = axpy(1.0, S(1) + S(2), 1.0, S(2))
        assert result.to_dict() == {("s", (1,)): 1.0, ("s", (2,)): 2.0}


class TestMultiply:
    def test_sine_cosine(self):
        assert multiply(S(1), C(1)).to_dict() == {("s", (2,)): 0.5}

    def test_cosine_squared(self):
        assert multiply(C(1), C(1)).to_dict() == {("c", (0,)): 0.5, ("c", (2,)): 0.5}

    def test_two_dimensional_product(self):
        product = multiply(S(1, 1), C(1, 1))
        assert product.to_dict() == {("ss", (2, 2)): 0.25}
        axis = (np.arange(32) + 0.5) / 32
        grid = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1).reshape(-1, 2)
        np.testing.assert_allclose(
            product.evaluate(grid), S(1, 1).evaluate(grid) * C(1, 1).evaluate(grid), atol=1e-12
        )

    def test_pointwise_agreement(self, rng):
        for _ in range(10):
            dim = int(rng.integers(1, 4))
            g = random_expansion(rng, dim, terms=5, max_freq=4)
            h = random_expansion(rng, dim, terms=5, max_freq=4)
            x = rng.random((10_000, dim))
            np.testing.assert_allclose(multiply(g, h).evaluate(x), g.evaluate(x) * h.evaluate(x), rtol=0, atol=1e-10)

    @pytest.mark.parametrize("second", ["cos", "sin"])
    def test_product_norm_estimate(self, rng, second):
        for _ in range(100):
            dim = int(rng.integers(1, 4))
            g = random_expansion(rng, dim, terms=4, max_freq=4, parity=pure_sin(dim) if second == "cos" else pure_cos(dim))
            h = random_expansion(rng, dim, terms=4, max_freq=4, parity=pure_cos(dim))
            product = multiply(g, h)
            for n in (0, 1, 2):
                assert barron_norm(product, n) <= barron_norm(g, n) * barron_norm(h, n) * (1 + 1e-12)

    def test_frequency_overflow(self):
        with pytest.raises(FrequencyOverflowError):
            multiply(S(INT32_MAX), S(INT32_MAX))


class TestDerivative:
    def test_sine(self):
        assert derivative(S(1), 0).to_dict() == {("c", (1,)): pytest.approx(PI)}

    def test_constant(self):
        assert derivative(C(0, 0), 1).is_zero()

    def test_second_coordinate(self):
        assert derivative(S(1, 2), 1).to_dict() == {("sc", (1, 2)): pytest.approx(2 * PI)}

    def test_finite_differences(self, rng):
        g = random_expansion(rng, 2, terms=6, max_freq=3)
        x = 0.1 + 0.8 * rng.random((100, 2))
        h = 1e-6
        for i in range(2):
            step = np.zeros(2)
            step[i] = h
            numeric = (g.evaluate(x + step) - g.evaluate(x - step)) / (2 * h)
            np.testing.assert_allclose(derivative(g, i).evaluate(x), numeric, atol=1e-6 * max(1.0, g.max_abs_coefficient()) * 10)

    def test_coordinate_out_of_range(self):
        with pytest.raises(PreconditionError):
            derivative(S(1), 1)


class TestInverseShiftedLaplacian:
    def test_dirichlet_single_mode(self):
        result = inv_shifted_laplacian(S(1), BoundaryCondition.DIRICHLET)
        assert result.coefficient("s", (1,)) == pytest.approx(1 / (1 + PI**2), rel=1e-15)

    def test_neumann_constant(self):
        assert inv_shifted_laplacian(C(0), BoundaryCondition.NEUMANN) == C(0)

    def test_round_trip(self):
        g = C(2, 1, a=3.0)
        back = inv_shifted_laplacian(shifted_laplacian(g), BoundaryCondition.NEUMANN)
        assert back.coefficient("cc", (2, 1)) == pytest.approx(3.0, rel=1e-15)

    def test_round_trip_through_derivatives(self, rng):
        for bc in BoundaryCondition:
            for dim in (1, 2, 3):
                parity = pure_sin(dim) if bc is BoundaryCondition.DIRICHLET else pure_cos(dim)
                g = random_expansion(rng, dim, terms=5, max_freq=4, parity=parity)
                u = inv_shifted_laplacian(g, bc)
                forward = u
                for i in range(dim):
                    forward = forward - derivative(derivative(u, i), i)
                assert h1_norm(forward - g) <= 1e-12 * h1_norm(g)

    def test_wrong_parity_rejected(self):
        with pytest.raises(ParityViolationError):
            inv_shifted_laplacian(C(1), BoundaryCondition.DIRICHLET)

    def test_parity_dust_is_dropped(self):
        result = inv_shifted_laplacian(S(1) + C(1, a=1e-14), BoundaryCondition.DIRICHLET)
        assert result.parities == ("s",)

    def test_exact_scaling_across_dimensions(self, rng):
        for trial in range(200):
            dim = [1, 2, 3, 5][trial % 4]
            bc = BoundaryCondition.DIRICHLET if trial % 2 == 0 else BoundaryCondition.NEUMANN
            parity = pure_sin(dim) if bc is BoundaryCondition.DIRICHLET else pure_cos(dim)
            low = 1 if bc is BoundaryCondition.DIRICHLET else 0
            k = tuple(int(v) for v in rng.integers(low, 20, size=dim))
            a = float(rng.standard_normal())
            result = inv_shifted_laplacian(TrigExpansion.basis(parity, k, a), bc)
            expected = a / (1 + PI**2 * sum(v * v for v in k))
            assert result.coefficient(parity, k) == pytest.approx(expected, rel=1e-14)

    def test_weight_two_norm_identity(self, rng):
        for trial in range(50):
            dim = int(rng.integers(1, 4))
            if trial % 2 == 0:
                bc, parity = BoundaryCondition.DIRICHLET, pure_sin(dim)
            else:
                bc, parity = BoundaryCondition.NEUMANN, pure_cos(dim)
            g = random_expansion(rng, dim, terms=5, max_freq=4, parity=parity)
            zero_mode = abs(g.coefficient(pure_cos(dim), (0,) * dim))
            lhs = barron_norm(inv_shifted_laplacian(g, bc), 2)
            assert lhs == pytest.approx(0.5 * (barron_norm(g, 0) + zero_mode), rel=1e-12)

    def test_weight_two_norm_identity_is_half_for_sine(self, rng):
        g = random_expansion(rng, 2, terms=6, max_freq=5, parity="ss")
        lhs = barron_norm(inv_shifted_laplacian(g, BoundaryCondition.DIRICHLET), 2)
        assert lhs == pytest.approx(0.5 * barron_norm(g, 0), rel=1e-12)


class TestNorms:
    def test_l2_single_mode(self):
        assert l2_norm(S(1)) == pytest.approx(math.sqrt(0.5))

    def test_h1_single_mode(self):
        assert h1_norm(S(1)) == pytest.approx(math.sqrt((1 + PI**2) / 2))

    def test_h1_constant(self):
        assert h1_norm(C(0, 0, 0)) == 1.0

    def test_hminus1_upper(self):
        assert hminus1_upper(S(1)) == pytest.approx(math.sqrt(0.5) / PI)
        assert hminus1_upper(TrigExpansion.zero(2)) == 0.0
        target = S(1, 1, a=2 * PI * math.sqrt(2))
        assert hminus1_upper(target) == pytest.approx(1.0)

    def test_mixed_family_norms_use_exact_products(self, rng):
        g = random_expansion(rng, 2, terms=6, max_freq=3)
        assert l2_norm(g) ** 2 == pytest.approx(integrate(multiply(g, g)), rel=1e-12)
        assert inner(g, g) == pytest.approx(l2_norm(g) ** 2, rel=1e-12)


class TestPrune:
    def test_drops_small_terms(self):
        result = prune(S(1) + S(2, a=1e-18), 1e-15)
        assert result.expansion == S(1)
        assert result.removed_mass == pytest.approx(1e-18 * (1 + 4 * PI**2))

    def test_zero_tolerance_is_identity(self, rng):
        g = random_expansion(rng, 2, terms=4)
        assert prune(g, 0.0).expansion is g

    def test_removed_mass(self, rng):
        g = random_expansion(rng, 2, terms=10, max_freq=5, parity="cc")
        tol = float(np.median([abs(a) for _, _, a in g.terms()]))
        removed = sum(abs(a) * (1 + PI**2 * sum(v * v for v in k)) for _, k, a in g.terms() if abs(a) < tol)
        assert prune(g, tol).removed_mass == pytest.approx(removed, rel=1e-14)

    def test_negative_tolerance_rejected(self):
        with pytest.raises(PreconditionError):
            prune(S(1), -1.0)
