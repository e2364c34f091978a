import math

import numpy as np
import pytest

from barron_flow.core.errors import DimensionMismatchError, FrequencyOverflowError, PreconditionError
from barron_flow.core.oracle_verify import TensorGL, quadrature
from barron_flow.core.trig_core import (
    INT32_MAX,
    eval_basis,
    fold_signed,
    l2_basis_norm_sq,
    mixed_parity,
    product_rule,
    pure_cos,
    pure_sin,
    validate_index,
)


class TestEvalBasis:
    def test_sine_at_midpoint(self):
        assert eval_basis("s", (1,), 0.5) == pytest.approx(1.0, abs=1e-15)

    def test_zero_cosine_is_one(self, rng):
        np.testing.assert_allclose(eval_basis("cc", (0, 0), rng.random((10, 2))), 1.0)

    def test_tensor_product(self):
        assert eval_basis("ss", (1, 2), (0.25, 0.25)) == pytest.approx(math.sqrt(2.0) / 2.0, abs=1e-15)

    def test_batch_shape(self, rng):
        assert eval_basis("sc", (2, 3), rng.random((7, 2))).shape == (7,)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            eval_basis("ss", (1, 1), [0.5])
        with pytest.raises(DimensionMismatchError):
            eval_basis("ss", (1,), [0.5, 0.5])


class TestFoldSigned:
    def test_sine_is_odd(self):
        assert fold_signed("s", (-2,)) == ((2,), -1)

    def test_cosine_is_even(self):
        assert fold_signed("cc", (-1, 3)) == ((1, 3), 1)

    def test_zero_sine_frequency_vanishes(self):
        assert fold_signed("ss", (0, 1)) is None

    def test_idempotent_on_canonical(self, rng):
        for _ in range(50):
            parity = "".join(rng.choice(["s", "c"], size=3))
            k = tuple(int(v) for v in rng.integers(1, 6, size=3))
            assert fold_signed(parity, k) == (k, 1)

    def test_sign_matches_signed_evaluation(self, rng):
        points = rng.random((100, 3))
        for _ in range(20):
            parity = "".join(rng.choice(["s", "c"], size=3))
            v = rng.integers(-4, 5, size=3)
            folded = fold_signed(parity, v)
            theta = np.pi * points * v
            direct = np.where(np.array(list(parity)) == "s", np.sin(theta), np.cos(theta)).prod(axis=1)
            if folded is None:
                np.testing.assert_allclose(direct, 0.0, atol=1e-12)
                continue
            k, sign = folded
            np.testing.assert_allclose(sign * eval_basis(parity, k, points), direct, atol=1e-12)


class TestL2BasisNorm:
    @pytest.mark.parametrize(
        "parity, k, expected",
        [("s", (1,), 0.5), ("cc", (0, 0), 1.0), ("ccc", (3, 0, 2), 0.25), ("sc", (2, 0), 0.5)],
    )
    def test_values(self, parity, k, expected):
        assert l2_basis_norm_sq(parity, k) == expected

    def test_zero_sine_frequency_rejected(self):
        with pytest.raises(PreconditionError):
            l2_basis_norm_sq("s", (0,))

    def test_orthogonality_by_quadrature(self, rng):
        scheme = TensorGL(points=24, panels=2)
        for _ in range(50):
            parity = "".join(rng.choice(["s", "c"], size=2))
            low = np.where(np.array(list(parity)) == "s", 1, 0)
            k = rng.integers(low, 5, size=2)
            k_other = rng.integers(low, 5, size=2)
            if np.array_equal(k, k_other):
                continue
            value = quadrature(
                lambda x: eval_basis(parity, k, x) * eval_basis(parity, k_other, x), 2, scheme
            ).value
            assert abs(value) <= 1e-10


class TestParities:
    def test_pure_families(self):
        assert pure_sin(3) == "sss"
        assert pure_cos(2) == "cc"

    def test_mixed_family_has_sine_at_pair(self):
        assert mixed_parity(3, 0, 2) == "scs"
        assert mixed_parity(2, 1, 0) == "ss"

    def test_mixed_family_needs_two_coordinates(self):
        with pytest.raises(PreconditionError):
            mixed_parity(3, 1, 1)

    def test_product_rule(self):
        result, plus, minus = product_rule("sc", "cs")
        assert result == "ss"
        np.testing.assert_array_equal(plus, [0.5, 0.5])
        np.testing.assert_array_equal(minus, [0.5, -0.5])
        assert product_rule("ss", "ss")[0] == "cc"


class TestValidateIndex:
    def test_negative_entries(self):
        with pytest.raises(PreconditionError):
            validate_index((1, -1))

    def test_frequency_range(self):
        assert validate_index((INT32_MAX,)) == (INT32_MAX,)
        with pytest.raises(FrequencyOverflowError):
            validate_index((INT32_MAX + 1,))
