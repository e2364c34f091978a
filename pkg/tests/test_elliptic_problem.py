import math

import numpy as np
import pytest

from barron_flow.core.barron_space import BoundaryCondition, TrigExpansion, h1_norm, inner, l2_norm
from barron_flow.core.elliptic_problem import (
    EllipticProblem,
    apply_operator,
    constants,
    neuron_budget,
    relu_factor,
    residual,
    validate,
)
from barron_flow.core.errors import (
    DeclaredConstantError,
    DimensionMismatchError,
    EpsilonRangeError,
    FamilyConstraintError,
    ParityViolationError,
    PreconditionError,
)
from barron_flow.core.oracle_verify import TensorGL, galerkin_solve, operator_bound_audit
from barron_flow.core.problems import builtin_problem, random_expansion, random_problem

PI = math.pi
DIRICHLET = BoundaryCondition.DIRICHLET
NEUMANN = BoundaryCondition.NEUMANN


class TestEllipticProblem:
    def test_isotropic_constants(self, single_mode):
        assert single_mode.lambda_min == 1.0
        assert single_mode.lambda_max == 1.0

    def test_bc_from_string(self, single_mode):
        problem = single_mode.with_changes(bc="neumann", f=TrigExpansion.basis("c", (1,)))
        assert problem.bc is NEUMANN

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            EllipticProblem.isotropic(TrigExpansion.basis("s", (1,)), DIRICHLET, c=TrigExpansion.constant(2))

    def test_declared_constants_must_be_ordered(self, single_mode):
        with pytest.raises(PreconditionError):
            single_mode.with_changes(a_min=2.0)
        with pytest.raises(PreconditionError):
            single_mode.with_changes(c_min=0.0)

    def test_coefficient_matrix(self):
        problem = builtin_problem("anisotropic_d2")
        point = np.array([[0.25, 0.5]])
        matrix = problem.coefficient_matrix(point)[0]
        assert matrix[0, 1] == matrix[1, 0]
        assert matrix[0, 1] == pytest.approx(0.1 * math.sin(PI / 4))


class TestValidate:
    def test_identity_diffusion_passes(self, single_mode):
        report = validate(single_mode, samples=256)
        assert report.passed
        assert report.eig_min == pytest.approx(1.0)
        assert report.samples == 256
        assert report.diagonal_family == "cos"

    def test_reaction_bounds(self):
        c = TrigExpansion.from_terms(1, [("c", (0,), 1.0), ("c", (1,), 0.5)])
        problem = EllipticProblem.isotropic(TrigExpansion.basis("s", (1,)), DIRICHLET, c=c)
        problem = problem.with_changes(c_min=0.5, c_max=1.5)
        report = validate(problem, samples=4096)
        assert report.passed
        assert 0.5 <= report.c_min_seen < 0.51
        assert 1.49 < report.c_max_seen <= 1.5

    def test_cosine_source_rejected_under_dirichlet(self):
        problem = EllipticProblem.isotropic(TrigExpansion.basis("c", (1,)), DIRICHLET)
        with pytest.raises(FamilyConstraintError):
            validate(problem, samples=64)

    def test_sine_reaction_rejected(self, single_mode):
        with pytest.raises(FamilyConstraintError):
            validate(single_mode.with_changes(c=TrigExpansion.constant(1) + TrigExpansion.basis("s", (2,), 0.1)))

    def test_asymmetric_diffusion_rejected(self):
        problem = builtin_problem("anisotropic_d2")
        A = list(list(row) for row in problem.A)
        A[0][1] = TrigExpansion.basis("ss", (1, 1), 0.2)
        with pytest.raises(FamilyConstraintError):
            validate(problem.with_changes(A=A), samples=64)

    def test_off_diagonal_family(self):
        problem = builtin_problem("anisotropic_d2")
        A = list(list(row) for row in problem.A)
        A[0][1] = A[1][0] = TrigExpansion.basis("cc", (1, 1), 0.05)
        with pytest.raises(FamilyConstraintError):
            validate(problem.with_changes(A=A), samples=64)

    def test_corrupted_declaration_reports_point(self):
        problem = builtin_problem("variable_diffusion_d1").with_changes(a_min=0.9)
        with pytest.raises(DeclaredConstantError) as excinfo:
            validate(problem, samples=1024)
        point = excinfo.value.worst_point
        assert point is not None
        assert abs(point[0] - 0.5) < 0.05

    def test_non_strict_reports(self):
        problem = builtin_problem("variable_diffusion_d1").with_changes(a_min=0.9)
        report = validate(problem, samples=1024, strict=False)
        assert not report.passed
        assert report.violations

    def test_upper_bound_violations_report_points(self):
        problem = builtin_problem("variable_diffusion_d1").with_changes(a_max=1.2)
        report = validate(problem, samples=1024, strict=False)
        assert not report.passed
        assert report.eig_max > 1.2
        assert min(report.worst_eig_max_point[0], 1.0 - report.worst_eig_max_point[0]) < 0.05

        problem = builtin_problem("anisotropic_d2").with_changes(c_max=1.1)
        report = validate(problem, samples=1024, strict=False)
        x, y = report.worst_c_max_point
        assert report.c_max_seen > 1.1
        assert min(x + y, 2.0 - x - y) < 0.2

    def test_neumann_sine_diagonal_warns(self, caplog):
        a = TrigExpansion.basis("s", (1,), 1.0)
        problem = EllipticProblem(
            dim=1,
            bc=NEUMANN,
            A=((a,),),
            c=TrigExpansion.constant(1),
            f=TrigExpansion.basis("c", (1,)),
            a_min=1e-3,
            a_max=1.0,
            c_min=1.0,
            c_max=1.0,
        )
        report = validate(problem, samples=1024, strict=False)
        assert report.diagonal_family == "sin"
        assert report.warnings

    def test_deterministic(self):
        problem = builtin_problem("anisotropic_d2")
        first = validate(problem, samples=1024, seed=3, workers=1)
        second = validate(problem, samples=1024, seed=3, workers=4)
        assert first == second

    @pytest.mark.parametrize("bc", list(BoundaryCondition))
    @pytest.mark.parametrize("dim", [1, 2, 3])
    def test_random_problems_validate(self, rng, bc, dim):
        assert validate(random_problem(rng, dim, bc), samples=1024).passed


class TestConstants:
    def test_single_mode_ledger(self, single_mode):
        ledger = constants(single_mode, 1e-3)
        assert ledger.alpha_star == 0.5
        assert ledger.beta_star == pytest.approx(math.sqrt(3) / 2)
        assert ledger.ell_A == 1.0
        assert ledger.ell_c == 1.0
        assert ledger.ell_f == pytest.approx(2 * (1 + PI**2))
        assert ledger.p_d == pytest.approx((2 + PI) / (4 * PI) + 1.5)
        assert ledger.q_d == 388
        assert ledger.T >= 12

    def test_lambda_ratio_one_half(self, single_mode):
        problem = single_mode.with_changes(c=TrigExpansion.constant(1, 2.0), c_min=2.0, c_max=2.0)
        ledger = constants(problem, 1e-2)
        assert ledger.alpha_star == pytest.approx(1 / 8)
        assert ledger.beta_star == pytest.approx(math.sqrt(15) / 4)

    def test_relu_factor(self):
        assert relu_factor(1) == 388
        assert relu_factor(2) == 256 * 4 + 256 + 4

    def test_budget_ratio(self, single_mode):
        ledger = constants(single_mode, 1e-2)
        k_cos, k_relu = neuron_budget(ledger, 1e-2)
        assert k_cos > 10**6
        assert k_relu / k_cos == pytest.approx(388, rel=1e-6)

    def test_budget_decreases_with_eps(self, single_mode):
        assert constants(single_mode, 1e-1).neuron_budget_cos < constants(single_mode, 1e-2).neuron_budget_cos

    @pytest.mark.parametrize("eps", [0.0, -1.0, 2.0, 5.0])
    def test_eps_range(self, single_mode, eps):
        with pytest.raises(EpsilonRangeError):
            constants(single_mode, eps)

    def test_zero_source(self, zero_problem):
        ledger = constants(zero_problem, 1e-3)
        assert ledger.T == 0
        assert ledger.neuron_budget_cos == 0
        assert ledger.neuron_budget_relu == 0

    def test_huge_budget_stays_exact_integer(self):
        problem = builtin_problem("dirichlet_d3")
        ledger = constants(problem, 1e-6)
        assert isinstance(ledger.neuron_budget_relu, int)
        assert ledger.neuron_budget_relu > ledger.neuron_budget_cos


class TestApplyOperator:
    def test_single_mode(self, single_mode, exact_single_mode):
        image = apply_operator(single_mode, exact_single_mode)
        assert image.coefficient("s", (1,)) == pytest.approx(1 + PI**2, rel=1e-15)

    def test_variable_diffusion_pointwise(self, rng):
        problem = builtin_problem("variable_diffusion_d1")
        image = apply_operator(problem, TrigExpansion.basis("s", (1,)))
        x = rng.random(200)
        a = 1 + 0.5 * np.cos(2 * PI * x)
        expected = PI**2 * np.sin(2 * PI * x) * np.cos(PI * x) + a * PI**2 * np.sin(PI * x) + np.sin(PI * x)
        np.testing.assert_allclose(image.evaluate(x[:, None]), expected, atol=1e-12)

    def test_wrong_family_rejected(self, single_mode):
        with pytest.raises(ParityViolationError):
            apply_operator(single_mode, TrigExpansion.basis("c", (1,)))

    def test_stays_in_family(self, rng):
        for bc in BoundaryCondition:
            problem = random_problem(rng, 2, bc)
            parity = "ss" if bc is DIRICHLET else "cc"
            u = random_expansion(rng, 2, terms=4, parity=parity)
            assert apply_operator(problem, u).parities in ((parity,), ())

    def test_symmetric(self, rng):
        problem = random_problem(rng, 2, DIRICHLET)
        u = random_expansion(rng, 2, terms=4, parity="ss")
        v = random_expansion(rng, 2, terms=4, parity="ss")
        assert inner(apply_operator(problem, u), v) == pytest.approx(inner(u, apply_operator(problem, v)), rel=1e-12)

    def test_linear(self, rng):
        problem = random_problem(rng, 2, NEUMANN)
        u = random_expansion(rng, 2, terms=3, parity="cc")
        v = random_expansion(rng, 2, terms=3, parity="cc")
        combined = apply_operator(problem, 2.0 * u + v)
        separate = 2.0 * apply_operator(problem, u) + apply_operator(problem, v)
        assert l2_norm(combined - separate) <= 1e-12 * l2_norm(combined)

    def test_coercive(self, rng):
        problem = random_problem(rng, 2, DIRICHLET)
        u = random_expansion(rng, 2, terms=5, parity="ss")
        assert inner(apply_operator(problem, u), u) >= problem.lambda_min * h1_norm(u) ** 2 * (1 - 1e-12)


class TestResidual:
    def test_vanishes_at_solution(self, single_mode, exact_single_mode):
        assert h1_norm(residual(single_mode, exact_single_mode)) <= 1e-14

    def test_at_zero(self, single_mode):
        result = residual(single_mode, TrigExpansion.zero(1))
        assert result.coefficient("s", (1,)) == pytest.approx(-1.0, rel=1e-15)

    def test_bounded_by_oracle_distance(self):
        problem = builtin_problem("variable_diffusion_d1")
        oracle = galerkin_solve(problem, max_unknowns=2048)
        u = TrigExpansion.basis("s", (1,), 0.3)
        lhs = h1_norm(residual(problem, u))
        rhs = problem.lambda_max * (h1_norm(u - oracle.expansion) + oracle.accuracy) + 1e-12
        assert lhs <= rhs


class TestOperatorBound:
    def test_holds_on_fixture(self, rng):
        problem = builtin_problem("anisotropic_d2")
        u = random_expansion(rng, 2, terms=3, parity="ss")
        v = random_expansion(rng, 2, terms=3, parity="ss")
        bound = operator_bound_audit(problem, u, v, TensorGL(24, 2))
        assert bound.holds
        assert abs(bound.lhs) <= bound.rhs + 1e-8
