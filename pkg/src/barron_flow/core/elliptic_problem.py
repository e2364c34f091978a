"""
Elliptic problem model: coefficients, assumption audit and derived constants.
Also applies the operator L u = -div(A grad u) + c u in coefficient space.
"""

import concurrent.futures
import dataclasses
import logging
import math
from dataclasses import dataclass, field
from decimal import MAX_EMAX, ROUND_CEILING, Decimal, localcontext
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import qmc

from .barron_space import (
    PARITY_TOLERANCE,
    BoundaryCondition,
    TrigExpansion,
    admissible_parity,
    axpy,
    barron_norm,
    derivative,
    hminus1_upper,
    inv_shifted_laplacian,
    multiply,
    project_admissible,
)
from .errors import (
    DeclaredConstantError,
    DimensionMismatchError,
    EpsilonRangeError,
    FamilyConstraintError,
    PreconditionError,
)
from .trig_core import mixed_parity, pure_cos, pure_sin

logger = logging.getLogger(__name__)

DEFAULT_AUDIT_SAMPLES = 10_000
_AUDIT_CHUNK = 2048
_AUDIT_RTOL = 1e-12


@dataclass(frozen=True)
class EllipticProblem:
    """-div(A grad u) + c u = f on the unit cube with homogeneous boundary data.

    The ellipticity constants are user declarations; :func:`validate` audits
    them on a sample but cannot certify them.
    """

    dim: int
    bc: BoundaryCondition
    A: Tuple[Tuple[TrigExpansion, ...], ...]
    c: TrigExpansion
    f: TrigExpansion
    a_min: float
    a_max: float
    c_min: float
    c_max: float
    name: str = "problem"

    def __post_init__(self):
        A = tuple(tuple(row) for row in self.A)
        object.__setattr__(self, "A", A)
        if isinstance(self.bc, str):
            object.__setattr__(self, "bc", BoundaryCondition.parse(self.bc))
        if len(A) != self.dim or any(len(row) != self.dim for row in A):
            raise DimensionMismatchError(f"A must be {self.dim}x{self.dim}")
        for label, expansion in self._coefficients():
            if expansion.dim != self.dim:
                raise DimensionMismatchError(
                    f"{label} has dimension {expansion.dim}, problem has {self.dim}"
                )
        if not (0 < self.a_min <= self.a_max):
            raise PreconditionError(f"need 0 < a_min <= a_max, got {self.a_min}, {self.a_max}")
        if not (0 < self.c_min <= self.c_max):
            raise PreconditionError(f"need 0 < c_min <= c_max, got {self.c_min}, {self.c_max}")

    def _coefficients(self):
        for i in range(self.dim):
            for j in range(self.dim):
                yield f"A[{i + 1}][{j + 1}]", self.A[i][j]
        yield "c", self.c
        yield "f", self.f

    @classmethod
    def isotropic(
        cls,
        f: TrigExpansion,
        bc: BoundaryCondition,
        c: Optional[TrigExpansion] = None,
        name: str = "problem",
    ) -> "EllipticProblem":
        """A = I, c = 1 (unless given) with exact constants 1."""
        dim = f.dim
        one = TrigExpansion.constant(dim)
        zero = TrigExpansion.zero(dim)
        A = tuple(tuple(one if i == j else zero for j in range(dim)) for i in range(dim))
        return cls(dim, bc, A, c if c is not None else one, f, 1.0, 1.0, 1.0, 1.0, name)

    def with_changes(self, **changes: Any) -> "EllipticProblem":
        return dataclasses.replace(self, **changes)

    @property
    def lambda_min(self) -> float:
        return min(self.a_min, self.c_min)

    @property
    def lambda_max(self) -> float:
        return max(self.a_max, self.c_max)

    def coefficient_matrix(self, points: np.ndarray) -> np.ndarray:
        """A(x) at every point, shape (n, d, d)."""
        points = np.atleast_2d(points)
        values = np.empty((points.shape[0], self.dim, self.dim))
        for i in range(self.dim):
            for j in range(i, self.dim):
                values[:, i, j] = self.A[i][j].evaluate(points)
                values[:, j, i] = values[:, i, j]
        return values


# Assumption audit


@dataclass
class AuditReport:
    """Outcome of :func:`validate`."""

    samples: int
    eig_min: float
    eig_max: float
    c_min_seen: float
    c_max_seen: float
    worst_eig_point: Tuple[float, ...]
    worst_c_point: Tuple[float, ...]
    worst_eig_max_point: Tuple[float, ...]
    worst_c_max_point: Tuple[float, ...]
    diagonal_family: str
    passed: bool = True
    violations: List[str] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


def _family_ok(expansion: TrigExpansion, allowed: Sequence[str]) -> bool:
    return all(parity in allowed for parity in expansion.parities)


def check_families(problem: EllipticProblem) -> Tuple[str, List[str]]:
    """Exact basis-family checks on every coefficient.

    Returns:
        (diagonal family label, warnings)

    Raises:
        FamilyConstraintError: On the first coefficient outside its family or
            an asymmetric A
    """
    d, bc = problem.dim, problem.bc
    warnings: List[str] = []
    sin_d, cos_d = pure_sin(d), pure_cos(d)

    for i in range(d):
        for j in range(i + 1, d):
            if problem.A[i][j] != problem.A[j][i]:
                raise FamilyConstraintError(f"A is not symmetric: A[{i + 1}][{j + 1}] != A[{j + 1}][{i + 1}]")
            mixed = mixed_parity(d, i, j)
            if not _family_ok(problem.A[i][j], [mixed]):
                raise FamilyConstraintError(
                    f"A[{i + 1}][{j + 1}] must lie in the mixed family {mixed!r}, "
                    f"found {list(problem.A[i][j].parities)}"
                )

    diagonal_family = "cos"
    for i in range(d):
        entry = problem.A[i][i]
        if _family_ok(entry, [cos_d]):
            continue
        if bc is BoundaryCondition.NEUMANN and _family_ok(entry, [sin_d]):
            diagonal_family = "sin"
            continue
        expected = "pure-Cos" if bc is BoundaryCondition.DIRICHLET else "pure-Sin or pure-Cos"
        raise FamilyConstraintError(
            f"A[{i + 1}][{i + 1}] must be {expected} for {bc.value} problems, "
            f"found {list(entry.parities)}"
        )
    if diagonal_family == "sin":
        warnings.append(
            "pure-Sin Neumann diagonal vanishes on faces of the cube and does not keep "
            "L u in the cosine family; the flow reports any parity leak as an error"
        )

    if not _family_ok(problem.c, [cos_d]):
        raise FamilyConstraintError(f"c must be pure-Cos, found {list(problem.c.parities)}")
    target = admissible_parity(bc, d)
    if not _family_ok(problem.f, [target]):
        kind = "pure-Sin" if bc is BoundaryCondition.DIRICHLET else "pure-Cos"
        raise FamilyConstraintError(
            f"f must be {kind} for {bc.value} problems, found {list(problem.f.parities)}"
        )
    return diagonal_family, warnings


class _ChunkAudit(NamedTuple):
    eig_min: float
    eig_min_at: np.ndarray
    eig_max: float
    eig_max_at: np.ndarray
    c_min: float
    c_min_at: np.ndarray
    c_max: float
    c_max_at: np.ndarray


def _audit_chunk(problem: EllipticProblem, points: np.ndarray) -> _ChunkAudit:
    eigenvalues = np.linalg.eigvalsh(problem.coefficient_matrix(points))
    lowest = eigenvalues[:, 0]
    largest = np.abs(eigenvalues).max(axis=1)
    c_values = problem.c.evaluate(points)
    i_lo, i_hi = int(lowest.argmin()), int(largest.argmax())
    j_lo, j_hi = int(c_values.argmin()), int(c_values.argmax())
    return _ChunkAudit(
        float(lowest[i_lo]), points[i_lo],
        float(largest[i_hi]), points[i_hi],
        float(c_values[j_lo]), points[j_lo],
        float(c_values[j_hi]), points[j_hi],
    )


def _below(value: float, bound: float) -> bool:
    return value < bound - _AUDIT_RTOL * max(1.0, abs(bound))


def validate(
    problem: EllipticProblem,
    samples: int = DEFAULT_AUDIT_SAMPLES,
    seed: int = 0,
    strict: bool = True,
    workers: Optional[int] = None,
) -> AuditReport:
    """Audit the problem against its declared assumptions.

    Family and symmetry constraints are checked exactly. Ellipticity bounds
    are audited at scrambled Sobol points in the open cube.

    Args:
        problem: Problem to audit
        samples: Minimum number of sample points (rounded up to a power of two)
        seed: Seed of the scrambled Sobol sequence
        strict: Raise on declared-constant violations instead of reporting them
        workers: Thread count for chunked evaluation

    Returns:
        The audit report

    Raises:
        FamilyConstraintError: On family or symmetry violations
        DeclaredConstantError: On declared-constant violations when strict
    """
    if samples < 1:
        raise PreconditionError(f"samples must be >= 1, got {samples}")
    diagonal_family, warnings = check_families(problem)

    sampler = qmc.Sobol(d=problem.dim, scramble=True, seed=seed)
    points = sampler.random_base2(m=max(0, math.ceil(math.log2(samples))))
    chunks = [points[start : start + _AUDIT_CHUNK] for start in range(0, points.shape[0], _AUDIT_CHUNK)]

    results: List[Optional[_ChunkAudit]] = [None] * len(chunks)
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as executor:
        future_to_index = {
            executor.submit(_audit_chunk, problem, chunk): index for index, chunk in enumerate(chunks)
        }
        for future in concurrent.futures.as_completed(future_to_index):
            results[future_to_index[future]] = future.result()

    eig_min = min(results, key=lambda r: r.eig_min)
    eig_max = max(results, key=lambda r: r.eig_max)
    c_min = min(results, key=lambda r: r.c_min)
    c_max = max(results, key=lambda r: r.c_max)

    violations = []
    worst: Dict[str, np.ndarray] = {}
    if _below(eig_min.eig_min, problem.a_min):
        violations.append(f"min eigenvalue of A {eig_min.eig_min:.6g} < declared a_min {problem.a_min:.6g}")
        worst.setdefault("point", eig_min.eig_min_at)
    if _below(problem.a_max, eig_max.eig_max):
        violations.append(f"max |eigenvalue| of A {eig_max.eig_max:.6g} > declared a_max {problem.a_max:.6g}")
        worst.setdefault("point", eig_max.eig_max_at)
    if _below(c_min.c_min, problem.c_min):
        violations.append(f"min c {c_min.c_min:.6g} < declared c_min {problem.c_min:.6g}")
        worst.setdefault("point", c_min.c_min_at)
    if _below(problem.c_max, c_max.c_max):
        violations.append(f"max c {c_max.c_max:.6g} > declared c_max {problem.c_max:.6g}")
        worst.setdefault("point", c_max.c_max_at)

    report = AuditReport(
        samples=int(points.shape[0]),
        eig_min=eig_min.eig_min,
        eig_max=eig_max.eig_max,
        c_min_seen=c_min.c_min,
        c_max_seen=c_max.c_max,
        worst_eig_point=tuple(float(x) for x in eig_min.eig_min_at),
        worst_c_point=tuple(float(x) for x in c_min.c_min_at),
        worst_eig_max_point=tuple(float(x) for x in eig_max.eig_max_at),
        worst_c_max_point=tuple(float(x) for x in c_max.c_max_at),
        diagonal_family=diagonal_family,
        passed=not violations,
        violations=violations,
        warnings=warnings,
    )
    for message in warnings:
        logger.warning("%s: %s", problem.name, message)
    if violations:
        logger.warning("%s: audit found %d violation(s)", problem.name, len(violations))
        if strict:
            raise DeclaredConstantError("; ".join(violations), worst["point"])
    else:
        logger.debug(
            "%s: audit passed on %d points (eig in [%.6g, %.6g], c in [%.6g, %.6g])",
            problem.name, report.samples, report.eig_min, report.eig_max, report.c_min_seen, report.c_max_seen,
        )
    return report


# Constants


def relu_factor(dim: int) -> int:
    """q(d) = 256 d^2 + 128 d + 4."""
    return 256 * dim * dim + 128 * dim + 4


class NeuronBudget(NamedTuple):
    k_cos: int
    k_relu: int


@dataclass
class ConstantLedger:
    """Every derived constant of a problem at a target accuracy eps."""

    dim: int
    bc: str
    eps: float
    ell_A: float
    ell_c: float
    ell_f: float
    f_zero_mode: float
    lambda_min: float
    lambda_max: float
    alpha_star: float
    beta_star: float
    p_d: float
    q_d: int
    hminus1_upper: float
    T: int
    neuron_budget_cos: int = 0
    neuron_budget_relu: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


def _check_eps(eps: float, lambda_min: float) -> None:
    upper = 2.0 / lambda_min
    if not (0.0 < eps < upper):
        raise EpsilonRangeError(eps, upper)


def constants(problem: EllipticProblem, eps: float) -> ConstantLedger:
    """Compute the full constant ledger.

    Args:
        problem: A validated problem
        eps: Target H1 accuracy, 0 < eps < 2/lambda_min

    Returns:
        The ledger, neuron budgets included

    Raises:
        EpsilonRangeError: If eps is out of range
    """
    d = problem.dim
    lambda_min, lambda_max = problem.lambda_min, problem.lambda_max
    _check_eps(eps, lambda_min)

    ell_A = 0.0
    for i in range(d):
        for j in range(i, d):
            ell_A = max(ell_A, barron_norm(problem.A[i][j], 1))
    ell_c = barron_norm(problem.c, 2)
    ell_f = barron_norm(problem.f, 0)
    f_zero_mode = abs(problem.f.coefficient(pure_cos(d), (0,) * d))

    alpha_star = lambda_min / (2.0 * lambda_max**2)
    beta_star = math.sqrt(1.0 - lambda_min**2 / (4.0 * lambda_max**2))
    p_d = (2.0 + math.pi) / (2.0 * math.pi) * alpha_star * ell_A * d * d + alpha_star * ell_c + 1.0

    bound = hminus1_upper(problem.f)
    if bound > 0.0:
        numerator = math.log(bound) + abs(math.log(eps * lambda_min / 2.0))
        T = max(0, math.ceil(numerator / abs(math.log(beta_star))))
    else:
        T = 0

    ledger = ConstantLedger(
        dim=d,
        bc=problem.bc.value,
        eps=eps,
        ell_A=ell_A,
        ell_c=ell_c,
        ell_f=ell_f,
        f_zero_mode=f_zero_mode,
        lambda_min=lambda_min,
        lambda_max=lambda_max,
        alpha_star=alpha_star,
        beta_star=beta_star,
        p_d=p_d,
        q_d=relu_factor(d),
        hminus1_upper=bound,
        T=T,
    )
    budget = neuron_budget(ledger, eps)
    ledger.neuron_budget_cos, ledger.neuron_budget_relu = budget
    logger.debug("%s: T=%d, p_d=%.6g, budgets %s", problem.name, T, p_d, budget)
    return ledger


def _ceil_exp(log_value: float) -> int:
    if log_value < 700.0:
        return math.ceil(math.exp(log_value))
    with localcontext() as ctx:
        ctx.prec = 40
        ctx.Emax = MAX_EMAX
        return int(Decimal(log_value).exp().to_integral_value(rounding=ROUND_CEILING))


def _log_geometric_sum(p: float, T: int) -> float:
    """log of (p^T - 1)/(p - 1) = sum_{t<T} p^t, for T >= 1."""
    if math.isclose(p, 1.0, rel_tol=0.0, abs_tol=1e-15):
        return math.log(T)
    log_p = math.log(p)
    return T * log_p + math.log(-math.expm1(-T * log_p)) - math.log(p - 1.0)


def log_budget(ledger: ConstantLedger, eps: float) -> float:
    """Natural log of the cosine-network budget before rounding (-inf if zero)."""
    if ledger.T == 0 or ledger.ell_f == 0.0:
        return -math.inf
    return 2.0 * (
        math.log(ledger.alpha_star * ledger.ell_f)
        + _log_geometric_sum(ledger.p_d, ledger.T)
        - math.log(eps)
    )


def neuron_budget(ledger: ConstantLedger, eps: float) -> NeuronBudget:
    """Network widths guaranteeing H1 accuracy eps.

    k_cos = ceil(alpha*^2 ell_f^2 (p^T - 1)^2 / (eps^2 (p - 1)^2)) and
    k_relu = ceil(q(d) * the same quantity).

    Raises:
        EpsilonRangeError: If eps is out of range
    """
    _check_eps(eps, ledger.lambda_min)
    log_k = log_budget(ledger, eps)
    if log_k == -math.inf:
        return NeuronBudget(0, 0)
    return NeuronBudget(_ceil_exp(log_k), _ceil_exp(log_k + math.log(ledger.q_d)))


# Operator


def apply_operator(
    problem: EllipticProblem, u: TrigExpansion, rel_tol: float = PARITY_TOLERANCE
) -> TrigExpansion:
    """L u = -sum_i d_i (sum_j A_ij d_j u) + c u, exactly in coefficient space.

    Raises:
        ParityViolationError: If u or the result leaves the admissible family
    """
    if u.dim != problem.dim:
        raise DimensionMismatchError(f"u has dimension {u.dim}, problem has {problem.dim}")
    u = project_admissible(u, problem.bc, rel_tol)
    d = problem.dim
    gradient = [derivative(u, j) for j in range(d)]
    result = multiply(problem.c, u)
    for i in range(d):
        flux = TrigExpansion.zero(d)
        for j in range(d):
            if problem.A[i][j].is_zero() or gradient[j].is_zero():
                continue
            flux = axpy(1.0, flux, 1.0, multiply(problem.A[i][j], gradient[j]))
        result = axpy(1.0, result, -1.0, derivative(flux, i))
    return project_admissible(result, problem.bc, rel_tol)


def residual(problem: EllipticProblem, u: TrigExpansion) -> TrigExpansion:
    """Preconditioned residual (I - Laplace)^{-1}(L u - f), the Sobolev gradient of the energy."""
    return inv_shifted_laplacian(axpy(1.0, apply_operator(problem, u), -1.0, problem.f), problem.bc)
