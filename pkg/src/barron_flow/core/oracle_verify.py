"""
Independent reference computations.
Spectral Galerkin and finite-difference solves, tensor/QMC quadrature, and the
Poincare-constant check for the unit cube.
"""

import concurrent.futures
import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import reduce
from typing import Callable, List, NamedTuple, Optional, Tuple, Union

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.stats import qmc

from .barron_space import (
    BoundaryCondition,
    TrigExpansion,
    admissible_parity,
    axpy,
    derivative,
    h1_norm,
)
from .elliptic_problem import EllipticProblem, apply_operator
from .errors import OracleError, PreconditionError, SolverConvergenceError
from .trig_core import l2_basis_norm_sq_block, pure_sin

logger = logging.getLogger(__name__)

DEFAULT_MAX_UNKNOWNS = 20_000
_EVAL_CHUNK = 65_536


# Quadrature


@dataclass(frozen=True)
class TensorGL:
    """Tensor Gauss-Legendre rule, optionally composite over equal panels per axis."""

    points: int = 16
    panels: int = 1


@dataclass(frozen=True)
class QMC:
    """Randomized scrambled-Sobol rule; the spread of replicates gives the error."""

    samples: int = 4096
    seed: int = 0
    replicates: int = 8


Scheme = Union[TensorGL, QMC]


class QuadratureResult(NamedTuple):
    value: float
    error: float


def default_scheme(dim: int, kinked: bool = False) -> Scheme:
    """Tensor rules up to d = 3 (composite for kinked integrands), QMC above."""
    if dim > 3:
        return QMC(samples=1 << 14, seed=0, replicates=8)
    if kinked:
        return {1: TensorGL(8, 256), 2: TensorGL(6, 24), 3: TensorGL(4, 10)}[dim]
    return {1: TensorGL(32, 2), 2: TensorGL(24, 2), 3: TensorGL(16, 1)}[dim]


def gauss_legendre_nodes(points: int, panels: int = 1) -> Tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(points)
    left = np.arange(panels)[:, None] / panels
    nodes = (left + (x[None, :] + 1.0) / (2.0 * panels)).reshape(-1)
    weights = np.tile(w / (2.0 * panels), panels)
    return nodes, weights


def tensor_points(axes: List[np.ndarray]) -> np.ndarray:
    """Cartesian product of per-axis coordinates, first axis slowest."""
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([grid.reshape(-1) for grid in grids], axis=1)


def _evaluate(fn: Callable[[np.ndarray], np.ndarray], points: np.ndarray) -> np.ndarray:
    return np.concatenate(
        [np.asarray(fn(points[start : start + _EVAL_CHUNK]), dtype=float).reshape(-1)
         for start in range(0, points.shape[0], _EVAL_CHUNK)]
    )


def _tensor_rule(fn, dim: int, points: int, panels: int) -> float:
    nodes, weights = gauss_legendre_nodes(points, panels)
    grid = tensor_points([nodes] * dim)
    w = reduce(np.multiply.outer, [weights] * dim).reshape(-1)
    return float(_evaluate(fn, grid) @ w)


def quadrature(fn: Callable[[np.ndarray], np.ndarray], dim: int, scheme: Scheme) -> QuadratureResult:
    """Integral of ``fn`` over the unit cube.

    Args:
        fn: Vectorized integrand mapping (n, d) points to (n,) values
        dim: Dimension d
        scheme: TensorGL (d <= 4) or QMC

    Returns:
        Value and error estimate (embedded lower-order rule for TensorGL,
        replicate standard error for QMC)
    """
    if isinstance(scheme, TensorGL):
        if dim > 4:
            raise PreconditionError(f"tensor Gauss-Legendre is limited to d <= 4, got {dim}")
        value = _tensor_rule(fn, dim, scheme.points, scheme.panels)
        lower = max(1, scheme.points // 2)
        error = abs(value - _tensor_rule(fn, dim, lower, scheme.panels)) if lower < scheme.points else math.nan
        return QuadratureResult(value, error)

    children = np.random.SeedSequence(scheme.seed).spawn(scheme.replicates)
    m = max(1, math.ceil(math.log2(scheme.samples)))
    estimates = []
    for child in children:
        sampler = qmc.Sobol(d=dim, scramble=True, seed=np.random.default_rng(child))
        estimates.append(float(_evaluate(fn, sampler.random_base2(m)).mean()))
    estimates = np.array(estimates)
    error = float(estimates.std(ddof=1) / math.sqrt(len(estimates))) if len(estimates) > 1 else math.nan
    return QuadratureResult(float(estimates.mean()), error)


# Oracle solutions


class OracleKind(Enum):
    GALERKIN = "galerkin"
    FINITE_DIFFERENCE = "fd"


@dataclass
class OracleSolution:
    """Reference solution: an admissible expansion (Galerkin) or vertex values (FD)."""

    kind: OracleKind
    accuracy: float
    expansion: Optional[TrigExpansion] = None
    grid: Optional[np.ndarray] = None
    spacing: float = 0.0
    cutoff: int = 0
    energy: float = math.nan
    tail: float = math.nan


def admissible_indices(bc: BoundaryCondition, dim: int, cutoff: int) -> np.ndarray:
    """All admissible multi-indices with max-norm <= cutoff, lexicographic."""
    low = 1 if bc is BoundaryCondition.DIRICHLET else 0
    axis = np.arange(low, cutoff + 1)
    return tensor_points([axis] * dim).astype(np.int64)


def _column(problem: EllipticProblem, parity: str, index: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    image = apply_operator(problem, TrigExpansion.basis(parity, index))
    for block_parity, K, coef in image.blocks():
        if block_parity == parity:
            return K, coef
    return np.zeros((0, problem.dim), dtype=np.int64), np.zeros(0)


def _galerkin_at(problem: EllipticProblem, cutoff: int, workers: Optional[int]) -> Tuple[TrigExpansion, float]:
    d, bc = problem.dim, problem.bc
    parity = admissible_parity(bc, d)
    low = 1 if bc is BoundaryCondition.DIRICHLET else 0
    shape = (cutoff - low + 1,) * d
    indices = admissible_indices(bc, d, cutoff)
    size = indices.shape[0]
    weights = l2_basis_norm_sq_block(parity, indices)

    def positions(K: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        inside = np.all((K >= low) & (K <= cutoff), axis=1)
        rows = np.ravel_multi_index(tuple((K[inside] - low).T), shape) if np.any(inside) else np.zeros(0, dtype=int)
        return inside, rows

    B = np.zeros((size, size))
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as executor:
        future_to_index = {executor.submit(_column, problem, parity, indices[j]): j for j in range(size)}
        for future in concurrent.futures.as_completed(future_to_index):
            j = future_to_index[future]
            K, coef = future.result()
            inside, rows = positions(K)
            B[rows, j] = coef[inside] * weights[rows]

    scale = np.abs(B).max() if size else 1.0
    asymmetry = np.abs(B - B.T).max() if size else 0.0
    if asymmetry > 1e-9 * scale:
        raise OracleError(f"Galerkin matrix is not symmetric (defect {asymmetry:.3g})")
    B = 0.5 * (B + B.T)

    rhs = np.zeros(size)
    for block_parity, K, coef in problem.f.blocks():
        inside, rows = positions(K)
        rhs[rows] = coef[inside] * weights[rows]

    try:
        factor = scipy.linalg.cho_factor(B)
    except np.linalg.LinAlgError as e:
        raise OracleError(f"Galerkin matrix is not positive definite: {e}") from None
    x = scipy.linalg.cho_solve(factor, rhs)
    energy = -0.5 * float(rhs @ x)
    return TrigExpansion(d, {parity: (indices, x)}), energy


def _unknowns(bc: BoundaryCondition, dim: int, cutoff: int) -> int:
    low = 1 if bc is BoundaryCondition.DIRICHLET else 0
    return (cutoff - low + 1) ** dim


def galerkin_solve(
    problem: EllipticProblem,
    cutoff: Optional[int] = None,
    tol: float = 1e-10,
    max_unknowns: int = DEFAULT_MAX_UNKNOWNS,
    workers: Optional[int] = None,
) -> OracleSolution:
    """Dense spectral Galerkin solve in the admissible family.

    With ``cutoff`` given, solves once on all indices with max-norm <= cutoff.
    Otherwise starts at (max frequency of f) + (coefficient support radius)
    and doubles until the energy decrement falls below ``tol`` or the next
    system would exceed ``max_unknowns``.

    Raises:
        OracleError: If the system is not SPD or the cutoff misses part of f
    """
    d, bc = problem.dim, problem.bc
    radius = max(
        [problem.c.max_frequency()] + [problem.A[i][j].max_frequency() for i in range(d) for j in range(d)]
    )
    if cutoff is not None:
        if cutoff < problem.f.max_frequency():
            raise OracleError(f"cutoff {cutoff} is below the largest frequency of f ({problem.f.max_frequency()})")
        if _unknowns(bc, d, cutoff) > max_unknowns:
            raise OracleError(f"cutoff {cutoff} needs {_unknowns(bc, d, cutoff)} unknowns (cap {max_unknowns})")
        u, energy = _galerkin_at(problem, cutoff, workers)
        return OracleSolution(OracleKind.GALERKIN, math.nan, expansion=u, cutoff=cutoff, energy=energy)

    current = max(1, problem.f.max_frequency() + radius)
    if _unknowns(bc, d, current) > max_unknowns:
        raise OracleError(f"initial cutoff {current} already exceeds {max_unknowns} unknowns")
    u, energy = _galerkin_at(problem, current, workers)
    logger.debug("%s: Galerkin cutoff %d, energy %.17g", problem.name, current, energy)
    accuracy, tail = math.inf, math.inf
    while _unknowns(bc, d, 2 * current) <= max_unknowns:
        refined, refined_energy = _galerkin_at(problem, 2 * current, workers)
        tail = abs(energy - refined_energy)
        accuracy = h1_norm(axpy(1.0, refined, -1.0, u))
        u, energy, current = refined, refined_energy, 2 * current
        logger.debug("%s: Galerkin cutoff %d, energy tail %.3g", problem.name, current, tail)
        if tail < tol:
            break
    else:
        logger.warning(
            "%s: Galerkin cutoff capped at %d (energy tail %.3g, tol %.3g)", problem.name, current, tail, tol
        )
    return OracleSolution(OracleKind.GALERKIN, accuracy, expansion=u, cutoff=current, energy=energy, tail=tail)


# Finite differences


def _kron_all(operators: List[sp.spmatrix]) -> sp.csr_matrix:
    return reduce(lambda left, right: sp.kron(left, right, format="csr"), operators)


def _kron_vectors(vectors: List[np.ndarray]) -> np.ndarray:
    return reduce(np.kron, vectors)


@dataclass
class FDSystem:
    matrix: sp.csr_matrix
    mass: np.ndarray
    free: np.ndarray
    nodes: np.ndarray
    spacing: float


def assemble_fd(
    dim: int,
    n: int,
    bc: BoundaryCondition,
    diffusion: Callable[[int, int, np.ndarray], np.ndarray],
    reaction: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> FDSystem:
    """Vertex-centred conservative discretization of -div(A grad u) + c u.

    Diagonal fluxes live on grid edges, off-diagonal terms use cell-centred
    gradients and the mass matrix is lumped. Boundary vertices keep their
    half-cell volumes, which realizes the co-normal condition A grad u . n = 0;
    for Dirichlet problems they are removed from the system.

    Args:
        dim: Dimension (<= 3)
        n: Intervals per axis
        bc: Boundary condition
        diffusion: (i, j, points) -> A_ij at the points
        reaction: points -> c at the points (omitted means c = 0)
    """
    h = 1.0 / n
    nodes = np.linspace(0.0, 1.0, n + 1)
    mids = 0.5 * (nodes[:-1] + nodes[1:])
    volume = np.full(n + 1, h)
    volume[[0, -1]] = h / 2.0
    identity = sp.identity(n + 1, format="csr")
    difference = sp.diags([-1.0, 1.0], [0, 1], shape=(n, n + 1), format="csr")
    average = sp.diags([0.5, 0.5], [0, 1], shape=(n, n + 1), format="csr")

    size = (n + 1) ** dim
    matrix = sp.csr_matrix((size, size))
    for i in range(dim):
        edges = _kron_all([difference if axis == i else identity for axis in range(dim)])
        points = tensor_points([mids if axis == i else nodes for axis in range(dim)])
        edge_volume = _kron_vectors([np.full(n, h) if axis == i else volume for axis in range(dim)])
        weights = diffusion(i, i, points) * edge_volume / h**2
        matrix = matrix + edges.T @ sp.diags(weights) @ edges

    if dim > 1:
        centres = tensor_points([mids] * dim)
        gradients = [
            _kron_all([difference / h if axis == i else average for axis in range(dim)]) for i in range(dim)
        ]
        for i in range(dim):
            for j in range(dim):
                if i == j:
                    continue
                weights = diffusion(i, j, centres) * h**dim
                if np.any(weights):
                    matrix = matrix + gradients[i].T @ sp.diags(weights) @ gradients[j]

    grid = tensor_points([nodes] * dim)
    mass = _kron_vectors([volume] * dim)
    if reaction is not None:
        matrix = matrix + sp.diags(mass * reaction(grid))

    if bc is BoundaryCondition.DIRICHLET:
        interior = np.all((grid > 0.0) & (grid < 1.0), axis=1)
    else:
        interior = np.ones(size, dtype=bool)
    free = np.flatnonzero(interior)
    matrix = matrix.tocsr()[free][:, free]
    return FDSystem(matrix.tocsr(), mass, free, grid, h)


def _problem_fd_system(problem: EllipticProblem, n: int) -> FDSystem:
    def diffusion(i: int, j: int, points: np.ndarray) -> np.ndarray:
        return problem.A[i][j].evaluate(points)

    return assemble_fd(problem.dim, n, problem.bc, diffusion, problem.c.evaluate)


def fd_solve(problem: EllipticProblem, n: int, rtol: float = 1e-12, maxiter: Optional[int] = None) -> OracleSolution:
    """Second-order finite-difference solve with Jacobi-preconditioned CG.

    Returns:
        Vertex values on the full (n+1)^d grid (zeros on Dirichlet faces)

    Raises:
        PreconditionError: For d > 3 or n < 16
        SolverConvergenceError: If CG does not converge
    """
    if problem.dim > 3:
        raise PreconditionError(f"finite differences support d <= 3, got {problem.dim}")
    if n < 16:
        raise PreconditionError(f"finite differences need n >= 16, got {n}")
    system = _problem_fd_system(problem, n)
    rhs = (system.mass * problem.f.evaluate(system.nodes))[system.free]
    values = np.zeros(system.nodes.shape[0])
    if np.any(rhs):
        diagonal = system.matrix.diagonal()
        preconditioner = spla.LinearOperator(system.matrix.shape, matvec=lambda v: v / diagonal)
        solution, info = spla.cg(
            system.matrix, rhs, rtol=rtol, maxiter=maxiter or 10 * rhs.size, M=preconditioner
        )
        if info != 0:
            raise SolverConvergenceError(f"CG did not converge on the {n}-point grid (info={info})")
        values[system.free] = solution
    logger.debug("%s: FD solve on %d^%d grid", problem.name, n, problem.dim)
    return OracleSolution(
        OracleKind.FINITE_DIFFERENCE,
        accuracy=system.spacing**2,
        grid=values.reshape((n + 1,) * problem.dim),
        spacing=system.spacing,
    )


def grid_nodes(solution: OracleSolution) -> np.ndarray:
    n = solution.grid.shape[0] - 1
    nodes = np.linspace(0.0, 1.0, n + 1)
    return tensor_points([nodes] * solution.grid.ndim)


def relative_l2_discrepancy(solution: OracleSolution, g: TrigExpansion) -> float:
    """Trapezoid-weighted relative L2 distance between grid values and an expansion."""
    n = solution.grid.shape[0] - 1
    volume = np.full(n + 1, 1.0 / n)
    volume[[0, -1]] /= 2.0
    weights = _kron_vectors([volume] * solution.grid.ndim)
    exact = g.evaluate(grid_nodes(solution))
    gap = solution.grid.reshape(-1) - exact
    reference = math.sqrt(float(weights @ exact**2))
    return math.sqrt(float(weights @ gap**2)) / reference if reference > 0 else math.sqrt(float(weights @ gap**2))


class PoincareResult(NamedTuple):
    constant: float
    eigenvalue: float
    iterations: int
    correlation: float


def poincare_check(dim: int, n: Optional[int] = None, tol: float = 1e-13, maxiter: int = 1000) -> PoincareResult:
    """Smallest Dirichlet-Laplacian eigenvalue by inverse power iteration.

    Returns:
        1/sqrt(lambda_1) (approaches 1/(pi sqrt(d))), lambda_1, iterations and
        the correlation of the eigenvector with S_(1,...,1)

    Raises:
        SolverConvergenceError: If the Rayleigh quotient stagnates above tol
    """
    if dim > 3:
        raise PreconditionError(f"Poincare check supports d <= 3, got {dim}")
    n = n or {1: 256, 2: 64, 3: 24}[dim]
    system = assemble_fd(dim, n, BoundaryCondition.DIRICHLET, lambda i, j, pts: np.ones(pts.shape[0]) if i == j else np.zeros(pts.shape[0]))
    mass = system.mass[system.free]
    solver = spla.splu(system.matrix.tocsc())
    vector = np.ones(system.free.size)
    eigenvalue = math.inf
    for iteration in range(1, maxiter + 1):
        vector = solver.solve(mass * vector)
        vector /= np.linalg.norm(vector)
        estimate = float(vector @ (system.matrix @ vector)) / float(vector @ (mass * vector))
        if abs(estimate - eigenvalue) <= tol * estimate:
            eigenvalue = estimate
            break
        eigenvalue = estimate
    else:
        raise SolverConvergenceError(f"inverse power iteration stagnated after {maxiter} iterations")
    mode = TrigExpansion.basis(pure_sin(dim), (1,) * dim).evaluate(system.nodes[system.free])
    correlation = abs(float(vector @ mode)) / (np.linalg.norm(vector) * np.linalg.norm(mode))
    return PoincareResult(1.0 / math.sqrt(eigenvalue), eigenvalue, iteration, correlation)


class OperatorBound(NamedTuple):
    lhs: float
    rhs: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs + 1e-8


def operator_bound_audit(
    problem: EllipticProblem, u: TrigExpansion, v: TrigExpansion, scheme: Optional[Scheme] = None
) -> OperatorBound:
    """Quadrature of grad u . A grad v against a_max ||grad u|| ||grad v||."""
    d = problem.dim
    grad_u = [derivative(u, i) for i in range(d)]
    grad_v = [derivative(v, i) for i in range(d)]
    scheme = scheme or default_scheme(d)

    def form(points: np.ndarray) -> np.ndarray:
        gu = np.stack([g.evaluate(points) for g in grad_u], axis=1)
        gv = np.stack([g.evaluate(points) for g in grad_v], axis=1)
        return np.einsum("ni,nij,nj->n", gu, problem.coefficient_matrix(points), gv)

    def squared(gradient):
        return lambda points: sum(g.evaluate(points) ** 2 for g in gradient)

    lhs = quadrature(form, d, scheme).value
    norm_u = math.sqrt(max(quadrature(squared(grad_u), d, scheme).value, 0.0))
    norm_v = math.sqrt(max(quadrature(squared(grad_v), d, scheme).value, 0.0))
    return OperatorBound(lhs, problem.a_max * norm_u * norm_v)
