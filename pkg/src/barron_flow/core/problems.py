"""
Built-in fixture problems and seeded random problems.
Random problems declare their ellipticity constants by Gershgorin bounds on
the absolute coefficient sums, so the declarations always hold.
"""

import math
from typing import Callable, Dict, List, NamedTuple, Optional

import numpy as np

from ..utils.translation import _
from .barron_space import BoundaryCondition, TrigExpansion, admissible_parity
from .elliptic_problem import EllipticProblem
from .errors import PreconditionError
from .trig_core import mixed_parity, pure_cos, pure_sin


class ProblemInfo(NamedTuple):
    """A named fixture problem."""

    name: str
    description: str
    build: Callable[[], EllipticProblem]


def _single_mode_d1() -> EllipticProblem:
    f = TrigExpansion.basis("s", (1,), 1.0 + math.pi**2)
    return EllipticProblem.isotropic(f, BoundaryCondition.DIRICHLET, name="single_mode_d1")


def _single_mode_neumann_d1() -> EllipticProblem:
    f = TrigExpansion.basis("c", (2,), 1.0 + 4.0 * math.pi**2)
    return EllipticProblem.isotropic(f, BoundaryCondition.NEUMANN, name="single_mode_neumann_d1")


def _variable_diffusion_d1() -> EllipticProblem:
    a = TrigExpansion.from_terms(1, [("c", (0,), 1.0), ("c", (2,), 0.5)])
    return EllipticProblem(
        dim=1,
        bc=BoundaryCondition.DIRICHLET,
        A=((a,),),
        c=TrigExpansion.constant(1),
        f=TrigExpansion.basis("s", (1,)),
        a_min=0.5,
        a_max=1.5,
        c_min=1.0,
        c_max=1.0,
        name="variable_diffusion_d1",
    )


def _anisotropic_d2() -> EllipticProblem:
    a11 = TrigExpansion.from_terms(2, [("cc", (0, 0), 1.0), ("cc", (2, 0), 0.2)])
    a22 = TrigExpansion.from_terms(2, [("cc", (0, 0), 1.0), ("cc", (0, 2), 0.2)])
    a12 = TrigExpansion.basis("ss", (1, 1), 0.1)
    c = TrigExpansion.from_terms(2, [("cc", (0, 0), 1.0), ("cc", (1, 1), 0.3)])
    f = TrigExpansion.from_terms(2, [("ss", (1, 1), 1.0), ("ss", (2, 1), 0.5)])
    return EllipticProblem(
        dim=2,
        bc=BoundaryCondition.DIRICHLET,
        A=((a11, a12), (a12, a22)),
        c=c,
        f=f,
        a_min=0.7,
        a_max=1.3,
        c_min=0.7,
        c_max=1.3,
        name="anisotropic_d2",
    )


def _neumann_d2() -> EllipticProblem:
    a11 = TrigExpansion.from_terms(2, [("cc", (0, 0), 1.0), ("cc", (1, 0), 0.25)])
    one = TrigExpansion.constant(2)
    zero = TrigExpansion.zero(2)
    c = TrigExpansion.from_terms(2, [("cc", (0, 0), 1.5), ("cc", (0, 1), 0.5)])
    f = TrigExpansion.from_terms(2, [("cc", (0, 0), 0.5), ("cc", (1, 1), 1.0)])
    return EllipticProblem(
        dim=2,
        bc=BoundaryCondition.NEUMANN,
        A=((a11, zero), (zero, one)),
        c=c,
        f=f,
        a_min=0.75,
        a_max=1.25,
        c_min=1.0,
        c_max=2.0,
        name="neumann_d2",
    )


def _dirichlet_d3() -> EllipticProblem:
    f = TrigExpansion.from_terms(3, [("sss", (1, 1, 1), 1.0), ("sss", (1, 2, 1), 0.25)])
    return EllipticProblem.isotropic(f, BoundaryCondition.DIRICHLET, name="dirichlet_d3")


BUILTIN_PROBLEMS: List[ProblemInfo] = [
    ProblemInfo("single_mode_d1", _("Poisson-type single sine mode, exact solution S_1"), _single_mode_d1),
    ProblemInfo(
        "single_mode_neumann_d1", _("Neumann single cosine mode, exact solution C_2"), _single_mode_neumann_d1
    ),
    ProblemInfo("variable_diffusion_d1", _("A = 1 + cos(2 pi x)/2, c = 1, f = sin(pi x)"), _variable_diffusion_d1),
    ProblemInfo("anisotropic_d2", _("Variable anisotropic diffusion with a mixed off-diagonal"), _anisotropic_d2),
    ProblemInfo("neumann_d2", _("Neumann problem with variable diffusion and reaction"), _neumann_d2),
    ProblemInfo("dirichlet_d3", _("Isotropic three-dimensional two-mode problem"), _dirichlet_d3),
]


def builtin_names() -> List[str]:
    return [info.name for info in BUILTIN_PROBLEMS]


def builtin_problem(name: str) -> EllipticProblem:
    """Build a fixture problem by name.

    Raises:
        KeyError: If no fixture has that name
    """
    for info in BUILTIN_PROBLEMS:
        if info.name == name:
            return info.build()
    raise KeyError(name)


def _cos_index(rng: np.random.Generator, dim: int, max_freq: int) -> tuple:
    index = rng.integers(0, max_freq + 1, size=dim)
    if not index.any():
        index[rng.integers(dim)] = 1
    return tuple(int(k) for k in index)


def _cos_perturbation(rng: np.random.Generator, dim: int, terms: int, strength: float, max_freq: int):
    """1 + sum of random cosine terms whose absolute coefficients sum to at most ``strength``."""
    coefficients = rng.uniform(-1.0, 1.0, size=terms) * strength / terms
    parity = pure_cos(dim)
    entries = [(parity, (0,) * dim, 1.0)]
    entries += [(parity, _cos_index(rng, dim, max_freq), float(a)) for a in coefficients]
    expansion = TrigExpansion.from_terms(dim, entries)
    return expansion, float(np.abs(coefficients).sum())


def random_problem(
    rng: np.random.Generator,
    dim: int,
    bc: BoundaryCondition,
    terms: int = 2,
    strength: float = 0.2,
    coupling: float = 0.1,
    max_freq: int = 2,
    name: Optional[str] = None,
) -> EllipticProblem:
    """Random finite-support problem with pure-Cos diagonal and mixed off-diagonals.

    Args:
        rng: Source of randomness
        dim: Dimension d
        bc: Boundary condition
        terms: Non-constant terms per coefficient and in f
        strength: Bound on the absolute variation of each A_ii and of c
        coupling: Bound on |A_ij| per row, shared by the d - 1 off-diagonals
        max_freq: Largest frequency per coordinate in A and c
        name: Problem label
    """
    if dim < 1:
        raise PreconditionError(f"dimension must be >= 1, got {dim}")
    if not (0.0 <= strength and 0.0 <= coupling and strength + coupling < 1.0):
        raise PreconditionError("need strength + coupling < 1 to keep A uniformly elliptic")

    zero = TrigExpansion.zero(dim)
    A = [[zero] * dim for _ in range(dim)]
    row_radius = np.zeros(dim)
    for i in range(dim):
        A[i][i], radius = _cos_perturbation(rng, dim, terms, strength, max_freq)
        row_radius[i] += radius
    for i in range(dim):
        for j in range(i + 1, dim):
            parity = mixed_parity(dim, i, j)
            index = rng.integers(0, max_freq + 1, size=dim)
            index[[i, j]] = rng.integers(1, max_freq + 1, size=2)
            value = float(rng.uniform(-1.0, 1.0) * coupling / (dim - 1))
            entry = TrigExpansion.basis(parity, tuple(int(k) for k in index), value)
            A[i][j] = A[j][i] = entry
            row_radius[i] += abs(value)
            row_radius[j] += abs(value)

    c, c_radius = _cos_perturbation(rng, dim, terms, strength, max_freq)

    parity = admissible_parity(bc, dim)
    low = 1 if parity == pure_sin(dim) else 0
    f = TrigExpansion.from_terms(
        dim,
        [
            (parity, tuple(int(k) for k in rng.integers(low, max_freq + 2, size=dim)), float(rng.standard_normal()))
            for _ in range(terms + 1)
        ],
    )
    return EllipticProblem(
        dim=dim,
        bc=bc,
        A=tuple(tuple(row) for row in A),
        c=c,
        f=f,
        a_min=float(1.0 - row_radius.max()),
        a_max=float(1.0 + row_radius.max()),
        c_min=1.0 - c_radius,
        c_max=1.0 + c_radius,
        name=name or f"random_{bc.value}_d{dim}",
    )


def random_expansion(
    rng: np.random.Generator,
    dim: int,
    terms: int = 4,
    max_freq: int = 3,
    parity: Optional[str] = None,
) -> TrigExpansion:
    """Random finite expansion with normal coefficients.

    Without ``parity`` every term gets its own random parity vector.
    """
    entries = []
    for _ in range(terms):
        p = parity or "".join(rng.choice(["s", "c"], size=dim))
        low = np.where(np.array(list(p)) == "s", 1, 0)
        index = rng.integers(low, max_freq + 1, size=dim)
        entries.append((p, tuple(int(k) for k in index), float(rng.standard_normal())))
    return TrigExpansion.from_terms(dim, entries)


def sampling_targets() -> Dict[str, TrigExpansion]:
    """Multi-atom targets for the network sampling rates.

    Every target has at least two distinct cosine atoms, so sampled nets carry
    a nonzero variance.
    """
    targets = {name: builtin_problem(name).f for name in ("anisotropic_d2", "neumann_d2", "dirichlet_d3")}
    targets["two_sines_d1"] = TrigExpansion.from_terms(1, [("s", (1,), 1.0), ("s", (3,), 0.5)])
    targets["shifted_cosine_d1"] = TrigExpansion.from_terms(1, [("c", (0,), 0.5), ("c", (2,), 1.0)])
    return targets


def relu_rate_targets() -> Dict[str, TrigExpansion]:
    """One-dimensional targets whose ReLU errors are integrated exactly between kinks."""
    return {
        "sine_d1": TrigExpansion.basis("s", (1,)),
        "sine_pair_d1": TrigExpansion.from_terms(1, [("s", (1,), 1.0), ("s", (2,), 0.25)]),
        "shifted_cosine_d1": TrigExpansion.from_terms(1, [("c", (0,), 0.5), ("c", (1,), 1.0)]),
    }
