"""
Multi-index arithmetic and the tensor-product sine/cosine basis.
Parity vectors are strings over {"s", "c"}, one tag per coordinate.
"""

import logging
from functools import lru_cache
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DimensionMismatchError, FrequencyOverflowError, PreconditionError

logger = logging.getLogger(__name__)

SIN = "s"
COS = "c"

INT32_MAX = 2**31 - 1

MultiIndex = Tuple[int, ...]
SignedIndex = Tuple[int, ...]
ParityVector = str


def validate_parity(parity: str, dim: Optional[int] = None) -> ParityVector:
    """Check a parity string and return it unchanged.

    Args:
        parity: String of "s"/"c" tags
        dim: Expected dimension, if known

    Returns:
        The parity string

    Raises:
        PreconditionError: On unknown tags or an empty string
        DimensionMismatchError: If the length differs from ``dim``
    """
    if not parity or any(tag not in (SIN, COS) for tag in parity):
        raise PreconditionError(f"invalid parity vector {parity!r}")
    if dim is not None and len(parity) != dim:
        raise DimensionMismatchError(
            f"parity {parity!r} has length {len(parity)}, expected {dim}"
        )
    return parity


def validate_index(k: Sequence[int], dim: Optional[int] = None) -> MultiIndex:
    """Return ``k`` as a tuple of non-negative ints after checking it."""
    index = tuple(int(v) for v in k)
    if not index:
        raise PreconditionError("multi-index must have at least one entry")
    if any(v < 0 for v in index):
        raise PreconditionError(f"multi-index {index} has negative entries")
    if any(v > INT32_MAX for v in index):
        raise FrequencyOverflowError(f"multi-index {index} exceeds the 32-bit range")
    if dim is not None and len(index) != dim:
        raise DimensionMismatchError(
            f"multi-index {index} has length {len(index)}, expected {dim}"
        )
    return index


def pure_sin(dim: int) -> ParityVector:
    return SIN * dim


def pure_cos(dim: int) -> ParityVector:
    return COS * dim


def mixed_parity(dim: int, i: int, j: int) -> ParityVector:
    """Parity of the mixed family: Sin at coordinates i and j, Cos elsewhere."""
    if i == j or not (0 <= i < dim and 0 <= j < dim):
        raise PreconditionError(f"mixed family needs two distinct coordinates, got {i}, {j}")
    return "".join(SIN if axis in (i, j) else COS for axis in range(dim))


@lru_cache(maxsize=256)
def sin_mask(parity: ParityVector) -> np.ndarray:
    """Boolean mask of the Sin coordinates of a parity vector."""
    mask = np.array([tag == SIN for tag in parity], dtype=bool)
    mask.setflags(write=False)
    return mask


def _as_points(x, dim: int) -> Tuple[np.ndarray, bool]:
    points = np.asarray(x, dtype=float)
    single = points.ndim <= 1
    points = np.atleast_2d(points)
    if points.shape[1] != dim:
        raise DimensionMismatchError(
            f"points have dimension {points.shape[1]}, expected {dim}"
        )
    return points, single


def eval_basis(parity: ParityVector, k: Sequence[int], x) -> Union[float, np.ndarray]:
    """Evaluate the tensor basis function prod_i trig_i(pi k_i x_i).

    Args:
        parity: Parity vector selecting sin or cos per coordinate
        k: Multi-index
        x: One point of shape (d,) or a batch of shape (n, d)

    Returns:
        A float for a single point, otherwise an array of shape (n,)
    """
    dim = len(parity)
    validate_parity(parity)
    index = validate_index(k, dim)
    points, single = _as_points(x, dim)
    values = eval_basis_block(parity, np.array([index], dtype=np.int64), points)[:, 0]
    return float(values[0]) if single else values


def eval_basis_block(parity: ParityVector, K: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Evaluate every row of ``K`` at every point; returns shape (n, m)."""
    theta = np.pi * points[:, None, :] * K[None, :, :]
    factors = np.where(sin_mask(parity), np.sin(theta), np.cos(theta))
    return factors.prod(axis=2)


def fold_signed(
    parity: ParityVector, v: Sequence[int]
) -> Optional[Tuple[MultiIndex, int]]:
    """Canonicalize a signed frequency vector.

    sin(-t) = -sin(t) and cos(-t) = cos(t); a Sin coordinate with zero
    frequency makes the whole term vanish.

    Returns:
        ``(k, sign)`` with ``k`` non-negative, or None when the term vanishes
    """
    if len(parity) != len(v):
        raise DimensionMismatchError(
            f"parity {parity!r} and signed index {tuple(v)} differ in length"
        )
    K, signs, keep = fold_signed_block(parity, np.array([v], dtype=np.int64))
    if not keep[0]:
        return None
    return tuple(int(e) for e in K[0]), int(signs[0])


def fold_signed_block(
    parity: ParityVector, V: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized :func:`fold_signed` over the rows of ``V``.

    Returns:
        (canonical indices, signs in {+1, -1}, mask of non-vanishing rows)
    """
    mask = sin_mask(parity)
    negative_sin = (V < 0) & mask
    signs = np.where(negative_sin.sum(axis=1) % 2 == 1, -1, 1)
    keep = ~np.any((V == 0) & mask, axis=1)
    return np.abs(V), signs, keep


def l2_basis_norm_sq(parity: ParityVector, k: Sequence[int]) -> float:
    """Squared L2 norm of one basis function over the unit cube.

    Raises:
        PreconditionError: If a Sin coordinate has zero frequency
    """
    index = validate_index(k, len(parity))
    if any(tag == SIN and e == 0 for tag, e in zip(parity, index)):
        raise PreconditionError(
            f"basis ({parity}, {index}) is identically zero (sin with zero frequency)"
        )
    return float(l2_basis_norm_sq_block(parity, np.array([index], dtype=np.int64))[0])


def l2_basis_norm_sq_block(parity: ParityVector, K: np.ndarray) -> np.ndarray:
    full = (K == 0) & ~sin_mask(parity)
    return np.where(full, 1.0, 0.5).prod(axis=1)


def integrate_basis_block(parity: ParityVector, K: np.ndarray) -> np.ndarray:
    """Exact integral of each basis function over the unit cube."""
    mask = sin_mask(parity)
    safe = np.where(K == 0, 1, K)
    sin_part = np.where(K % 2 == 1, 2.0 / (np.pi * safe), 0.0)
    cos_part = np.where(K == 0, 1.0, 0.0)
    return np.where(mask, sin_part, cos_part).prod(axis=1)


def check_frequency_range(V: np.ndarray) -> None:
    """Raise if any signed frequency leaves the 32-bit range."""
    if V.size and np.abs(V).max() > INT32_MAX:
        raise FrequencyOverflowError(
            f"frequency {int(np.abs(V).max())} exceeds the 32-bit range"
        )


# Per-coordinate product-to-sum table: (p, q) -> (result tag, factor for
# frequency a+b, factor for frequency a-b).
_PRODUCT_RULE = {
    (SIN, COS): (SIN, 0.5, 0.5),
    (COS, SIN): (SIN, 0.5, -0.5),
    (COS, COS): (COS, 0.5, 0.5),
    (SIN, SIN): (COS, -0.5, 0.5),
}


@lru_cache(maxsize=1024)
def product_rule(p: ParityVector, q: ParityVector) -> Tuple[ParityVector, np.ndarray, np.ndarray]:
    """Result parity and per-coordinate factors for multiplying two parities.

    Returns:
        (result parity, factors for the a+b branch, factors for the a-b branch)
    """
    if len(p) != len(q):
        raise DimensionMismatchError(f"parities {p!r} and {q!r} differ in length")
    rules = [_PRODUCT_RULE[(a, b)] for a, b in zip(p, q)]
    result = "".join(rule[0] for rule in rules)
    plus = np.array([rule[1] for rule in rules])
    minus = np.array([rule[2] for rule in rules])
    plus.setflags(write=False)
    minus.setflags(write=False)
    return result, plus, minus


@lru_cache(maxsize=16)
def sign_combinations(dim: int) -> np.ndarray:
    """All 2^d vectors in {+1, -1}^d, first row all +1."""
    grids = np.array(np.meshgrid(*([[1, -1]] * dim), indexing="ij"))
    combos = grids.reshape(dim, -1).T.astype(np.int64)
    combos.setflags(write=False)
    return combos
