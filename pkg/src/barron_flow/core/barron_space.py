"""
Sparse trigonometric expansions and their weighted Barron norms.
Provides exact coefficient-space linear algebra, products, derivatives and the
spectral inverse of (I - Laplace) for both boundary conditions.
"""

import logging
import re
from enum import Enum
from typing import Dict, Iterable, Iterator, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    DimensionMismatchError,
    ExpansionFormatError,
    ParityViolationError,
    PreconditionError,
)
from .trig_core import (
    COS,
    SIN,
    ParityVector,
    check_frequency_range,
    eval_basis_block,
    fold_signed_block,
    integrate_basis_block,
    l2_basis_norm_sq_block,
    product_rule,
    pure_cos,
    pure_sin,
    sign_combinations,
    validate_index,
    validate_parity,
)

logger = logging.getLogger(__name__)

# Wrong-parity dust below this fraction of the largest coefficient is dropped.
PARITY_TOLERANCE = 1e-12

# Upper bound on rows materialized at once by multiply/evaluate.
_CHUNK_ELEMENTS = 4_000_000

Block = Tuple[np.ndarray, np.ndarray]


class BoundaryCondition(Enum):
    """Homogeneous boundary condition of the elliptic problem."""

    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"

    @classmethod
    def parse(cls, text: str) -> "BoundaryCondition":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise PreconditionError(f"unknown boundary condition {text!r}") from None


def admissible_parity(bc: BoundaryCondition, dim: int) -> ParityVector:
    """Parity class preserved by the flow: pure-Sin (Dirichlet) or pure-Cos (Neumann)."""
    return pure_sin(dim) if bc is BoundaryCondition.DIRICHLET else pure_cos(dim)


def _freeze(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def _canonical_block(parity: ParityVector, V: np.ndarray, coef: np.ndarray) -> Optional[Block]:
    """Fold signs, merge equal indices and drop zero coefficients."""
    if V.shape[0] == 0:
        return None
    check_frequency_range(V)
    K, signs, keep = fold_signed_block(parity, V)
    K = K[keep]
    coef = (coef * signs)[keep]
    if K.shape[0] == 0:
        return None
    unique, inverse = np.unique(K, axis=0, return_inverse=True)
    merged = np.bincount(inverse.reshape(-1), weights=coef, minlength=unique.shape[0])
    nonzero = merged != 0.0
    if not np.any(nonzero):
        return None
    return _freeze(np.ascontiguousarray(unique[nonzero], dtype=np.int64)), _freeze(merged[nonzero])


def _assemble(dim: int, pieces: Mapping[str, List[Block]]) -> "TrigExpansion":
    blocks: Dict[str, Block] = {}
    for parity in sorted(pieces):
        parts = pieces[parity]
        if not parts:
            continue
        V = np.concatenate([part[0].reshape(-1, dim) for part in parts], axis=0)
        coef = np.concatenate([part[1].reshape(-1) for part in parts])
        block = _canonical_block(parity, V, coef)
        if block is not None:
            blocks[parity] = block
    return TrigExpansion._from_canonical(dim, blocks)


class TrigExpansion:
    """Immutable sparse expansion sum a_k * prod_i trig_i(pi k_i x_i).

    Terms are grouped in blocks by parity vector; each block holds an integer
    index array of shape (m, d) in lexicographic order and the matching
    coefficients. No stored coefficient is zero and no Sin coordinate carries
    a zero frequency.
    """

    __slots__ = ("_dim", "_blocks")

    def __init__(self, dim: int, blocks: Optional[Mapping[str, Block]] = None):
        if int(dim) < 1:
            raise PreconditionError(f"dimension must be >= 1, got {dim}")
        self._dim = int(dim)
        pieces: Dict[str, List[Block]] = {}
        for parity, (K, coef) in (blocks or {}).items():
            validate_parity(parity, self._dim)
            K = np.asarray(K, dtype=np.int64).reshape(-1, self._dim)
            coef = np.asarray(coef, dtype=float).reshape(-1)
            if K.shape[0] != coef.shape[0]:
                raise PreconditionError("index and coefficient arrays differ in length")
            if np.any(K < 0):
                raise PreconditionError("multi-indices must be non-negative")
            pieces.setdefault(parity, []).append((K, coef))
        self._blocks = _assemble(self._dim, pieces)._blocks

    @classmethod
    def _from_canonical(cls, dim: int, blocks: Dict[str, Block]) -> "TrigExpansion":
        obj = cls.__new__(cls)
        obj._dim = dim
        obj._blocks = {parity: blocks[parity] for parity in sorted(blocks)}
        return obj

    # Constructors

    @classmethod
    def zero(cls, dim: int) -> "TrigExpansion":
        return cls(dim)

    @classmethod
    def constant(cls, dim: int, value: float = 1.0) -> "TrigExpansion":
        return cls.basis(pure_cos(dim), (0,) * dim, value)

    @classmethod
    def basis(cls, parity: ParityVector, k: Sequence[int], coefficient: float = 1.0) -> "TrigExpansion":
        """Single-term expansion ``coefficient * basis(parity, k)``."""
        validate_parity(parity)
        index = validate_index(k, len(parity))
        return cls(len(parity), {parity: (np.array([index]), np.array([coefficient]))})

    @classmethod
    def from_terms(
        cls, dim: int, terms: Iterable[Tuple[ParityVector, Sequence[int], float]]
    ) -> "TrigExpansion":
        """Build an expansion from ``(parity, k, coefficient)`` triples; duplicates add up."""
        grouped: Dict[str, Tuple[List[Tuple[int, ...]], List[float]]] = {}
        for parity, k, coefficient in terms:
            validate_parity(parity, dim)
            index = validate_index(k, dim)
            rows, values = grouped.setdefault(parity, ([], []))
            rows.append(index)
            values.append(float(coefficient))
        blocks = {
            parity: (np.array(rows, dtype=np.int64), np.array(values, dtype=float))
            for parity, (rows, values) in grouped.items()
        }
        return cls(dim, blocks)

    # Accessors

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def parities(self) -> Tuple[ParityVector, ...]:
        return tuple(self._blocks)

    def blocks(self) -> Iterator[Tuple[ParityVector, np.ndarray, np.ndarray]]:
        for parity, (K, coef) in self._blocks.items():
            yield parity, K, coef

    def terms(self) -> Iterator[Tuple[ParityVector, Tuple[int, ...], float]]:
        for parity, K, coef in self.blocks():
            for row, value in zip(K, coef):
                yield parity, tuple(int(e) for e in row), float(value)

    def to_dict(self) -> Dict[Tuple[ParityVector, Tuple[int, ...]], float]:
        return {(parity, k): value for parity, k, value in self.terms()}

    def coefficient(self, parity: ParityVector, k: Sequence[int]) -> float:
        block = self._blocks.get(parity)
        if block is None:
            return 0.0
        K, coef = block
        hits = np.flatnonzero(np.all(K == np.asarray(k, dtype=np.int64), axis=1))
        return float(coef[hits[0]]) if hits.size else 0.0

    @property
    def support_size(self) -> int:
        return sum(K.shape[0] for K, _ in self._blocks.values())

    def __len__(self) -> int:
        return self.support_size

    def is_zero(self) -> bool:
        return not self._blocks

    def max_abs_coefficient(self) -> float:
        if not self._blocks:
            return 0.0
        return max(float(np.abs(coef).max()) for _, coef in self._blocks.values())

    def max_frequency(self) -> int:
        """Largest single-coordinate frequency in the support (0 when empty)."""
        if not self._blocks:
            return 0
        return max(int(K.max()) for K, _ in self._blocks.values())

    def evaluate(self, points) -> np.ndarray:
        """Pointwise values at an array of shape (n, d) (or one point of shape (d,))."""
        x = np.atleast_2d(np.asarray(points, dtype=float))
        if x.shape[1] != self._dim:
            raise DimensionMismatchError(
                f"points have dimension {x.shape[1]}, expected {self._dim}"
            )
        values = np.zeros(x.shape[0])
        for parity, K, coef in self.blocks():
            step = max(1, _CHUNK_ELEMENTS // max(1, K.shape[0] * self._dim))
            for start in range(0, x.shape[0], step):
                chunk = x[start : start + step]
                values[start : start + step] += eval_basis_block(parity, K, chunk) @ coef
        return values

    __call__ = evaluate

    # Arithmetic sugar

    def __add__(self, other: "TrigExpansion") -> "TrigExpansion":
        if not isinstance(other, TrigExpansion):
            return NotImplemented
        return axpy(1.0, self, 1.0, other)

    def __sub__(self, other: "TrigExpansion") -> "TrigExpansion":
        if not isinstance(other, TrigExpansion):
            return NotImplemented
        return axpy(1.0, self, -1.0, other)

    def __neg__(self) -> "TrigExpansion":
        return scale(self, -1.0)

    def __mul__(self, factor) -> "TrigExpansion":
        if isinstance(factor, TrigExpansion):
            return multiply(self, factor)
        return scale(self, float(factor))

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        if not isinstance(other, TrigExpansion):
            return NotImplemented
        if self._dim != other._dim or self.parities != other.parities:
            return False
        return all(
            np.array_equal(K, other._blocks[p][0]) and np.array_equal(coef, other._blocks[p][1])
            for p, (K, coef) in self._blocks.items()
        )

    __hash__ = None

    def __repr__(self) -> str:
        return f"TrigExpansion(dim={self._dim}, terms={self.support_size}, parities={list(self.parities)})"


def _check_same_dim(g: TrigExpansion, h: TrigExpansion) -> None:
    if g.dim != h.dim:
        raise DimensionMismatchError(f"dimension mismatch: {g.dim} vs {h.dim}")


def _weights(K: np.ndarray, n: float) -> np.ndarray:
    norms = np.sqrt((K.astype(float) ** 2).sum(axis=1))
    positive = norms > 0
    powered = np.zeros_like(norms)
    powered[positive] = (np.pi * norms[positive]) ** n
    return 1.0 + powered


def barron_norm(g: TrigExpansion, n: float, strict: bool = True) -> float:
    """Weighted Barron norm sum_k |a_k| (1 + pi^n ||k||^n).

    The zero frequency carries weight 1 for every n.

    Args:
        g: Expansion
        n: Weight exponent, n >= 0
        strict: Reject expansions that span more than one basis family

    Returns:
        The norm; 0 for the zero expansion

    Raises:
        PreconditionError: For n < 0 or, when strict, a mixed-family expansion
    """
    if n < 0:
        raise PreconditionError(f"Barron weight must be non-negative, got {n}")
    if strict and len(g.parities) > 1:
        raise PreconditionError(
            f"Barron norm is defined per basis family; expansion spans {list(g.parities)}"
        )
    return float(sum(np.abs(coef) @ _weights(K, n) for _, K, coef in g.blocks()))


def e_norm_upper(g: TrigExpansion, n: float) -> float:
    """Upper bound on the exponential-family Barron norm."""
    return barron_norm(g, n)


def scale(g: TrigExpansion, factor: float) -> TrigExpansion:
    if factor == 0.0 or g.is_zero():
        return TrigExpansion.zero(g.dim)
    return TrigExpansion._from_canonical(
        g.dim, {p: (K, _freeze(coef * factor)) for p, K, coef in g.blocks()}
    )


def axpy(alpha: float, g: TrigExpansion, beta: float, h: TrigExpansion) -> TrigExpansion:
    """Coefficient-wise alpha*g + beta*h with zero removal."""
    _check_same_dim(g, h)
    pieces: Dict[str, List[Block]] = {}
    for factor, expansion in ((alpha, g), (beta, h)):
        if factor == 0.0:
            continue
        for parity, K, coef in expansion.blocks():
            pieces.setdefault(parity, []).append((K, coef * factor))
    return _assemble(g.dim, pieces)


def multiply(g: TrigExpansion, h: TrigExpansion) -> TrigExpansion:
    """Exact product via per-coordinate product-to-sum identities.

    Raises:
        FrequencyOverflowError: If a resulting frequency leaves the 32-bit range
    """
    _check_same_dim(g, h)
    dim = g.dim
    signs = sign_combinations(dim)
    pieces: Dict[str, List[Block]] = {}
    for p, Kg, cg in g.blocks():
        for q, Kh, ch in h.blocks():
            result, plus, minus = product_rule(p, q)
            factors = np.where(signs > 0, plus, minus).prod(axis=1)
            per_row = Kh.shape[0] * signs.shape[0] * dim
            step = max(1, _CHUNK_ELEMENTS // max(1, per_row))
            for start in range(0, Kg.shape[0], step):
                Kg_part = Kg[start : start + step]
                V = Kg_part[:, None, None, :] + signs[None, None, :, :] * Kh[None, :, None, :]
                C = cg[start : start + step, None, None] * ch[None, :, None] * factors[None, None, :]
                pieces.setdefault(result, []).append((V.reshape(-1, dim), C.reshape(-1)))
    return _assemble(dim, pieces)


def derivative(g: TrigExpansion, i: int) -> TrigExpansion:
    """Partial derivative with respect to coordinate ``i`` (0-based)."""
    if not 0 <= i < g.dim:
        raise PreconditionError(f"coordinate {i} out of range for dimension {g.dim}")
    pieces: Dict[str, List[Block]] = {}
    for parity, K, coef in g.blocks():
        k_i = K[:, i]
        if parity[i] == SIN:
            flipped, factor = COS, np.pi * k_i
        else:
            flipped, factor = SIN, -np.pi * k_i
        keep = k_i != 0
        if not np.any(keep):
            continue
        new_parity = parity[:i] + flipped + parity[i + 1 :]
        pieces.setdefault(new_parity, []).append((K[keep], (coef * factor)[keep]))
    return _assemble(g.dim, pieces)


def _spectral_factor(K: np.ndarray) -> np.ndarray:
    return 1.0 + np.pi**2 * (K.astype(float) ** 2).sum(axis=1)


def shifted_laplacian(g: TrigExpansion) -> TrigExpansion:
    """Forward operator (I - Laplace) g, diagonal on every basis family."""
    return TrigExpansion._from_canonical(
        g.dim, {p: (K, _freeze(coef * _spectral_factor(K))) for p, K, coef in g.blocks()}
    )


def project_admissible(
    g: TrigExpansion, bc: BoundaryCondition, rel_tol: float = PARITY_TOLERANCE
) -> TrigExpansion:
    """Keep only the admissible block, dropping wrong-parity dust.

    Raises:
        ParityViolationError: If a wrong-parity coefficient exceeds
            ``rel_tol`` times the largest coefficient
    """
    target = admissible_parity(bc, g.dim)
    scale_ = g.max_abs_coefficient()
    kept: Dict[str, Block] = {}
    for parity, K, coef in g.blocks():
        if parity == target:
            kept[parity] = (K, coef)
            continue
        worst = float(np.abs(coef).max())
        if worst > rel_tol * scale_:
            row = K[int(np.abs(coef).argmax())]
            raise ParityViolationError(
                f"term ({parity}, {tuple(int(e) for e in row)}) with coefficient {worst:.3g} "
                f"is outside the {bc.value} family {target!r}"
            )
        logger.debug("Dropping %d wrong-parity terms (max %.3g) from %s block", K.shape[0], worst, parity)
    return TrigExpansion._from_canonical(g.dim, kept)


def inv_shifted_laplacian(
    g: TrigExpansion, bc: BoundaryCondition, rel_tol: float = PARITY_TOLERANCE
) -> TrigExpansion:
    """Spectral inverse of (I - Laplace): a_k -> a_k / (1 + pi^2 ||k||^2).

    Raises:
        ParityViolationError: If ``g`` is not in the admissible family of ``bc``
    """
    admissible = project_admissible(g, bc, rel_tol)
    return TrigExpansion._from_canonical(
        g.dim,
        {p: (K, _freeze(coef / _spectral_factor(K))) for p, K, coef in admissible.blocks()},
    )


def integrate(g: TrigExpansion) -> float:
    """Exact integral over the unit cube."""
    return float(sum(coef @ integrate_basis_block(p, K) for p, K, coef in g.blocks()))


def _row_view(K: np.ndarray) -> np.ndarray:
    K = np.ascontiguousarray(K, dtype=np.int64)
    return K.view(np.dtype((np.void, K.dtype.itemsize * K.shape[1]))).reshape(-1)


def _same_family_inner(parity: ParityVector, Kg, cg, Kh, ch) -> float:
    _, ig, ih = np.intersect1d(_row_view(Kg), _row_view(Kh), return_indices=True)
    if ig.size == 0:
        return 0.0
    return float((cg[ig] * ch[ih]) @ l2_basis_norm_sq_block(parity, Kg[ig]))


def inner(g: TrigExpansion, h: TrigExpansion) -> float:
    """Exact L2 inner product over the unit cube.

    Blocks sharing a parity vector use orthogonality; other block pairs go
    through the product and the exact integral.
    """
    _check_same_dim(g, h)
    total = 0.0
    for p, Kg, cg in g.blocks():
        for q, Kh, ch in h.blocks():
            if p == q:
                total += _same_family_inner(p, Kg, cg, Kh, ch)
            else:
                left = TrigExpansion._from_canonical(g.dim, {p: (Kg, cg)})
                right = TrigExpansion._from_canonical(g.dim, {q: (Kh, ch)})
                total += integrate(multiply(left, right))
    return total


def l2_norm(g: TrigExpansion) -> float:
    if len(g.parities) <= 1:
        return float(np.sqrt(sum((coef**2) @ l2_basis_norm_sq_block(p, K) for p, K, coef in g.blocks())))
    return float(np.sqrt(max(inner(g, g), 0.0)))


def h1_norm(g: TrigExpansion) -> float:
    """H1 norm: sqrt(||g||^2 + sum_i ||d_i g||^2)."""
    if len(g.parities) <= 1:
        return float(
            np.sqrt(
                sum(
                    (coef**2) @ (l2_basis_norm_sq_block(p, K) * _spectral_factor(K))
                    for p, K, coef in g.blocks()
                )
            )
        )
    squared = l2_norm(g) ** 2 + sum(l2_norm(derivative(g, i)) ** 2 for i in range(g.dim))
    return float(np.sqrt(squared))


def hminus1_upper(f: TrigExpansion) -> float:
    """Upper bound ||f||_{L2} / (pi sqrt(d)) on the H^-1 norm."""
    return l2_norm(f) / (np.pi * np.sqrt(f.dim))


class PruneResult(NamedTuple):
    expansion: TrigExpansion
    removed_mass: float


def prune(g: TrigExpansion, tol: float) -> PruneResult:
    """Drop terms with |a_k| < tol and report the weight-2 mass removed."""
    if tol < 0:
        raise PreconditionError(f"prune tolerance must be non-negative, got {tol}")
    if tol == 0:
        return PruneResult(g, 0.0)
    kept: Dict[str, Block] = {}
    removed = 0.0
    for parity, K, coef in g.blocks():
        small = np.abs(coef) < tol
        if np.any(small):
            removed += float(np.abs(coef[small]) @ _weights(K[small], 2))
        if np.all(small):
            continue
        kept[parity] = (_freeze(K[~small]), _freeze(coef[~small])) if np.any(small) else (K, coef)
    return PruneResult(TrigExpansion._from_canonical(g.dim, kept), removed)


# Text format: "dim d" header, then one "parity (k1,...,kd) coefficient" line per term.

_TERM_RE = re.compile(r"^([sc]+)\s+\(\s*([0-9,\s]*)\)\s+(\S+)$")


def format_real(value: float) -> str:
    return format(float(value), ".17g")


def format_terms(g: TrigExpansion) -> List[str]:
    return [
        f"{parity} ({','.join(str(e) for e in k)}) {format_real(value)}"
        for parity, k, value in g.terms()
    ]


def format_expansion(g: TrigExpansion) -> str:
    return "\n".join([f"dim {g.dim}", *format_terms(g)]) + "\n"


def parse_term(line: str, dim: Optional[int] = None) -> Tuple[ParityVector, Tuple[int, ...], float]:
    match = _TERM_RE.match(line.strip())
    if not match:
        raise ExpansionFormatError(f"cannot parse term line {line!r}")
    parity, index_text, value_text = match.groups()
    try:
        index = tuple(int(e) for e in index_text.replace(" ", "").split(",") if e)
        value = float(value_text)
    except ValueError as e:
        raise ExpansionFormatError(f"cannot parse term line {line!r}: {e}") from None
    if len(index) != len(parity) or (dim is not None and len(parity) != dim):
        raise ExpansionFormatError(f"term {line!r} does not match dimension {dim}")
    return parity, index, value


def parse_expansion(text: str, dim: Optional[int] = None) -> TrigExpansion:
    """Parse the text format produced by :func:`format_expansion`."""
    terms = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("dim"):
            try:
                header_dim = int(line.split()[1])
            except (IndexError, ValueError):
                raise ExpansionFormatError(f"bad header line {raw!r}") from None
            if dim is not None and dim != header_dim:
                raise ExpansionFormatError(f"header dimension {header_dim} differs from expected {dim}")
            dim = header_dim
            continue
        terms.append(parse_term(line, dim))
        dim = len(terms[-1][0])
    if dim is None:
        raise ExpansionFormatError("expansion text has neither a dim header nor terms")
    return TrigExpansion.from_terms(dim, terms)
