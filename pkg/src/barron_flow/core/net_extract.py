"""
Two-layer network extraction from trigonometric expansions.

Cosine networks are drawn from the explicit probability measure attached to
an expansion; ReLU networks go through piecewise-linear interpolation of 1D
profiles, a convex dictionary and multinomial (Maurey) sampling.
"""

import concurrent.futures
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from .barron_space import TrigExpansion, barron_norm, derivative, h1_norm
from .elliptic_problem import relu_factor
from .errors import (
    DimensionMismatchError,
    EmptyMeasureError,
    NoStationaryPointError,
    PreconditionError,
)
from .oracle_verify import default_scheme, quadrature
from .trig_core import sign_combinations, sin_mask

logger = logging.getLogger(__name__)


class Activation(Enum):
    COSINE = "cosine"
    RELU = "relu"


class Normalization(Enum):
    MEAN = "mean"
    SUM = "sum"


@dataclass(frozen=True, eq=False)
class TwoLayerNet:
    """x -> offset + s * sum_i a_i sigma(w_i . x + b_i), s = 1/k (MEAN) or 1 (SUM)."""

    activation: Activation
    outer: np.ndarray
    inner: np.ndarray
    bias: np.ndarray
    offset: float = 0.0
    normalization: Normalization = Normalization.MEAN

    def __post_init__(self):
        outer = np.asarray(self.outer, dtype=float).reshape(-1)
        inner = np.asarray(self.inner, dtype=float)
        bias = np.asarray(self.bias, dtype=float).reshape(-1)
        if inner.ndim != 2 or inner.shape[0] != outer.shape[0] or bias.shape[0] != outer.shape[0]:
            raise PreconditionError("network arrays have inconsistent shapes")
        for name, value in (("outer", outer), ("inner", inner), ("bias", bias)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "offset", float(self.offset))

    @property
    def dim(self) -> int:
        return int(self.inner.shape[1])

    @property
    def width(self) -> int:
        return int(self.outer.shape[0])

    @property
    def scale(self) -> float:
        if self.normalization is Normalization.MEAN:
            return 1.0 / self.width if self.width else 0.0
        return 1.0

    @classmethod
    def constant(cls, activation: Activation, dim: int, value: float = 0.0) -> "TwoLayerNet":
        """Width-0 network x -> value."""
        return cls(activation, np.zeros(0), np.zeros((0, dim)), np.zeros(0), value, Normalization.SUM)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TwoLayerNet):
            return NotImplemented
        return (
            self.activation is other.activation
            and self.normalization is other.normalization
            and self.offset == other.offset
            and np.array_equal(self.outer, other.outer)
            and np.array_equal(self.inner, other.inner)
            and np.array_equal(self.bias, other.bias)
        )

    __hash__ = None


def _points(net: TwoLayerNet, x) -> Tuple[np.ndarray, bool]:
    points = np.asarray(x, dtype=float)
    single = points.ndim <= 1
    points = np.atleast_2d(points)
    if points.shape[1] != net.dim:
        raise DimensionMismatchError(f"points have dimension {points.shape[1]}, net has {net.dim}")
    return points, single


def eval_net(net: TwoLayerNet, x):
    """Network value at one point (d,) or a batch (n, d)."""
    points, single = _points(net, x)
    z = points @ net.inner.T + net.bias
    if net.activation is Activation.COSINE:
        activated = np.cos(z)
    else:
        activated = np.maximum(z, 0.0)
    values = net.offset + net.scale * (activated @ net.outer)
    return float(values[0]) if single else values


def grad_net(net: TwoLayerNet, x):
    """Gradient at one point (d,) or a batch (n, d); ReLU uses derivative 0 at the kink."""
    points, single = _points(net, x)
    z = points @ net.inner.T + net.bias
    if net.activation is Activation.COSINE:
        slope = -np.sin(z)
    else:
        slope = (z > 0.0).astype(float)
    gradient = net.scale * ((slope * net.outer) @ net.inner)
    return gradient[0] if single else gradient


# Sampling measure


@dataclass(frozen=True, eq=False)
class SamplingMeasure:
    """Discrete measure over cosine atoms (Z, pi*omega, theta_omega) with weights |c_omega|/Z."""

    dim: int
    weights: np.ndarray
    modes: np.ndarray
    magnitudes: np.ndarray
    phases: np.ndarray
    amplitude: float

    @property
    def frequencies(self) -> np.ndarray:
        return np.pi * self.modes

    @property
    def size(self) -> int:
        return int(self.weights.shape[0])

    def is_empty(self) -> bool:
        return self.size == 0

    @classmethod
    def empty(cls, dim: int) -> "SamplingMeasure":
        return cls(dim, np.zeros(0), np.zeros((0, dim), dtype=np.int64), np.zeros(0), np.zeros(0), 0.0)


def build_measure(g: TrigExpansion) -> SamplingMeasure:
    """Rewrite g as sum_omega |c_omega| cos(pi omega . x + theta_omega) and normalize.

    Every term is unfolded over its 2^d sign combinations through
    cos t = (e^{it} + e^{-it})/2 and sin t = (e^{it} - e^{-it})/(2i);
    coincident signed frequencies are merged. The zero expansion yields the
    empty measure.
    """
    dim = g.dim
    signs = sign_combinations(dim)
    modes, coefficients = [], []
    for parity, K, coef in g.blocks():
        mask = sin_mask(parity)
        # per-coordinate factor 1/2 (cos) or s/(2i) = -i s/2 (sin)
        factors = np.where(mask, -0.5j * signs, 0.5 + 0j).prod(axis=1)
        modes.append((K[:, None, :] * signs[None, :, :]).reshape(-1, dim))
        coefficients.append((coef[:, None] * factors[None, :]).reshape(-1))
    if not modes:
        return SamplingMeasure.empty(dim)
    omega = np.concatenate(modes, axis=0)
    values = np.concatenate(coefficients)
    unique, inverse = np.unique(omega, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    merged = np.bincount(inverse, weights=values.real, minlength=unique.shape[0]) + 1j * np.bincount(
        inverse, weights=values.imag, minlength=unique.shape[0]
    )
    magnitudes = np.abs(merged)
    keep = magnitudes > 1e-15 * magnitudes.max()
    unique, merged, magnitudes = unique[keep], merged[keep], magnitudes[keep]
    total = float(magnitudes.sum())
    return SamplingMeasure(
        dim=dim,
        weights=magnitudes / total,
        modes=unique.astype(np.int64),
        magnitudes=magnitudes,
        phases=np.arctan2(merged.imag, merged.real),
        amplitude=total,
    )


def measure_expectation(measure: SamplingMeasure, x) -> np.ndarray:
    """E[a cos(w . x + b)] under the measure, pointwise."""
    points = np.atleast_2d(np.asarray(x, dtype=float))
    z = points @ measure.frequencies.T + measure.phases
    return measure.amplitude * (np.cos(z) @ measure.weights)


def derive_generator(seed: int, trial: int = 0) -> np.random.Generator:
    """Counter-based stream for one (seed, trial) pair."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(trial)])))


def _draw(measure: SamplingMeasure, k: int, rng: np.random.Generator) -> np.ndarray:
    return rng.choice(measure.size, size=k, p=measure.weights)


def sample_cosine_net(measure: SamplingMeasure, k: int, seed: int, trial: int = 0) -> TwoLayerNet:
    """k independent draws from the measure, mean-normalized.

    Raises:
        EmptyMeasureError: For the measure of the zero function
    """
    if k < 1:
        raise PreconditionError(f"k must be >= 1, got {k}")
    if measure.is_empty():
        raise EmptyMeasureError("cannot sample a network from the zero function's measure")
    picks = _draw(measure, k, derive_generator(seed, trial))
    return TwoLayerNet(
        activation=Activation.COSINE,
        outer=np.full(k, measure.amplitude),
        inner=measure.frequencies[picks],
        bias=measure.phases[picks],
        normalization=Normalization.MEAN,
    )


class DrawSelection(NamedTuple):
    net: TwoLayerNet
    errors: List[float]
    best_trial: int


def best_of_draws(
    g: TrigExpansion, k: int, trials: int, seed: int, workers: Optional[int] = None
) -> DrawSelection:
    """Sample ``trials`` cosine nets and keep the one with the smallest exact H1 error."""
    if trials < 1:
        raise PreconditionError(f"trials must be >= 1, got {trials}")
    measure = build_measure(g)

    def run_trial(trial: int) -> Tuple[TwoLayerNet, float]:
        net = sample_cosine_net(measure, k, seed, trial)
        return net, h1_net_error(net, g).value

    results: List[Optional[Tuple[TwoLayerNet, float]]] = [None] * trials
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as executor:
        future_to_index = {executor.submit(run_trial, trial): trial for trial in range(trials)}
        for future in concurrent.futures.as_completed(future_to_index):
            results[future_to_index[future]] = future.result()

    errors = [error for _, error in results]
    best = int(np.argmin(errors))
    logger.debug("best of %d draws: trial %d, error %.6g (mean %.6g)", trials, best, errors[best], np.mean(errors))
    return DrawSelection(results[best][0], errors, best)


# 1D piecewise-linear interpolation


class Profile1D(NamedTuple):
    """z -> amplitude * cos(frequency * z + phase)."""

    frequency: float
    phase: float
    amplitude: float

    def value(self, z):
        return self.amplitude * np.cos(self.frequency * np.asarray(z) + self.phase)

    def slope(self, z):
        return -self.amplitude * self.frequency * np.sin(self.frequency * np.asarray(z) + self.phase)

    def bound(self) -> float:
        """Upper bound on |g|, |g'| and |g''|."""
        return abs(self.amplitude) * max(1.0, abs(self.frequency), self.frequency**2)


@dataclass(frozen=True, eq=False)
class ReluInterpolant:
    """c + sum_i a_i ReLU(eps_i z + b_i) on [-sqrt(d), sqrt(d)]."""

    constant: float
    outer: np.ndarray
    signs: np.ndarray
    biases: np.ndarray
    knots: np.ndarray
    stationary: float
    bound: float
    half_width: float

    def evaluate(self, z):
        z = np.asarray(z, dtype=float)
        return self.constant + np.maximum(z[..., None] * self.signs + self.biases, 0.0) @ self.outer

    def derivative(self, z):
        z = np.asarray(z, dtype=float)
        active = (z[..., None] * self.signs + self.biases) > 0.0
        return (active * self.signs) @ self.outer

    def h1_error(self, profile: Profile1D, points: int = 16) -> float:
        """H1 distance to the profile on the interval, Gauss-Legendre per knot interval."""
        nodes, weights = np.polynomial.legendre.leggauss(points)
        left, right = self.knots[:-1], self.knots[1:]
        half = (right - left) / 2.0
        z = ((left + right) / 2.0)[:, None] + half[:, None] * nodes[None, :]
        w = half[:, None] * weights[None, :]
        value_gap = self.evaluate(z) - profile.value(z)
        slope_gap = self.derivative(z) - profile.slope(z)
        return float(np.sqrt(np.sum(w * (value_gap**2 + slope_gap**2))))


def _stationary_point(profile: Profile1D, half_width: float) -> float:
    # frequency * z + phase = n pi; the nearest candidates to 0 sit around n = phase / pi
    centre = round(profile.phase / math.pi)
    candidates = sorted(
        ((n * math.pi - profile.phase) / profile.frequency for n in range(centre - 2, centre + 3)),
        key=abs,
    )
    for z in candidates:
        if -half_width < z < half_width:
            return z
    raise NoStationaryPointError(
        f"profile with frequency {profile.frequency:.6g} has no stationary point in (-{half_width:.6g}, {half_width:.6g})"
    )


def relu_interp_1d(profile: Profile1D, m: int, d: int) -> ReluInterpolant:
    """Piecewise-linear interpolation of a profile in ReLU form.

    The grid has 2m intervals on [-sqrt(d), sqrt(d)] with the middle knot at
    the stationary point nearest 0. A zero-frequency profile is a constant and
    needs no ReLU units.

    Raises:
        NoStationaryPointError: If no interior stationary point exists
    """
    if m < 1 or d < 1:
        raise PreconditionError(f"need m >= 1 and d >= 1, got m={m}, d={d}")
    half_width = math.sqrt(d)
    bound = profile.bound()
    if profile.frequency == 0.0:
        value = float(profile.value(0.0))
        empty = np.zeros(0)
        return ReluInterpolant(value, empty, empty, empty, np.array([-half_width, half_width]), 0.0, bound, half_width)

    alpha = _stationary_point(profile, half_width)
    h_left = (alpha + half_width) / m
    h_right = (half_width - alpha) / m
    knots = np.concatenate(
        [-half_width + h_left * np.arange(m + 1), alpha + h_right * np.arange(1, m + 1)]
    )
    knots[m] = alpha
    knots[-1] = half_width
    g = profile.value(knots)

    outer = np.empty(2 * m)
    for i in range(1, m):
        outer[i - 1] = (g[i - 1] - 2.0 * g[i] + g[i + 1]) / h_left
    outer[m - 1] = (g[m - 1] - g[m]) / h_left
    outer[m] = (g[m + 1] - g[m]) / h_right
    for i in range(m + 2, 2 * m + 1):
        outer[i - 1] = (g[i - 2] - 2.0 * g[i - 1] + g[i]) / h_right

    signs = np.concatenate([-np.ones(m), np.ones(m)])
    biases = np.concatenate([knots[1 : m + 1], -knots[m : 2 * m]])
    return ReluInterpolant(float(g[m]), outer, signs, biases, knots, alpha, bound, half_width)


# ReLU network pipeline


@dataclass(frozen=True, eq=False)
class ReluDictionary:
    """Convex decomposition of g - a_0 into single-ReLU atoms."""

    base: float
    weights: np.ndarray
    constants: np.ndarray
    outer: np.ndarray
    inner: np.ndarray
    bias: np.ndarray
    mass: float


def relu_dictionary(g: TrigExpansion, m: int) -> ReluDictionary:
    """Build the weighted single-ReLU dictionary of g.

    Each signed frequency omega != 0 gives the atom
    (A_g / (1 + pi^2 |omega|^2)) cos(pi |omega| z + theta), z = (omega/|omega|) . x,
    with convex weight |c_omega| (1 + pi^2 |omega|^2) / A_g. Its interpolant
    c + sum_i a_i ReLU(...) is split into atoms c + S sign(a_i) ReLU(...) with
    weights |a_i|/S, S = sum_i |a_i|.
    """
    d = g.dim
    measure = build_measure(g)
    zero = np.all(measure.modes == 0, axis=1)
    base = float(np.sum(measure.magnitudes[zero] * np.cos(measure.phases[zero])))
    modes = measure.modes[~zero]
    magnitudes = measure.magnitudes[~zero]
    phases = measure.phases[~zero]
    if modes.shape[0] == 0:
        empty = np.zeros(0)
        return ReluDictionary(base, empty, empty, empty, np.zeros((0, d)), empty, 0.0)

    lengths = np.sqrt((modes.astype(float) ** 2).sum(axis=1))
    spectral = 1.0 + (np.pi * lengths) ** 2
    mass = float(magnitudes @ spectral)

    weights, constants, outer, inner, bias = [], [], [], [], []
    for omega, length, factor, magnitude, phase in zip(modes, lengths, spectral, magnitudes, phases):
        profile = Profile1D(np.pi * length, float(phase), mass / factor)
        interpolant = relu_interp_1d(profile, m, d)
        direction = omega / length
        atom_weight = magnitude * factor / mass
        total = float(np.abs(interpolant.outer).sum())
        if total == 0.0:
            weights.append(atom_weight)
            constants.append(interpolant.constant)
            outer.append(0.0)
            inner.append(direction)
            bias.append(0.0)
            continue
        for a_i, eps_i, b_i in zip(interpolant.outer, interpolant.signs, interpolant.biases):
            if a_i == 0.0:
                continue
            weights.append(atom_weight * abs(a_i) / total)
            constants.append(interpolant.constant)
            outer.append(math.copysign(total, a_i))
            inner.append(eps_i * direction)
            bias.append(b_i)

    weights = np.array(weights)
    return ReluDictionary(
        base=base,
        weights=weights / weights.sum(),
        constants=np.array(constants),
        outer=np.array(outer),
        inner=np.array(inner),
        bias=np.array(bias),
        mass=mass,
    )


def default_pieces(k: int) -> int:
    """m = ceil(sqrt(k))."""
    return max(1, math.ceil(math.sqrt(k)))


def build_relu_net(g: TrigExpansion, k: int, m: Optional[int] = None, seed: int = 0, trial: int = 0) -> TwoLayerNet:
    """Sample k dictionary atoms with their convex weights.

    R_k(x) = c + sum_j a_j ReLU(w_j . x + b_j) with c = a_0 + mean of the atom
    constants and a_j = S_j sign_j / k.
    """
    if k < 1:
        raise PreconditionError(f"k must be >= 1, got {k}")
    m = default_pieces(k) if m is None else m
    dictionary = relu_dictionary(g, m)
    if dictionary.weights.size == 0:
        return TwoLayerNet.constant(Activation.RELU, g.dim, dictionary.base)
    rng = derive_generator(seed, trial)
    picks = rng.choice(dictionary.weights.size, size=k, p=dictionary.weights)
    return TwoLayerNet(
        activation=Activation.RELU,
        outer=dictionary.outer[picks] / k,
        inner=dictionary.inner[picks],
        bias=dictionary.bias[picks],
        offset=dictionary.base + float(dictionary.constants[picks].mean()),
        normalization=Normalization.SUM,
    )


@dataclass
class BoxAudit:
    outer_sum: float
    outer_bound: float
    max_inner_norm_error: float
    max_bias: float
    bias_bound: float
    offset: float
    offset_bound: float

    @property
    def holds(self) -> bool:
        return (
            self.outer_sum <= self.outer_bound
            and self.max_inner_norm_error <= 1e-12
            and self.max_bias <= self.bias_bound * (1.0 + 1e-15)
            and abs(self.offset) <= self.offset_bound
        )


def relu_box_audit(net: TwoLayerNet, norm: float) -> BoxAudit:
    """Coefficient boxes sum|a_i| <= 8 sqrt(d) B, |w_i| = 1, |b_i| <= sqrt(d), |c| <= 2B."""
    root_d = math.sqrt(net.dim)
    inner_norms = np.sqrt((net.inner**2).sum(axis=1)) if net.width else np.zeros(0)
    return BoxAudit(
        outer_sum=float(np.abs(net.outer).sum() * net.scale),
        outer_bound=8.0 * root_d * norm,
        max_inner_norm_error=float(np.abs(inner_norms - 1.0).max()) if net.width else 0.0,
        max_bias=float(np.abs(net.bias).max()) if net.width else 0.0,
        bias_bound=root_d,
        offset=net.offset,
        offset_bound=2.0 * norm,
    )


# H1 error


class NetError(NamedTuple):
    value: float
    std_error: float = 0.0


def _cube_cos_integral(u: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Integral of cos(u . x + phi) over the unit cube; u has shape (..., d)."""
    return np.cos(phi + u.sum(axis=-1) / 2.0) * np.sinc(u / (2.0 * np.pi)).prod(axis=-1)


def _canonical_cosines(
    weights: np.ndarray, frequencies: np.ndarray, phases: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Merge cosine terms that are the same function (cos is even)."""
    merged: Dict[Tuple[float, ...], float] = {}
    for beta, v, phi in zip(weights, frequencies, phases):
        nonzero = np.flatnonzero(v)
        if nonzero.size == 0:
            beta, phi = beta * math.cos(phi), 0.0
        elif v[nonzero[0]] < 0:
            v, phi = -v, -phi
        phi = math.remainder(float(phi), 2.0 * math.pi)
        if phi <= -math.pi:
            phi += 2.0 * math.pi
        key = (*(float(e) + 0.0 for e in v), phi + 0.0)
        merged[key] = merged.get(key, 0.0) + float(beta)
    keys = [key for key, beta in merged.items() if beta != 0.0]
    if not keys:
        return np.zeros(0), np.zeros((0, frequencies.shape[1])), np.zeros(0)
    table = np.array(keys)
    return np.array([merged[key] for key in keys]), table[:, :-1], table[:, -1]


def cosine_h1_norm(weights: np.ndarray, frequencies: np.ndarray, phases: np.ndarray) -> float:
    """Closed-form H1 norm of sum_j beta_j cos(v_j . x + phi_j) over the unit cube."""
    beta, v, phi = _canonical_cosines(weights, frequencies, phases)
    if beta.size == 0:
        return 0.0
    diff = _cube_cos_integral(v[:, None, :] - v[None, :, :], phi[:, None] - phi[None, :])
    summ = _cube_cos_integral(v[:, None, :] + v[None, :, :], phi[:, None] + phi[None, :])
    dots = v @ v.T
    gram = 0.5 * (diff + summ) + dots * 0.5 * (diff - summ)
    return float(math.sqrt(max(beta @ gram @ beta, 0.0)))


def _difference_terms(net: TwoLayerNet, g: TrigExpansion):
    measure = build_measure(g)
    weights = np.concatenate([net.outer * net.scale, -measure.magnitudes])
    frequencies = np.concatenate([net.inner, measure.frequencies], axis=0)
    phases = np.concatenate([net.bias, measure.phases])
    if net.offset:
        weights = np.append(weights, net.offset)
        frequencies = np.vstack([frequencies, np.zeros((1, net.dim))])
        phases = np.append(phases, 0.0)
    return weights, frequencies, phases


def _piecewise_integral_1d(net: TwoLayerNet, integrand, points: int = 16) -> float:
    """Gauss-Legendre on each interval between the kinks of a 1D ReLU net."""
    active = net.inner[:, 0] != 0.0
    kinks = -net.bias[active] / net.inner[active, 0]
    breaks = np.unique(np.concatenate([[0.0, 1.0], kinks[(kinks > 0.0) & (kinks < 1.0)]]))
    x, w = np.polynomial.legendre.leggauss(points)
    left, width = breaks[:-1, None], np.diff(breaks)[:, None]
    nodes = (left + width * (x + 1.0) / 2.0).reshape(-1, 1)
    weights = (width * w / 2.0).reshape(-1)
    return float(integrand(nodes) @ weights)


def h1_net_error(net: TwoLayerNet, g: TrigExpansion, scheme=None) -> NetError:
    """||net - g||_{H1} over the unit cube.

    Cosine nets use the closed form unless a quadrature scheme is forced; ReLU
    nets use composite tensor Gauss-Legendre for d <= 3 and randomized QMC
    (with standard error) above.
    """
    if net.dim != g.dim:
        raise DimensionMismatchError(f"net has dimension {net.dim}, expansion has {g.dim}")
    if net.width == 0 and scheme is None:
        return NetError(h1_norm(g - TrigExpansion.constant(g.dim, net.offset)))
    if net.activation is Activation.COSINE and scheme is None:
        return NetError(cosine_h1_norm(*_difference_terms(net, g)))

    gradient_g = [derivative(g, i) for i in range(g.dim)]

    def integrand(points: np.ndarray) -> np.ndarray:
        gap = eval_net(net, points) - g.evaluate(points)
        slope = grad_net(net, points) - np.stack([dg.evaluate(points) for dg in gradient_g], axis=1)
        return gap**2 + (slope**2).sum(axis=1)

    if net.activation is Activation.RELU and g.dim == 1 and scheme is None:
        return NetError(math.sqrt(max(_piecewise_integral_1d(net, integrand), 0.0)))

    result = quadrature(integrand, g.dim, scheme or default_scheme(g.dim, kinked=True))
    value = math.sqrt(max(result.value, 0.0))
    std_error = result.error / (2.0 * value) if value > 0 else math.sqrt(result.error)
    return NetError(value, std_error)


def expected_relu_error_bound(g: TrigExpansion, k: int) -> float:
    """sqrt(q(d) ||g||_B2^2 / k), the sampling part of the ReLU bound."""
    return math.sqrt(relu_factor(g.dim) / k) * barron_norm(g, 2, strict=False)
