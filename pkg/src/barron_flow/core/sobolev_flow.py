"""
Sobolev gradient flow u_{t+1} = u_t - alpha (I - Laplace)^{-1}(L u_t - f) from u_0 = 0.
Tracks H1 errors, Barron norms and energies, and checks the norm recursion and
contraction certificates against a run.
"""

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, NamedTuple, Optional

from .barron_space import (
    TrigExpansion,
    axpy,
    barron_norm,
    h1_norm,
    hminus1_upper,
    inner,
    prune,
)
from .elliptic_problem import (
    ConstantLedger,
    EllipticProblem,
    apply_operator,
    constants,
    residual,
)
from .errors import FlowDivergenceError, PreconditionError

logger = logging.getLogger(__name__)

DEFAULT_PRUNE_TOL = 1e-14
DIVERGENCE_FACTOR = 1e6

ProgressCallback = Callable[[str, float], None]


class FlowStep(NamedTuple):
    iterate: TrigExpansion
    residual: TrigExpansion
    pruned_mass: float


def energy(problem: EllipticProblem, u: TrigExpansion) -> float:
    """E(u) = 1/2 <u, L u> - <f, u>, exact in coefficient space."""
    return 0.5 * inner(u, apply_operator(problem, u)) - inner(problem.f, u)


def step(
    problem: EllipticProblem,
    u: TrigExpansion,
    alpha: float,
    prune_tol: float = DEFAULT_PRUNE_TOL,
) -> FlowStep:
    """One flow step followed by relative pruning.

    Args:
        problem: The elliptic problem
        u: Current iterate (admissible family)
        alpha: Step size, alpha >= 0
        prune_tol: Pruning threshold relative to the largest coefficient

    Returns:
        New iterate, the residual at ``u`` and the pruned weight-2 mass
    """
    if alpha < 0:
        raise PreconditionError(f"step size must be non-negative, got {alpha}")
    gradient = residual(problem, u)
    moved = axpy(1.0, u, -alpha, gradient)
    pruned = prune(moved, prune_tol * moved.max_abs_coefficient())
    return FlowStep(pruned.expansion, gradient, pruned.removed_mass)


@dataclass
class FlowTrace:
    """Record of a flow run; index t refers to iterate u_t."""

    step_size: float
    alpha_star: float
    iterates: List[TrigExpansion] = field(default_factory=list)
    h1_errors: List[float] = field(default_factory=list)
    barron_norms: List[float] = field(default_factory=list)
    support_sizes: List[int] = field(default_factory=list)
    energies: List[float] = field(default_factory=list)
    residual_norms: List[float] = field(default_factory=list)
    step_pruned: List[float] = field(default_factory=list)
    pruned_mass: List[float] = field(default_factory=list)
    stop_reason: str = ""
    stopped_early: bool = False
    reference_accuracy: float = 0.0

    @property
    def steps(self) -> int:
        return len(self.iterates) - 1

    @property
    def final(self) -> TrigExpansion:
        return self.iterates[-1]

    @property
    def alpha_is_optimal(self) -> bool:
        return math.isclose(self.step_size, self.alpha_star, rel_tol=1e-12)

    def record(
        self,
        problem: EllipticProblem,
        u: TrigExpansion,
        reference: Optional[TrigExpansion],
        step_pruned: float,
    ) -> None:
        self.iterates.append(u)
        self.barron_norms.append(barron_norm(u, 2))
        self.support_sizes.append(u.support_size)
        self.energies.append(energy(problem, u))
        self.step_pruned.append(step_pruned)
        previous = self.pruned_mass[-1] if self.pruned_mass else 0.0
        self.pruned_mass.append(previous + step_pruned)
        if reference is not None:
            self.h1_errors.append(h1_norm(axpy(1.0, u, -1.0, reference)))

    def rows(self) -> List[Dict[str, float]]:
        rows = []
        for t in range(len(self.iterates)):
            rows.append(
                {
                    "t": t,
                    "h1_error": self.h1_errors[t] if self.h1_errors else math.nan,
                    "barron_norm_w2": self.barron_norms[t],
                    "support_size": self.support_sizes[t],
                    "pruned_mass": self.pruned_mass[t],
                    "energy": self.energies[t],
                    "residual_h1": self.residual_norms[t] if t < len(self.residual_norms) else math.nan,
                }
            )
        return rows

    def write_csv(self, path: Path) -> None:
        """Write per-iteration rows with 17 significant digits."""
        rows = self.rows()
        columns = ["t", "h1_error", "barron_norm_w2", "support_size", "pruned_mass", "energy", "residual_h1"]
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(columns)
            for row in rows:
                writer.writerow(
                    [row[c] if isinstance(row[c], int) else format(row[c], ".17g") for c in columns]
                )


def solve(
    problem: EllipticProblem,
    eps: float,
    max_T: Optional[int] = None,
    alpha: Optional[float] = None,
    reference: Optional[TrigExpansion] = None,
    reference_accuracy: float = 0.0,
    prune_tol: float = DEFAULT_PRUNE_TOL,
    early_stop: bool = True,
    ledger: Optional[ConstantLedger] = None,
    progress_callback: Optional[ProgressCallback] = None,
) -> FlowTrace:
    """Run the flow for the prescribed step count T(eps).

    Args:
        problem: A validated problem
        eps: Target H1 accuracy
        max_T: Optional cap on the number of steps
        alpha: Step size override (certificates need alpha = alpha*)
        reference: Reference solution for per-step H1 errors
        reference_accuracy: H1 accuracy of ``reference`` (slack for checks)
        prune_tol: Relative pruning threshold
        early_stop: Stop once ||residual||_H1 < eps * lambda_min / 2 (heuristic)
        ledger: Precomputed constants at ``eps``
        progress_callback: Called as (message, fraction)

    Returns:
        The flow trace

    Raises:
        FlowDivergenceError: If the residual grows far beyond its initial size
    """
    ledger = ledger or constants(problem, eps)
    step_size = ledger.alpha_star if alpha is None else float(alpha)
    total = ledger.T if max_T is None else min(ledger.T, int(max_T))
    threshold = eps * ledger.lambda_min / 2.0
    growth_limit = DIVERGENCE_FACTOR * ledger.lambda_max / ledger.lambda_min

    def _update_progress(message: str, fraction: float) -> None:
        if progress_callback:
            progress_callback(message, fraction)

    trace = FlowTrace(step_size=step_size, alpha_star=ledger.alpha_star, reference_accuracy=reference_accuracy)
    u = TrigExpansion.zero(problem.dim)
    trace.record(problem, u, reference, 0.0)
    logger.info("%s: running up to %d flow steps with alpha=%.6g", problem.name, total, step_size)

    initial_norm = None
    for t in range(total):
        result = step(problem, u, step_size, prune_tol)
        norm = h1_norm(result.residual)
        trace.residual_norms.append(norm)
        if initial_norm is None:
            initial_norm = norm
        if not math.isfinite(norm) or (initial_norm > 0 and norm > growth_limit * initial_norm):
            raise FlowDivergenceError(
                f"{problem.name}: residual {norm:.3g} at step {t} grew from {initial_norm:.3g}; "
                "declared ellipticity constants are likely invalid"
            )
        if early_stop and norm < threshold:
            trace.stopped_early = True
            trace.stop_reason = f"residual {norm:.3g} < eps*lambda_min/2 at step {t} (heuristic)"
            logger.info("%s: %s", problem.name, trace.stop_reason)
            break
        u = result.iterate
        trace.record(problem, u, reference, result.pruned_mass)
        logger.debug(
            "%s: t=%d support=%d residual=%.3e", problem.name, t + 1, u.support_size, norm
        )
        _update_progress(f"step {t + 1}/{total}", (t + 1) / max(total, 1))

    if len(trace.residual_norms) < len(trace.iterates):
        trace.residual_norms.append(h1_norm(residual(problem, u)))
    if not trace.stop_reason:
        trace.stop_reason = f"completed {trace.steps} steps"
    _update_progress("done", 1.0)
    return trace


# Certificates


@dataclass
class RecursionReport:
    holds: bool
    certified: bool
    max_ratio: float
    violations: List[int] = field(default_factory=list)


def check_recursion(trace: FlowTrace, ledger: ConstantLedger) -> RecursionReport:
    """Check ||u_{t+1}||_B2 <= p_d ||u_t||_B2 + alpha (ell_f + |f_0|)/2 + pruned slack.

    The |f_0| term is the zero-mode correction of the weight-0 norm.

    Each step is checked against the recorded norm of the pruned u_t, so mass
    dropped at earlier steps is already inside ||u_t||_B2 and needs no p_d
    factor per remaining step. Pruning u_{t+1} removes whole terms and only
    lowers the left side; the pruned mass of that step enters unscaled.
    """
    alpha = trace.step_size
    offset = alpha * (ledger.ell_f + ledger.f_zero_mode) / 2.0
    p_d = ledger.p_d if trace.alpha_is_optimal else _p_for_alpha(ledger, alpha)
    max_ratio = 0.0
    violations = []
    for t in range(trace.steps):
        lhs = trace.barron_norms[t + 1]
        rhs = p_d * trace.barron_norms[t] + offset + trace.step_pruned[t + 1]
        ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else math.inf)
        max_ratio = max(max_ratio, ratio)
        if lhs > rhs * (1.0 + 1e-12) + 1e-15:
            violations.append(t)
    if violations:
        logger.warning("Norm recursion violated at steps %s", violations[:10])
    return RecursionReport(not violations, trace.alpha_is_optimal, max_ratio, violations)


def _p_for_alpha(ledger: ConstantLedger, alpha: float) -> float:
    d = ledger.dim
    return (2.0 + math.pi) / (2.0 * math.pi) * alpha * ledger.ell_A * d * d + alpha * ledger.ell_c + 1.0


@dataclass
class ContractionReport:
    holds: bool
    certified: bool
    max_step_ratio: float
    apriori_holds: bool
    step_violations: List[int] = field(default_factory=list)
    apriori_violations: List[int] = field(default_factory=list)


def check_contraction(
    trace: FlowTrace,
    reference: Optional[TrigExpansion],
    beta_star: float,
    problem: Optional[EllipticProblem] = None,
    slack: float = 1e-8,
) -> ContractionReport:
    """Check e_{t+1} <= beta e_t and e_t <= (||f||_{H^-1}/lambda_min) beta^t, up to slack.

    Errors are recomputed from the iterates when the trace has none. The slack
    grows by the reference accuracy and the cumulative pruned mass.
    """
    errors = list(trace.h1_errors)
    if not errors:
        if reference is None:
            raise PreconditionError("contraction check needs a reference or a trace with errors")
        errors = [h1_norm(axpy(1.0, u, -1.0, reference)) for u in trace.iterates]

    bound0 = None
    if problem is not None:
        bound0 = hminus1_upper(problem.f) / problem.lambda_min

    step_violations, apriori_violations = [], []
    max_ratio = 0.0
    for t in range(len(errors)):
        allowance = slack + 2.0 * trace.reference_accuracy + trace.pruned_mass[t]
        if bound0 is not None and errors[t] > bound0 * beta_star**t + allowance:
            apriori_violations.append(t)
        if t + 1 < len(errors):
            if errors[t] > 0:
                max_ratio = max(max_ratio, errors[t + 1] / errors[t])
            if errors[t + 1] > beta_star * errors[t] + allowance + trace.pruned_mass[t + 1]:
                step_violations.append(t)
    report = ContractionReport(
        holds=not step_violations and not apriori_violations,
        certified=trace.alpha_is_optimal,
        max_step_ratio=max_ratio,
        apriori_holds=not apriori_violations,
        step_violations=step_violations,
        apriori_violations=apriori_violations,
    )
    if not report.holds:
        logger.warning(
            "Contraction violated (steps %s, a-priori %s)", step_violations[:10], apriori_violations[:10]
        )
    return report
