"""
Verification suite run by `barron-flow verify`.
Each check recomputes one quantitative claim of the method against an
independent computation and records its margin.
"""

import concurrent.futures
import logging
import math
import threading
import time
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, List, Optional

import numpy as np

from ..core.barron_space import (
    BoundaryCondition,
    TrigExpansion,
    barron_norm,
    inv_shifted_laplacian,
    multiply,
)
from ..core.elliptic_problem import EllipticProblem, constants, validate
from ..core.errors import BarronFlowError
from ..core.net_extract import (
    Profile1D,
    best_of_draws,
    build_measure,
    build_relu_net,
    default_pieces,
    h1_net_error,
    measure_expectation,
    relu_box_audit,
    relu_interp_1d,
    sample_cosine_net,
)
from ..core.oracle_verify import (
    OracleSolution,
    fd_solve,
    galerkin_solve,
    poincare_check,
    relative_l2_discrepancy,
)
from ..core.problems import BUILTIN_PROBLEMS, builtin_problem, random_expansion, relu_rate_targets, sampling_targets
from ..core.sobolev_flow import FlowTrace, check_contraction, check_recursion, solve
from ..core.trig_core import pure_cos, pure_sin
from ..utils.translation import _

logger = logging.getLogger(__name__)

VERIFY_EPS = 1e-3
END_TO_END_EPS = 0.05

COSINE_WIDTHS = (4, 16, 64, 256)
COSINE_SEEDS = 200
COSINE_SLOPE_TOLERANCE = 0.1
INTERP_PIECES = (4, 8, 16, 32)
INTERP_RATIO_TOLERANCE = 0.15
RELU_WIDTHS = (16, 64, 256, 1024)
RELU_SEEDS = 20
RELU_SLOPE_TOLERANCE = 0.15


class CheckStatus(Enum):
    """Status of a verification check."""

    PENDING = "pending"
    RUNNING = "running"
    PASSED = "passed"
    FAILED = "failed"
    WARNING = "warning"


@dataclass
class VerificationCheck:
    """A single verification check and its outcome."""

    key: str
    name: str
    description: str
    status: CheckStatus = CheckStatus.PENDING
    details: str = ""
    margin: float = math.nan
    duration_ms: int = 0

    def to_dict(self) -> Dict[str, object]:
        # durations stay out of the report so reruns are byte-identical
        return {
            "key": self.key,
            "name": self.name,
            "status": self.status.value,
            "details": self.details,
            "margin": self.margin,
        }


class VerificationSuite:
    """Runs the property checks over the fixture problems."""

    def __init__(
        self,
        problems: Optional[List[EllipticProblem]] = None,
        seed: int = 0,
        workers: Optional[int] = None,
        samples: int = 4096,
    ):
        self.problems = problems if problems is not None else [info.build() for info in BUILTIN_PROBLEMS]
        self.seed = seed
        self.workers = workers
        self.samples = samples
        self.checks: List[VerificationCheck] = []
        self.progress_callback: Optional[Callable[[VerificationCheck], None]] = None
        self._references: Dict[str, OracleSolution] = {}
        self._traces: Dict[str, FlowTrace] = {}
        self._lock = threading.RLock()

    def create_checks(self) -> List[VerificationCheck]:
        """Create the list of checks in report order."""
        return [
            VerificationCheck(
                "audit", _("Assumption audit"), _("Declared ellipticity constants hold on a Sobol sample")
            ),
            VerificationCheck(
                "flow_anchor", _("Closed-form flow"), _("Single-mode iterate equals 1 - 2^-t, contraction ratio 1/2")
            ),
            VerificationCheck(
                "inverse_identity",
                _("Inverse operator identity"),
                _("Weight-2 norm of the inverse equals the weight-0 norm identity exactly"),
            ),
            VerificationCheck(
                "product_norm", _("Product estimate"), _("||gh|| <= ||g|| ||h|| at weights 0, 1, 2 and pointwise products")
            ),
            VerificationCheck("growth", _("p(d) growth"), _("p(d)/d^2 stays bounded for d = 1..5")),
            VerificationCheck("poincare", _("Poincare constant"), _("Grid estimate of C_P against 1/(pi sqrt(d))")),
            VerificationCheck(
                "oracle_agreement", _("Oracle agreement"), _("Galerkin and finite differences agree on d <= 2 fixtures")
            ),
            VerificationCheck(
                "recursion", _("Norm recursion"), _("Barron norm recursion holds at every flow step")
            ),
            VerificationCheck(
                "contraction", _("Contraction"), _("Per-step and a-priori H1 contraction against the Galerkin oracle")
            ),
            VerificationCheck(
                "unbiasedness", _("Measure unbiasedness"), _("Measure average of one-neuron values equals g")
            ),
            VerificationCheck(
                "cosine_rate",
                _("Cosine sampling rate"),
                _("Mean squared H1 error within (1 + 3/sqrt(200)) ||g||^2/k, slope -1/2 over k"),
            ),
            VerificationCheck(
                "relu_interpolation",
                _("ReLU interpolation"),
                _("sin(pi z) interpolation error <= sqrt(10) pi^2/m, halving with m, coefficient boxes"),
            ),
            VerificationCheck(
                "relu_box", _("ReLU coefficient boxes"), _("ReLU nets of the solved iterates satisfy every box")
            ),
            VerificationCheck(
                "relu_rate", _("ReLU sampling rate"), _("Mean H1 error slope -1/2 over k with m = ceil(sqrt(k))")
            ),
            VerificationCheck(
                "end_to_end", _("End-to-end accuracy"), _("Solve then extract a cosine net within eps of the solution")
            ),
        ]

    def run(self, progress_callback: Optional[Callable[[VerificationCheck], None]] = None) -> List[VerificationCheck]:
        """Run every check; cheap checks sequentially, oracle-backed ones in parallel."""
        self.progress_callback = progress_callback
        self.checks = self.create_checks()
        index = {check.key: i for i, check in enumerate(self.checks)}

        basic_group = [index[key] for key in ("audit", "flow_anchor", "inverse_identity", "product_norm", "growth")]
        oracle_group = [index[key] for key in ("poincare", "oracle_agreement", "recursion")]
        network_group = [
            index[key]
            for key in (
                "contraction", "unbiasedness", "cosine_rate", "relu_interpolation", "relu_box", "relu_rate", "end_to_end",
            )
        ]

        self._run_check_group(basic_group, parallel=False)
        self._run_check_group(oracle_group, parallel=True)
        self._run_check_group(network_group, parallel=True)
        return self.checks

    @property
    def passed(self) -> bool:
        return all(check.status is not CheckStatus.FAILED for check in self.checks)

    @property
    def traces(self) -> Dict[str, FlowTrace]:
        """Flow traces shared by the recursion, contraction and ReLU box checks."""
        return dict(self._traces)

    def report(self) -> Dict[str, object]:
        return {
            "passed": self.passed,
            "seed": self.seed,
            "problems": [problem.name for problem in self.problems],
            "checks": [check.to_dict() for check in self.checks],
        }

    def _run_check_group(self, indices: List[int], parallel: bool = False) -> None:
        if parallel and len(indices) > 1:
            with concurrent.futures.ThreadPoolExecutor(max_workers=self.workers or len(indices)) as executor:
                future_to_index = {executor.submit(self._execute_check, i): i for i in indices}
                for future in concurrent.futures.as_completed(future_to_index):
                    check = self.checks[future_to_index[future]]
                    try:
                        future.result()
                    except Exception as e:
                        check.status = CheckStatus.FAILED
                        check.details = _("Error during execution:") + f" {e}"
                        self._notify_progress(check)
        else:
            for i in indices:
                self._execute_check(i)

    def _execute_check(self, check_index: int) -> None:
        check = self.checks[check_index]
        check.status = CheckStatus.RUNNING
        self._notify_progress(check)

        start_time = time.perf_counter()
        try:
            success = getattr(self, f"_check_{check.key}")(check)
        except BarronFlowError as e:
            check.details = _("Error:") + f" {e}"
            success = False
        check.duration_ms = int((time.perf_counter() - start_time) * 1000)

        if success is None:
            check.status = CheckStatus.WARNING
        else:
            check.status = CheckStatus.PASSED if success else CheckStatus.FAILED
        logger.info("%s: %s (%s)", check.name, check.status.value, check.details)
        self._notify_progress(check)

    def _notify_progress(self, check: VerificationCheck) -> None:
        if self.progress_callback:
            self.progress_callback(check)

    # Shared computations

    def _reference(self, problem: EllipticProblem) -> OracleSolution:
        with self._lock:
            if problem.name not in self._references:
                self._references[problem.name] = galerkin_solve(problem, workers=1)
            return self._references[problem.name]

    def _trace(self, problem: EllipticProblem) -> FlowTrace:
        """Full flow to T = ledger.T at VERIFY_EPS with errors against the Galerkin reference."""
        with self._lock:
            if problem.name not in self._traces:
                reference = self._reference(problem)
                self._traces[problem.name] = solve(
                    problem,
                    VERIFY_EPS,
                    ledger=constants(problem, VERIFY_EPS),
                    reference=reference.expansion,
                    reference_accuracy=reference.accuracy if math.isfinite(reference.accuracy) else 0.0,
                    early_stop=False,
                )
            return self._traces[problem.name]

    # Checks

    def _check_audit(self, check: VerificationCheck) -> bool:
        worst = math.inf
        for problem in self.problems:
            report = validate(problem, samples=self.samples, seed=self.seed, strict=False, workers=self.workers)
            if not report.passed:
                check.details = f"{problem.name}: " + "; ".join(report.violations)
                return False
            worst = min(worst, report.eig_min - problem.a_min, report.c_min_seen - problem.c_min)
        check.margin = worst
        check.details = _("{count} problems audited").format(count=len(self.problems))
        return True

    def _check_flow_anchor(self, check: VerificationCheck) -> bool:
        problem = builtin_problem("single_mode_d1")
        exact = TrigExpansion.basis("s", (1,))
        trace = solve(problem, eps=1e-12, max_T=40, reference=exact, early_stop=False)
        gaps = [
            abs(u.coefficient("s", (1,)) - (1.0 - 2.0**-t)) for t, u in enumerate(trace.iterates)
        ]
        # beyond t = 20 the error nears rounding level and the ratio is noise
        ratios = [trace.h1_errors[t + 1] / trace.h1_errors[t] for t in range(min(trace.steps, 20))]
        ratio_gap = max(abs(r - 0.5) for r in ratios)
        check.margin = 1e-12 - max(gaps)
        check.details = f"max coefficient gap {max(gaps):.3g}, max |ratio - 1/2| {ratio_gap:.3g}"
        return max(gaps) <= 1e-12 and ratio_gap <= 1e-8

    def _check_inverse_identity(self, check: VerificationCheck) -> bool:
        rng = np.random.default_rng(self.seed)
        worst = 0.0
        for trial in range(50):
            dim = int(rng.integers(1, 4))
            bc = BoundaryCondition.DIRICHLET if trial % 2 == 0 else BoundaryCondition.NEUMANN
            parity = pure_sin(dim) if bc is BoundaryCondition.DIRICHLET else pure_cos(dim)
            g = random_expansion(rng, dim, terms=5, max_freq=4, parity=parity)
            zero_mode = abs(g.coefficient(pure_cos(dim), (0,) * dim))
            lhs = barron_norm(inv_shifted_laplacian(g, bc), 2)
            rhs = 0.5 * (barron_norm(g, 0) + zero_mode)
            worst = max(worst, abs(lhs - rhs) / max(rhs, 1e-300))
        check.margin = 1e-12 - worst
        check.details = f"max relative gap {worst:.3g} over 50 expansions"
        return worst <= 1e-12

    def _check_product_norm(self, check: VerificationCheck) -> bool:
        rng = np.random.default_rng(self.seed + 1)
        worst_ratio, worst_pointwise = 0.0, 0.0
        for _trial in range(20):
            dim = int(rng.integers(1, 4))
            g = random_expansion(rng, dim, terms=4, max_freq=3)
            h = random_expansion(rng, dim, terms=4, max_freq=3)
            product = multiply(g, h)
            for n in (0, 1, 2):
                bound = barron_norm(g, n, strict=False) * barron_norm(h, n, strict=False)
                worst_ratio = max(worst_ratio, barron_norm(product, n, strict=False) / bound)
            points = rng.random((32, dim))
            gap = np.abs(product.evaluate(points) - g.evaluate(points) * h.evaluate(points)).max()
            worst_pointwise = max(worst_pointwise, float(gap))
        check.margin = 1.0 - worst_ratio
        check.details = f"max norm ratio {worst_ratio:.6g}, max pointwise gap {worst_pointwise:.3g}"
        return worst_ratio <= 1.0 + 1e-12 and worst_pointwise <= 1e-10

    def _check_growth(self, check: VerificationCheck) -> bool:
        ratios = []
        for dim in range(1, 6):
            f = TrigExpansion.basis(pure_sin(dim), (1,) * dim)
            problem = EllipticProblem.isotropic(f, BoundaryCondition.DIRICHLET, name=f"isotropic_d{dim}")
            ratios.append(constants(problem, VERIFY_EPS).p_d / dim**2)
        check.margin = ratios[0] - max(ratios)
        check.details = "p(d)/d^2: " + ", ".join(f"{r:.6g}" for r in ratios)
        return all(later <= earlier + 1e-12 for earlier, later in zip(ratios, ratios[1:]))

    def _check_poincare(self, check: VerificationCheck) -> bool:
        worst = 0.0
        parts = []
        for dim in (1, 2):
            result = poincare_check(dim)
            exact = 1.0 / (math.pi * math.sqrt(dim))
            error = abs(result.constant - exact) / exact
            worst = max(worst, error)
            parts.append(f"d={dim}: C_P={result.constant:.8g} (rel {error:.2g}, corr {result.correlation:.6f})")
            if result.correlation < 0.999:
                check.details = "; ".join(parts)
                return False
        check.margin = 1e-3 - worst
        check.details = "; ".join(parts)
        return worst <= 1e-3

    def _check_oracle_agreement(self, check: VerificationCheck) -> Optional[bool]:
        candidates = [problem for problem in self.problems if problem.dim <= 2]
        if not candidates:
            check.details = _("no fixture with d <= 2")
            return None
        worst_margin = math.inf
        parts = []
        for problem in candidates:
            n = 256 if problem.dim == 1 else 128
            reference = self._reference(problem).expansion
            discrepancy = relative_l2_discrepancy(fd_solve(problem, n), reference)
            tolerance = max(1e-5, 10.0 / n**2)
            worst_margin = min(worst_margin, tolerance - discrepancy)
            parts.append(f"{problem.name}: {discrepancy:.3g}")
        check.margin = worst_margin
        check.details = "; ".join(parts)
        return worst_margin >= 0.0

    def _check_recursion(self, check: VerificationCheck) -> bool:
        worst = 0.0
        for problem in self.problems:
            ledger = constants(problem, VERIFY_EPS)
            trace = self._trace(problem)
            report = check_recursion(trace, ledger)
            worst = max(worst, report.max_ratio)
            if not report.holds:
                check.details = f"{problem.name}: violated at steps {report.violations[:5]}"
                return False
        check.margin = 1.0 - worst
        check.details = f"max lhs/rhs ratio {worst:.6g}"
        return True

    def _check_contraction(self, check: VerificationCheck) -> bool:
        worst = 0.0
        for problem in self.problems:
            reference = self._reference(problem)
            ledger = constants(problem, VERIFY_EPS)
            trace = self._trace(problem)
            report = check_contraction(trace, reference.expansion, ledger.beta_star, problem)
            worst = max(worst, report.max_step_ratio)
            if not report.holds:
                check.details = (
                    f"{problem.name}: step violations {report.step_violations[:5]}, "
                    f"a-priori violations {report.apriori_violations[:5]}"
                )
                return False
            if trace.steps != ledger.T or trace.h1_errors[-1] > VERIFY_EPS:
                check.details = (
                    f"{problem.name}: error {trace.h1_errors[-1]:.3g} after {trace.steps} of {ledger.T} steps"
                )
                return False
        check.margin = 1.0 - worst
        check.details = f"max step ratio {worst:.6g}"
        return True

    def _check_unbiasedness(self, check: VerificationCheck) -> bool:
        rng = np.random.default_rng(self.seed + 2)
        worst = 0.0
        for problem in self.problems:
            g = problem.f
            points = rng.random((100, problem.dim))
            gap = np.abs(measure_expectation(build_measure(g), points) - g.evaluate(points)).max()
            worst = max(worst, float(gap) / max(1.0, g.max_abs_coefficient()))
        check.margin = 1e-10 - worst
        check.details = f"max scaled gap {worst:.3g}"
        return worst <= 1e-10

    def _check_cosine_rate(self, check: VerificationCheck) -> bool:
        slack = 1.0 + 3.0 / math.sqrt(COSINE_SEEDS)
        worst_ratio, worst_slope = 0.0, 0.0
        for trial, (name, g) in enumerate(sampling_targets().items()):
            measure = build_measure(g)
            bound = barron_norm(g, 2, strict=False) ** 2
            means = []
            for k in COSINE_WIDTHS:
                squared = [
                    h1_net_error(sample_cosine_net(measure, k, self.seed + trial, draw), g).value ** 2
                    for draw in range(COSINE_SEEDS)
                ]
                means.append(float(np.mean(squared)))
                worst_ratio = max(worst_ratio, means[-1] * k / (slack * bound))
            slope = _log_slope(COSINE_WIDTHS, np.sqrt(means))
            worst_slope = max(worst_slope, abs(slope + 0.5))
            if worst_ratio > 1.0 or worst_slope > COSINE_SLOPE_TOLERANCE:
                check.details = f"{name}: mean/bound {worst_ratio:.3g}, slope {slope:.3f}"
                return False
        check.margin = min(1.0 - worst_ratio, COSINE_SLOPE_TOLERANCE - worst_slope)
        check.details = f"max mean/bound {worst_ratio:.3g}, max |slope + 1/2| {worst_slope:.3g}"
        return True

    def _check_relu_interpolation(self, check: VerificationCheck) -> bool:
        profile = Profile1D(math.pi, -math.pi / 2.0, 1.0)
        bound = profile.bound()
        errors = []
        for m in INTERP_PIECES:
            interpolant = relu_interp_1d(profile, m, 1)
            errors.append(interpolant.h1_error(profile))
            if np.abs(interpolant.outer).max() > 4.0 * bound / m or np.abs(interpolant.biases).max() > 1.0:
                check.details = f"m={m}: coefficient box violated"
                return False
        ratios = [coarse / fine for coarse, fine in zip(errors, errors[1:])]
        error_margin = min(math.sqrt(10.0) * math.pi**2 / m - e for m, e in zip(INTERP_PIECES, errors))
        ratio_margin = INTERP_RATIO_TOLERANCE - max(abs(r / 2.0 - 1.0) for r in ratios)
        check.margin = min(error_margin, ratio_margin)
        check.details = "errors " + ", ".join(f"{e:.4g}" for e in errors) + "; ratios " + ", ".join(
            f"{r:.3f}" for r in ratios
        )
        return error_margin >= 0.0 and ratio_margin >= 0.0

    def _check_relu_box(self, check: VerificationCheck) -> bool:
        for trial, problem in enumerate(self.problems):
            u = self._trace(problem).final
            net = build_relu_net(u, k=16, seed=self.seed, trial=trial)
            audit = relu_box_audit(net, barron_norm(u, 2, strict=False))
            if not audit.holds:
                check.details = f"{problem.name}: {audit}"
                return False
        check.margin = 0.0
        check.details = _("{count} networks audited").format(count=len(self.problems))
        return True

    def _check_relu_rate(self, check: VerificationCheck) -> bool:
        worst = 0.0
        parts = []
        for trial, (name, g) in enumerate(relu_rate_targets().items()):
            means = []
            for k in RELU_WIDTHS:
                m = default_pieces(k)
                errors = [
                    h1_net_error(build_relu_net(g, k, m=m, seed=self.seed + trial, trial=draw), g).value
                    for draw in range(RELU_SEEDS)
                ]
                means.append(float(np.mean(errors)))
            slope = _log_slope(RELU_WIDTHS, means)
            worst = max(worst, abs(slope + 0.5))
            parts.append(f"{name}: {slope:.3f}")
        check.margin = RELU_SLOPE_TOLERANCE - worst
        check.details = "slopes " + "; ".join(parts)
        return worst <= RELU_SLOPE_TOLERANCE

    def _check_end_to_end(self, check: VerificationCheck) -> bool:
        problem = builtin_problem("single_mode_d1")
        ledger = constants(problem, END_TO_END_EPS)
        trace = solve(problem, END_TO_END_EPS, ledger=ledger)
        k = int(min(ledger.neuron_budget_cos, 16))
        selection = best_of_draws(trace.final, k, trials=4, seed=self.seed, workers=1)
        exact = TrigExpansion.basis("s", (1,))
        error = h1_net_error(selection.net, exact).value
        check.margin = END_TO_END_EPS - error
        check.details = f"k={k} (budget {ledger.neuron_budget_cos}), T={trace.steps}, error {error:.3g}"
        return error <= END_TO_END_EPS


def _log_slope(widths, values) -> float:
    """Least-squares slope of log(values) against log(widths)."""
    return float(np.polyfit(np.log(widths), np.log(values), 1)[0])
