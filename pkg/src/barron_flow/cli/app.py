"""
Command-line application: solve, extract, verify and bench.
"""

import argparse
import csv
import json
import logging
import math
import sys
import time
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from .. import __version__
from ..core.barron_space import BoundaryCondition, TrigExpansion, barron_norm, h1_norm, multiply
from ..core.config import ACTIVATIONS, ORACLES, ConfigManager, RunConfig
from ..core.elliptic_problem import EllipticProblem, constants, validate
from ..core.errors import BarronFlowError, CheckFailure, InputError
from ..core.net_extract import (
    Activation,
    DrawSelection,
    TwoLayerNet,
    best_of_draws,
    build_relu_net,
    default_pieces,
    expected_relu_error_bound,
    h1_net_error,
    relu_box_audit,
)
from ..core.oracle_verify import OracleSolution, fd_solve, galerkin_solve, relative_l2_discrepancy
from ..core.problems import builtin_names, builtin_problem, random_expansion, random_problem
from ..core.sobolev_flow import check_contraction, check_recursion, solve, step
from ..utils.pdf_exporter import ReportExporter
from ..utils.serialization import (
    format_problem,
    load_expansion,
    load_problem,
    read_text,
    save_expansion,
    save_network,
    write_json,
    write_text,
)
from ..utils.translation import _, ngettext
from .verification import CheckStatus, VerificationCheck, VerificationSuite

logger = logging.getLogger(__name__)

# widths beyond this are not sampled by default; the budget is still reported
DEFAULT_WIDTH_CAP = 256

TRACE_FILE = "trace.csv"
LEDGER_FILE = "ledger.json"
SOLUTION_FILE = "solution.txt"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="barron-flow",
        description=_("Barron-space Sobolev gradient flow for elliptic problems on the unit cube"),
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="count", default=0, help=_("more log output (repeatable)"))
    verbosity.add_argument("-q", "--quiet", action="store_true", help=_("only log errors"))

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--problem", help=_("problem file or built-in name ({names})").format(names=", ".join(builtin_names())))
    common.add_argument("--eps", type=float, help=_("target H1 accuracy"))
    common.add_argument("--seed", type=int, help=_("random seed"))
    common.add_argument("--out", dest="out_dir", help=_("output directory"))
    common.add_argument("--workers", type=int, help=_("worker threads"))
    common.add_argument("--pdf", action="store_true", default=None, help=_("also write a PDF report"))

    subparsers = parser.add_subparsers(dest="command", required=True)

    solve_parser = subparsers.add_parser("solve", parents=[common], help=_("run the Sobolev flow"))
    solve_parser.add_argument("--alpha", type=float, help=_("step size override"))
    solve_parser.add_argument("--prune-tol", type=float, help=_("relative pruning tolerance"))
    solve_parser.add_argument("--oracle", choices=ORACLES, help=_("reference solver"))
    solve_parser.add_argument("--samples", type=int, help=_("ellipticity audit points"))
    solve_parser.add_argument("--max-steps", type=int, help=_("cap on the number of flow steps"))
    solve_parser.add_argument(
        "--no-early-stop", dest="early_stop", action="store_false", default=None, help=_("always run T steps")
    )
    solve_parser.add_argument("--fd-grid", type=int, help=_("finite-difference intervals per axis"))

    extract_parser = subparsers.add_parser("extract", parents=[common], help=_("extract two-layer networks"))
    extract_parser.add_argument("--expansion", help=_("expansion file (default: <out>/solution.txt)"))
    extract_parser.add_argument("--k", type=int, help=_("network width"))
    extract_parser.add_argument("--m", type=int, help=_("ReLU interpolation pieces"))
    extract_parser.add_argument("--trials", type=int, help=_("cosine draws to select from"))
    extract_parser.add_argument("--activation", choices=ACTIVATIONS, help=_("network activation"))

    verify_parser = subparsers.add_parser("verify", parents=[common], help=_("run the verification suite"))
    verify_parser.add_argument("--samples", type=int, help=_("ellipticity audit points"))

    bench_parser = subparsers.add_parser("bench", parents=[common], help=_("time the core operations"))
    bench_parser.add_argument("--max-dim", type=int, default=3, help=_("largest dimension to time"))
    bench_parser.add_argument("--repeat", type=int, default=3, help=_("repetitions per operation"))
    return parser


def configure_logging(verbose: int, quiet: bool) -> None:
    if quiet:
        level = logging.ERROR
    elif verbose >= 2:
        level = logging.DEBUG
    elif verbose == 1:
        level = logging.INFO
    else:
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def resolve_problem(source: str) -> EllipticProblem:
    """A problem file path, or the name of a built-in problem."""
    path = Path(source)
    if path.exists() or path.suffix:
        return load_problem(path)
    try:
        return builtin_problem(source)
    except KeyError:
        raise InputError(
            _("{source}: no such file or built-in problem (built-ins: {names})").format(
                source=source, names=", ".join(builtin_names())
            )
        ) from None


class BarronFlowApp:
    """Parses arguments, merges configuration and dispatches commands."""

    def __init__(self, config_manager: Optional[ConfigManager] = None):
        self.config_manager = config_manager or ConfigManager()
        self.commands: Dict[str, Callable[[RunConfig, argparse.Namespace], int]] = {
            "solve": self.cmd_solve,
            "extract": self.cmd_extract,
            "verify": self.cmd_verify,
            "bench": self.cmd_bench,
        }

    def make_config(self, args: argparse.Namespace) -> RunConfig:
        overrides = {key: value for key, value in vars(args).items() if key not in ("verbose", "quiet")}
        return self.config_manager.config.with_overrides(overrides)

    def run(self, argv: Optional[Sequence[str]] = None) -> int:
        """Run one command and return its exit code."""
        args = build_parser().parse_args(argv)
        configure_logging(args.verbose, args.quiet)
        config = self.make_config(args)
        try:
            return self.commands[config.command](config, args)
        except BarronFlowError as e:
            logger.debug("command failed", exc_info=True)
            print(f"barron-flow: {type(e).__name__}: {e}", file=sys.stderr)
            return e.exit_code

    # solve

    def cmd_solve(self, config: RunConfig, args: argparse.Namespace) -> int:
        """Validate, run the flow, and write trace, ledger and solution."""
        problem = resolve_problem(config.problem)
        audit = validate(problem, samples=config.samples, seed=config.seed, workers=config.workers)
        ledger = constants(problem, config.eps)
        out = config.output_path

        reference: Optional[TrigExpansion] = None
        oracle: Optional[OracleSolution] = None
        if config.oracle == "galerkin":
            oracle = galerkin_solve(
                problem, tol=config.galerkin_tol, max_unknowns=config.max_unknowns, workers=config.workers
            )
            reference = oracle.expansion
        elif config.oracle == "fd":
            oracle = fd_solve(problem, config.fd_grid)

        trace = solve(
            problem,
            config.eps,
            max_T=config.max_steps,
            alpha=config.alpha,
            reference=reference,
            reference_accuracy=oracle.accuracy if reference is not None and math.isfinite(oracle.accuracy) else 0.0,
            prune_tol=config.prune_tol,
            early_stop=config.early_stop,
            ledger=ledger,
            progress_callback=_progress_printer(),
        )
        recursion = check_recursion(trace, ledger)
        summary: Dict[str, Any] = {
            "problem": problem.name,
            "steps": trace.steps,
            "T": ledger.T,
            "step_size": trace.step_size,
            "stop_reason": trace.stop_reason,
            "stopped_early": trace.stopped_early,
            "final_support": trace.final.support_size,
            "final_barron_norm_w2": barron_norm(trace.final, 2),
            "final_residual_h1": trace.residual_norms[-1],
            "recursion_holds": recursion.holds,
            "recursion_certified": recursion.certified,
            "oracle": config.oracle,
        }
        if reference is not None:
            contraction = check_contraction(trace, reference, ledger.beta_star, problem)
            summary.update(
                final_h1_error=trace.h1_errors[-1],
                oracle_cutoff=oracle.cutoff,
                oracle_accuracy=oracle.accuracy,
                oracle_energy_tail=oracle.tail,
                contraction_holds=contraction.holds,
                contraction_max_ratio=contraction.max_step_ratio,
            )
        elif oracle is not None:
            summary.update(
                fd_grid=config.fd_grid,
                fd_relative_l2=relative_l2_discrepancy(oracle, trace.final),
            )

        trace.write_csv(_prepare(out) / TRACE_FILE)
        save_expansion(out / SOLUTION_FILE, trace.final)
        write_text(out / "problem.txt", format_problem(problem))
        write_json(out / LEDGER_FILE, {"ledger": ledger.to_dict(), "audit": audit.to_dict(), "summary": summary})
        if config.pdf:
            ReportExporter().export_solve_summary_to_pdf(problem.name, ledger.to_dict(), summary, out / "solve_report")

        print(
            _("{name}: {steps} steps, ||u_T||_B2 = {norm:.6g}; results in {out}").format(
                name=problem.name, steps=trace.steps, norm=summary["final_barron_norm_w2"], out=out
            )
        )
        return 0

    # extract

    def cmd_extract(self, config: RunConfig, args: argparse.Namespace) -> int:
        """Build networks from a solved expansion and compare against the budget."""
        out = config.output_path
        source = Path(args.expansion) if args.expansion else out / SOLUTION_FILE
        if not source.exists():
            raise InputError(_("{path}: expansion file not found (run solve first or pass --expansion)").format(path=source))
        g = load_expansion(source)

        budget_cos: Optional[int] = None
        budget_relu: Optional[int] = None
        if args.problem:
            ledger = constants(resolve_problem(config.problem), config.eps)
            budget_cos, budget_relu = ledger.neuron_budget_cos, ledger.neuron_budget_relu
        elif (out / LEDGER_FILE).exists():
            try:
                saved = json.loads(read_text(out / LEDGER_FILE))["ledger"]
                budget_cos, budget_relu = int(saved["neuron_budget_cos"]), int(saved["neuron_budget_relu"])
            except (ValueError, KeyError, TypeError) as e:
                logger.warning("Ignoring unreadable ledger %s: %s", out / LEDGER_FILE, e)

        activations = ["cosine", "relu"] if config.activation == "both" else [config.activation]
        norm = barron_norm(g, 2, strict=False)
        rows: List[List[Any]] = []
        summary: Dict[str, Any] = {
            "source": str(source),
            "barron_norm_w2": norm,
            "h1_norm": h1_norm(g),
            "neuron_budget_cos": budget_cos,
            "neuron_budget_relu": budget_relu,
        }

        if "cosine" in activations:
            if g.is_zero():
                k = 0
                selection = DrawSelection(TwoLayerNet.constant(Activation.COSINE, g.dim), [0.0] * config.trials, 0)
            else:
                k = config.k or _default_width(budget_cos)
                selection = best_of_draws(g, k, config.trials, config.seed, workers=config.workers)
            save_network(_prepare(out) / "network_cosine.txt", selection.net)
            rows += [["cosine", trial, k, error] for trial, error in enumerate(selection.errors)]
            summary["cosine"] = {
                "k": k,
                "best_trial": selection.best_trial,
                "h1_error": selection.errors[selection.best_trial],
                "mean_h1_error": float(np.mean(selection.errors)),
                "expected_error_bound": norm / math.sqrt(k) if k else 0.0,
                "within_budget": budget_cos is None or k <= budget_cos,
            }

        if "relu" in activations:
            k = 0 if g.is_zero() else config.k or _default_width(budget_relu)
            m = config.m or default_pieces(k)
            errors, best = [], None
            for trial in range(config.trials):
                if k:
                    net = build_relu_net(g, k, m, seed=config.seed, trial=trial)
                else:
                    net = TwoLayerNet.constant(Activation.RELU, g.dim)
                result = h1_net_error(net, g)
                errors.append(result.value)
                rows.append(["relu", trial, k, result.value])
                if best is None or result.value < errors[best[0]]:
                    best = (trial, net)
            save_network(_prepare(out) / "network_relu.txt", best[1])
            audit = relu_box_audit(best[1], norm)
            summary["relu"] = {
                "k": k,
                "m": m,
                "best_trial": best[0],
                "h1_error": errors[best[0]],
                "mean_h1_error": float(np.mean(errors)),
                "expected_sampling_bound": expected_relu_error_bound(g, k) if k else 0.0,
                "box_audit": {**vars(audit), "holds": audit.holds},
                "within_budget": budget_relu is None or k <= budget_relu,
            }

        with open(_prepare(out) / "trials.csv", "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["activation", "trial", "k", "h1_error"])
            for activation, trial, k, error in rows:
                writer.writerow([activation, trial, k, format(error, ".17g")])
        write_json(out / "extract_summary.json", summary)

        for activation in activations:
            print(
                _("{activation}: k = {k} (budget {budget}), H1 error {error:.6g}").format(
                    activation=activation,
                    k=summary[activation]["k"],
                    budget=budget_cos if activation == Activation.COSINE.value else budget_relu,
                    error=summary[activation]["h1_error"],
                )
            )
        return 0

    # verify

    def cmd_verify(self, config: RunConfig, args: argparse.Namespace) -> int:
        """Run the verification suite; a failing check exits with status 5."""
        problems = None
        if args.problem:
            problem = resolve_problem(config.problem)
            validate(problem, samples=config.samples, seed=config.seed, workers=config.workers)
            problems = [problem]

        suite = VerificationSuite(problems, seed=config.seed, workers=config.workers, samples=config.samples)
        checks = suite.run(progress_callback=_check_printer())
        out = config.output_path
        write_json(_prepare(out) / "verification.json", suite.report())
        if config.pdf:
            ReportExporter().export_verification_to_pdf(checks, out / "verification_report", seed=config.seed)

        failed = [check for check in checks if check.status is CheckStatus.FAILED]
        if failed:
            raise CheckFailure(
                ngettext("{count} check failed: {names}", "{count} checks failed: {names}", len(failed)).format(
                    count=len(failed), names=", ".join(check.key for check in failed)
                )
            )
        print(_("all {count} checks passed").format(count=len(checks)))
        return 0

    # bench

    def cmd_bench(self, config: RunConfig, args: argparse.Namespace) -> int:
        """Time core operations over d = 1..max_dim and write bench.csv."""
        rng = np.random.default_rng(config.seed)
        rows = []

        def timed(operation: str, dim: int, fn: Callable[[], Any]) -> None:
            best = math.inf
            for _repeat in range(max(1, args.repeat)):
                start = time.perf_counter()
                fn()
                best = min(best, time.perf_counter() - start)
            rows.append([operation, dim, best])
            logger.info("%s d=%d: %.3g s", operation, dim, best)

        for dim in range(1, args.max_dim + 1):
            g = random_expansion(rng, dim, terms=16, max_freq=4)
            h = random_expansion(rng, dim, terms=16, max_freq=4)
            problem = random_problem(rng, dim, BoundaryCondition.DIRICHLET)
            ledger = constants(problem, config.eps)
            u = solve(problem, config.eps, max_T=5, ledger=ledger, early_stop=False).final
            net = best_of_draws(problem.f, 64, 1, config.seed).net

            timed("multiply", dim, lambda: multiply(g, h))
            timed("flow_step", dim, lambda: step(problem, u, ledger.alpha_star))
            timed("galerkin_solve", dim, lambda: galerkin_solve(problem, cutoff=max(problem.f.max_frequency(), 8 // dim)))
            if dim <= 3:
                timed("fd_solve", dim, lambda: fd_solve(problem, 32 if dim < 3 else 16))
            timed("cosine_net_error", dim, lambda: h1_net_error(net, problem.f))

        out = _prepare(config.output_path)
        with open(out / "bench.csv", "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["operation", "dim", "seconds"])
            for operation, dim, seconds in rows:
                writer.writerow([operation, dim, format(seconds, ".6g")])
        print(_("bench results in {path}").format(path=out / "bench.csv"))
        return 0


def _default_width(budget: Optional[int]) -> int:
    return max(1, min(DEFAULT_WIDTH_CAP if budget is None else budget, DEFAULT_WIDTH_CAP))


def _prepare(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise InputError(f"cannot create {path}: {e.strerror or e}") from None
    return path


def _progress_printer() -> Optional[Callable[[str, float], None]]:
    if not sys.stderr.isatty():
        return None

    def _update_progress(message: str, fraction: float) -> None:
        print(f"\r{message} ({fraction:.0%})", end="" if fraction < 1.0 else "\n", file=sys.stderr, flush=True)

    return _update_progress


def _check_printer() -> Callable[[VerificationCheck], None]:
    def _notify(check: VerificationCheck) -> None:
        if check.status in (CheckStatus.PENDING, CheckStatus.RUNNING):
            return
        print(f"[{check.status.value.upper():7}] {check.name}: {check.details}")

    return _notify
