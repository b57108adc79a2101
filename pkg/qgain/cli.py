"""Command-line front end: ``qgain <command> [options]``."""

import argparse
import logging
import sys
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv

from . import __version__
from .config import FIGURES, SCHEMES, SPECTRA
from .utils.error_analyzer import EXIT_INTERNAL
from .utils.result_formatter import ResultFormatter

logger = logging.getLogger(__name__)

_CLI_ONLY = ("config", "verbose", "quiet")


def _flag(parser: argparse.ArgumentParser, *names: str, **kwargs) -> None:
    """Options default to None so that only given flags override the config file."""
    kwargs.setdefault("default", None)
    parser.add_argument(*names, **kwargs)


def _add_common(parser: argparse.ArgumentParser) -> None:
    _flag(parser, "--config", help="TOML or JSON config file; flags override its keys")
    _flag(parser, "--seed", type=int, help="Run seed (default 1)")
    _flag(parser, "--moment-seed", dest="moment_seed", type=int, help="Seed of Monte-Carlo moment tables")
    _flag(parser, "--samples", type=int, help="Monte-Carlo samples for product moments")
    _flag(parser, "--panels", type=int, help="Quadrature panels for first moments")
    _flag(parser, "--output-dir", dest="output_dir", help="Directory for CSV/JSON/SVG artifacts")
    _flag(parser, "--cache-dir", dest="cache_dir", help="Moment cache (else QGAIN_CACHE_DIR, else ./.qgain_cache)")
    _flag(parser, "--workers", type=int, help="Worker processes (else QGAIN_WORKERS)")
    _flag(parser, "--svg", action="store_true", help="Render an SVG plot next to figure tables")
    _flag(parser, "--max-attempts", dest="max_attempts", type=int, help="Moment computations before giving up")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    verbosity.add_argument("--quiet", "-q", action="store_true", help="Warnings only")


def _add_weights(parser: argparse.ArgumentParser) -> None:
    _flag(parser, "--lambda", dest="lambda", type=int, help="Population size λ")
    _flag(parser, "--scheme", choices=SCHEMES, help="Weight scheme (default optimal)")
    _flag(parser, "--mu", type=int, help="Parents of the truncation scheme")
    _flag(parser, "--values", help="Comma-separated custom weights")
    _flag(parser, "--values-file", dest="values_file", help="File with one custom weight per line")


def _add_model(parser: argparse.ArgumentParser) -> None:
    _flag(parser, "--spectrum", choices=SPECTRA, help="Hessian spectrum (default sphere)")
    _flag(parser, "--dim", type=int, help="Dimension N")
    _flag(parser, "--alpha", type=float, help="Conditioning parameter of discus/ellipsoid/cigar")
    _flag(parser, "--eigenvalues-file", dest="eigenvalues_file", help="Eigenvalues of a custom spectrum")
    _flag(parser, "--rotate", action="store_true", help="Apply a random rotation")
    _flag(parser, "--rotation-seed", dest="rotation_seed", type=int)
    _flag(parser, "--c-m", dest="c_m", type=float, help="Learning rate for the mean (default 1)")
    _flag(parser, "--sigma-bar", dest="sigma_bar", type=float, help="Normalized step-size (default σ̄*)")
    _flag(parser, "--lambda-exact", dest="lambda_exact", type=int, help="Largest λ using exact product moments")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qgain",
        description="Quality gain analysis of weighted recombination evolution strategies on quadratics.",
    )
    parser.add_argument("--version", action="version", version=f"qgain {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("moments", help="Moments of normal order statistics (cached)")
    _add_common(p)
    _flag(p, "--lambda", dest="lambda", type=int, help="Population size λ")
    _flag(p, "--method", choices=("quadrature", "monte_carlo", "blom"), help="First-moment method")
    _flag(p, "--e2", action="store_true", help="Also estimate product moments by Monte Carlo")

    p = sub.add_parser("weights", help="Recombination weights and their Lipschitz constants")
    _add_common(p)
    _add_weights(p)
    _flag(p, "--lipschitz", choices=("bounds", "grid", "none"))
    _flag(p, "--grid-points", dest="grid_points", type=int)

    p = sub.add_parser("theory", help="Asymptotic quality gain, σ̄* and error bound")
    _add_common(p)
    _add_weights(p)
    _add_model(p)
    _flag(p, "--e-Ae", dest="e_Ae", type=float, help="eᵀÂe at the mean (default: worst case d_N/Tr)")
    _flag(p, "--e2", action="store_true", help="Use exact product moments")
    _flag(p, "--optimal-weights", dest="optimal_weights", action="store_true", help="Also solve for the optimal (σ̄, w)")
    _flag(p, "--lipschitz", choices=("bounds", "grid"))
    _flag(p, "--grid-points", dest="grid_points", type=int)
    _flag(p, "--bound-form", dest="bound_form", choices=("theorem", "lemma"))

    p = sub.add_parser("simulate", help="Scale-invariant ES runs or one-step quality gain")
    _add_common(p)
    _add_weights(p)
    _add_model(p)
    _flag(p, "--multiplier", type=float, help="σ̄ as a multiple of σ̄* when --sigma-bar is absent")
    _flag(p, "--mode", choices=("trajectory", "one_step"))
    _flag(p, "--T", dest="T", type=int, help="Iterations (even)")
    _flag(p, "--record-every", dest="record_every", type=int)
    _flag(p, "--reps", type=int, help="Replications of the one-step estimate")

    p = sub.add_parser("figure", help="Data (and optional SVG) of a figure")
    _add_common(p)
    p.add_argument("name", choices=FIGURES)
    _flag(p, "--lmax", type=int, help="Largest λ of the default grid")
    _flag(p, "--lambdas", help="Comma-separated λ values")
    _flag(p, "--dims", help="Comma-separated dimensions")
    _flag(p, "--spectra", help="Comma-separated spectra (fig5_6)")
    _flag(p, "--spectrum", choices=SPECTRA, help="Spectrum family (prop4)")
    _flag(p, "--alpha", type=float)
    _flag(p, "--schemes", help="Comma-separated weight schemes")
    _flag(p, "--c-m-values", dest="c_m_values", help="Comma-separated c_m values")
    _flag(p, "--multipliers", help="Comma-separated σ̄/σ̄* multipliers")
    _flag(p, "--thetas", help="Comma-separated angles (fig3)")
    _flag(p, "--T", dest="T", type=int)
    _flag(p, "--replicates", type=int)
    _flag(p, "--full-scale", dest="full_scale", action="store_true", help="Allow N = 1000 grids")
    _flag(p, "--theory-e-Ae", dest="theory_e_Ae", choices=("worst_case", "live"))
    _flag(p, "--step-budget", dest="step_budget", type=float)
    _flag(p, "--lambda-exact", dest="lambda_exact", type=int)
    _flag(p, "--lambda-rule", dest="lambda_rule", help="power:β[:scale] | linear | constant:c")
    _flag(p, "--weights-family", dest="weights_family", help="optimal | optimal_positive | cma_log | truncation:ρ")
    _flag(p, "--epsilon", type=float)

    p = sub.add_parser("bound-check", help="Monte-Carlo check of the quality-gain error bound")
    _add_common(p)
    _flag(p, "--n", type=int, help="Dimension (≤ 20)")
    _flag(p, "--lambda", dest="lambda", type=int, help="Population size (2..8)")
    _flag(p, "--scheme", choices=("optimal", "optimal_positive", "cma_log"))
    _flag(p, "--spectrum", choices=SPECTRA[:-1])
    _flag(p, "--alpha", type=float)
    _flag(p, "--c-m-values", dest="c_m_values")
    _flag(p, "--multipliers")
    _flag(p, "--reps", type=int)
    _flag(p, "--grid-points", dest="grid_points", type=int)
    _flag(p, "--strict", action="store_true", help="Fail with exit 3 on any violated cell")

    return parser


def _configure_logging(verbose: bool, quiet: bool) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(
        level=level,
        format='%(asctime)s [%(levelname)s] %(message)s',
        datefmt='%H:%M:%S',
    )


def overrides_from_args(args: argparse.Namespace) -> Dict[str, Any]:
    return {k: v for k, v in vars(args).items() if k not in _CLI_ONLY and v is not None}


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point; returns the process exit code."""
    load_dotenv()
    args = build_parser().parse_args(argv)
    _configure_logging(args.verbose, args.quiet)

    from .graph.workflow import run

    try:
        state = run(args.config or {}, overrides_from_args(args))
    except Exception as e:
        logger.exception(f"❌ Unexpected failure: {e}")
        return EXIT_INTERNAL

    formatted = state.get("formatted_result")
    if formatted:
        print(ResultFormatter.format_for_display(formatted))
        for path in formatted.get("artifacts", []):
            print(f"   {path}")
    return int(state.get("exit_code", EXIT_INTERNAL))


if __name__ == "__main__":
    sys.exit(main())
