"""
Command-line entry point.
Coulomb gas spectral-gap toolkit: droplet geometry, exact kernels,
edge and two-point predictions, fluctuation CGFs and the verification suites.

Run with: python -m cli.index <command> [options]
"""
import argparse
import logging
import sys
from typing import Any, Dict, List, Optional

from config import settings
from errors import CoulombGapError, exit_code_for
from services.config_service import config_service

from commands import correlations, fluctuations, geometry, verification

logger = logging.getLogger(__name__)

EPILOG = """\
CSV column orders:
  analyze    quantity,value
  density    t,z,exact,predicted,residual        (one file per n)
  kernel2pt  n,t,s,theta1,theta2,exact_re,exact_im,predicted_re,predicted_im
  cgf        t,product,ward,predicted            (selected routes, one file per n)
  sample     sample,fluct                        (one file per n)
  verify     check,n,residual,bound,pass; oscillation_<edge>.csv: n,normalized_raw,post_prediction

Numbers are written with 17 significant digits. Negative grids need the
'=' form, e.g. --t-grid=-2:2:0.5.

Exit codes: 0 ok, 1 verification failure, 2 usage/config error, 3 numerical failure.
Environment: COULOMBGAP_CACHE (table cache directory) and other COULOMBGAP_* settings.
"""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coulombgap",
        description="Spectral-gap asymptotics of two-dimensional Coulomb gases with radial potentials.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--config", type=str, default=None,
                        help="Run configuration file (flat key = value lines).")
    parser.add_argument("--out", type=str, default=None,
                        help="Output directory (default: out).")
    parser.add_argument("--threads", type=int, default=None,
                        help="Worker threads for independent n-values and table builds.")
    parser.add_argument("--svg", action="store_true", default=None,
                        help="Also write SVG line plots of the CSV output.")
    parser.add_argument("--xlsx", action="store_true", default=None,
                        help="Also write an Excel workbook (analyze, verify).")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="More logging (-v INFO, -vv DEBUG).")

    subparsers = parser.add_subparsers(dest="command", required=True)
    geometry.register(subparsers)
    correlations.register(subparsers)
    fluctuations.register(subparsers)
    verification.register(subparsers)
    return parser


def configure_logging(verbose: int) -> None:
    if verbose >= 2:
        level = logging.DEBUG
    elif verbose == 1:
        level = logging.INFO
    else:
        level = settings.log_level
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)


def collect_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """Dotted configuration keys set on the command line"""
    overrides: Dict[str, Any] = {
        "out": args.out,
        "threads": args.threads,
        "svg": args.svg,
        "xlsx": args.xlsx,
    }
    for dest, key in getattr(args, "overrides", {}).items():
        overrides[key] = getattr(args, dest, None)
    overrides.update(config_service.lambda_overrides(getattr(args, "lambda_flag", None)))
    return overrides


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose)
    try:
        config = config_service.load(args.config, collect_overrides(args))
        if config.threads is not None:
            settings.THREADS = config.threads
        return args.handler(config)
    except CoulombGapError as e:
        logger.debug("Command %s failed", args.command, exc_info=True)
        print(f"coulombgap {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return exit_code_for(e)
    except Exception as e:
        logger.debug("Command %s failed in a numerical routine", args.command, exc_info=True)
        print(f"coulombgap {args.command}: numerical failure: {type(e).__name__}: {e}", file=sys.stderr)
        return exit_code_for(e)


if __name__ == "__main__":
    sys.exit(main())
