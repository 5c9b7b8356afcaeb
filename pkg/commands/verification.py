"""
verify: acceptance suites and the edge oscillation series.
"""
import argparse
import logging

from errors import EXIT_OK, EXIT_VERIFY_FAILED
from models import SUITE_NAMES, RunConfig
from services.report_service import report_service
from services.verify_service import verify_service

logger = logging.getLogger(__name__)


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser(
        "verify",
        help="Run the acceptance suites (CSV check,n,residual,bound,pass); exit 1 on any failure.",
    )
    parser.add_argument("--suites", type=str, default=None,
                        help=f"Comma list of suites (default all): {', '.join(SUITE_NAMES)}.")
    parser.add_argument("--n", dest="verify_n", type=str, default=None,
                        help="n-range of the edge oscillation series, a:b:step.")
    parser.set_defaults(handler=cmd_verify, overrides={"suites": "verify.suites", "verify_n": "verify.n"})


def cmd_verify(config: RunConfig) -> int:
    report = verify_service.run(config)
    checks = report.frame()
    target = report_service.write_csv(checks, config.out / "verify.csv")
    print(f"wrote {target}")

    for edge, frame in report.series.items():
        series_target = report_service.write_csv(frame, config.out / f"oscillation_{edge}.csv")
        print(f"wrote {series_target}")
        if config.svg:
            report_service.write_svg(frame, "n", ["normalized_raw", "post_prediction"],
                                     config.out / f"oscillation_{edge}.svg",
                                     title=f"Edge residuals at {edge}", ylabel="residual")
    if config.xlsx:
        sheets = {"Checks": checks}
        sheets.update({f"Oscillation {edge}": frame for edge, frame in report.series.items()})
        report_service.write_workbook(sheets, config.out / "verify.xlsx", summary={
            "Checks": len(report.checks),
            "Failed": sum(not c.passed for c in report.checks),
        })

    failed = [c.check for c in report.checks if not c.passed]
    if failed:
        print(f"{len(failed)} of {len(report.checks)} checks failed: {', '.join(failed)}")
        return EXIT_VERIFY_FAILED
    print(f"all {len(report.checks)} checks passed")
    return EXIT_OK
