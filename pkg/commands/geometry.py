"""
analyze: droplet geometry and gap constants.
"""
import argparse
import logging
from typing import List

from errors import EXIT_OK
from models import RunConfig
from services.droplet import gap_state, solve_droplet
from services.potential import build_potential
from services.report_service import report_service

logger = logging.getLogger(__name__)


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser(
        "analyze",
        help="Solve for the droplet and write its geometry (CSV quantity,value).",
    )
    parser.add_argument("--n", type=str, default=None,
                        help="n-list or a:b:step grid for x(n), alpha(n).")
    parser.set_defaults(handler=cmd_analyze, overrides={"n": "n"})


def geometry_rows(config: RunConfig) -> List[dict]:
    p = build_potential(config.potential)
    geometry = solve_droplet(p)
    rows = []
    for k, (a, b) in enumerate(geometry.annuli):
        rows.append({"quantity": f"a{k}", "value": a})
        rows.append({"quantity": f"b{k}", "value": b})
    rows += [
        {"quantity": "outer_radius", "value": geometry.outer_radius},
        {"quantity": "robin_gamma", "value": geometry.robin_gamma},
        {"quantity": "frostman_margin", "value": geometry.frostman_margin},
        {"quantity": "gaps", "value": len(geometry.gaps)},
    ]
    gp = geometry.gap
    if gp is None:
        return rows
    for name in ("r1", "r2", "B", "A", "rho", "u", "C_lemma", "dq1", "dq2", "a0"):
        rows.append({"quantity": name, "value": getattr(gp, name)})
    for n in config.n:
        state = gap_state(gp, n)
        rows += [
            {"quantity": f"m[n={n}]", "value": state.m},
            {"quantity": f"x[n={n}]", "value": state.x},
            {"quantity": f"alpha[n={n}]", "value": state.alpha},
        ]
    return rows


def cmd_analyze(config: RunConfig) -> int:
    rows = geometry_rows(config)
    df = report_service.frame("analyze", rows)
    target = report_service.write_csv(df, config.out / "analyze.csv")
    gaps = int(df.loc[df["quantity"] == "gaps", "value"].iloc[0])
    if gaps == 0:
        outer = float(df.loc[df["quantity"] == "outer_radius", "value"].iloc[0])
        print(f"no gap: droplet is a single annulus/disk with outer radius {outer:.12g}")
    else:
        B = float(df.loc[df["quantity"] == "B", "value"].iloc[0])
        print(f"one gap, B = {B:.12g}")
    if config.xlsx:
        report_service.write_workbook({"Geometry": df}, config.out / "analyze.xlsx",
                                      summary={"Gaps": gaps})
    print(f"wrote {target}")
    return EXIT_OK
