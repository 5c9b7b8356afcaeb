"""
density and kernel2pt: exact correlations against their edge predictions.
"""
import argparse
import logging
from typing import List, Optional

from errors import EXIT_OK
from models import DropletGeometry, PredictionRecord, RunConfig
from services.asymptotics import (
    edge_point,
    predict_density_gap_inner,
    predict_density_gap_outer_edge,
    predict_density_outer_boundary,
    predict_two_point,
)
from services.droplet import gap_state, require_gap, solve_droplet
from services.kernel import build_weight_table, one_point, two_point
from services.potential import PerturbedPotential, RadialProfile, RadialTestFunction, build_potential, build_test_function
from services.report_service import report_service

logger = logging.getLogger(__name__)


def register(subparsers: argparse._SubParsersAction) -> None:
    density = subparsers.add_parser(
        "density",
        help="One-point function at an edge (CSV t,z,exact,predicted,residual).",
    )
    density.add_argument("--n", type=str, default=None, help="n-list or a:b:step grid.")
    density.add_argument("--t-grid", dest="t_grid", type=str, default=None,
                         help="Microscopic edge coordinates, a:b:step.")
    density.add_argument("--edge", choices=["r1", "r2", "outer"], default=None)
    density.add_argument("--mode", choices=["exact", "predicted", "both"], default=None)
    density.add_argument("--s", type=float, default=None, help="Perturbation strength.")
    density.add_argument("--lambda", dest="lambda_flag", type=str, default=None,
                         help="Test function KIND:R_LO:R_HI[:HEIGHT].")
    density.set_defaults(handler=cmd_density,
                         overrides={"n": "n", "t_grid": "t.grid", "edge": "edge", "mode": "mode", "s": "s"})

    kernel = subparsers.add_parser(
        "kernel2pt",
        help="Two-point kernel across the gap (CSV with complex values as re,im).",
    )
    kernel.add_argument("--n", type=str, default=None, help="n-list or a:b:step grid.")
    kernel.add_argument("--kernel-mode", dest="kernel_mode", choices=["general", "r1r2", "r1r1"], default=None)
    kernel.add_argument("--t", dest="kernel_t", type=float, default=None, help="Edge coordinate of z.")
    kernel.add_argument("--s", dest="kernel_s", type=float, default=None, help="Edge coordinate of w.")
    kernel.add_argument("--theta1", type=float, default=None, help="Angle of z.")
    kernel.add_argument("--theta2", type=float, default=None, help="Angle of w.")
    kernel.add_argument("--mode", choices=["exact", "predicted", "both"], default=None)
    kernel.set_defaults(handler=cmd_kernel2pt,
                        overrides={"n": "n", "kernel_mode": "kernel.mode", "kernel_t": "kernel.t",
                                   "kernel_s": "kernel.s", "theta1": "kernel.theta1",
                                   "theta2": "kernel.theta2", "mode": "mode"})


def _edge_constants(geometry: DropletGeometry, edge: str):
    if edge == "outer":
        return geometry.outer_radius, geometry.outer_dq
    gp = require_gap(geometry)
    return (gp.r1, gp.dq1) if edge == "r1" else (gp.r2, gp.dq2)


def _predict(geometry: DropletGeometry, edge: str, t: float, n: int, s: float,
             lam: Optional[RadialTestFunction]) -> float:
    if edge == "outer":
        return predict_density_outer_boundary(geometry, t, n).total
    gp = geometry.gap
    state = gap_state(gp, n)
    if edge == "r1":
        return predict_density_gap_inner(gp, state, t, s, lam).total
    return predict_density_gap_outer_edge(gp, state, t, s, lam).total


def density_records(p: RadialProfile, geometry: DropletGeometry, config: RunConfig, n: int) -> List[PredictionRecord]:
    lam = build_test_function(config.lam)
    radius, dq = _edge_constants(geometry, config.edge)
    if config.edge == "outer" and config.s:
        logger.warning("Outer-boundary prediction carries no perturbation term; s=%g ignored there", config.s)
    exact_needed = config.mode in ("exact", "both")
    predicted_needed = config.mode in ("predicted", "both")
    pp = PerturbedPotential(p, lam, config.s, n)
    table = build_weight_table(pp) if exact_needed else None
    records = []
    for t in config.t_grid:
        z = edge_point(radius, dq, t, n)
        record = PredictionRecord(n=n, t=t, z=abs(z))
        if exact_needed:
            record.exact = one_point(pp, table, z)
        if predicted_needed:
            record.predicted = _predict(geometry, config.edge, t, n, config.s, lam)
        records.append(record)
    return records


def cmd_density(config: RunConfig) -> int:
    p = build_potential(config.potential)
    geometry = solve_droplet(p)
    for n in config.n:
        records = density_records(p, geometry, config, n)
        df = report_service.frame("density", [r.row() for r in records])
        target = report_service.write_csv(df, config.out / f"density_n{n}.csv")
        if config.svg:
            ys = [c for c in ("exact", "predicted") if df[c].notna().any()]
            report_service.write_svg(df, "t", ys, config.out / f"density_n{n}.svg",
                                     title=f"One-point function at {config.edge}, n={n}", ylabel="R_n")
        print(f"wrote {target}")
    return EXIT_OK


def _two_point_points(geometry: DropletGeometry, config: RunConfig, n: int):
    gp = require_gap(geometry)
    z = edge_point(gp.r1, gp.dq1, config.kernel_t, n, config.theta1)
    if config.kernel_mode == "r1r1":
        w = edge_point(gp.r1, gp.dq1, config.kernel_s, n, config.theta2)
    else:
        w = edge_point(gp.r2, gp.dq2, config.kernel_s, n, config.theta2)
    return z, w


def kernel_rows(p: RadialProfile, geometry: DropletGeometry, config: RunConfig) -> List[dict]:
    gp = require_gap(geometry)
    rows = []
    for n in config.n:
        z, w = _two_point_points(geometry, config, n)
        row = {"n": n, "t": config.kernel_t, "s": config.kernel_s,
               "theta1": config.theta1, "theta2": config.theta2}
        if config.mode in ("exact", "both"):
            pp = PerturbedPotential(p, None, 0.0, n)
            exact = two_point(pp, build_weight_table(pp), z, w).as_complex()
            row.update(exact_re=exact.real, exact_im=exact.imag)
        if config.mode in ("predicted", "both"):
            predicted = predict_two_point(gp, gap_state(gp, n), z, w, mode=config.kernel_mode, p=p)
            row.update(predicted_re=predicted.real, predicted_im=predicted.imag)
        rows.append(row)
    return rows


def cmd_kernel2pt(config: RunConfig) -> int:
    p = build_potential(config.potential)
    geometry = solve_droplet(p)
    df = report_service.frame("kernel2pt", kernel_rows(p, geometry, config))
    target = report_service.write_csv(df, config.out / f"kernel2pt_{config.kernel_mode}.csv")
    print(f"wrote {target}")
    return EXIT_OK
