"""
cgf and sample: fluctuations of radial linear statistics.
"""
import argparse
import logging
from typing import List

from errors import EXIT_OK, ConfigError
from models import DropletGeometry, RunConfig
from services.asymptotics import cgf_prediction, cgf_predict_radial, oscillation_law
from services.droplet import gap_state, solve_droplet
from services.potential import RadialProfile, RadialTestFunction, build_potential, build_test_function
from services.report_service import report_service
from services.statistics import (
    empirical_fluct,
    exact_cgf_curve,
    exact_cgf_ward,
    ks_two_sample,
    sample,
    sample_predicted_law,
)

logger = logging.getLogger(__name__)

ROUTE_ORDER = ("product", "ward", "predicted")


def register(subparsers: argparse._SubParsersAction) -> None:
    cgf = subparsers.add_parser(
        "cgf",
        help="Cumulant generating function of fluct_n lambda (CSV t,<routes>).",
    )
    cgf.add_argument("--n", type=str, default=None, help="n-list or a:b:step grid.")
    cgf.add_argument("--t", dest="t_grid", type=str, default=None, help="t grid, a:b:step.")
    cgf.add_argument("--routes", type=str, default=None,
                     help="Comma list of product, ward, predicted.")
    cgf.add_argument("--s-steps", dest="s_steps", type=int, default=None,
                     help="Gauss-Legendre nodes of the Ward route (>= 8).")
    cgf.add_argument("--lambda", dest="lambda_flag", type=str, default=None,
                     help="Test function KIND:R_LO:R_HI[:HEIGHT].")
    cgf.set_defaults(handler=cmd_cgf,
                     overrides={"n": "n", "t_grid": "t.grid", "routes": "routes", "s_steps": "s_steps"})

    draw = subparsers.add_parser(
        "sample",
        help="Exact samples of fluct_n lambda (CSV sample,fluct).",
    )
    draw.add_argument("--n", type=str, default=None, help="n-list or a:b:step grid.")
    draw.add_argument("--count", type=int, default=None, help="Number of samples.")
    draw.add_argument("--seed", type=int, default=None, help="Root seed.")
    draw.add_argument("--lambda", dest="lambda_flag", type=str, default=None,
                      help="Test function KIND:R_LO:R_HI[:HEIGHT].")
    draw.set_defaults(handler=cmd_sample, overrides={"n": "n", "count": "count", "seed": "seed"})


def _require_lambda(config: RunConfig) -> RadialTestFunction:
    if config.lam is None:
        raise ConfigError("this command needs a test function (lambda.* keys or --lambda)")
    return build_test_function(config.lam)


def cgf_rows(lam: RadialTestFunction, p: RadialProfile, geometry: DropletGeometry,
             config: RunConfig, n: int) -> List[dict]:
    rows = [{"t": t} for t in config.t_grid]
    if "product" in config.routes:
        curve = exact_cgf_curve(lam, p, n, config.t_grid, geometry)
        for row, value in zip(rows, curve.values):
            row["product"] = value
    if "ward" in config.routes:
        for row in rows:
            row["ward"] = exact_cgf_ward(lam, p, n, row["t"], config.s_steps, geometry)
    if "predicted" in config.routes:
        for row in rows:
            row["predicted"] = cgf_predict_radial(lam, p, geometry, n, row["t"])
    return rows


def cmd_cgf(config: RunConfig) -> int:
    lam = _require_lambda(config)
    p = build_potential(config.potential)
    geometry = solve_droplet(p)
    routes = [r for r in ROUTE_ORDER if r in config.routes]
    for n in config.n:
        df = report_service.frame("cgf", cgf_rows(lam, p, geometry, config, n), ["t"] + routes)
        target = report_service.write_csv(df, config.out / f"cgf_n{n}.csv")
        if config.svg:
            report_service.write_svg(df, "t", routes, config.out / f"cgf_n{n}.svg",
                                     title=f"CGF of fluct_n lambda, n={n}", ylabel="log E exp(t fluct)")
        print(f"wrote {target}")
    return EXIT_OK


def cmd_sample(config: RunConfig) -> int:
    lam = _require_lambda(config)
    p = build_potential(config.potential)
    geometry = solve_droplet(p)
    for n in config.n:
        batch = sample(p, geometry, n, config.count, config.seed)
        values = empirical_fluct(batch, lam, p, geometry)
        rows = [{"sample": i, "fluct": v} for i, v in enumerate(values)]
        target = report_service.write_csv(report_service.frame("sample", rows), config.out / f"sample_n{n}.csv")
        print(f"wrote {target}")

        prediction = cgf_prediction(lam, p, geometry, n)
        law, c = (None, 0.0)
        if geometry.gap is not None:
            law, c = oscillation_law(geometry.gap, gap_state(geometry.gap, n), lam)
        reference = sample_predicted_law(prediction, law, c, config.count, config.seed)
        statistic, pvalue = ks_two_sample(values, reference)
        print(f"n={n}: mean {values.mean():.6g} (predicted {prediction.e:.6g}), "
              f"variance {values.var(ddof=1):.6g}; KS vs predicted law D={statistic:.4f} p={pvalue:.3g}")
    return EXIT_OK
