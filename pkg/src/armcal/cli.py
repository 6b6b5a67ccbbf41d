"""Command line front end: ``armcal calibrate | simulate | compare``.

Units at this boundary are the public ones: joint angles in degrees,
positions in micrometers, sigma levels in micrometers, load mass in
kilograms.  Outputs are written atomically (write-then-rename), so a failed
run never leaves partial files.  Errors print one machine-parsable line to
stderr, ``ERROR <CODE>: message``, and exit nonzero.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import reference, reports
from .errors import CalibrationError
from .estimator import (
    DEFAULT_LAMBDA,
    DEFAULT_MAX_ITER,
    DEFAULT_REL_TOL,
    irls,
    ols_estimate,
    robust_weights,
    wls_estimate,
)
from .fileio import (
    load_measurements,
    load_model,
    load_noise_table,
    write_ground_truth,
    write_measurements,
    write_noise_table,
)
from .noise import DEFAULT_SIGMA0, deflection_dispersions
from .regressor import ComplianceParameterMap, stack_system
from .simulator import monte_carlo_compare, simulate_measurements

_UM = 1e-6

OUT_ENV = "ARMCAL_OUT"


def _add_common_estimator_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--sigma0", type=float, default=DEFAULT_SIGMA0 / _UM,
                   help="measurement-system precision floor, um (default 10)")
    p.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA,
                   help="weight saturation strength (default 1)")
    p.add_argument("--rel-tol", type=float, default=DEFAULT_REL_TOL,
                   help="reweighting stop tolerance on parameter change (default 1e-3)")
    p.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER,
                   help="reweighting iteration cap (default 20)")


def _out_dir(args) -> Path:
    out = Path(args.out if args.out is not None else os.environ.get(OUT_ENV, "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_model(args):
    return load_model(args.model) if args.model else reference.nominal_model()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="armcal",
        description="Geometric and elastostatic calibration of serial manipulators "
        "with dispersion-aware weighted least squares.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    cal = sub.add_parser("calibrate", help="identify parameters from a measurement file")
    cal.add_argument("--measurements", required=True, help="measurement file path")
    cal.add_argument("--model", help="model file (default: bundled 6R model)")
    cal.add_argument("--noise", help="noise table; omit to estimate from replicates")
    cal.add_argument("--method", choices=("ols", "wls", "irls"), default="wls")
    cal.add_argument("--mode", choices=("elastostatic", "geometric", "combined"),
                     default="elastostatic")
    cal.add_argument("--params", help="comma-separated geometric parameter ids "
                     "(required for geometric/combined modes)")
    cal.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or .)")
    _add_common_estimator_args(cal)

    sim = sub.add_parser("simulate", help="generate a synthetic deflection study")
    sim.add_argument("--model", help="model file (default: bundled 6R model)")
    sim.add_argument("--noise", help="noise table (default: bundled study levels)")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--markers", type=int, default=reference.DEFAULT_MARKERS)
    sim.add_argument("--repetitions", type=int, default=reference.DEFAULT_REPETITIONS)
    sim.add_argument("--mass", type=float, default=reference.DEFAULT_MASS_KG,
                     help="load mass, kg (default 265)")
    sim.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or .)")

    cmp_ = sub.add_parser("compare", help="Monte Carlo comparison of OLS/WLS/IRLS")
    cmp_.add_argument("--model", help="model file (default: bundled 6R model)")
    cmp_.add_argument("--trials", type=int, default=200)
    cmp_.add_argument("--seed", type=int, default=0)
    cmp_.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or .)")
    _add_common_estimator_args(cmp_)
    return parser


def _cmd_calibrate(args) -> int:
    model = _load_model(args)
    records = load_measurements(args.measurements)
    noise = load_noise_table(args.noise) if args.noise else deflection_dispersions(records)
    sigma0 = args.sigma0 * _UM

    configs = {}
    for rec in records:
        configs.setdefault(rec.config, rec.q)
    cmap = ComplianceParameterMap.from_configurations(
        [configs[c] for c in sorted(configs)]
    )
    params = args.params.split(",") if args.params else None
    if args.mode in ("geometric", "combined") and not params:
        print(f"ERROR E_USAGE: --mode {args.mode} requires --params", file=sys.stderr)
        return 2
    sys_ = stack_system(records, model, cmap, noise, mode=args.mode,
                        params=params, sigma_floor=sigma0)

    results = [ols_estimate(sys_)]
    if args.method == "wls":
        results.append(wls_estimate(sys_, robust_weights(sys_.sigma, sigma0, args.lam)))
    elif args.method == "irls":
        results.append(irls(sys_, sigma0=sigma0, lam=args.lam,
                            rel_tol=args.rel_tol, max_iter=args.max_iter))
    final = results[-1]

    out = _out_dir(args)
    written = reports.write_parameter_report(out, results)
    if len(results) > 1:
        written += reports.write_ratio_report(out, results[0], final)
    written.append(reports.write_residual_report(out, sys_, final))
    if final.iterations:
        written += reports.write_trace_report(out, final)
    for path in written:
        print(f"wrote {path}")
    if not final.converged:
        print(f"note: reweighting stopped early ({final.stop_reason})")
    return 0


def _cmd_simulate(args) -> int:
    model = _load_model(args)
    noise = load_noise_table(args.noise) if args.noise else None
    design = reference.study_design(
        seed=args.seed,
        markers=args.markers,
        repetitions=args.repetitions,
        mass_kg=args.mass,
        noise=noise,
    )
    records = simulate_measurements(design, model)
    out = _out_dir(args)
    written = [
        write_measurements(out / "measurements.tsv", records),
        write_noise_table(out / "noise.tsv", design.noise),
        write_ground_truth(
            out / "ground_truth.tsv", design.cmap.parameter_names, design.ground_truth.values
        ),
    ]
    for path in written:
        print(f"wrote {path}")
    return 0


def _cmd_compare(args) -> int:
    model = _load_model(args)
    design = reference.study_design(seed=args.seed)
    mc = monte_carlo_compare(
        design,
        model,
        trials=args.trials,
        sigma0=args.sigma0 * _UM,
        lam=args.lam,
        rel_tol=args.rel_tol,
        max_iter=args.max_iter,
    )
    out = _out_dir(args)
    for path in reports.write_compare_report(out, mc):
        print(f"wrote {path}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {
        "calibrate": _cmd_calibrate,
        "simulate": _cmd_simulate,
        "compare": _cmd_compare,
    }[args.command]
    try:
        return handler(args)
    except CalibrationError as exc:
        print(f"ERROR {exc.code}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"ERROR E_IO: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
