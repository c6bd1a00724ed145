"""Command-line front door.

Subcommands: ``validate``, ``spectral``, ``mean``, ``second-moment``,
``laplace``, ``simulate``, ``verify``.  Machine-readable outputs carry 17
significant digits; human tables use 6.  Exit status: 0 on success, 1 when
a validation/verification check fails, 2 on usage, parse or precondition
errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

import numpy as np

from . import moments, riccati, verify
from .model import SchemaError, load_model, validate_admissible
from .simulate import SimConfig, ensemble_csv, simulate_ensemble, simulate_path, trajectory_csv
from .spectral import (
    DefectiveSpectrumError,
    NotIrreducibleError,
    build_mean_params,
    perron_and_classify,
)

_USAGE_ERRORS = (
    SchemaError,
    NotIrreducibleError,
    DefectiveSpectrumError,
    verify.PreconditionError,
    json.JSONDecodeError,
    OSError,
    ValueError,
    IndexError,
)

_CHECK_NAMES = ("martingale", "convergence", "direction", "laplace", "moment")


def _csv_floats(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok != ""]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated floats, got {text!r}") from exc


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _hfmt(x: float) -> str:
    return format(float(x), ".6g")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mtcbi",
        description="Multi-type branching-with-immigration models: formulas, simulation, verification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, *, sim: bool = False) -> None:
        p.add_argument("--model", required=True, help="path to a model JSON file")
        if sim:
            p.add_argument("--dt", type=float, default=1e-3, help="simulation step (default 1e-3)")
            p.add_argument("--paths", type=int, default=10_000, help="ensemble size")
            p.add_argument("--seed", type=int, default=0, help="64-bit master seed")
            p.add_argument("--workers", type=int, default=1, help="worker processes (advisory)")

    p = sub.add_parser("validate", help="check admissibility and print the report")
    common(p)

    p = sub.add_parser("spectral", help="print mean matrix, Perron data and criticality")
    common(p)

    p = sub.add_parser("mean", help="closed-form mean vector over a time grid")
    common(p)
    p.add_argument("--t", type=float, help="single evaluation time")
    p.add_argument("--t-grid", type=_csv_floats, help="comma-separated times")
    p.add_argument("--out", help="write CSV to this path")

    p = sub.add_parser("second-moment", help="projected second moment over a time grid")
    common(p)
    p.add_argument("--pair", type=int, default=0, help="eigenpair index (dominant = 0)")
    p.add_argument("--t", type=float, help="single evaluation time")
    p.add_argument("--t-grid", type=_csv_floats, help="comma-separated times")
    p.add_argument("--out", help="write CSV to this path")

    p = sub.add_parser("laplace", help="transition-semigroup Laplace transform")
    common(p)
    p.add_argument("--lambda", dest="lam", type=_csv_floats, required=True, help="transform argument (d floats)")
    p.add_argument("--x", type=_csv_floats, help="initial state override (d floats)")
    p.add_argument("--t", type=float, help="single evaluation time")
    p.add_argument("--t-grid", type=_csv_floats, help="comma-separated times")
    p.add_argument("--out", help="write CSV to this path")

    p = sub.add_parser("simulate", help="simulate trajectories / ensembles, write CSV")
    common(p, sim=True)
    p.add_argument("--t", type=float, help="horizon (records final state only)")
    p.add_argument("--t-grid", type=_csv_floats, help="record times; horizon is their max")
    p.add_argument("--pair", type=int, help="record |<v,X>|^2 for this eigenpair")
    p.add_argument("--out", help="write CSV to this path (default stdout)")

    p = sub.add_parser("verify", help="run statistical checks and write a report")
    common(p, sim=True)
    p.add_argument(
        "--checks",
        default=",".join(_CHECK_NAMES),
        help=f"comma-separated subset of {{{','.join(_CHECK_NAMES)}}}",
    )
    p.add_argument("--pair", type=int, default=0, help="eigenpair index for projection checks")
    p.add_argument("--mode", choices=("l1", "l2"), default="l1", help="convergence check mode")
    p.add_argument("--t", type=float, help="evaluation time for the laplace check")
    p.add_argument("--t-grid", type=_csv_floats, help="grid for martingale/moment checks")
    p.add_argument("--lambda", dest="lam", type=_csv_floats, help="laplace argument (d floats)")
    p.add_argument("--x", type=_csv_floats, help="initial state override for the laplace check")
    p.add_argument("--out", help="write the JSON report to this path")
    return parser


def _t_grid(args, fallback: list[float]) -> list[float]:
    if getattr(args, "t_grid", None):
        return list(args.t_grid)
    if getattr(args, "t", None) is not None:
        return [args.t]
    return fallback


def _load(args):
    params = load_model(args.model)
    report = validate_admissible(params)
    if not report.ok:
        raise SchemaError("model failed validation; run the validate subcommand for details")
    b_tilde, beta_tilde = build_mean_params(params)
    return params, perron_and_classify(b_tilde, beta_tilde)


def _write_or_print(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)


def _cmd_validate(args) -> int:
    params = load_model(args.model)
    report = validate_admissible(params)
    print(report.render())
    return 0 if report.ok else 1


def _cmd_spectral(args) -> int:
    params, spec = _load(args)
    print("B~ =")
    for row in spec.b_tilde:
        print("  [" + ", ".join(_hfmt(v) for v in row) + "]")
    print("beta~ = [" + ", ".join(_hfmt(v) for v in spec.beta_tilde) + "]")
    print(f"s = {_hfmt(spec.s)}")
    print("u_right = [" + ", ".join(_hfmt(v) for v in spec.u_right) + "]")
    print("u_left  = [" + ", ".join(_hfmt(v) for v in spec.u_left) + "]")
    for k, (lam, v) in enumerate(spec.eigen):
        vec = ", ".join(f"{z.real:.6g}{z.imag:+.6g}j" for z in v)
        print(f"pair {k}: lambda = {lam.real:.6g}{lam.imag:+.6g}j, v = [{vec}]")
    print(f"class = {spec.criticality}")
    return 0


def _cmd_mean(args) -> int:
    params, spec = _load(args)
    grid = _t_grid(args, [1.0])
    rows = [(t, moments.mean_vector(params, spec, t)) for t in grid]
    if args.out:
        header = "t," + ",".join(f"mean_{i + 1}" for i in range(params.d))
        body = "\n".join(",".join([_fmt(t)] + [_fmt(v) for v in m]) for t, m in rows)
        _write_or_print(header + "\n" + body + "\n", args.out)
    for t, m in rows:
        print(f"t = {_hfmt(t)}: mean = [" + ", ".join(_hfmt(v) for v in m) + "]")
    return 0


def _cmd_second_moment(args) -> int:
    params, spec = _load(args)
    grid = _t_grid(args, [1.0])
    rows = [(t, moments.second_moment_projection(params, spec, args.pair, t)) for t in grid]
    if args.out:
        header = "t,total,e_term," + ",".join(f"i_term_{i + 1}" for i in range(params.d)) + ",nu_term"
        body = "\n".join(
            ",".join([_fmt(t), _fmt(b.total), _fmt(b.e_term)] + [_fmt(v) for v in b.i_terms] + [_fmt(b.nu_term)])
            for t, b in rows
        )
        _write_or_print(header + "\n" + body + "\n", args.out)
    for t, b in rows:
        print(
            f"t = {_hfmt(t)}: E|<v,X>|^2 = {_hfmt(b.total)} "
            f"(initial/drift {_hfmt(b.e_term)}, types [{', '.join(_hfmt(v) for v in b.i_terms)}], "
            f"immigration {_hfmt(b.nu_term)})"
        )
    return 0


def _cmd_laplace(args) -> int:
    params, spec = _load(args)
    grid = _t_grid(args, [1.0])
    x = params.x0 if args.x is None else np.asarray(args.x, dtype=float)
    lam = np.asarray(args.lam, dtype=float)
    rows = [(t, riccati.laplace_transform(params, x, lam, t)) for t in grid]
    if args.out:
        _write_or_print("t,laplace\n" + "\n".join(f"{_fmt(t)},{_fmt(v)}" for t, v in rows) + "\n", args.out)
    for t, v in rows:
        print(f"t = {_hfmt(t)}: E exp(-<lambda, X_t>) = {_hfmt(v)}")
    return 0


def _cmd_simulate(args) -> int:
    params, spec = _load(args)
    grid = _t_grid(args, [1.0])
    cfg = SimConfig(
        dt=args.dt,
        horizon=float(max(grid)),
        paths=args.paths,
        seed=args.seed,
        record_grid=tuple(grid),
        workers=args.workers,
    )
    if args.paths == 1:
        traj = simulate_path(params, spec, cfg, 0)
        _write_or_print(trajectory_csv(traj), args.out)
        return 0
    projections = [spec.eigen[args.pair][1]] if args.pair is not None else None
    stats = simulate_ensemble(params, spec, cfg, projections=projections)
    _write_or_print(ensemble_csv(stats), args.out)
    return 0


def _cmd_verify(args) -> int:
    params, spec = _load(args)
    names = [n.strip() for n in args.checks.split(",") if n.strip()]
    unknown = set(names) - set(_CHECK_NAMES)
    if unknown:
        raise verify.PreconditionError(f"unknown checks: {sorted(unknown)}")
    base = SimConfig(dt=args.dt, horizon=1.0, paths=args.paths, seed=args.seed, workers=args.workers)
    short_grid = _t_grid(args, [0.25, 0.5, 1.0])
    results = []
    for k, name in enumerate(names):
        # distinct derived seed per check: splitmix-style mixing of the index
        check_seed = (args.seed ^ ((k + 1) * 0x9E3779B97F4A7C15)) % 2 ** 64
        cfg = replace(base, seed=check_seed)
        if name == "martingale":
            results.append(verify.martingale_defect(params, spec, cfg, short_grid))
        elif name == "moment":
            results.append(verify.moment_check(params, spec, cfg, args.pair, short_grid))
        elif name == "convergence":
            grid = args.t_grid or list(verify.default_limit_grid(spec))
            results.append(
                verify.convergence_series(params, spec, cfg, args.pair, grid, args.mode.upper())
            )
        elif name == "direction":
            grid = args.t_grid or list(verify.default_limit_grid(spec, points=3))
            results.append(verify.direction_residual(params, spec, cfg, grid))
        elif name == "laplace":
            lam = args.lam if args.lam is not None else [1.0] * params.d
            t = args.t if args.t is not None else 1.0
            results.append(verify.laplace_check(params, spec, cfg, args.x, [lam], t))
    report = verify.VerificationReport(
        model=params.to_dict(),
        spectral={
            "b_tilde": spec.b_tilde.tolist(),
            "beta_tilde": spec.beta_tilde.tolist(),
            "s": spec.s,
            "criticality": spec.criticality,
            "u_right": spec.u_right.tolist(),
            "u_left": spec.u_left.tolist(),
        },
        checks=tuple(results),
        seed=args.seed,
        config={"dt": args.dt, "paths": args.paths, "workers": args.workers, "checks": names},
    )
    if args.out:
        _write_or_print(json.dumps(report.to_jsonable(), indent=2) + "\n", args.out)
    print(report.render_text())
    return 0 if report.all_passed else 1


_COMMANDS = {
    "validate": _cmd_validate,
    "spectral": _cmd_spectral,
    "mean": _cmd_mean,
    "second-moment": _cmd_second_moment,
    "laplace": _cmd_laplace,
    "simulate": _cmd_simulate,
    "verify": _cmd_verify,
}


def run(argv: list[str] | None = None) -> int:
    """Parse arguments and dispatch; returns the process exit status."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        return _COMMANDS[args.command](args)
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
