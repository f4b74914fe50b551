"""Command-line entry point: ``ttqi validate | compute | scan | oracle``.

Exit codes: 0 success, 2 validation failure, 3 numerical failure,
64 usage error, 66 missing input.
"""

from __future__ import annotations

import argparse
import math
import sys
import warnings
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import SchemaError, TtqiError, ValidationError
from .fano import validate_physicality
from .inference import (
    STANDARD_OBSERVABLES,
    GridSpec,
    MeasurementRecord,
    Observable,
    profile_at,
    scan_observable,
    standard_observable,
)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3
EXIT_USAGE = 64
EXIT_NOINPUT = 66

ORACLE_CHECKS = ("discord", "steering", "profile", "all")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.format_usage()}{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ttqi", description="Quantum-information observables for top-quark pairs.")
    p.add_argument("--seed", type=int, default=0, help="seed for randomized checks")
    p.add_argument("--threads", type=int, default=1, help="bins processed concurrently")
    p.add_argument(
        "--tolerance",
        type=float,
        default=None,
        help="constraint residual tolerance for profile fits (default 1e-6)",
    )
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    v = sub.add_parser("validate", help="check an input file and report physicality")
    v.add_argument("file")

    c = sub.add_parser("compute", help="scan observables in every bin and emit a report")
    c.add_argument("file")
    c.add_argument("--observables", help="comma-separated subset of observables")
    c.add_argument(
        "--format", default="table-text", choices=("table-text", "csv", "structured", "plot-data")
    )
    c.add_argument("--out", help="write the report here instead of stdout")
    c.add_argument("--points", type=int, help="scan grid points per observable")

    s = sub.add_parser("scan", help="emit the -2 log L profile of one observable in one bin")
    s.add_argument("file")
    s.add_argument("--observable", required=True, choices=STANDARD_OBSERVABLES)
    s.add_argument("--bin", required=True, help="bin label")
    s.add_argument("--grid", help="lo:hi:n")
    s.add_argument("--points", type=int, help="grid points when --grid is absent")

    o = sub.add_parser("oracle", help="compare fast paths with the reference oracles")
    o.add_argument("check", choices=ORACLE_CHECKS)
    o.add_argument("--count", type=int, default=10, help="states or matrices per check")
    return p


def _load(path: str):
    from .report import parse_input

    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(path)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return parse_input(p)


def _request_with_flags(req, args, observables=None, points=None):
    from .report import with_scan_options

    changes = {"threads": 1}
    if args.tolerance is not None:
        changes["residual_tol"] = args.tolerance
    if points is not None:
        changes["n_points"] = points
    req = with_scan_options(req, **changes)
    if observables:
        from dataclasses import replace

        names = tuple(s.strip() for s in observables.split(",") if s.strip())
        req = replace(req, observables=names)
    return req


def _cmd_validate(args, out) -> int:
    req = _load(args.file)
    for w in req.warnings:
        print(f"warning: {w}", file=out)
    for rec in req.records:
        rep = validate_physicality(rec.observed, 1e-9)
        status = "physical" if rep.is_physical else "unphysical"
        print(f"{rec.label}: basis {rec.basis.kind.value}, min eigenvalue "
              f"{rep.min_eigenvalue:.6g} ({status})", file=out)
    print(f"ok: {len(req.records)} bin(s)", file=out)
    return EXIT_OK


def _cmd_compute(args, out) -> int:
    from .report import emit_report, run_analysis

    req = _request_with_flags(_load(args.file), args, args.observables, args.points)
    rows = run_analysis(req, threads=max(args.threads, 1))
    data = emit_report(rows, args.format)
    if args.out:
        Path(args.out).write_bytes(data)
    else:
        out.write(data.decode("utf-8"))
    return EXIT_OK


def _cmd_scan(args, out) -> int:
    req = _request_with_flags(_load(args.file), args, points=args.points)
    rec = req.record(args.bin)
    obs = standard_observable(args.observable, req.options.discord, req.options.quadrature)
    grid = GridSpec.parse(args.grid) if args.grid else None
    res = scan_observable(rec, obs, grid, req.options.scan)
    print(f"# observable {res.observable_name} bin {rec.label}", file=out)
    print(
        f"# central {res.central!r} ci68 [{res.ci68_low!r}, {res.ci68_high!r}] "
        f"at_boundary_low {res.at_boundary_low} at_boundary_high {res.at_boundary_high}",
        file=out,
    )
    print(f"# threshold {res.threshold!r} significance {res.significance!r} "
          f"({res.significance_side})", file=out)
    print("# value delta_chi2", file=out)
    for v, c in res.curve:
        print(f"{v!r} {c!r}", file=out)
    return EXIT_OK


def _check_discord(seed: int, count: int, out) -> bool:
    from .observables import discord
    from .oracles import analytic_state, grid_discord

    worst = 0.0
    for k in range(count):
        fano = analytic_state("random_physical", seed=seed + k).fano
        for side in ("top", "antitop"):
            worst = max(worst, abs(discord(fano, side).value - grid_discord(fano, side, 20000)))
    ok = worst < 5e-5
    print(f"discord: {count} states, max |fast - grid(20000)| = {worst:.3g} "
          f"[{'pass' if ok else 'FAIL'}]", file=out)
    return ok


def _check_steering(seed: int, count: int, out) -> bool:
    from .observables import steering_marker
    from .oracles import analytic_state, mc_steering

    worst = 0.0
    for k in range(count):
        C = analytic_state("random_physical", seed=seed + k).fano.C
        est, se = mc_steering(C, 10**6, seed + k)
        worst = max(worst, abs(steering_marker(C) - est) / se)
    ok = worst < 5.0
    print(f"steering: {count} matrices, max |quadrature - MC| = {worst:.3g} standard errors "
          f"[{'pass' if ok else 'FAIL'}]", file=out)
    return ok


def _check_profile(seed: int, count: int, out) -> bool:
    from .fano import BinKinematics
    from .oracles import dense_profile_oracle

    rng = np.random.default_rng(seed)
    worst = 0.0
    kin = BinKinematics((300.0, 400.0), (0.0, 0.4))
    for _ in range(max(count // 5, 1)):
        A = 0.02 * rng.standard_normal((15, 15))
        U = A @ A.T + 1e-4 * np.eye(15)
        o = rng.uniform(-0.2, 0.2, 15)
        g = rng.standard_normal(15)
        rec = MeasurementRecord(o, U, kin)
        obs = Observable("linear", lambda x, g=g: float(g @ x), gradient=lambda x, g=g: g)
        sigma = math.sqrt(g @ U @ g)
        for k in (1.0, 2.0):
            t = float(g @ o) + k * sigma
            worst = max(
                worst,
                abs(profile_at(rec, obs, t) - k * k),
                abs(dense_profile_oracle(rec, obs, t, 50, seed) - k * k),
            )
    ok = worst < 1e-3
    print(f"profile: max deviation from the analytic profile = {worst:.3g} "
          f"[{'pass' if ok else 'FAIL'}]", file=out)
    return ok


def _cmd_oracle(args, out) -> int:
    checks = {
        "discord": _check_discord,
        "steering": _check_steering,
        "profile": _check_profile,
    }
    names = list(checks) if args.check == "all" else [args.check]
    ok = all([checks[n](args.seed, args.count, out) for n in names])
    return EXIT_OK if ok else EXIT_NUMERICAL


_COMMANDS = {
    "validate": _cmd_validate,
    "compute": _cmd_compute,
    "scan": _cmd_scan,
    "oracle": _cmd_oracle,
}


def main(argv: Sequence[str] | None = None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        err.write(str(exc))
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return _COMMANDS[args.command](args, out)
    except (FileNotFoundError, IsADirectoryError) as exc:
        print(f"ttqi: cannot read input: {exc}", file=err)
        return EXIT_NOINPUT
    except (SchemaError, ValidationError) as exc:
        print(f"ttqi: invalid input: {exc}", file=err)
        return EXIT_INVALID
    except TtqiError as exc:
        print(f"ttqi: numerical failure: {exc}", file=err)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
