"""Command-line interface: CSV data for densities, metrics and geodesics.

Exit codes: 0 success, 2 invalid parameters, 3 domain violation, 4 chart
exit, 5 verification failure.
"""

from __future__ import annotations

import argparse
import contextlib
import math
import sys
import time
from typing import Sequence

import numpy as np

from .base_density import custom
from .errors import ChartError, DomainError, FitError, LssError, NonConvergence, ValidationError
from .geodesics import (
    displacement_path,
    flat_chart,
    intrinsic_distance,
    intrinsic_geodesic,
    membership_test,
    membership_threshold,
    w2_distance,
)
from .metric import jacobian_omega, omega_to_theta, theta_to_omega, wim_numeric, wim_omega, wim_theta
from .model import LssModel, ThetaParams, gev, gpd
from .scores import INDICES, score, score_dx

EXIT_OK = 0
EXIT_PARAMS = 2
EXIT_DOMAIN = 3
EXIT_CHART = 4
EXIT_VERIFY = 5

WIM_TOLERANCE = 1e-6


def _fmt(value) -> str:
    return format(float(value) + 0.0, ".17g")


class _Fail(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _custom_model(name: str) -> LssModel:
    if name == "normal":
        base = custom(
            lambda z: np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi), name="normal"
        )
    elif name == "logistic":
        base = custom(
            lambda z: np.exp(-np.abs(z)) / (1 + np.exp(-np.abs(z))) ** 2,
            mgf_domain=(-1.0, 1.0),
            name="logistic",
        )
    else:
        raise _Fail(EXIT_PARAMS, f"unknown custom base {name!r}")
    return LssModel(base)


def _interval(text: str | None, flag: str):
    if text is None:
        return None
    parts = text.split(":")
    try:
        lo, hi = float(parts[0]), float(parts[1])
    except (ValueError, IndexError):
        raise _Fail(EXIT_PARAMS, f"{flag} expects LO:HI, got {text!r}") from None
    if len(parts) != 2 or not lo < hi:
        raise _Fail(EXIT_PARAMS, f"{flag} needs LO < HI, got {text!r}")
    return lo, hi


def _model(args) -> LssModel:
    shape = _interval(args.shape_interval, "--shape-interval") or (-0.45, 0.45)
    if args.family == "gev":
        return gev(shape)
    if args.family == "gpd":
        return gpd(shape)
    return LssModel(_custom_model(args.base).base, shape)


def _parse_theta(text: str) -> ThetaParams:
    parts = text.split(",")
    if len(parts) != 3:
        raise _Fail(EXIT_PARAMS, f"--theta expects mu,sigma,xi, got {text!r}")
    try:
        return ThetaParams(*(float(p) for p in parts))
    except (ValueError, ValidationError) as exc:
        raise _Fail(EXIT_PARAMS, f"invalid --theta {text!r}: {exc}") from None


def _parse_grid(text: str) -> np.ndarray:
    parts = text.split(":")
    try:
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
    except (ValueError, IndexError):
        raise _Fail(EXIT_PARAMS, f"--grid expects LO:HI:N, got {text!r}") from None
    if len(parts) != 3 or n < 2 or not lo < hi:
        raise _Fail(EXIT_PARAMS, f"--grid needs LO < HI and N >= 2, got {text!r}")
    return np.linspace(lo, hi, n)


def _parse_list(text: str, name: str) -> list[float]:
    try:
        return [float(p) for p in text.split(";") if p.strip()]
    except ValueError:
        raise _Fail(EXIT_PARAMS, f"{name} expects semicolon-separated numbers, got {text!r}") from None


def _thetas(args, count: int) -> list[ThetaParams]:
    given = args.theta or []
    if len(given) != count:
        raise _Fail(EXIT_PARAMS, f"this command needs exactly {count} --theta value(s)")
    return [_parse_theta(t) for t in given]


# ---------------------------------------------------------------------------


def cmd_density(args, out):
    model = _model(args)
    grid = _parse_grid(args.grid)
    if args.xi_list is not None:
        base = _parse_theta(args.theta[0]) if args.theta else ThetaParams(0.0, 1.0, 0.0)
        thetas = [base.replace(xi=xi) for xi in _parse_list(args.xi_list, "--xi-list")]
    else:
        thetas = _thetas(args, 1)
    out.write("xi,x,density\n")
    for th in thetas:
        for x, d in zip(grid, model.density(th, grid)):
            out.write(f"{_fmt(th.xi)},{_fmt(x)},{_fmt(d)}\n")
    return EXIT_OK


def _matrix_rows(g, prefix=None):
    lines = []
    for row in g:
        cells = [_fmt(v) for v in row]
        lines.append(",".join(([prefix] if prefix else []) + cells))
    return lines


def cmd_wim(args, out):
    model = _model(args)
    (theta,) = _thetas(args, 1)
    if args.chart == "omega":
        omega = theta_to_omega(model, theta)
        closed = wim_omega(model, omega).entries

        def numeric():
            jac_theta = jacobian_omega(model, omega)
            return wim_numeric(model, omega_to_theta(model, omega)).pullback(jac_theta, "omega").entries

    else:
        closed = wim_theta(model, theta).entries

        def numeric():
            return wim_numeric(model, theta).entries

    if not args.verify:
        out.write("c1,c2,c3\n")
        out.write("\n".join(_matrix_rows(closed)) + "\n")
        return EXIT_OK
    num = numeric()
    dev = float(np.max(np.abs(closed - num)) / np.max(np.abs(closed)))
    out.write("method,c1,c2,c3\n")
    out.write("\n".join(_matrix_rows(closed, "closed")) + "\n")
    out.write("\n".join(_matrix_rows(num, "numeric")) + "\n")
    out.write(f"# max_rel_deviation={_fmt(dev)}\n")
    return EXIT_OK if dev <= WIM_TOLERANCE else EXIT_VERIFY


def cmd_score(args, out):
    model = _model(args)
    (theta,) = _thetas(args, 1)
    grid = _parse_grid(args.grid)
    out.write("x,score,score_dx\n")
    s = score(model, theta, args.which, grid)
    d = score_dx(model, theta, args.which, grid)
    for x, a, b in zip(grid, s, d):
        out.write(f"{_fmt(x)},{_fmt(a)},{_fmt(b)}\n")
    return EXIT_OK


def _intrinsic_theta(model, chart, th1, th2, t):
    # endpoints are returned unchanged so their densities match exactly
    if t == 0.0:
        return th1
    if t == 1.0:
        return th2
    om1, om2 = theta_to_omega(model, th1), theta_to_omega(model, th2)
    return omega_to_theta(model, intrinsic_geodesic(chart, om1, om2, t))


def cmd_geodesic(args, out):
    model = _model(args)
    th1, th2 = _thetas(args, 2)
    grid = _parse_grid(args.grid)
    ts = _parse_list(args.t_list, "--t-list")
    if not ts or any(not 0.0 <= t <= 1.0 for t in ts):
        raise _Fail(EXIT_PARAMS, "--t-list values must lie in [0, 1]")
    modes = ("intrinsic", "extrinsic") if args.mode == "both" else (args.mode,)
    threshold, _ = membership_threshold(model)
    summary = []
    rows = ["mode,t,x,density"]
    if "intrinsic" in modes:
        chart = flat_chart(model, _interval(args.chart_interval, "--chart-interval"))
        om1, om2 = theta_to_omega(model, th1), theta_to_omega(model, th2)
        summary.append(f"# intrinsic_distance={_fmt(intrinsic_distance(chart, om1, om2))}")
    summary.append(f"# w2_distance={_fmt(w2_distance(model, th1, th2))}")
    summary.append(f"# membership_threshold={_fmt(threshold)}")
    for mode in modes:
        for t in ts:
            if mode == "intrinsic":
                th = _intrinsic_theta(model, chart, th1, th2, t)
                dens = model.density(th, grid)
                res = membership_test(model, displacement_path(model, th, th, 0.0)).residual
            else:
                path = displacement_path(model, th1, th2, t, x_grid=grid)
                dens = path.density
                res = membership_test(model, path).residual
            verdict = "member" if res <= threshold else "non-member"
            summary.append(f"# membership,{mode},{_fmt(t)},{_fmt(res)},{verdict}")
            rows.extend(f"{mode},{_fmt(t)},{_fmt(x)},{_fmt(d)}" for x, d in zip(grid, dens))
    out.write("\n".join(rows) + "\n")
    out.write("\n".join(summary) + "\n")
    return EXIT_OK


def cmd_w2(args, out):
    model = _model(args)
    th1, th2 = _thetas(args, 2)
    out.write("w2_distance\n")
    out.write(_fmt(w2_distance(model, th1, th2)) + "\n")
    return EXIT_OK


def cmd_verify(args, out):
    from .verify import run_suite

    corrupt = None
    if args.corrupt_wim:
        try:
            i, j, delta = args.corrupt_wim.split(",")
            corrupt = (int(i), int(j), float(delta))
        except ValueError:
            raise _Fail(EXIT_PARAMS, "--corrupt-wim expects I,J,DELTA") from None
    families = ("gev", "gpd") if args.family == "all" else (args.family,)
    if args.family == "custom":
        raise _Fail(EXIT_PARAMS, "verify supports gev, gpd or all")
    ok = True
    t0 = time.perf_counter()
    for fam in families:
        for check in run_suite(fam, corrupt):
            out.write(f"{fam} {check.line()}\n")
            out.flush()
            ok &= check.passed
    out.write(f"# {'PASS' if ok else 'FAIL'} total_time={time.perf_counter() - t0:.2f}s\n")
    return EXIT_OK if ok else EXIT_VERIFY


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--family", choices=("gev", "gpd", "custom"), default="gev")
    common.add_argument(
        "--base", choices=("normal", "logistic"), default="normal", help="generator for --family custom"
    )
    common.add_argument("--theta", action="append", metavar="MU,SIGMA,XI")
    common.add_argument("--shape-interval", metavar="LO:HI", help="open shape interval of the model")
    common.add_argument("--out", metavar="PATH", help="write to PATH instead of standard output")
    common.add_argument("--seed", type=int, default=0)

    parser = argparse.ArgumentParser(prog="lssgeo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("density", parents=[common], help="density values on a grid")
    p.add_argument("--grid", required=True, metavar="LO:HI:N")
    p.add_argument("--xi-list", metavar="XI;XI;...")
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("wim", parents=[common], help="Wasserstein information matrix")
    p.add_argument("--chart", choices=("theta", "omega"), default="theta")
    p.add_argument("--verify", action="store_true", help="compare with the quadrature oracle")
    p.set_defaults(func=cmd_wim)

    p = sub.add_parser("score", parents=[common], help="score function and its x-derivative")
    p.add_argument("--which", choices=INDICES, required=True)
    p.add_argument("--grid", required=True, metavar="LO:HI:N")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("geodesic", parents=[common], help="intrinsic and extrinsic geodesic densities")
    p.add_argument("--grid", required=True, metavar="LO:HI:N")
    p.add_argument("--t-list", default="0;0.25;0.5;0.75;1", metavar="T;T;...")
    p.add_argument("--mode", choices=("intrinsic", "extrinsic", "both"), default="both")
    p.add_argument("--chart-interval", metavar="LO:HI", help="shape interval of the flat chart")
    p.set_defaults(func=cmd_geodesic)

    p = sub.add_parser("w2", parents=[common], help="exact L2-Wasserstein distance")
    p.set_defaults(func=cmd_w2)

    p = sub.add_parser("verify", parents=[common], help="run the invariant suite")
    p.set_defaults(family="all")
    p.add_argument("--corrupt-wim", metavar="I,J,DELTA", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)
    return parser


_VALUE_FLAGS = ("--grid", "--xi-list", "--theta", "--t-list", "--corrupt-wim", "--shape-interval", "--chart-interval")


def _glue_values(argv: list[str]) -> list[str]:
    # argparse treats "-3:3:50" as an option; "--grid=-3:3:50" is unambiguous
    out = []
    i = 0
    while i < len(argv):
        if argv[i] in _VALUE_FLAGS and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(f"{argv[i]}={argv[i + 1]}")
            i += 2
        else:
            out.append(argv[i])
            i += 1
    return out


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    if argv is None:
        argv = sys.argv[1:]
    argv = _glue_values(list(argv))
    # verify also accepts --family all
    if argv and argv[0] == "verify" and "--family" in argv:
        k = argv.index("--family")
        if k + 1 < len(argv) and argv[k + 1] == "all":
            del argv[k : k + 2]
    args = parser.parse_args(argv)
    try:
        with contextlib.ExitStack() as stack:
            if args.out:
                out = stack.enter_context(open(args.out, "w", encoding="utf-8", newline="\n"))
            else:
                out = sys.stdout
            return args.func(args, out)
    except _Fail as exc:
        print(f"lssgeo: {exc}", file=sys.stderr)
        return exc.code
    except ValidationError as exc:
        print(f"lssgeo: invalid parameters: {exc}", file=sys.stderr)
        return EXIT_PARAMS
    except ChartError as exc:
        print(f"lssgeo: chart exit: {exc}", file=sys.stderr)
        return EXIT_CHART
    except DomainError as exc:
        print(f"lssgeo: domain violation: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (NonConvergence, FitError, LssError) as exc:
        print(f"lssgeo: numerical failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
