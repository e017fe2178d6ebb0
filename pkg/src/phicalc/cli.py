"""Command-line entry point: one binary, subcommand style.

Exit codes: 0 on success or PASS, 1 when a verification reports FAIL, 2 on
usage errors or malformed input (with a line/column diagnostic for JSON).
All file output goes through the deterministic writers in
:mod:`phicalc.jsonio`.
"""

from __future__ import annotations

import argparse
import sys

from . import acceptance
from .indexsets import IndexSet, geq, greater_than
from . import indexsets
from .jsonio import JsonInputError, load_json, write_csv, write_json
from .models import (
    ModelGeometry,
    fit_exponents,
    imspec,
    normal_family_gap,
    solve_harmonic,
    verify_predictions,
)
from .models.geometry import assemble_DV
from .models.harmonic import FitError
from .opclasses import (
    ClassSum,
    CompositionError,
    GeomConstants,
    OpClass,
    compose,
    lift_b_to_phi,
)
from .parametrix import ParametrixError, SplitOperator, parametrix_report

_MODEL_KEYS = {"a", "base", "fiber", "x_max"}


def _load_model(path: str | None) -> ModelGeometry:
    if path is None:
        return ModelGeometry()
    data = load_json(path)
    unknown = set(data) - _MODEL_KEYS
    if unknown:
        raise JsonInputError(f"{path}: unknown model fields {sorted(unknown)}")
    return ModelGeometry.from_json(data)


def _load_class(path: str):
    data = load_json(path)
    try:
        if "sum" in data:
            return ClassSum.from_json(data)
        return OpClass.from_json(data)
    except (KeyError, ValueError, TypeError) as exc:
        raise JsonInputError(f"{path}: not a valid operator-class document: {exc}")


def _load_index_set(path: str) -> IndexSet:
    data = load_json(path)
    try:
        return IndexSet.from_json(data)
    except (KeyError, ValueError, TypeError) as exc:
        raise JsonInputError(f"{path}: not a valid index-set document: {exc}")


def _positive(value: float, what: str) -> float:
    if not value > 0:
        raise JsonInputError(f"{what} must be positive, got {value}")
    return value


def _parse_mode(text: str) -> tuple:
    text = text.strip()
    if text in ("", "-"):
        return ()
    return tuple(int(v) for v in text.split(","))


def _parse_grid(text: str) -> tuple:
    try:
        t_str, n_str = text.split(",")
        return float(t_str), int(n_str)
    except ValueError:
        raise JsonInputError(f"--grid expects T,N (e.g. 12,2048), got {text!r}")


# ---------------------------------------------------------------------------
# handlers


def _cmd_idx(args) -> int:
    if args.op in ("add", "union"):
        I = _load_index_set(args.inputs[0])
        J = _load_index_set(args.inputs[1])
        out = indexsets.add(I, J) if args.op == "add" else indexsets.extended_union(I, J)
        write_json(out.to_json(), args.out)
        return 0
    I = _load_index_set(args.inputs[0])
    if args.op == "shift":
        out = indexsets.shift(I, args.by)
        write_json(out.to_json(), args.out)
        return 0
    if args.op == "scale":
        out = indexsets.scale(I, int(args.by))
        write_json(out.to_json(), args.out)
        return 0
    # compare
    if args.alpha is None:
        raise JsonInputError("idx compare needs --alpha")
    write_json(
        {
            "alpha": args.alpha,
            "greater_than": greater_than(I, args.alpha),
            "geq": geq(I, args.alpha),
        },
        args.out,
    )
    return 0


def _cmd_compose(args) -> int:
    P = _load_class(args.left)
    Q = _load_class(args.right)
    geom = GeomConstants(a=args.a, b_dim=args.b_dim)
    out = compose(P, Q, geom, route=args.route)
    write_json(out.to_json(), args.out)
    return 0


def _cmd_lift(args) -> int:
    T = _load_class(args.input)
    main, res = lift_b_to_phi(T, a=args.a, b_dim=args.b_dim)
    write_json({"main": main.to_json(), "residual": res.to_json()}, args.out)
    return 0


def _cmd_parametrix(args) -> int:
    data = load_json(args.op)
    try:
        op = SplitOperator.from_json(data)
    except (KeyError, ValueError, TypeError) as exc:
        raise JsonInputError(f"{args.op}: not a valid split-operator document: {exc}")
    report = parametrix_report(op, args.alpha)
    write_json(report, args.report)
    return 0 if report["verdict"] == "PASS" else 1


def _cmd_imspec(args) -> int:
    model = _load_model(args.model)
    family = assemble_DV(model).family(args.family, args.volume)
    points = imspec(
        family,
        window=tuple(args.window),
        mode_cutoff=args.modes,
        scan_step=_positive(args.scan_step, "--scan-step"),
        sv_tol=_positive(args.tol, "--tol"),
    )
    write_csv([p.to_row() for p in points], ["mode", "lambda_root", "pole_order_k"], args.out)
    return 0


def _cmd_gap(args) -> int:
    import numpy as np

    model = _load_model(args.model)
    lo, hi = args.window
    grid = np.linspace(lo, hi, args.grid_points)
    rep = normal_family_gap(model, grid, grid, mode_cutoff=args.modes, tol=_positive(args.tol, "--tol"))
    write_json(rep.to_json(), args.out)
    return 0 if rep.normal_invertible else 1


def _cmd_solve(args) -> int:
    model = _load_model(args.model)
    t_max, n = _parse_grid(args.grid)
    base = _parse_mode(args.mode[0])
    fiber = _parse_mode(args.mode[1])
    sol = solve_harmonic(model, args.degree, (base, fiber), t_max=t_max, n=n)
    try:
        fit = fit_exponents(sol)
        rows = [fit.to_row()]
    except FitError as exc:
        print(f"fit rejected: {exc}", file=sys.stderr)
        return 1
    write_csv(rows, ["mode", "exponent", "log_power", "residual", "superpoly"], args.out)
    if args.samples:
        srows = [
            {"x": f"{x:.12g}", "abs_u": f"{abs(v):.12g}"}
            for x, v in zip(sol.x, sol.values[:, sol.component])
        ]
        write_csv(srows, ["x", "abs_u"], args.samples)
    return 0


def _cmd_verify(args) -> int:
    model = _load_model(args.model)
    rep = verify_predictions(model, alpha=args.alpha)
    write_json(rep.to_json(), args.out)
    return 0 if rep.passed else 1


def _cmd_verify_paper(args) -> int:
    model = _load_model(args.model)
    results = acceptance.run_all(model)
    if args.out:
        write_json([r.to_json() for r in results], args.out)
    return 0 if all(r.passed for r in results) else 1


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phicalc",
        description="index-set algebra, operator-class bookkeeping, split "
        "parametrix replay and fibred-cusp model numerics",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("idx", help="index-set operations on JSON files")
    p.add_argument("op", choices=["add", "union", "shift", "scale", "compare"])
    p.add_argument("inputs", nargs="+", help="input index-set JSON files")
    p.add_argument("--by", type=float, help="shift amount or scale factor")
    p.add_argument("--alpha", type=float, help="threshold for compare")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_idx)

    p = sub.add_parser("compose", help="compose two operator classes")
    p.add_argument("left")
    p.add_argument("right")
    p.add_argument("-a", type=int, required=True, help="degeneracy order")
    p.add_argument("--b-dim", type=int, required=True, help="base dimension")
    p.add_argument("--route", choices=["split"], default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_compose)

    p = sub.add_parser("lift", help="lift a full-family b-class to the phi side")
    p.add_argument("input")
    p.add_argument("-a", type=int, required=True)
    p.add_argument("--b-dim", type=int, required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_lift)

    p = sub.add_parser("parametrix", help="replay the split parametrix construction")
    p.add_argument("--op", required=True, help="split-operator JSON file")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--report", default=None, help="output report JSON")
    p.set_defaults(func=_cmd_parametrix)

    p = sub.add_parser("imspec", help="critical-weight scan of an indicial family")
    p.add_argument("--model", default=None, help="model JSON (default: unit torus model)")
    p.add_argument("--window", type=float, nargs=2, default=(-2.5, 2.5), metavar=("LO", "HI"))
    p.add_argument("--modes", type=int, default=3, metavar="N")
    p.add_argument("--family", choices=["scalar", "gb", "hodge"], default="scalar")
    p.add_argument("--volume", choices=["b", "g"], default="b")
    p.add_argument("--scan-step", type=float, default=1e-2)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--out", default=None, help="spectra CSV")
    p.set_defaults(func=_cmd_imspec)

    p = sub.add_parser("gap", help="normal-family gap over a covariable grid")
    p.add_argument("--model", default=None)
    p.add_argument("--window", type=float, nargs=2, default=(-5.0, 5.0), metavar=("LO", "HI"))
    p.add_argument("--grid-points", type=int, default=21)
    p.add_argument("--modes", type=int, default=2, metavar="N")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_gap)

    p = sub.add_parser("solve", help="solve the model harmonic equation for one mode")
    p.add_argument("--model", default=None)
    p.add_argument("--mode", nargs=2, required=True, metavar=("BASE", "FIBER"),
                   help="comma-separated mode tuples, e.g. --mode 1 0")
    p.add_argument("--degree", type=int, default=0)
    p.add_argument("--grid", default="12,2048", metavar="T,N")
    p.add_argument("--out", default=None, help="fits CSV")
    p.add_argument("--samples", default=None, help="optional samples CSV")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("verify", help="cross-check decay fits against the spectrum")
    p.add_argument("--model", default=None)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("verify-paper", help="run the full acceptance suite")
    p.add_argument("--model", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_verify_paper)

    return parser


def dispatch(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except JsonInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CompositionError, ParametrixError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main(argv=None) -> int:
    return dispatch(argv)


if __name__ == "__main__":
    sys.exit(main())
