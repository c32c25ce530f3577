"""Batch command-line front end.

Reads a JSON problem file describing either reduced-form matrices or raw IV
data (CSV references), runs one of the pipelines, and writes plot-ready CSV
to standard output with a ``#``-prefixed metadata header.

Subcommands: ``ci`` (robust CI per magnitude), ``path`` (frontier knots),
``efficiency`` (kappa bounds), ``spectest`` (S statistic and the lower bound
on the magnitude), ``simulate`` (Monte Carlo coverage in the limiting
experiment).

Exit codes: 0 success, 2 input validation, 3 numerical failure,
4 dimension/feasibility.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    FeasibilityError,
    MomentGuardError,
    NumericalError,
    ValidationError,
)
from .iv import IVData, build_b, build_model, drop_collinear_instruments
from .model import MisspecSet, MomentModel, validate_model
from .oracle import adversarial_c, mc_coverage
from .robust_ci import ci_from_sensitivity, two_sided_ci
from .efficiency import efficiency_report
from .sensitivity import frontier, knot_at, select_lambda
from .spec_test import m_lower_ci, s_statistic, test_at_m

_EXIT_VALIDATION = 2
_EXIT_NUMERICAL = 3
_EXIT_FEASIBILITY = 4


@dataclass
class ProblemFile:
    """Parsed problem description; exactly one of ``model``/``iv_data`` is set."""

    alpha: float = 0.05
    model: MomentModel | None = None
    iv_data: IVData | None = None
    b_spec: object = None            # matrix, {"identity_columns":[...]}, "from-iv"
    p: float = 2.0
    m_grid: list[float] = field(default_factory=lambda: [1.0])
    variance: str = "robust"
    criterion: str = "ci_length"
    beta: float = 0.8
    mixed: bool = False
    h_deriv: list[float] | None = None
    raw: dict = field(default_factory=dict)


def _read_matrix(value, base: Path, name: str) -> np.ndarray:
    """Inline row-major nested lists, or a CSV file reference with a header line."""
    if isinstance(value, str):
        path = base / value
        if not path.exists():
            raise ValidationError(f"{name}: referenced file {path} does not exist")
        rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return rows
    return np.asarray(value, dtype=float)


def parse_problem(path: str | Path) -> ProblemFile:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot parse problem file: {exc}") from exc
    base = path.parent
    prob = ProblemFile(raw=doc)

    has_model = "model" in doc
    has_iv = "iv" in doc
    if has_model == has_iv:
        raise ValidationError(
            "problem file must contain exactly one of 'model' or 'iv'")

    prob.alpha = float(doc.get("alpha", 0.05))
    opts = doc.get("options", {})
    prob.variance = opts.get("variance", "robust")
    prob.criterion = opts.get("criterion", "ci_length")
    prob.beta = float(opts.get("beta", 0.8))
    prob.mixed = bool(opts.get("mixed", False))

    if has_model:
        sec = doc["model"]
        for key in ("gamma", "sigma", "h_deriv", "g_init", "h_init", "n"):
            if key not in sec:
                raise ValidationError(f"model section missing field '{key}'")
        prob.model = MomentModel(
            gamma=_read_matrix(sec["gamma"], base, "gamma"),
            sigma=_read_matrix(sec["sigma"], base, "sigma"),
            h_deriv=np.asarray(sec["h_deriv"], dtype=float),
            g_init=np.asarray(sec["g_init"], dtype=float),
            h_init=float(sec["h_init"]),
            n=int(sec["n"]))
    else:
        sec = doc["iv"]
        for key in ("y", "x", "z"):
            if key not in sec:
                raise ValidationError(f"iv section missing field '{key}'")
        y = _read_matrix(sec["y"], base, "y").reshape(-1)
        x = _read_matrix(sec["x"], base, "x")
        z = _read_matrix(sec["z"], base, "z")
        prob.iv_data = IVData(y=y, x=x, z=z,
                              suspect=tuple(sec.get("suspect", ())))
        prob.h_deriv = [float(v) for v in sec.get(
            "h_deriv", [1.0] + [0.0] * (x.shape[1] - 1 if x.ndim == 2 else 0))]

    mis = doc.get("misspec", {})
    p_raw = mis.get("p", 2)
    prob.p = math.inf if str(p_raw).lower() in ("inf", "infinity") else float(p_raw)
    if "m_grid" in mis:
        prob.m_grid = [float(v) for v in mis["m_grid"]]
    elif "m" in mis:
        prob.m_grid = [float(mis["m"])]
    if sorted(prob.m_grid) != prob.m_grid or any(m < 0 for m in prob.m_grid):
        raise ValidationError("m_grid must be ascending and nonnegative")
    prob.b_spec = mis.get("b_mat", "from-iv" if has_iv else None)
    if prob.b_spec is None:
        raise ValidationError("misspec section must specify 'b_mat'")
    if isinstance(prob.b_spec, list):
        prob.b_spec = _read_matrix(prob.b_spec, base, "b_mat")
    elif isinstance(prob.b_spec, str) and prob.b_spec != "from-iv":
        prob.b_spec = _read_matrix(prob.b_spec, base, "b_mat")
    return prob


def dump_problem(prob: ProblemFile) -> str:
    """Serialize the parsed representation back to problem-file JSON."""
    def fmt(x):
        if isinstance(x, float):
            return float(f"{x:.17g}")
        if isinstance(x, (list, tuple)):
            return [fmt(v) for v in x]
        if isinstance(x, np.ndarray):
            return fmt(x.tolist())
        if isinstance(x, dict):
            return {k: fmt(v) for k, v in x.items()}
        return x
    return json.dumps(fmt(prob.raw), indent=2, sort_keys=True)


def _resolve(prob: ProblemFile):
    """Materialize (model, b_mat, model_for_ci) from the problem description."""
    if prob.model is not None:
        model = validate_model(prob.model)
        model_ci = model
        if not isinstance(prob.b_spec, np.ndarray):
            if isinstance(prob.b_spec, dict) and "identity_columns" in prob.b_spec:
                cols = [int(i) for i in prob.b_spec["identity_columns"]]
                b_mat = np.eye(model.d_g)[:, cols]
            else:
                raise ValidationError(
                    "reduced-form problems need an explicit or identity-columns b_mat")
        else:
            b_mat = prob.b_spec
        return model, b_mat, model_ci

    data = drop_collinear_instruments(prob.iv_data)
    variance_path = "homoskedastic" if prob.mixed else prob.variance
    model = validate_model(build_model(data, prob.h_deriv, variance_path))
    model_ci = model
    if prob.mixed:
        model_ci = validate_model(build_model(data, prob.h_deriv, "robust"))
    if isinstance(prob.b_spec, np.ndarray):
        b_mat = prob.b_spec
    elif isinstance(prob.b_spec, dict) and "identity_columns" in prob.b_spec:
        cols = [int(i) for i in prob.b_spec["identity_columns"]]
        b_mat = np.eye(model.d_g)[:, cols]
    else:
        b_mat = build_b(data)
    return model, b_mat, model_ci


def _g(x: float) -> str:
    v = float(x)
    if v == 0.0:
        v = 0.0  # normalize negative zero
    return f"{v:.17g}"


def _emit(command: str, args, header_cols: list[str], rows,
          extra_meta: str = "") -> None:
    meta = (f"# command={command} version={__version__} "
            f"alpha={_g(args.alpha)}{extra_meta}")
    out = [meta, ",".join(header_cols)]
    for row in rows:
        out.append(",".join(_g(v) if isinstance(v, float) else str(v)
                            for v in row))
    sys.stdout.write("\n".join(out) + "\n")


def cmd_ci(prob: ProblemFile, args) -> None:
    model, b_mat, model_ci = _resolve(prob)
    mset1 = MisspecSet(b_mat, prob.p, 1.0)
    front = frontier(model, mset1)
    rows = []
    for m in prob.m_grid:
        mset = MisspecSet(b_mat, prob.p, m)
        choice = select_lambda(front, m, args.alpha, prob.criterion)
        kn = knot_at(front, choice.lambda_star)
        ci = ci_from_sensitivity(model_ci, mset, kn.k, args.alpha,
                                 lambda_star=choice.lambda_star)
        rows.append((float(m), ci.estimate, ci.estimate - ci.half_length,
                     ci.estimate + ci.half_length, ci.max_bias, ci.std_error,
                     float(choice.lambda_star)))
    _emit("ci", args,
          ["m", "estimate", "lower", "upper", "max_bias", "std_error",
           "lambda_star"], rows)


def cmd_path(prob: ProblemFile, args) -> None:
    model, b_mat, _ = _resolve(prob)
    front = frontier(model, MisspecSet(b_mat, prob.p, 1.0))
    cols = ["lambda"] + [f"k_{i+1}" for i in range(model.d_g)] + ["bbar", "var"]
    rows = [(kn.lam, *[float(v) for v in kn.k], kn.bbar, kn.var)
            for kn in front.knots]
    _emit("path", args, cols, rows)


def cmd_efficiency(prob: ProblemFile, args) -> None:
    model, b_mat, _ = _resolve(prob)
    mset = MisspecSet(b_mat, prob.p, prob.m_grid[-1])
    rep = efficiency_report(model, mset, args.alpha, prob.beta)
    _emit("efficiency", args,
          ["kappa_two_sided", "kappa_one_sided", "universal_lower"],
          [(rep.kappa_two_sided, rep.kappa_one_sided, rep.universal_lower)],
          extra_meta=f" beta={_g(prob.beta)} m={_g(mset.m)}")


def cmd_spectest(prob: ProblemFile, args) -> None:
    model, b_mat, _ = _resolve(prob)
    stat = s_statistic(model)
    m_min = m_lower_ci(model, b_mat, prob.p, args.alpha)
    rows = []
    for m in prob.m_grid:
        res = test_at_m(model, MisspecSet(b_mat, prob.p, m), args.alpha)
        rows.append((float(m), res.statistic, res.df, res.ncp_bar,
                     res.critical_value, int(res.reject), m_min))
    _emit("spectest", args,
          ["m", "statistic", "df", "ncp_bar", "critical_value", "reject",
           "m_min"], rows, extra_meta=f" statistic={_g(stat)} m_min={_g(m_min)}")


def cmd_simulate(prob: ProblemFile, args) -> None:
    model, b_mat, _ = _resolve(prob)
    front = None
    rows = []
    for m in prob.m_grid:
        mset = MisspecSet(b_mat, prob.p, m)
        if front is None:
            front = frontier(model, mset.scaled(1.0))
        choice = select_lambda(front, m, args.alpha, "ci_length")
        kn = knot_at(front, choice.lambda_star)
        c = adversarial_c(mset, kn.k)
        rep = mc_coverage(model, mset, args.alpha, c, args.reps, args.seed)
        rows.append((float(m), rep.replications, rep.nominal, rep.coverage,
                     rep.mc_stderr,
                     *[float(v) for v in rep.worst_c]))
    cols = (["m", "replications", "nominal", "coverage", "mc_stderr"]
            + [f"c_{i+1}" for i in range(model.d_g)])
    _emit("simulate", args, cols, rows, extra_meta=f" seed={args.seed}")


_COMMANDS = {
    "ci": cmd_ci,
    "path": cmd_path,
    "efficiency": cmd_efficiency,
    "spectest": cmd_spectest,
    "simulate": cmd_simulate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="momentguard",
        description="Misspecification-robust CIs for moment condition models")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--problem", required=True, help="path to a problem file")
    parser.add_argument("--alpha", type=float, default=None)
    parser.add_argument("--m-grid", type=str, default=None,
                        help="comma-separated ascending magnitudes")
    parser.add_argument("--variance", choices=["robust", "homoskedastic"],
                        default=None)
    parser.add_argument("--criterion", choices=["ci", "mse"], default=None)
    parser.add_argument("--beta", type=float, default=None)
    parser.add_argument("--mixed", action="store_true",
                        help="sensitivity from the homoskedastic variance, "
                             "final CI from the robust one")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--reps", type=int, default=10000)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        prob = parse_problem(args.problem)
        if args.alpha is not None:
            prob.raw["alpha"] = args.alpha
        args.alpha = args.alpha if args.alpha is not None else prob.alpha
        if args.m_grid is not None:
            grid = [float(v) for v in args.m_grid.split(",")]
            if sorted(grid) != grid or any(m < 0 for m in grid):
                raise ValidationError("--m-grid must be ascending and nonnegative")
            prob.m_grid = grid
        if args.variance is not None:
            prob.variance = args.variance
        if args.criterion is not None:
            prob.criterion = "ci_length" if args.criterion == "ci" else "mse"
        if args.beta is not None:
            prob.beta = args.beta
        if args.mixed:
            prob.mixed = True
        _COMMANDS[args.command](prob, args)
        return 0
    except ValidationError as exc:
        print(f"momentguard: validation error: {exc}", file=sys.stderr)
        return _EXIT_VALIDATION
    except FeasibilityError as exc:
        print(f"momentguard: infeasible: {exc}", file=sys.stderr)
        return _EXIT_FEASIBILITY
    except NumericalError as exc:
        print(f"momentguard: numerical failure: {exc}", file=sys.stderr)
        return _EXIT_NUMERICAL
    except MomentGuardError as exc:
        print(f"momentguard: error: {exc}", file=sys.stderr)
        return _EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
