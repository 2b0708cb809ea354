"""Command line front end.

Subcommands:

* ``rate``      tabulate the local rate curve (h, r_n, alpha_n) on a grid
* ``sample``    draw one dataset from the regression model
* ``fit``       fit the adaptive estimator to a fresh draw and tabulate it
* ``study``     run a Monte Carlo study (upper / localized / lower)
* ``selftest``  tiny end-to-end smoke run

All outputs are written atomically (temp file + rename).  Floats in CSV
output carry 17 significant digits so files round-trip exactly.  Options can
come from a JSON or TOML config file via ``--config``; explicit flags
override the file, which overrides built-in defaults.  Exit status: 0 on
success, 1 on an input or config error, 2 on a numerical failure (no rate
root, singular fit, empty grid/family) with the effective config echoed,
and 2 on bad usage (argparse).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from .density import EmpiricalMeasure, Sample, density_from_config, sample_model
from .errors import (
    EmptyFamily,
    EmptyGrid,
    EmptyWindow,
    InputError,
    NoRoot,
    SingularFit,
    SupregError,
)
from .locpoly import bias_variance_diagnostic
from .rates import HolderSpec, make_holder_test_functions, rate_curve
from .reconstruct import DyadicLayout, fit_all_knots, predict
from .selection import ThresholdParams
from .studies import (
    build_bump_family,
    run_localized_study,
    run_lower_bound_study,
    run_upper_bound_study,
)

_SCHEMA = 1

# effective options of the running subcommand, echoed on numerical failure
_LAST_OPTS: dict = {}


def _fmt(v) -> str:
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def _atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_csv(path: str, header, rows) -> None:
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    _atomic_write(path, "\n".join(lines) + "\n")


def _write_json(path: str, obj) -> None:
    _atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load_config(path):
    if path is None:
        return {}
    if path.endswith(".toml"):
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    with open(path) as fh:
        return json.load(fh)


def _merge(defaults: dict, config: dict, args: argparse.Namespace, keys) -> dict:
    """defaults < config file < explicit command line flags."""
    out = dict(defaults)
    for k in keys:
        if k in config:
            out[k] = config[k]
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            out[k] = v
    if out.get("sigma") is None:
        raise InputError("missing required option --sigma "
                         "(or a 'sigma' entry in the config file)")
    _LAST_OPTS.clear()
    _LAST_OPTS.update(out)
    return out


def _density_arg(value):
    if value is None:
        return None
    try:
        return json.loads(value)
    except json.JSONDecodeError:
        return value  # shorthand like "uniform"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, float) and math.isinf(obj):
        return None
    return obj


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

_MODEL_DEFAULTS = {
    "density": {"kind": "uniform"}, "s": 1.0, "L": 1.0, "Q": None,
    "sigma": None, "n": 1024, "seed": 0, "function": "sine",
}


def _spec_from(opts) -> HolderSpec:
    q = opts.get("Q")
    return HolderSpec(s=float(opts["s"]), L=float(opts["L"]),
                      Q=math.inf if q is None else float(q))


def _cmd_rate(args) -> int:
    cfg = _load_config(args.config)
    opts = _merge(_MODEL_DEFAULTS, cfg, args, ["density", "s", "L", "Q", "sigma", "n"])
    density = density_from_config(opts["density"])
    grid = np.linspace(0.0, 1.0, args.grid_points)
    rc = rate_curve(density, _spec_from(opts), float(opts["sigma"]), int(opts["n"]), grid)
    rows = zip(rc.x.tolist(), rc.h.tolist(), rc.rate.tolist(), rc.alpha.tolist())
    _write_csv(args.out, ["x", "h", "rate", "alpha"], rows)
    if args.report:
        _write_json(args.report, {"schema": _SCHEMA, "command": "rate",
                                  "config": _jsonable(opts), "grid_points": args.grid_points})
    print(f"wrote {args.out}")
    return 0


def _cmd_sample(args) -> int:
    cfg = _load_config(args.config)
    opts = _merge(_MODEL_DEFAULTS, cfg, args,
                  ["density", "s", "L", "Q", "sigma", "n", "seed", "function"])
    density = density_from_config(opts["density"])
    f = make_holder_test_functions(_spec_from(opts), opts["function"])
    sample = sample_model(density, f, float(opts["sigma"]), int(opts["n"]), int(opts["seed"]))
    _write_csv(args.out, ["x", "y"], zip(sample.xs.tolist(), sample.ys.tolist()))
    print(f"wrote {args.out}")
    return 0


_FIT_DEFAULTS = {**_MODEL_DEFAULTS, "grid_kind": "geom", "geom_ratio": 3.0,
                 "D": 2.5, "b": 2.0, "R": 2, "eval_points": 512}


def _read_sample_csv(path, sigma) -> Sample:
    data = np.genfromtxt(path, delimiter=",", names=True)
    for col in ("x", "y"):
        if data.dtype.names is None or col not in data.dtype.names:
            raise InputError(f"sample file {path!r} lacks required column {col!r}")
    xs = np.atleast_1d(np.asarray(data["x"], dtype=float))
    ys = np.atleast_1d(np.asarray(data["y"], dtype=float))
    order = np.argsort(xs, kind="stable")
    return Sample(xs=xs[order].copy(), ys=ys[order].copy(), sigma=float(sigma),
                  seed=None, sort_index=order)


def _cmd_fit(args) -> int:
    cfg = _load_config(args.config)
    opts = _merge(_FIT_DEFAULTS, cfg, args, list(_FIT_DEFAULTS))
    density = density_from_config(opts["density"])
    spec = _spec_from(opts)
    if spec.s > int(opts["R"]) + 1:
        raise InputError(f"need s <= R + 1, got s={spec.s} with R={opts['R']}")
    f = make_holder_test_functions(spec, opts["function"])
    sigma = float(opts["sigma"])
    if args.data is not None:
        sample = _read_sample_csv(args.data, sigma)
        n = sample.n
    else:
        n = int(opts["n"])
        sample = sample_model(density, f, sigma, n, int(opts["seed"]))
    em = EmpiricalMeasure(sample)
    layout = DyadicLayout.for_sample_size(n)
    params = ThresholdParams(sigma=max(sigma, 1e-12), D=float(opts["D"]),
                             b=float(opts["b"]), R=int(opts["R"]))
    model = fit_all_knots(sample, em, layout, params,
                          grid_kind=opts["grid_kind"], geom_ratio=float(opts["geom_ratio"]))
    grid = np.linspace(0.0, 1.0, int(opts["eval_points"]))
    fhat = predict(model, grid)
    if args.data is None:
        ftrue = np.broadcast_to(np.asarray(f(grid), dtype=float), grid.shape)
        _write_csv(args.out, ["x", "f_hat", "f_true"],
                   zip(grid.tolist(), fhat.tolist(), ftrue.tolist()))
    else:
        _write_csv(args.out, ["x", "f_hat"], zip(grid.tolist(), fhat.tolist()))
    if args.debug_fits:
        dump = []
        for k, fit in enumerate(model.fits):
            if fit is None or fit.empty:
                dump.append({"knot": k / layout.num_knots, "empty": True})
                continue
            diag = bias_variance_diagnostic(fit, spec, sigma)
            diag.pop("E", None)
            dump.append({"knot": k / layout.num_knots, "empty": False,
                         "window": list(fit.gram.window), "count": fit.gram.count,
                         "omega": fit.gram.omega_flag,
                         "regularized": fit.regularized, **diag})
        _write_json(args.debug_fits, _jsonable({"schema": _SCHEMA,
                                                "command": "fit-debug",
                                                "knots": dump}))
    if args.report:
        windows = [list(w) if w is not None else None for w in model.selected_windows()]
        _write_json(args.report, _jsonable({
            "schema": _SCHEMA, "command": "fit", "config": opts,
            "knots": model.layout.knots, "coeffs": model.coeffs,
            "selected_windows": windows,
            "fallbacks": [bool(t.fallback_used) if t is not None else None
                          for t in model.traces],
        }))
    print(f"wrote {args.out}")
    return 0


_STUDY_DEFAULTS = {
    **_MODEL_DEFAULTS,
    "n_list": [512, 2048], "reps": 10, "grid_kind": "geom", "geom_ratio": 3.0,
    "D": 2.5, "b": 2.0, "R": 2, "pointwise_xs": [], "error_grid": 512,
    # localized
    "case": "positive", "ell_gamma": 2.0,
    # lower bound
    "interval": [0.1, 0.9], "alpha_exponent": 0.05,
}


def _cmd_study(args) -> int:
    cfg = _load_config(args.config)
    opts = _merge(_STUDY_DEFAULTS, cfg, args, list(_STUDY_DEFAULTS))
    spec = _spec_from(opts)
    if args.kind == "upper" and spec.s > int(opts["R"]) + 1:
        raise InputError(f"need s <= R + 1, got s={spec.s} with R={opts['R']}")
    sigma = float(opts["sigma"])
    n_list = [int(n) for n in opts["n_list"]]
    seed = int(opts["seed"])
    os.makedirs(args.out_dir, exist_ok=True)
    if args.kind == "upper":
        report = run_upper_bound_study(
            opts["density"], spec, sigma, n_list, int(opts["reps"]), seed,
            function=opts["function"], grid_kind=opts["grid_kind"],
            geom_ratio=float(opts["geom_ratio"]), D=float(opts["D"]),
            b=float(opts["b"]), R=int(opts["R"]),
            pointwise_xs=tuple(opts["pointwise_xs"]),
            error_grid=int(opts["error_grid"]), jobs=args.jobs,
        )
        _emit_risk_report(args.out_dir, report)
    elif args.kind == "localized":
        case = opts["case"]
        if case != "positive":
            d = opts["density"]
            case = {"kind": "vanishing", "x0": d["x0"], "beta": d["beta"]}
        report = run_localized_study(
            case, spec, sigma, n_list, int(opts["reps"]), seed,
            ell_gamma=float(opts["ell_gamma"]), function=opts["function"],
            jobs=args.jobs,
        )
        _emit_risk_report(args.out_dir, report)
    else:  # lower
        density = density_from_config(opts["density"])
        n = n_list[-1]
        family = build_bump_family(density, spec, sigma, n,
                                   tuple(opts["interval"]),
                                   float(opts["alpha_exponent"]))
        stats = run_lower_bound_study(family, int(opts["reps"]), seed)
        _write_json(os.path.join(args.out_dir, "report.json"),
                    _jsonable(stats.to_jsonable()))
        rows = zip(range(family.num_bumps),
                   family.centers.tolist(), family.bandwidths.tolist(),
                   stats.misclassification.tolist(), stats.expected_error.tolist(),
                   stats.mean_v.tolist())
        _write_csv(os.path.join(args.out_dir, "bumps.csv"),
                   ["bump", "center", "bandwidth", "misclassification",
                    "expected_error", "mean_v"], rows)
    print(f"wrote reports under {args.out_dir}")
    return 0


def _emit_risk_report(out_dir, report) -> None:
    _write_json(os.path.join(out_dir, "report.json"), _jsonable(report.to_jsonable()))
    srows = []
    for key, stats in sorted(report.summary.items()):
        metric, n = key.rsplit("@", 1)
        srows.append([n, metric, stats["median"], stats["q90"], stats["mean"],
                      stats["count"]])
    _write_csv(os.path.join(out_dir, "summary.csv"),
               ["n", "metric", "median", "q90", "mean", "count"], srows)
    metrics = sorted({k for e in report.entries for k in e
                      if k not in ("n", "rep", "failed", "error")})
    rrows = [[e["n"], e["rep"]] + [e.get(m, math.nan) for m in metrics]
             for e in report.entries]
    _write_csv(os.path.join(out_dir, "raw_errors.csv"),
               ["n", "rep"] + metrics, rrows)


def _cmd_selftest(args) -> int:
    del args
    spec = HolderSpec(s=1.0, L=1.0)
    density = density_from_config({"kind": "uniform"})
    f = make_holder_test_functions(spec, "sine")
    sample = sample_model(density, f, 0.25, 256, 7)
    em = EmpiricalMeasure(sample)
    model = fit_all_knots(sample, em, DyadicLayout.for_sample_size(256),
                          ThresholdParams(sigma=0.25), grid_kind="geom",
                          geom_ratio=3.0)
    grid = np.linspace(0.0, 1.0, 101)
    err = float(np.max(np.abs(predict(model, grid) - f(grid))))
    rc = rate_curve(density, spec, 0.25, 256, grid)
    ratio = err / float(rc.rate.max())
    print(f"selftest sup error {err:.4f} ({ratio:.2f} x max rate)")
    if not math.isfinite(err) or err > 1.0:
        print("selftest FAILED", file=sys.stderr)
        return 1
    print("selftest ok")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="supreg",
                                description="design-adaptive sup-norm regression toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    def add_model_opts(sp, with_seed=True):
        sp.add_argument("--config", help="JSON or TOML config file")
        sp.add_argument("--density", type=_density_arg,
                        help='density config JSON, e.g. \'{"kind":"power_cusp","x0":0.5,"beta":1}\'')
        sp.add_argument("--s", type=float, help="smoothness order")
        sp.add_argument("--L", type=float, help="Hölder constant")
        sp.add_argument("--Q", type=float, help="sup-norm bound (default: none)")
        sp.add_argument("--sigma", type=float, help="noise level")
        sp.add_argument("--n", type=int, help="sample size")
        if with_seed:
            sp.add_argument("--seed", type=int, help="RNG seed")
            sp.add_argument("--function", help="test function kind (sine/bump_sum/poly_plus_cusp)")

    sp = sub.add_parser("rate", help="tabulate the rate curve")
    add_model_opts(sp, with_seed=False)
    sp.add_argument("--grid-points", type=int, default=257)
    sp.add_argument("--out", required=True, help="output CSV path")
    sp.add_argument("--report", help="optional JSON report path")
    sp.set_defaults(func=_cmd_rate)

    sp = sub.add_parser("sample", help="draw one dataset")
    add_model_opts(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=_cmd_sample)

    sp = sub.add_parser("fit", help="fit the adaptive estimator once")
    add_model_opts(sp)
    sp.add_argument("--grid-kind", dest="grid_kind", choices=["full", "geom"])
    sp.add_argument("--geom-ratio", dest="geom_ratio", type=float)
    sp.add_argument("--D", type=float, help="threshold multiplier")
    sp.add_argument("--b", type=float, help="threshold exponent parameter")
    sp.add_argument("--R", type=int, help="local polynomial degree bound")
    sp.add_argument("--eval-points", dest="eval_points", type=int)
    sp.add_argument("--data", help="fit this x,y sample CSV instead of drawing one")
    sp.add_argument("--out", required=True)
    sp.add_argument("--report", help="optional JSON report with windows")
    sp.add_argument("--debug-fits", dest="debug_fits",
                    help="optional JSON dump of per-knot fit diagnostics")
    sp.set_defaults(func=_cmd_fit)

    sp = sub.add_parser("study", help="run a Monte Carlo study")
    sp.add_argument("kind", choices=["upper", "localized", "lower"])
    add_model_opts(sp)
    sp.add_argument("--n-list", dest="n_list", type=int, nargs="+")
    sp.add_argument("--reps", type=int)
    sp.add_argument("--grid-kind", dest="grid_kind", choices=["full", "geom"])
    sp.add_argument("--geom-ratio", dest="geom_ratio", type=float)
    sp.add_argument("--D", type=float)
    sp.add_argument("--b", type=float)
    sp.add_argument("--R", type=int)
    sp.add_argument("--pointwise-xs", dest="pointwise_xs", type=float, nargs="*")
    sp.add_argument("--ell-gamma", dest="ell_gamma", type=float)
    sp.add_argument("--case", choices=["positive", "vanishing"])
    sp.add_argument("--interval", type=float, nargs=2)
    sp.add_argument("--alpha-exponent", dest="alpha_exponent", type=float)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--out-dir", dest="out_dir", required=True)
    sp.set_defaults(func=_cmd_study)

    sp = sub.add_parser("selftest", help="tiny end-to-end smoke run")
    sp.set_defaults(func=_cmd_selftest)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (NoRoot, SingularFit, EmptyGrid, EmptyWindow, EmptyFamily) as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(f"config: {json.dumps(_jsonable(_LAST_OPTS), sort_keys=True)}",
              file=sys.stderr)
        return 2
    except SupregError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
