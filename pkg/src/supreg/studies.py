"""Monte Carlo harnesses: upper-bound risk study, localized super-optimal
estimator study, and the lower-bound two-point testing harness.

All studies are reproducible: replication seeds are derived from the study
seed and the (n, rep) pair, replications run independently (optionally in
parallel) and are merged in a fixed order, so reports are byte-identical
across runs and worker counts.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .density import DesignDensity, EmpiricalMeasure, density_from_config, sample_model
from .errors import EmptyFamily, InputError
from .locpoly import build_gram, evaluate, fit_local
from .rates import HolderSpec, make_holder_test_functions, rate_curve, solve_h
from .reconstruct import DyadicLayout, fit_all_knots, predict, sup_norm_error
from .selection import ThresholdParams

__all__ = [
    "RiskReport",
    "BumpFamily",
    "BayesStats",
    "run_upper_bound_study",
    "run_localized_study",
    "build_bump_family",
    "run_lower_bound_study",
    "loglog_slope",
]

# numeric floor for the threshold noise level so that noise-free data does
# not fail comparisons on rounding error alone
_SIGMA_FLOOR = 1e-12


def loglog_slope(n_values, errors):
    """OLS slope of log(error) against log(log n / n), with standard error."""
    n_values = np.asarray(n_values, dtype=float)
    errors = np.asarray(errors, dtype=float)
    ok = errors > 0
    if ok.sum() < 2:
        return {"slope": math.nan, "stderr": math.nan, "intercept": math.nan}
    t = np.log(np.log(n_values[ok]) / n_values[ok])
    y = np.log(errors[ok])
    A = np.vstack([t, np.ones_like(t)]).T
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    dof = max(t.size - 2, 1)
    rss = float(np.sum((y - A @ coef) ** 2))
    var = rss / dof / float(np.sum((t - t.mean()) ** 2))
    return {"slope": float(coef[0]), "stderr": math.sqrt(max(var, 0.0)),
            "intercept": float(coef[1])}


@dataclass
class RiskReport:
    """Replication-level errors plus summaries for one simulation study."""

    config: dict
    entries: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    slopes: dict = field(default_factory=dict)
    schema: int = 1

    def entries_for(self, n):
        return [e for e in self.entries if e["n"] == n]

    def metric_values(self, n, metric):
        return np.array([e[metric] for e in self.entries_for(n)
                         if e.get(metric) is not None and not math.isnan(e[metric])])

    def summarize(self, metrics):
        for n in self.config["n_list"]:
            for metric in metrics:
                vals = self.metric_values(n, metric)
                key = f"{metric}@{n}"
                if vals.size:
                    self.summary[key] = {
                        "median": float(np.median(vals)),
                        "q90": float(np.quantile(vals, 0.9)),
                        "mean": float(np.mean(vals)),
                        "count": int(vals.size),
                    }
                else:
                    self.summary[key] = {"median": math.nan, "q90": math.nan,
                                         "mean": math.nan, "count": 0}

    def fit_slopes(self, metrics):
        ns = self.config["n_list"]
        for metric in metrics:
            med = [self.summary[f"{metric}@{n}"]["median"] for n in ns]
            self.slopes[metric] = loglog_slope(ns, med)

    def to_jsonable(self):
        return {"schema": self.schema, "config": self.config,
                "entries": self.entries, "summary": self.summary,
                "slopes": self.slopes}


def _spawn_seed(base_seed, n, rep):
    return [int(base_seed), int(n), int(rep)]


# ---------------------------------------------------------------------------
# upper-bound study
# ---------------------------------------------------------------------------


def _upper_bound_rep(payload):
    density = density_from_config(payload["density"])
    spec = HolderSpec(**payload["spec"])
    f = make_holder_test_functions(spec, payload["function"])
    sigma = payload["sigma"]
    n = payload["n"]
    rep = payload["rep"]
    entry = {"n": n, "rep": rep}
    try:
        sample = sample_model(density, f, sigma, n,
                              _spawn_seed(payload["seed"], n, rep))
        em = EmpiricalMeasure(sample)
        layout = DyadicLayout.for_sample_size(n)
        params = ThresholdParams(sigma=max(sigma, _SIGMA_FLOOR),
                                 D=payload["D"], b=payload["b"], R=payload["R"])
        model = fit_all_knots(sample, em, layout, params,
                              grid_kind=payload["grid_kind"],
                              geom_ratio=payload["geom_ratio"])
        rc = payload["rate_curve"]
        if rc is not None:
            res = sup_norm_error(model, f, rc, grid_points=payload["error_grid"])
            entry["raw_sup"] = res["raw_sup"]
            entry["normalized_sup"] = res["normalized_sup"]
        else:
            grid = np.linspace(0.0, 1.0, payload["error_grid"])
            err = np.abs(predict(model, grid) - np.broadcast_to(
                np.asarray(f(grid), dtype=float), grid.shape))
            entry["raw_sup"] = float(err.max())
            entry["normalized_sup"] = math.nan
        for x in payload["pointwise_xs"]:
            entry[f"pw_raw@{x:g}"] = float(abs(predict(model, x) - float(f(np.array([x]))[0])))
        entry["failed"] = False
    except Exception as exc:  # noqa: BLE001 - a failed replication is recorded, not fatal
        entry["failed"] = True
        entry["error"] = f"{type(exc).__name__}: {exc}"
    return entry


def run_upper_bound_study(density_config, spec: HolderSpec, sigma: float,
                          n_list, reps: int, seed: int, *,
                          function: str = "sine", grid_kind: str = "geom",
                          geom_ratio: float = 3.0, D: float = 2.5, b: float = 2.0,
                          R: int | None = None, pointwise_xs=(), error_grid: int = 512,
                          jobs: int = 1) -> RiskReport:
    """Normalized sup-risk of the adaptive estimator across sample sizes.

    For each (n, rep): sample, fit all knots adaptively, record raw and
    rate-normalized sup errors plus pointwise errors at designated points.

    ``R=None`` picks ``max(1, spec.r)``: at least a linear fit, so one-sided
    candidate windows cannot smuggle in a first-order displacement bias that
    the comparisons never test for.
    """
    n_list = sorted(int(n) for n in n_list)
    if R is None:
        R = max(1, spec.r)
    if reps < 1:
        raise InputError("need reps >= 1")
    density = density_from_config(density_config)
    curves = {}
    for n in n_list:
        if sigma > 0:
            grid = np.linspace(0.0, 1.0, 257)
            curves[n] = rate_curve(density, spec, sigma, n, grid)
        else:
            curves[n] = None
    config = {
        "study": "upper_bound", "density": density.to_config(),
        "spec": {"s": spec.s, "L": spec.L, "Q": spec.Q}, "sigma": sigma,
        "n_list": n_list, "reps": reps, "seed": seed, "function": function,
        "grid_kind": grid_kind, "geom_ratio": geom_ratio, "D": D, "b": b,
        "R": R, "pointwise_xs": list(pointwise_xs), "error_grid": error_grid,
    }
    payloads = [
        {**config, "n": n, "rep": rep, "rate_curve": curves[n],
         "spec": config["spec"]}
        for n in n_list for rep in range(reps)
    ]
    entries = _run_replications(_upper_bound_rep, payloads, jobs)
    report = RiskReport(config=config, entries=entries)
    metrics = ["raw_sup", "normalized_sup"] + [f"pw_raw@{x:g}" for x in pointwise_xs]
    report.summarize(metrics)
    report.fit_slopes(metrics)
    return report


def _run_replications(worker, payloads, jobs):
    if jobs <= 1 or len(payloads) <= 1:
        results = [worker(p) for p in payloads]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(worker, payloads, chunksize=1))
    # merge order is fixed by the payload order, independent of worker count
    return results


# ---------------------------------------------------------------------------
# localized (super-optimal) study
# ---------------------------------------------------------------------------


def _localized_layout_positive(spec, n, ell):
    """Knots and common bandwidth for the positive-density case."""
    width = (ell / n) ** (1.0 / (1.0 + 2.0 * spec.s))
    a_n = max(0.5 - width / 2.0, 0.0)
    N = int(ell)
    ks = np.arange(N + 1)
    knots = a_n + (ks / n) ** (1.0 / (2.0 * spec.s + 1.0))
    h = (math.log(ell) / n) ** (1.0 / (2.0 * spec.s + 1.0))
    bandwidths = np.full(knots.size, h)
    interval = (a_n, a_n + width)
    return knots, bandwidths, interval


def _localized_layout_vanishing(density, spec, sigma, n, ell, x0):
    """Knots with exponent-dependent spacing around the vanishing point."""
    beta = dict(density.vanishing_points).get(x0, 0.0)
    half = (ell / n) ** (1.0 / (1.0 + 2.0 * spec.s + beta))
    lo, hi = x0 - half, x0 + half
    if lo < 0.0 or hi > 1.0:
        warnings.warn("localized interval clipped to [0, 1]", stacklevel=2)
        lo, hi = max(lo, 0.0), min(hi, 1.0)
    lnn = math.log(math.log(n) / n)

    def alpha_at(x):
        h = solve_h(density, spec, sigma, n, min(max(x, 0.0), 1.0))
        return math.log(spec.L * h**spec.s) / lnn

    N = int(ell)
    right = [x0]
    x = x0
    for _ in range(N):
        step = n ** (-alpha_at(x) / spec.s)
        for _ in range(2):  # fixed point: spacing uses the exponent at the new knot
            step = n ** (-alpha_at(x + step) / spec.s)
        x = x + step
        if x > hi:
            break
        right.append(x)
    left = []
    x = x0
    for _ in range(N):
        step = n ** (-alpha_at(x) / spec.s)
        for _ in range(2):
            step = n ** (-alpha_at(x - step) / spec.s)
        x = x - step
        if x < lo:
            break
        left.append(x)
    knots = np.array(sorted(left) + right)
    bandwidths = np.array([
        (math.log(ell) / n) ** (alpha_at(k) / spec.s) for k in knots
    ])
    return knots, bandwidths, (lo, hi)


def _localized_rep(payload):
    density = density_from_config(payload["density"])
    spec = HolderSpec(**payload["spec"])
    f = make_holder_test_functions(spec, payload["function"])
    n, rep = payload["n"], payload["rep"]
    entry = {"n": n, "rep": rep}
    try:
        sample = sample_model(density, f, payload["sigma"], n,
                              _spawn_seed(payload["seed"], n, rep))
        em = EmpiricalMeasure(sample)
        knots = np.asarray(payload["knots"])
        bandwidths = np.asarray(payload["bandwidths"])
        degree = spec.r
        fits = []
        for x_k, h in zip(knots, bandwidths):
            gram = build_gram(sample, em, float(x_k), (x_k - h, x_k + h), degree)
            fits.append(fit_local(gram))
        lo, hi = payload["interval"]
        grid = np.union1d(knots, np.linspace(lo, hi, payload["error_grid"]))
        grid = grid[(grid >= lo) & (grid <= hi)]
        # piecewise Taylor estimator: the fit of the left-neighbouring knot
        cell = np.clip(np.searchsorted(knots, grid, side="right") - 1, 0, knots.size - 1)
        fhat = np.empty_like(grid)
        for k in np.unique(cell):
            sel = cell == k
            fhat[sel] = evaluate(fits[k], grid[sel])
        err = np.abs(fhat - np.asarray(f(grid), dtype=float))
        rn = np.interp(grid, payload["rate_x"], payload["rate_r"])
        entry["localized_sup"] = float(err.max())
        entry["normalized_localized_sup"] = float((err / rn).max())
        entry["failed"] = False
    except Exception as exc:  # noqa: BLE001
        entry["failed"] = True
        entry["error"] = f"{type(exc).__name__}: {exc}"
    return entry


def run_localized_study(density_case, spec: HolderSpec, sigma: float, n_list,
                        reps: int, seed: int, *, ell_gamma: float = 2.0,
                        function: str = "sine", error_grid: int = 200,
                        jobs: int = 1) -> RiskReport:
    """Risk of the fixed-bandwidth piecewise-Taylor estimator on a shrinking
    interval, normalized by the local rate.

    ``density_case`` is either "positive" (uniform design, equispaced-in-
    k**(1/(2s+1)) knots, one common bandwidth) or a dict
    {"kind": "vanishing", "x0": ..., "beta": ...} (knot spacing and per-knot
    bandwidths driven by the local exponent).  The slow sequence is
    ell_n = (log n)**ell_gamma, so log(ell_n) is vanishingly small next to
    log(n).
    """
    n_list = sorted(int(n) for n in n_list)
    if density_case == "positive":
        density_config = {"kind": "uniform"}
        case = "positive"
        x0 = None
    else:
        case = "vanishing"
        x0 = density_case["x0"]
        density_config = {"kind": "power_cusp", "x0": x0,
                          "beta": density_case["beta"]}
    density = density_from_config(density_config)
    config = {
        "study": "localized", "case": case, "density": density_config,
        "spec": {"s": spec.s, "L": spec.L, "Q": spec.Q}, "sigma": sigma,
        "n_list": n_list, "reps": reps, "seed": seed, "ell_gamma": ell_gamma,
        "function": function, "error_grid": error_grid,
    }
    payloads = []
    for n in n_list:
        ell = math.log(n) ** ell_gamma
        if case == "positive":
            knots, bandwidths, interval = _localized_layout_positive(spec, n, ell)
        else:
            knots, bandwidths, interval = _localized_layout_vanishing(
                density, spec, sigma, n, ell, x0)
        grid = np.linspace(interval[0], interval[1], 129)
        rc = rate_curve(density, spec, sigma, n, grid)
        for rep in range(reps):
            payloads.append({**config, "n": n, "rep": rep,
                             "knots": knots, "bandwidths": bandwidths,
                             "interval": interval,
                             "rate_x": rc.x, "rate_r": rc.rate})
    entries = _run_replications(_localized_rep, payloads, jobs)
    report = RiskReport(config=config, entries=entries)
    report.summarize(["localized_sup", "normalized_localized_sup"])
    report.fit_slopes(["normalized_localized_sup"])
    return report


# ---------------------------------------------------------------------------
# lower-bound harness
# ---------------------------------------------------------------------------


def _bump_profile():
    """C-infinity bump supported on (-1, 1), unnormalized."""

    def phi(t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        inside = np.abs(t) < 1.0
        out[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
        return out

    return phi


@dataclass
class BumpFamily:
    """Disjointly supported, rate-scaled perturbations on an interval."""

    density_config: dict
    spec: HolderSpec
    sigma: float
    n: int
    interval: tuple
    spacing: float
    centers: np.ndarray
    bandwidths: np.ndarray
    amplitude_factor: float  # the width-shrink factor applied to each bump
    profile_scale: float

    @property
    def num_bumps(self) -> int:
        return self.centers.size

    def bump(self, k):
        """Function handle for the k-th bump."""
        phi = _bump_profile()
        c = self.centers[k]
        w = self.amplitude_factor * self.bandwidths[k]
        amp = self.spec.L * w**self.spec.s * self.profile_scale

        def f_k(x):
            return amp * phi((np.asarray(x, dtype=float) - c) / w)

        return f_k

    def member(self, theta):
        """f(.; theta) = sum_k theta_k * bump_k."""
        bumps = [self.bump(k) for k in range(self.num_bumps)]
        theta = np.asarray(theta, dtype=float)

        def f(x):
            x = np.asarray(x, dtype=float)
            out = np.zeros_like(x)
            for t, b in zip(theta, bumps):
                out += t * b(x)
            return out

        return f


def build_bump_family(density: DesignDensity, spec: HolderSpec, sigma: float,
                      n: int, interval, alpha_exponent: float) -> BumpFamily:
    """Construct the hardest-subfamily bump layout on ``interval``.

    The profile is the smooth bump exp(-1/(1-t^2)), rescaled so its
    grid-checked order-s seminorm is at most 0.95; bump spacing is a fixed
    multiple of the largest local bandwidth so supports stay disjoint.
    """
    from .rates import holder_seminorm

    beta = density.vanishing_points[0][1] if density.vanishing_points else 0.0
    crit = 1.0 / (1.0 + 2.0 * spec.s + beta)
    if not 0.0 < alpha_exponent < crit:
        raise InputError(
            f"interval-length exponent must lie in (0, {crit:.4f}), got {alpha_exponent}")
    phi = _bump_profile()
    semi = holder_seminorm(phi, spec.s, num_points=100_000, domain=(-1.5, 1.5))
    profile_scale = 0.95 / semi
    sup_phi = profile_scale / math.e  # max of exp(-1/(1-t^2)) is e^-1 at t=0
    a = min(1.0, (2.0 / sup_phi**2 * (crit - alpha_exponent)) ** (1.0 / (2.0 * spec.s)))
    frac = spec.s - spec.r
    xs_grid = np.linspace(0.0, 1.0, 201)
    sup_h = max(solve_h(density, spec, sigma, n, float(x)) for x in xs_grid)
    spacing = 2.0 * a * (1.0 + 2.0 ** (1.0 / frac)) * sup_h
    lo, hi = interval
    num = int(math.floor((hi - lo) / spacing))
    if num < 1:
        raise EmptyFamily(
            f"interval of length {hi - lo:.3g} too short for spacing {spacing:.3g}")
    centers = lo + spacing * np.arange(1, num + 1)
    centers = centers[centers <= hi]
    if centers.size == 0:
        raise EmptyFamily("no bump centers fit inside the interval")
    bandwidths = np.array([solve_h(density, spec, sigma, n, float(c)) for c in centers])
    return BumpFamily(
        density_config=density.to_config(), spec=spec, sigma=sigma, n=int(n),
        interval=(float(lo), float(hi)), spacing=spacing, centers=centers,
        bandwidths=bandwidths, amplitude_factor=a, profile_scale=profile_scale,
    )


@dataclass
class BayesStats:
    """Per-bump testing statistics aggregated over replications."""

    config: dict
    reps: int
    misclassification: np.ndarray       # empirical error frequency of sign(y_k)
    expected_error: np.ndarray          # mean Phi(-1/v_k) over replications
    mean_v: np.ndarray
    y_bias: np.ndarray                  # mean of y_k - theta_k
    y_var: np.ndarray                   # variance of y_k - theta_k
    alt_rules: dict                     # threshold shift -> error frequencies
    aggregate_bound: float              # (1 - min_k Phi(-1/v_k))^K, averaged
    aggregate_growth: float             # K * Phi(-1/v) at the min-variance bump
    empty_bump_rate: np.ndarray
    schema: int = 1

    def to_jsonable(self):
        return {
            "schema": self.schema, "config": self.config, "reps": self.reps,
            "misclassification": self.misclassification.tolist(),
            "expected_error": self.expected_error.tolist(),
            "mean_v": self.mean_v.tolist(),
            "y_bias": self.y_bias.tolist(), "y_var": self.y_var.tolist(),
            "alt_rules": {str(t): v.tolist() for t, v in self.alt_rules.items()},
            "aggregate_bound": self.aggregate_bound,
            "aggregate_growth": self.aggregate_growth,
            "empty_bump_rate": self.empty_bump_rate.tolist(),
        }


def run_lower_bound_study(family: BumpFamily, reps: int, seed: int,
                          alt_thresholds=(-0.5, -0.25, 0.25, 0.5)) -> BayesStats:
    """Simulate the per-bump sign test against its exact Gaussian error.

    Each replication draws a design, a uniform corner of the hypercube and
    noisy responses; the per-bump statistic is the least-squares projection
    on the bump, classified by sign.  A bump with no data under it that
    replication contributes the coin-flip bound 1/2.
    """
    density = density_from_config(family.density_config)
    K = family.num_bumps
    sigma = family.sigma
    n = family.n
    bumps = [family.bump(k) for k in range(K)]
    half_widths = family.amplitude_factor * family.bandwidths
    rng_master = np.random.SeedSequence([int(seed), 0xB0B])
    mis = np.zeros(K)
    expected = np.zeros(K)
    vsum = np.zeros(K)
    ybias = np.zeros(K)
    y2 = np.zeros(K)
    empty = np.zeros(K)
    alt_mis = {t: np.zeros(K) for t in alt_thresholds}
    min_phi_sum = 0.0
    for rep in range(reps):
        sample = sample_model(density, lambda x: np.zeros_like(np.asarray(x, dtype=float)),
                              0.0, n, [int(seed), 1, rep])
        xs = sample.xs
        noise_rng = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence([int(seed), 2, rep])))
        theta = np.where(noise_rng.random(K) < 0.5, -1.0, 1.0)
        xi = noise_rng.standard_normal(n)
        fvals = np.zeros(n)
        bump_at_x = []
        for k in range(K):
            sel = np.abs(xs - family.centers[k]) < half_widths[k]
            vals = np.zeros(n)
            vals[sel] = bumps[k](xs[sel])
            bump_at_x.append(vals)
            fvals += theta[k] * vals
        ys = fvals + sigma * xi
        phis = np.empty(K)
        for k in range(K):
            s2 = float(np.sum(bump_at_x[k] ** 2))
            if s2 <= 0.0:
                empty[k] += 1
                mis[k] += 0.5  # coin flip: no information on this bump
                expected[k] += 0.5
                phis[k] = 0.5
                continue
            v = sigma / math.sqrt(s2)
            y_k = float(np.sum(ys * bump_at_x[k])) / s2
            p_err = float(ndtr(-1.0 / v))
            phis[k] = p_err
            expected[k] += p_err
            vsum[k] += v
            ybias[k] += y_k - theta[k]
            y2[k] += (y_k - theta[k]) ** 2
            if math.copysign(1.0, y_k) != theta[k]:
                mis[k] += 1.0
            for t in alt_thresholds:
                guess = 1.0 if y_k >= t else -1.0
                if guess != theta[k]:
                    alt_mis[t][k] += 1.0
        min_phi_sum += float(np.min(phis))
    mean_min_phi = min_phi_sum / reps
    return BayesStats(
        config={"study": "lower_bound", "density": family.density_config,
                "spec": {"s": family.spec.s, "L": family.spec.L, "Q": family.spec.Q},
                "sigma": sigma, "n": n, "num_bumps": K, "seed": seed,
                "interval": list(family.interval)},
        reps=reps,
        misclassification=mis / reps,
        expected_error=expected / reps,
        mean_v=vsum / np.maximum(reps - empty, 1),
        y_bias=ybias / np.maximum(reps - empty, 1),
        y_var=y2 / np.maximum(reps - empty, 1),
        alt_rules={t: v / reps for t, v in alt_mis.items()},
        aggregate_bound=(1.0 - mean_min_phi) ** K,
        aggregate_growth=K * mean_min_phi,
        empty_bump_rate=empty / reps,
    )
