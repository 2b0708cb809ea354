"""Release acceptance checks.

One test per numbered criterion; each records a pass/fail line that the
conftest prints in the terminal summary, then asserts.  The two large Monte
Carlo studies (uniform and tent-density upper-bound runs, 50 replications
each) are module-scoped fixtures shared by their criteria.
"""

import json
import math
import os
import subprocess
import sys
import time
import warnings
from pathlib import Path

import numpy as np
import pytest

from supreg import (
    EmpiricalMeasure,
    HolderSpec,
    ThresholdParams,
    build_bump_family,
    build_grid,
    build_gram,
    evaluate,
    example_alpha_closed_form,
    fit_local,
    interval_mass,
    loglog_slope,
    piecewise_density,
    power_cusp_density,
    rate_curve,
    run_localized_study,
    run_lower_bound_study,
    run_upper_bound_study,
    sample_model,
    select_bandwidth,
    solve_h,
    uniform_density,
)
from supreg.cli import main as cli_main
from supreg.density import Sample

from conftest import record_criterion

FIGURES = Path(__file__).resolve().parents[1] / "frontend" / "figures.py"

N_LIST = [2**9, 2**11, 2**13, 2**15]
STUDY_REPS = 50
STUDY_SIGMA = 0.25
STUDY_SPEC = HolderSpec(s=1.0, L=1.0)
STUDY_KW = dict(D=1.5, b=0.0, geom_ratio=3.0, jobs=8)


def _sorted_sample(xs, ys):
    order = np.argsort(xs, kind="stable")
    return Sample(xs=np.asarray(xs, float)[order], ys=np.asarray(ys, float)[order],
                  sigma=0.0, seed=None, sort_index=order)


def _random_density(rng):
    kind = rng.integers(3)
    if kind == 0:
        return uniform_density()
    if kind == 1:
        return power_cusp_density(float(rng.uniform(0.0, 1.0)),
                                  float(rng.uniform(0.0, 3.0)))
    c = float(rng.uniform(0.2, 0.8))
    w1 = float(rng.uniform(0.1, 0.9))  # mass of the left segment
    return piecewise_density([[0.0, c, w1 / c], [c, 1.0, (1.0 - w1) / (1.0 - c)]])


# ---------------------------------------------------------------------------
# criterion 1: rate-solver residual
# ---------------------------------------------------------------------------


def test_criterion_1_rate_solver_residual():
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        density = _random_density(rng)
        spec = HolderSpec(s=float(rng.uniform(0.4, 3.0)), L=float(rng.uniform(0.5, 3.0)))
        sigma = float(rng.uniform(0.05, 1.0))
        n = int(10 ** rng.uniform(3.0, 7.0))
        x = float(rng.uniform(0.0, 1.0))
        h = solve_h(density, spec, sigma, n, x)
        mass = interval_mass(density, (x - h, x + h))
        lhs = spec.L * h**spec.s
        rhs = sigma * math.sqrt(math.log(n) / (n * mass))
        worst = max(worst, abs(lhs - rhs) / rhs)
    elapsed = time.perf_counter() - t0
    passed = worst <= 1e-10 and elapsed < 5.0
    record_criterion(1, "rate-solver balance residual",
                     passed, f"worst rel residual {worst:.2e}, {elapsed:.2f}s")
    assert worst <= 1e-10
    assert elapsed < 5.0


# ---------------------------------------------------------------------------
# criterion 2: closed-form rate agreement
# ---------------------------------------------------------------------------


def test_criterion_2_closed_form_rates():
    rng = np.random.default_rng(202)
    worst_h = 0.0
    # uniform design, interior point: mass([x-h, x+h]) = 2h, so
    # h = (sigma^2 log n / (2 n L^2))^(1/(2s+1))
    for _ in range(10):
        spec = HolderSpec(s=float(rng.uniform(0.5, 2.5)), L=float(rng.uniform(1.0, 2.0)))
        sigma = float(rng.uniform(0.1, 0.5))
        n = int(10 ** rng.uniform(4.0, 7.0))
        x = float(rng.uniform(0.3, 0.7))
        h = solve_h(uniform_density(), spec, sigma, n, x)
        h_ref = (sigma**2 * math.log(n) / (2.0 * n * spec.L**2)) ** (
            1.0 / (2.0 * spec.s + 1.0))
        assert h < min(x, 1.0 - x)  # interior window, closed form applies
        worst_h = max(worst_h, abs(h - h_ref) / h_ref)
    # power-cusp design queried at its center: mass = (2h)^(beta+1), so
    # h = (sigma^2 log n / (L^2 n 2^(beta+1)))^(1/(2s+beta+1))
    for _ in range(10):
        beta = float(rng.uniform(0.2, 2.0))
        spec = HolderSpec(s=float(rng.uniform(0.5, 2.5)), L=float(rng.uniform(1.0, 2.0)))
        sigma = float(rng.uniform(0.1, 0.5))
        n = int(10 ** rng.uniform(4.0, 7.0))
        h = solve_h(power_cusp_density(0.5, beta), spec, sigma, n, 0.5)
        h_ref = (sigma**2 * math.log(n) / (spec.L**2 * n * 2.0 ** (beta + 1.0))) ** (
            1.0 / (2.0 * spec.s + beta + 1.0))
        assert h < 0.5
        worst_h = max(worst_h, abs(h - h_ref) / h_ref)

    # exponent curve of the tent-density worked case (s = L = sigma = 1);
    # a single constant offset is allowed: the closed form drops the
    # bounded factors of the balance equation, which shifts log r_n by a
    # constant over the grid, so compare after removing the midrange shift
    grid = np.linspace(0.0, 1.0, 101)
    tent = power_cusp_density(0.5, 1.0)
    spec = HolderSpec(s=1.0, L=1.0)
    devs = {}
    for n, tol in ((10**6, 0.03), (10**8, 0.015)):
        rc = rate_curve(tent, spec, 1.0, n, grid)
        ref = np.array([example_alpha_closed_form(n, float(x)) for x in grid])
        d = rc.alpha - ref
        shift = 0.5 * (d.max() + d.min())
        devs[n] = (float(np.abs(d - shift).max()), tol)
    passed = worst_h <= 1e-9 and all(v <= tol for v, tol in devs.values())
    record_criterion(
        2, "closed-form bandwidth and exponent agreement", passed,
        f"worst rel h {worst_h:.2e}; alpha dev "
        + ", ".join(f"{v:.4f}<= {tol} (n=1e{int(math.log10(n))})"
                    for n, (v, tol) in devs.items()))
    assert worst_h <= 1e-9
    for n, (v, tol) in devs.items():
        assert v <= tol, f"exponent deviation {v} exceeds {tol} at n={n}"


# ---------------------------------------------------------------------------
# criterion 3: local polynomial exactness and the eigenvalue floor
# ---------------------------------------------------------------------------


def test_criterion_3_local_fit_exactness():
    rng = np.random.default_rng(303)
    worst_resid = 0.0
    worst_repro = 0.0
    regularized_seen = 0
    floor_ok = True
    for R in (0, 1, 2, 3):
        xs = np.sort(rng.random(500))
        coeffs = rng.uniform(-1.0, 1.0, R + 1)
        ys = np.polyval(coeffs, xs)
        sample = _sorted_sample(xs, ys)
        em = EmpiricalMeasure(sample)
        windows = 0
        while windows < 100:
            center = rng.uniform(0.0, 1.0)
            half = 10 ** rng.uniform(-2.5, -0.3)
            window = (center - half, center + half)
            pts = em.points(window)
            if np.unique(pts).size < R + 1:
                continue
            windows += 1
            gram = build_gram(sample, em, center, window, R)
            fit = fit_local(gram)
            xbar = gram.regularized_matrix()
            worst_resid = max(worst_resid, float(
                np.abs(xbar @ fit.theta - gram.Y).max()))
            if gram.omega_flag:
                # exact least squares reproduces the degree-R truth
                worst_repro = max(worst_repro, float(
                    np.abs(evaluate(fit, pts) - np.polyval(coeffs, pts)).max()))
            else:
                regularized_seen += 1
                lam_min = float(np.linalg.eigvalsh(xbar)[0])
                # identity shift guarantees lam_min(X) + floor exactly; allow
                # eigensolver roundoff at the last-digit scale
                if lam_min < gram.count ** -0.5 * (1.0 - 1e-12):
                    floor_ok = False
    passed = worst_resid <= 1e-8 and worst_repro <= 1e-8 and floor_ok
    record_criterion(
        3, "local-fit exactness and eigenvalue floor", passed,
        f"solver resid {worst_resid:.2e}, reproduction {worst_repro:.2e}, "
        f"{regularized_seen} regularized windows all at/above the floor: {floor_ok}")
    assert worst_resid <= 1e-8
    assert worst_repro <= 1e-8
    assert regularized_seen > 0  # the invariant was actually exercised
    assert floor_ok


# ---------------------------------------------------------------------------
# criterion 4: selection-rule correctness
# ---------------------------------------------------------------------------


def test_criterion_4_selection_rule():
    uni = uniform_density()
    # (a) monotone safety: quadratic truth, degree-2 fits; every comparison
    # passes so the most populous candidate must be chosen
    mono_ok = 0
    for seed in range(50):
        f = lambda x: 0.2 + 0.3 * np.asarray(x) - 0.4 * np.asarray(x) ** 2
        s = sample_model(uni, f, 0.25, 300, [42, seed])
        em = EmpiricalMeasure(s)
        grid = build_grid(s, 0.5, kind="geom", a=2.0)
        trace = select_bandwidth(s, em, 0.5, grid, ThresholdParams(sigma=0.25, R=2))
        if not trace.fallback_used and trace.chosen_index == int(np.argmax(grid.counts)):
            mono_ok += 1
    # (b) jump avoidance: discontinuity just right of the knot
    jump_ok = 0
    for seed in range(50):
        f = lambda x: np.where(np.asarray(x) < 0.52, 0.0, 1.0)
        s = sample_model(uni, f, 0.02, 2000, [99, seed])
        em = EmpiricalMeasure(s)
        grid = build_grid(s, 0.5, kind="geom", a=2.0)
        trace = select_bandwidth(s, em, 0.5, grid, ThresholdParams(sigma=0.02, R=1))
        if trace.chosen[1] < 0.52:
            jump_ok += 1
    # (c) full vs geometric grids agree on the chosen scale within factor a^2
    a = 2.0
    factor_ok = 0
    for seed in range(20):
        f = lambda x: np.sin(2.0 * np.asarray(x))
        s = sample_model(uni, f, 0.25, 256, [7, seed])
        em = EmpiricalMeasure(s)
        params = ThresholdParams(sigma=0.25, R=1)
        tf = select_bandwidth(s, em, 0.5, build_grid(s, 0.5, kind="full"), params)
        tg = select_bandwidth(s, em, 0.5, build_grid(s, 0.5, kind="geom", a=a), params)
        cf, cg = em.count(tf.chosen), em.count(tg.chosen)
        if (cg <= max(a * a * cf, cf + 2 * a * a)
                and cf <= max(a * a * cg, cg + 2 * a * a)):
            factor_ok += 1
    passed = mono_ok == 50 and jump_ok >= 45 and factor_ok == 20
    record_criterion(
        4, "selection-rule invariants", passed,
        f"monotone safety {mono_ok}/50, jump avoidance {jump_ok}/50, "
        f"grid-factor agreement {factor_ok}/20")
    assert mono_ok == 50
    assert jump_ok >= 45
    assert factor_ok == 20


# ---------------------------------------------------------------------------
# criteria 5 and 6: upper-bound studies
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def upper_uniform_report():
    t0 = time.perf_counter()
    report = run_upper_bound_study({"kind": "uniform"}, STUDY_SPEC, STUDY_SIGMA,
                                   N_LIST, reps=STUDY_REPS, seed=7, **STUDY_KW)
    report.elapsed = time.perf_counter() - t0
    return report


@pytest.fixture(scope="module")
def upper_tent_report():
    return run_upper_bound_study({"kind": "power_cusp", "x0": 0.5, "beta": 1.0},
                                 STUDY_SPEC, STUDY_SIGMA, N_LIST, reps=STUDY_REPS,
                                 seed=7, pointwise_xs=(0.5, 0.05), **STUDY_KW)


def test_criterion_5_upper_bound_study(upper_uniform_report):
    report = upper_uniform_report
    meds = [report.summary[f"normalized_sup@{n}"]["median"] for n in N_LIST]
    mono_ok = all(meds[i + 1] <= 1.2 * meds[i] for i in range(len(meds) - 1))
    slope = report.slopes["raw_sup"]["slope"]
    slope_ok = 0.21 <= slope <= 0.45
    # normalize the wall-clock budget by the worker shortfall: the budget
    # assumes 8 effective workers, this host may have fewer cores
    budget = report.elapsed * min(8, os.cpu_count() or 1) / 8.0
    time_ok = budget < 600.0
    passed = mono_ok and slope_ok and time_ok
    record_criterion(
        5, "uniform-design sup-risk study", passed,
        f"normalized medians {[round(m, 3) for m in meds]}, raw slope {slope:.3f}, "
        f"{report.elapsed:.0f}s wall ({budget:.0f}s core-normalized)")
    assert mono_ok, f"normalized medians not non-increasing within 20%: {meds}"
    assert slope_ok, f"raw sup slope {slope} outside [0.21, 0.45]"
    assert time_ok


def test_criterion_6_rate_deformation(upper_tent_report):
    report = upper_tent_report
    s_mid = report.slopes["pw_raw@0.5"]["slope"]
    s_off = report.slopes["pw_raw@0.05"]["slope"]
    mid_ok = 0.15 <= s_mid <= 0.35
    off_ok = 0.21 <= s_off <= 0.45
    # bootstrap the replication set: the deformation (slower rate at the
    # vanishing point) must be stable, not a fluke of the medians
    vals_mid = {n: report.metric_values(n, "pw_raw@0.5") for n in N_LIST}
    vals_off = {n: report.metric_values(n, "pw_raw@0.05") for n in N_LIST}
    rng = np.random.default_rng(606)
    wins = 0
    boots = 500
    for _ in range(boots):
        idx = rng.integers(0, STUDY_REPS, STUDY_REPS)
        m_mid = [float(np.median(vals_mid[n][idx])) for n in N_LIST]
        m_off = [float(np.median(vals_off[n][idx])) for n in N_LIST]
        b_mid = loglog_slope(N_LIST, m_mid)["slope"]
        b_off = loglog_slope(N_LIST, m_off)["slope"]
        if b_mid < b_off:
            wins += 1
    frac = wins / boots
    passed = mid_ok and off_ok and frac >= 0.90
    record_criterion(
        6, "rate deformation at the vanishing design point", passed,
        f"slope@0.5 {s_mid:.3f}, slope@0.05 {s_off:.3f}, "
        f"ordering holds in {100 * frac:.1f}% of bootstraps")
    assert mid_ok, f"pointwise slope at 0.5 {s_mid} outside [0.15, 0.35]"
    assert off_ok, f"pointwise slope at 0.05 {s_off} outside [0.21, 0.45]"
    assert frac >= 0.90


# ---------------------------------------------------------------------------
# criterion 7: lower-bound harness
# ---------------------------------------------------------------------------


def test_criterion_7_lower_bound_harness():
    reps = 2000
    family = build_bump_family(uniform_density(), STUDY_SPEC, STUDY_SIGMA,
                               2**12, (0.0, 1.0), 0.05)
    stats = run_lower_bound_study(family, reps, seed=11)
    worst_z = 0.0
    alt_margin = math.inf
    for k in range(family.num_bumps):
        p = stats.expected_error[k]
        se = math.sqrt(max(p * (1.0 - p), 1e-12) / reps)
        worst_z = max(worst_z, abs(stats.misclassification[k] - p) / se)
        for errs in stats.alt_rules.values():
            alt_margin = min(alt_margin, (errs[k] - stats.misclassification[k]) / se)
    passed = worst_z <= 3.0 and alt_margin >= -3.0
    record_criterion(
        7, "two-point testing lower-bound harness", passed,
        f"{family.num_bumps} bumps, worst |z| {worst_z:.2f}, "
        f"worst alternative-rule margin {alt_margin:.2f} SEs")
    assert worst_z <= 3.0, "sign-test error frequency off its Gaussian value"
    assert alt_margin >= -3.0, "an alternative threshold rule beat the sign test"


# ---------------------------------------------------------------------------
# criterion 8: localized super-optimality study
# ---------------------------------------------------------------------------


def test_criterion_8_localized_study():
    results = {}
    for case in ("positive", {"kind": "vanishing", "x0": 0.5, "beta": 1.0}):
        name = case if isinstance(case, str) else case["kind"]
        with warnings.catch_warnings():
            # the smallest n clips the localized interval to [0, 1]; expected
            warnings.simplefilter("ignore")
            report = run_localized_study(case, STUDY_SPEC, STUDY_SIGMA, N_LIST,
                                         reps=STUDY_REPS, seed=13, jobs=8)
        meds = [report.summary[f"normalized_localized_sup@{n}"]["median"]
                for n in N_LIST]
        results[name] = meds
    passed = all(meds[-1] < meds[0] for meds in results.values())
    record_criterion(
        8, "localized risk shrinks relative to the global benchmark", passed,
        "; ".join(f"{name}: {meds[0]:.3f} -> {meds[-1]:.3f}"
                  for name, meds in results.items()))
    for name, meds in results.items():
        assert meds[-1] < meds[0], f"{name}: {meds}"


# ---------------------------------------------------------------------------
# criterion 9: byte-identical studies
# ---------------------------------------------------------------------------


def _study_bytes(out_dir):
    return {p.name: p.read_bytes() for p in sorted(Path(out_dir).iterdir())}


def test_criterion_9_byte_identical_studies(tmp_path):
    runs = {}
    for tag, jobs in (("a", 1), ("b", 2), ("c", 1)):
        out = tmp_path / f"upper_{tag}"
        assert cli_main(["study", "upper", "--n-list", "64", "128", "--reps", "3",
                         "--sigma", "0.25", "--seed", "5", "--R", "1",
                         "--D", "1.5", "--b", "0", "--jobs", str(jobs),
                         "--out-dir", str(out)]) == 0
        runs[tag] = _study_bytes(out)
    upper_ok = runs["a"] == runs["b"] == runs["c"]
    for tag, jobs in (("a", 1), ("b", 2)):
        out = tmp_path / f"loc_{tag}"
        assert cli_main(["study", "localized", "--case", "positive",
                         "--n-list", "256", "512", "--reps", "2", "--sigma", "0.25",
                         "--seed", "5", "--jobs", str(jobs),
                         "--out-dir", str(out)]) == 0
        runs[f"loc_{tag}"] = _study_bytes(out)
    loc_ok = runs["loc_a"] == runs["loc_b"]
    for tag in ("a", "b"):
        out = tmp_path / f"lower_{tag}"
        assert cli_main(["study", "lower", "--n-list", "1024", "--reps", "10",
                         "--sigma", "0.25", "--seed", "5", "--interval", "0", "1",
                         "--alpha-exponent", "0.05", "--out-dir", str(out)]) == 0
        runs[f"lower_{tag}"] = _study_bytes(out)
    lower_ok = runs["lower_a"] == runs["lower_b"]
    passed = upper_ok and loc_ok and lower_ok
    record_criterion(
        9, "studies byte-identical across reruns and worker counts", passed,
        f"upper {upper_ok}, localized {loc_ok}, lower {lower_ok}")
    assert upper_ok and loc_ok and lower_ok


# ---------------------------------------------------------------------------
# criterion 10: figure script on rate CSVs
# ---------------------------------------------------------------------------


def test_criterion_10_figure_script(tmp_path):
    csvs = []
    for n in (1000, 10_000, 100_000):
        out = tmp_path / f"rate_{n}.csv"
        assert cli_main(["rate", "--n", str(n), "--sigma", "1.0",
                         "--density", json.dumps(
                             {"kind": "power_cusp", "x0": 0.5, "beta": 1.0}),
                         "--grid-points", "41", "--out", str(out)]) == 0
        csvs.append(out)
    fig = tmp_path / "rates.png"
    res = subprocess.run(
        [sys.executable, str(FIGURES), "--kind", "rate_curves",
         "--inputs", *map(str, csvs), "--labels", "n=1e3", "n=1e4", "n=1e5",
         "--out", str(fig)], capture_output=True, text=True)
    render_ok = res.returncode == 0 and fig.exists() and fig.stat().st_size > 1000
    bad = tmp_path / "bad.csv"
    lines = csvs[0].read_text().splitlines()
    lines[0] = "x,h,rte,alpha"
    bad.write_text("\n".join(lines) + "\n")
    res_bad = subprocess.run(
        [sys.executable, str(FIGURES), "--kind", "rate_curves",
         "--inputs", str(bad), "--out", str(tmp_path / "x.png")],
        capture_output=True, text=True)
    diag_ok = res_bad.returncode == 1 and "rate" in res_bad.stderr
    passed = render_ok and diag_ok
    record_criterion(
        10, "figure script renders rate CSVs and names bad columns", passed,
        f"render {render_ok}, corrupted-header diagnostic {diag_ok}")
    assert render_ok, res.stderr
    assert diag_ok, res_bad.stderr
