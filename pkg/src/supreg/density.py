"""Design densities on [0, 1], model sampling, and the empirical sample measure.

Every downstream module consumes data only through the objects defined here:
a ``DesignDensity`` (the law of the design points), a ``Sample`` drawn from
the regression model ``y = f(x) + sigma * noise``, and the ``EmpiricalMeasure``
view that answers interval-count queries and localized inner products.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .errors import EmptyWindow, InputError

__all__ = [
    "DesignDensity",
    "uniform_density",
    "power_cusp_density",
    "piecewise_density",
    "custom_density",
    "density_from_config",
    "interval_mass",
    "Sample",
    "sample_model",
    "EmpiricalMeasure",
    "empirical_mass",
    "localized_inner",
    "localized_norm",
]

_QUAD_TOL = 1e-12


def _check_interval(interval):
    lo, hi = interval
    if not (np.isfinite(lo) and np.isfinite(hi)):
        raise InputError(f"interval endpoints must be finite, got {interval!r}")
    if lo > hi:
        raise InputError(f"malformed interval: lo={lo} > hi={hi}")
    return float(lo), float(hi)


def _clip_unit(lo, hi):
    return max(lo, 0.0), min(hi, 1.0)


@dataclass(frozen=True)
class DesignDensity:
    """A probability density on [0, 1] with closed-form or numeric mass queries.

    ``kind`` is one of ``uniform``, ``power_cusp``, ``piecewise``, ``custom``.
    ``vanishing_points`` lists (x0, beta) pairs where the density vanishes
    like ``|x - x0|**beta``.
    """

    kind: str
    params: dict = field(default_factory=dict)
    vanishing_points: tuple = ()
    # custom only
    pdf: Callable[[np.ndarray], np.ndarray] | None = None
    cdf: Callable[[np.ndarray], np.ndarray] | None = None
    _normalizer: float = 1.0

    def mass(self, interval) -> float:
        return interval_mass(self, interval)

    def ppf(self, u):
        """Inverse CDF, vectorized over ``u`` in [0, 1]."""
        u = np.asarray(u, dtype=float)
        if self.kind == "uniform":
            return u
        if self.kind == "power_cusp":
            return _power_cusp_ppf(self.params, u)
        if self.kind == "piecewise":
            return _piecewise_ppf(self.params, u)
        return _custom_ppf(self, u)

    def to_config(self) -> dict:
        if self.kind == "uniform":
            return {"kind": "uniform"}
        if self.kind == "power_cusp":
            return {
                "kind": "power_cusp",
                "x0": self.params["x0"],
                "beta": self.params["beta"],
            }
        if self.kind == "piecewise":
            return {"kind": "piecewise", "segments": self.params["segments"]}
        raise InputError("custom densities are not serializable to config")


def uniform_density() -> DesignDensity:
    return DesignDensity(kind="uniform")


def power_cusp_density(x0: float, beta: float) -> DesignDensity:
    """Density proportional to ``|x - x0|**beta`` on [0, 1].

    The normalizer makes the total mass one; for x0=1/2, beta=1 this is the
    tent-shaped density 4|x - 1/2|.
    """
    if not 0.0 <= x0 <= 1.0:
        raise InputError(f"x0 must lie in [0, 1], got {x0}")
    if beta < 0:
        raise InputError(f"beta must be >= 0, got {beta}")
    b1 = beta + 1.0
    norm = b1 / (x0**b1 + (1.0 - x0) ** b1)
    params = {"x0": float(x0), "beta": float(beta), "norm": norm}
    vanishing = ((float(x0), float(beta)),) if beta > 0 else ()
    return DesignDensity(kind="power_cusp", params=params, vanishing_points=vanishing)


def piecewise_density(segments: Sequence[Sequence[float]]) -> DesignDensity:
    """Piecewise-constant density given as [lo, hi, value] segments.

    Segments must tile [0, 1] without overlap and integrate to one.
    """
    segs = [(float(a), float(b), float(v)) for a, b, v in segments]
    segs.sort(key=lambda s: s[0])
    if not segs or abs(segs[0][0]) > 1e-12 or abs(segs[-1][1] - 1.0) > 1e-12:
        raise InputError("piecewise segments must cover [0, 1]")
    for (a0, b0, _), (a1, _, _) in zip(segs, segs[1:]):
        if abs(b0 - a1) > 1e-12:
            raise InputError("piecewise segments must be contiguous")
    total = sum((b - a) * v for a, b, v in segs)
    if abs(total - 1.0) > 1e-10:
        raise InputError(f"piecewise density must have total mass 1, got {total}")
    if any(v < 0 for _, _, v in segs):
        raise InputError("piecewise density values must be >= 0")
    return DesignDensity(kind="piecewise", params={"segments": segs})


def custom_density(
    pdf: Callable,
    cdf: Callable | None = None,
    vanishing_points: Sequence[tuple] = (),
) -> DesignDensity:
    """Density given by an arbitrary function, integrated numerically.

    Interval masses use adaptive quadrature to absolute tolerance 1e-12; the
    density is normalized by its numeric total mass.  Supplying ``cdf`` makes
    inverse-CDF sampling exact and fast, otherwise sampling bisects on the
    numeric CDF.
    """
    total, err = integrate.quad(pdf, 0.0, 1.0, epsabs=_QUAD_TOL, limit=200)
    if not np.isfinite(total) or total <= 0:
        raise InputError(f"custom density is not normalizable: total mass {total}")
    return DesignDensity(
        kind="custom",
        pdf=pdf,
        cdf=cdf,
        vanishing_points=tuple(vanishing_points),
        _normalizer=1.0 / total,
    )


def density_from_config(config) -> DesignDensity:
    """Build a density from its JSON config form, e.g. {"kind": "power_cusp", ...}."""
    if isinstance(config, str):
        if config == "uniform":
            return uniform_density()
        raise InputError(f"unknown density shorthand {config!r}")
    kind = config.get("kind")
    if kind == "uniform":
        return uniform_density()
    if kind == "power_cusp":
        return power_cusp_density(config["x0"], config["beta"])
    if kind == "piecewise":
        return piecewise_density(config["segments"])
    raise InputError(f"unknown density kind {kind!r}")


# ---------------------------------------------------------------------------
# interval mass
# ---------------------------------------------------------------------------


def interval_mass(density: DesignDensity, interval) -> float:
    """Mass of ``interval`` intersected with [0, 1] under ``density``."""
    lo, hi = _check_interval(interval)
    lo, hi = _clip_unit(lo, hi)
    if lo >= hi:
        return 0.0
    if density.kind == "uniform":
        return hi - lo
    if density.kind == "power_cusp":
        return _power_cusp_cdf(density.params, hi) - _power_cusp_cdf(density.params, lo)
    if density.kind == "piecewise":
        return _piecewise_cdf(density.params, hi) - _piecewise_cdf(density.params, lo)
    if density.cdf is not None:
        return float(density.cdf(hi) - density.cdf(lo))
    val, _ = integrate.quad(density.pdf, lo, hi, epsabs=_QUAD_TOL, limit=200)
    return val * density._normalizer


def _power_cusp_cdf(params, t):
    x0, b1, norm = params["x0"], params["beta"] + 1.0, params["norm"]
    # antiderivative of norm * |t - x0| ** beta, anchored at 0
    def anti(u):
        return norm * np.sign(u - x0) * np.abs(u - x0) ** b1 / b1

    return anti(t) - anti(0.0)


def _power_cusp_ppf(params, u):
    x0, beta, norm = params["x0"], params["beta"], params["norm"]
    b1 = beta + 1.0
    f0 = norm * x0**b1 / b1  # mass of [0, x0]
    u = np.asarray(u, dtype=float)
    left = u <= f0
    out = np.empty_like(u)
    out[left] = x0 - (x0**b1 - u[left] * b1 / norm) ** (1.0 / b1)
    out[~left] = x0 + ((u[~left] - f0) * b1 / norm) ** (1.0 / b1)
    return np.clip(out, 0.0, 1.0)


def _piecewise_cdf(params, t):
    acc = 0.0
    for a, b, v in params["segments"]:
        if t <= a:
            break
        acc += (min(t, b) - a) * v
    return acc


def _piecewise_ppf(params, u):
    segs = params["segments"]
    edges = np.array([a for a, _, _ in segs] + [1.0])
    cum = np.concatenate([[0.0], np.cumsum([(b - a) * v for a, b, v in segs])])
    cum[-1] = 1.0
    u = np.asarray(u, dtype=float)
    idx = np.clip(np.searchsorted(cum, u, side="right") - 1, 0, len(segs) - 1)
    out = np.empty_like(u)
    for i, (a, b, v) in enumerate(segs):
        sel = idx == i
        if not np.any(sel):
            continue
        if v > 0:
            out[sel] = a + (u[sel] - cum[i]) / v
        else:
            out[sel] = a  # zero-mass segment: no draws land here a.s.
    return np.clip(out, 0.0, 1.0)


def _custom_cdf_scalar(density, t):
    if t <= 0:
        return 0.0
    if t >= 1:
        return 1.0
    if density.cdf is not None:
        return float(density.cdf(t))
    val, _ = integrate.quad(density.pdf, 0.0, t, epsabs=_QUAD_TOL, limit=200)
    return val * density._normalizer


def _custom_ppf(density, u):
    u = np.atleast_1d(np.asarray(u, dtype=float))
    out = np.empty_like(u)
    for i, ui in enumerate(u):
        lo, hi = 0.0, 1.0
        # monotone bisection on the CDF to 1e-12
        while hi - lo > 1e-12:
            mid = 0.5 * (lo + hi)
            if _custom_cdf_scalar(density, mid) < ui:
                lo = mid
            else:
                hi = mid
        out[i] = 0.5 * (lo + hi)
    return out


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Sample:
    """Design/response pairs sorted by design point.

    ``sort_index`` maps sorted order back to draw order, so the i-th draw is
    ``(xs[j], ys[j])`` with ``sort_index[j] == i``.
    """

    xs: np.ndarray
    ys: np.ndarray
    sigma: float
    seed: object
    sort_index: np.ndarray

    @property
    def n(self) -> int:
        return self.xs.size


def sample_model(density: DesignDensity, f, sigma: float, n: int, seed) -> Sample:
    """Draw ``n`` observations from the regression model under ``density``.

    Design draws and noise draws come from independent streams derived from
    the seed, so the same design can be reused across noise replications.
    """
    if n < 1:
        raise InputError(f"need n >= 1, got {n}")
    if sigma < 0:
        raise InputError(f"sigma must be >= 0, got {sigma}")
    design_ss, noise_ss = np.random.SeedSequence(seed).spawn(2)
    design_rng = np.random.Generator(np.random.PCG64(design_ss))
    noise_rng = np.random.Generator(np.random.PCG64(noise_ss))
    xs = density.ppf(design_rng.random(n))
    xi = noise_rng.standard_normal(n)
    ys = np.asarray(f(xs), dtype=float) + sigma * xi
    ys = np.broadcast_to(ys, xs.shape).astype(float)
    order = np.argsort(xs, kind="stable")
    return Sample(
        xs=xs[order].copy(),
        ys=ys[order].copy(),
        sigma=float(sigma),
        seed=seed,
        sort_index=order,
    )


# ---------------------------------------------------------------------------
# empirical measure and localized inner products
# ---------------------------------------------------------------------------


class EmpiricalMeasure:
    """Interval-count view over the sorted design points of a Sample.

    Intervals are closed; points exactly on an endpoint count as inside.
    """

    def __init__(self, sample_or_xs):
        xs = getattr(sample_or_xs, "xs", sample_or_xs)
        self.xs = np.asarray(xs, dtype=float)
        if self.xs.ndim != 1:
            raise InputError("design points must be a 1-d array")
        self.n = self.xs.size
        self._ys = getattr(sample_or_xs, "ys", None)

    def window(self, interval):
        """(lo_idx, hi_idx) slice bounds of the points inside the closed interval."""
        lo, hi = _check_interval(interval)
        i = int(np.searchsorted(self.xs, lo, side="left"))
        j = int(np.searchsorted(self.xs, hi, side="right"))
        return i, j

    def count(self, interval) -> int:
        i, j = self.window(interval)
        return j - i

    def points(self, interval) -> np.ndarray:
        i, j = self.window(interval)
        return self.xs[i:j]


def empirical_mass(em: EmpiricalMeasure, interval) -> float:
    """Fraction of design points in the closed interval."""
    return em.count(interval) / em.n


def localized_inner(em: EmpiricalMeasure, interval, g1, g2) -> float:
    """Average of ``g1 * g2`` over the design points inside ``interval``.

    Raises EmptyWindow when no point falls in the window; callers decide the
    fallback.
    """
    pts = em.points(interval)
    if pts.size == 0:
        raise EmptyWindow(f"no design points in {interval!r}")
    return float(np.mean(np.asarray(g1(pts), dtype=float) * np.asarray(g2(pts), dtype=float)))


def localized_norm(em: EmpiricalMeasure, interval, g) -> float:
    """Pseudo-norm induced by the localized inner product."""
    val = localized_inner(em, interval, g, g)
    return float(np.sqrt(max(val, 0.0)))
