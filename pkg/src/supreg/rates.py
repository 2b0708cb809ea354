"""The spatially-dependent accuracy benchmark.

Solves, for each query point x, the balance equation

    L * h**s = sigma * sqrt(log(n) / (n * mu([x-h, x+h])))

whose unique root h_n(x) defines the local rate r_n(x) = L * h_n(x)**s and
the exponent curve alpha_n(x) = log r_n(x) / log(log(n)/n).  Also provides
certified Hölder-class test functions for the simulation studies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .density import DesignDensity, interval_mass
from .errors import InputError, NoRoot

__all__ = [
    "HolderSpec",
    "RateCurve",
    "solve_h",
    "rate_curve",
    "example_alpha_closed_form",
    "make_holder_test_functions",
    "holder_seminorm",
]

_H_LO = 1e-15


@dataclass(frozen=True)
class HolderSpec:
    """Smoothness class parameters (s, L) with optional sup-norm bound Q."""

    s: float
    L: float
    Q: float = math.inf

    def __post_init__(self):
        if self.s <= 0 or self.L <= 0:
            raise InputError(f"need s > 0 and L > 0, got s={self.s}, L={self.L}")
        if self.Q <= 0:
            raise InputError(f"need Q > 0, got Q={self.Q}")

    @property
    def r(self) -> int:
        """Largest integer strictly smaller than s (so s=1 gives 0)."""
        r = math.ceil(self.s) - 1
        return max(r, 0)


@dataclass(frozen=True)
class RateCurve:
    """h_n, r_n and alpha_n evaluated on a query grid, with provenance."""

    x: np.ndarray
    h: np.ndarray
    rate: np.ndarray
    alpha: np.ndarray
    n: int
    sigma: float
    spec: HolderSpec
    density_config: dict = field(default_factory=dict)

    def rate_at(self, x):
        """Linear interpolation of r_n over the stored grid."""
        return np.interp(x, self.x, self.rate)


def _balance(density, spec, sigma, n, x, h):
    """Signed residual L*h^s*sqrt(n*mass) - sigma*sqrt(log n)."""
    mass = interval_mass(density, (x - h, x + h))
    return spec.L * h**spec.s * math.sqrt(n * mass) - sigma * math.sqrt(math.log(n))


def solve_h(density: DesignDensity, spec: HolderSpec, sigma: float, n: int, x: float) -> float:
    """Unique root of the bandwidth balance equation at x, by bisection.

    The map h -> h^(2s) * mu([x-h, x+h]) is increasing, so the root is unique
    whenever it exists; if even h=1 cannot match the noise term the sample is
    too small and NoRoot is raised (never silently clamped).
    """
    if n < 3:
        raise InputError(f"need n >= 3, got {n}")
    if sigma <= 0:
        raise InputError(f"need sigma > 0, got {sigma}")
    if not 0.0 <= x <= 1.0:
        raise InputError(f"x must lie in [0, 1], got {x}")
    lo, hi = _H_LO, 1.0
    if _balance(density, spec, sigma, n, x, hi) < 0.0:
        raise NoRoot(
            f"L*1^s below the noise term at x={x}: n={n} too small for this class",
            x=x,
        )
    # ~70 halvings take the bracket well below 1e-12 relative
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _balance(density, spec, sigma, n, x, mid) < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-13 * hi:
            break
    return 0.5 * (lo + hi)


def rate_curve(density, spec, sigma, n, grid) -> RateCurve:
    """Vectorized solve_h over a grid, with the exponent curve filled in."""
    grid = np.asarray(grid, dtype=float)
    if np.any(grid < 0) or np.any(grid > 1):
        raise InputError("grid points must lie in [0, 1]")
    h = np.array([solve_h(density, spec, sigma, n, float(x)) for x in grid])
    rate = spec.L * h**spec.s
    alpha = np.log(rate) / math.log(math.log(n) / n)
    try:
        dconf = density.to_config()
    except InputError:
        dconf = {"kind": "custom"}
    return RateCurve(
        x=grid, h=h, rate=rate, alpha=alpha, n=int(n), sigma=float(sigma),
        spec=spec, density_config=dconf,
    )


def example_alpha_closed_form(n: int, x: float) -> float:
    """Closed-form exponent curve for the tent-density worked case.

    Setting: s = 1, sigma = L = 1, density 4|x - 1/2| on [0, 1].  Piecewise in
    three branches split at 1/2 -+ (log n / (2n))**(1/4).
    """
    if not 0.0 <= x <= 1.0:
        raise InputError(f"x must lie in [0, 1], got {x}")
    logn = math.log(n)
    lnn = math.log(logn / n)  # negative for n >= 2
    cut = (logn / (2.0 * n)) ** 0.25
    if x <= 0.5 - cut:
        return (1.0 / 3.0) * (1.0 - math.log(1.0 - 2.0 * x) / lnn)
    if x >= 0.5 + cut:
        return (1.0 / 3.0) * (1.0 - math.log(2.0 * x - 1.0) / lnn)
    d2 = (x - 0.5) ** 2
    inner = math.sqrt(d2**2 + 4.0 * logn / n) - d2
    return (math.log(inner) - math.log(2.0)) / (2.0 * lnn)


# ---------------------------------------------------------------------------
# certified Hölder test functions
# ---------------------------------------------------------------------------


def holder_seminorm(f, s: float, num_points: int = 10_000, domain=(0.0, 1.0)) -> float:
    """Grid estimate of the order-s Hölder seminorm of f.

    Differentiates r = ceil(s)-1 times by central differences on a uniform
    grid, then maximizes the increment ratio over geometrically spaced lags
    (checking all pairs would be quadratic in the grid size).
    """
    r = max(math.ceil(s) - 1, 0)
    a, b = domain
    grid = np.linspace(a, b, num_points)
    dx = grid[1] - grid[0]
    vals = np.asarray(f(grid), dtype=float)
    vals = np.broadcast_to(vals, grid.shape).astype(float)
    for _ in range(r):
        vals = np.gradient(vals, dx)
    frac = s - r
    best = 0.0
    lag = 1
    while lag < vals.size:
        diff = np.abs(vals[lag:] - vals[:-lag])
        best = max(best, float(diff.max()) / (lag * dx) ** frac)
        lag = max(lag + 1, int(lag * 1.25))
    return best


def _base_shape(kind, s=1.0):
    if kind == "sine":
        # a quarter period maximizes the amplitude allowed by a given
        # Lipschitz budget, keeping the signal visible above noise at small
        # sample sizes; the small phase lead keeps the curvature bounded
        # away from zero across the whole interval instead of flattening
        # out at the left end
        return lambda x: np.sin(0.5 * np.pi * (np.asarray(x, dtype=float) + 0.1))
    if kind == "bump_sum":
        def shape(x):
            x = np.asarray(x, dtype=float)
            out = np.zeros_like(x)
            for c, w, sgn in ((0.2, 0.12, 1.0), (0.55, 0.1, -0.8), (0.85, 0.08, 0.6)):
                t = (x - c) / w
                inside = np.abs(t) < 1.0
                bump = np.zeros_like(x)
                bump[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
                out += sgn * bump
            return out
        return shape
    if kind == "poly_plus_cusp":
        # a cusp of exponent exactly s sits on the boundary of the class,
        # which is the interesting stress case at any smoothness level
        exponent = min(float(s), 2.0)

        def shape(x):
            x = np.asarray(x, dtype=float)
            return x * (1.0 - x) + 0.5 * np.abs(x - 0.4) ** exponent
        return shape
    raise InputError(f"unknown test-function kind {kind!r}")


def make_holder_test_functions(spec: HolderSpec, kind: str = "sine"):
    """A test function certified to lie in the (s, L) class with sup bound Q.

    The base shape is rescaled so the grid-checked seminorm is at most
    0.95 * L and the sup-norm at most Q; the seminorm is linear in the
    amplitude so a single rescale suffices.
    """
    shape = _base_shape(kind, spec.s)
    semi = holder_seminorm(shape, spec.s)
    amp = 0.95 * spec.L / semi if semi > 0 else 1.0
    if math.isfinite(spec.Q):
        sup = float(np.max(np.abs(shape(np.linspace(0, 1, 10_000)))))
        if sup > 0:
            amp = min(amp, spec.Q / sup)

    def f(x):
        return amp * shape(x)

    f.amplitude = amp
    f.kind = kind
    return f
