"""Regularized local polynomial fits in the data-localized pseudo-norm.

For a knot x_k and window delta, the Gram system has entries
X[p, q] = <phi_p, phi_q>_delta with phi_p(x) = (x - x_k)**p, and the fit
solves Xbar theta = Y where Xbar adds an identity correcting term scaled by
(n * empirical_mass)**(-1/2) whenever the smallest eigenvalue of X does not
exceed that floor.  An empty window yields the zero fit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from .density import EmpiricalMeasure, Sample
from .errors import InputError, SingularFit

__all__ = [
    "GramSystem",
    "LocalFit",
    "build_gram",
    "gram_from_sums",
    "fit_local",
    "evaluate",
    "evaluate_derivative",
    "bias_variance_diagnostic",
]

_COND_LIMIT = 1e15


@dataclass(frozen=True)
class GramSystem:
    """Localized Gram matrix and response vector at one knot/window."""

    center: float
    window: tuple
    degree: int
    X: np.ndarray
    Y: np.ndarray
    count: int
    n_total: int
    omega_flag: bool
    empty: bool

    @property
    def eig_floor(self) -> float:
        """The eigenvalue floor (n * empirical_mass)**(-1/2)."""
        return self.count ** -0.5 if self.count > 0 else math.inf

    @property
    def basis_norms(self) -> np.ndarray:
        """Localized pseudo-norms of the power basis functions."""
        return np.sqrt(np.clip(np.diag(self.X), 0.0, None))

    def regularized_matrix(self) -> np.ndarray:
        if self.empty or self.omega_flag:
            return self.X
        return self.X + self.eig_floor * np.eye(self.degree + 1)


@dataclass(frozen=True)
class LocalFit:
    """Coefficients of the fitted polynomial in powers of (x - center)."""

    theta: np.ndarray
    gram: GramSystem
    regularized: bool
    empty: bool

    @property
    def center(self) -> float:
        return self.gram.center


def gram_from_sums(center, window, degree, power_sums, response_sums, n_total) -> GramSystem:
    """Assemble a GramSystem from centered window sums.

    ``power_sums[m]`` is sum (x - center)**m over the window (m up to at
    least 2*degree) and ``response_sums[p]`` is sum y * (x - center)**p.
    """
    count = int(round(power_sums[0]))
    R = int(degree)
    if count == 0:
        z = np.zeros(R + 1)
        return GramSystem(center=float(center), window=tuple(window), degree=R,
                          X=np.zeros((R + 1, R + 1)), Y=z, count=0,
                          n_total=int(n_total), omega_flag=False, empty=True)
    idx = np.arange(R + 1)
    X = power_sums[idx[:, None] + idx[None, :]] / count
    Y = np.asarray(response_sums[: R + 1], dtype=float) / count
    lam_min = float(np.linalg.eigvalsh(X)[0])
    omega = lam_min > count ** -0.5  # strict, per the eigenvalue-floor test
    return GramSystem(center=float(center), window=tuple(window), degree=R,
                      X=X, Y=Y, count=count, n_total=int(n_total),
                      omega_flag=omega, empty=False)


def build_gram(sample: Sample, em: EmpiricalMeasure, x_k: float, window, R: int) -> GramSystem:
    """Gram system by direct accumulation over the points in the window.

    An empty window returns a sentinel marked ``empty`` rather than raising;
    the fit for it is identically zero.
    """
    if R < 0:
        raise InputError(f"degree must be >= 0, got {R}")
    i, j = em.window(window)
    if j <= i:
        return gram_from_sums(x_k, window, R, np.zeros(2 * R + 2), np.zeros(R + 1), em.n)
    d = sample.xs[i:j] - x_k
    dp = d[None, :] ** np.arange(2 * R + 2)[:, None]
    power_sums = dp.sum(axis=1)
    response_sums = (sample.ys[i:j][None, :] * dp[: R + 1]).sum(axis=1)
    return gram_from_sums(x_k, window, R, power_sums, response_sums, em.n)


def _half_width(window) -> float:
    lo, hi = window
    w = 0.5 * (hi - lo)
    return w if w > 0 else 1.0


def fit_local(gram: GramSystem) -> LocalFit:
    """Solve the (possibly regularized) localized least-squares system.

    The raw power basis is kept for fidelity with the Gram definition, but
    the solve internally rescales by the window half-width to keep the
    condition number bounded, then unscales the coefficients.
    """
    R = gram.degree
    if gram.empty:
        return LocalFit(theta=np.zeros(R + 1), gram=gram, regularized=False, empty=True)
    regularize = not gram.omega_flag
    Xbar = gram.regularized_matrix()
    # The half-width rescale keeps the unregularized solve well conditioned on
    # narrow windows; with the ridge term present the raw basis is already
    # bounded below by the floor, and rescaling would destroy that.
    w = 1.0 if regularize else _half_width(gram.window)
    scale = w ** np.arange(R + 1)
    Xs = Xbar / np.outer(scale, scale)
    Ys = gram.Y / scale
    try:
        c, low = sla.cho_factor(Xs, check_finite=False)
        theta_s = sla.cho_solve((c, low), Ys, check_finite=False)
    except sla.LinAlgError:
        evals, evecs = np.linalg.eigh(Xs)
        if evals[0] <= 0 or evals[-1] / evals[0] > _COND_LIMIT:
            raise SingularFit(
                "local system too ill-conditioned after regularization",
                diagnostics={"evals": evals, "window": gram.window, "count": gram.count},
            )
        theta_s = evecs @ ((evecs.T @ Ys) / evals)
    evals = np.linalg.eigvalsh(Xs)
    if evals[0] <= 0 or evals[-1] / max(evals[0], 1e-300) > _COND_LIMIT:
        raise SingularFit(
            "local system too ill-conditioned after regularization",
            diagnostics={"evals": evals, "window": gram.window, "count": gram.count},
        )
    return LocalFit(theta=theta_s / scale, gram=gram, regularized=regularize, empty=False)


def evaluate(fit: LocalFit, x):
    """Horner evaluation of the fitted polynomial at x (scalar or array)."""
    d = np.asarray(x, dtype=float) - fit.center
    out = np.zeros_like(d)
    for coef in fit.theta[::-1]:
        out = out * d + coef
    return out if out.ndim else float(out)

def evaluate_derivative(fit: LocalFit, m: int, x):
    """m-th derivative of the fitted polynomial at x."""
    R = fit.theta.size - 1
    if m > R:
        raise InputError(f"derivative order {m} exceeds degree {R}")
    d = np.asarray(x, dtype=float) - fit.center
    # coefficients of the m-th derivative in powers of (x - center)
    degs = np.arange(m, R + 1)
    coeffs = fit.theta[m:] * np.array(
        [math.factorial(int(k)) / math.factorial(int(k) - m) for k in degs]
    )
    out = np.zeros_like(d)
    for coef in coeffs[::-1]:
        out = out * d + coef
    return out if out.ndim else float(out)


def bias_variance_diagnostic(fit: LocalFit, spec, sigma: float) -> dict:
    """Normalized-Gram eigenvalue and the bias-variance style error bound.

    Reporting only: never used by the estimator path.  Unavailable when some
    basis norm vanishes (all window points coincide with the knot).
    """
    if fit.empty:
        raise InputError("diagnostic undefined for an empty fit")
    gram = fit.gram
    norms = gram.basis_norms
    if np.any(norms == 0.0):
        return {"available": False, "eig_floor": gram.eig_floor,
                "lambda_E": None, "bound": None}
    lam_inv = 1.0 / norms
    E = lam_inv[:, None] * gram.regularized_matrix() * lam_inv[None, :]
    lam_E = float(np.linalg.eigvalsh(E)[0])
    lo, hi = gram.window
    width = max(hi - lo, 0.0)
    logn = math.log(max(gram.n_total, 2))
    bound = (spec.L * width**spec.s + sigma * gram.count**-0.5 * math.sqrt(2.0 * logn)) / lam_E
    return {"available": True, "eig_floor": gram.eig_floor,
            "lambda_E": lam_E, "bound": bound, "E": E}
