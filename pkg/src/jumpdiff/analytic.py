"""Closed-form quantities for the drifted diffusion killed at the boundary.

Green's function (occupation-density normalization: integrating it in the
second argument gives the expected exit time), the invariant density of the
restarted process and its large-drift limit, the bottom of the killed
spectrum, survival probabilities by eigenexpansion, and the explicit
drift-dependent bounds used by the coupling experiments.

Everything here is a pure function of an immutable spec; callers may
evaluate in parallel without coordination.
"""

from __future__ import annotations

import math
import warnings
from functools import lru_cache

import numpy as np
from scipy.integrate import quad

from .errors import (
    OutOfDomain,
    RequiresCenteredDelta,
    RequiresPositiveDrift,
    TruncationWarning,
)
from .model import DEFAULT_CONFIG, Interval, JumpDistribution, ProcessSpec, SolverConfig


def _require_inside(iv: Interval, *points: float) -> None:
    for p in points:
        if not iv.contains(p):
            raise OutOfDomain(f"point {p} outside open interval ({iv.a}, {iv.b})")


def _require_centered(spec: ProcessSpec) -> None:
    if not spec.is_centered_delta:
        raise RequiresCenteredDelta("spec must restart from a single midpoint atom")


# ---------------------------------------------------------------------------
# Green's function
# ---------------------------------------------------------------------------

def _green_raw(a: float, b: float, sigma: float, mu: float, x, y, mu_switch: float):
    """Occupation-density Green's function, vectorized over x and y.

    For mu > mu_switch all exponents have the form -(2 mu / sigma^2) * (positive
    length), so the evaluation never overflows and keeps full relative accuracy
    via expm1.  For |mu| <= mu_switch the drift-free product form is used with
    its first-order drift correction (1 + alpha |y - x| / 2); the neglected
    second-order term is below (2 mu L / sigma^2)^2 / 6 ~ 7e-9 at the switch
    point.  Negative drift is evaluated through the reflection symmetry
    g_{sigma,mu}(x, y) = g_{sigma,-mu}(a+b-x, a+b-y).
    """
    if mu < -mu_switch:
        return _green_raw(a, b, sigma, -mu, a + b - np.asarray(x), a + b - np.asarray(y), mu_switch)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    L = b - a
    lo = np.minimum(x, y)
    hi = np.maximum(x, y)
    alpha = 2.0 * mu / sigma**2
    if abs(mu) <= mu_switch:
        g0 = 2.0 * (lo - a) * (b - hi) / (sigma**2 * L)
        return g0 * (1.0 + 0.5 * alpha * (hi - lo))
    left = -np.expm1(-alpha * (lo - a))
    right = -np.expm1(-alpha * (b - hi))
    denom = -np.expm1(-alpha * L)
    skew = np.exp(-alpha * np.maximum(x - y, 0.0))
    return skew * left * right / (mu * denom)


def green_function(spec: ProcessSpec, x: float, y: float,
                   config: SolverConfig = DEFAULT_CONFIG) -> float:
    """Expected occupation density at y for the killed diffusion started at x.

    Integrating over y yields the expected exit time from (a, b).

    Raises:
        OutOfDomain: x or y outside the open interval.
    """
    _require_inside(spec.interval, x, y)
    mu_switch = config.mu_switch_scale * spec.sigma**2 / spec.length
    return float(_green_raw(spec.a, spec.b, spec.sigma, spec.mu, x, y, mu_switch))


def _green_profile(spec: ProcessSpec, ys: np.ndarray,
                   config: SolverConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Unnormalized invariant density: sum_i w_i g(x_i, y) on an array of y."""
    mu_switch = config.mu_switch_scale * spec.sigma**2 / spec.length
    out = np.zeros_like(np.asarray(ys, dtype=float))
    for x_i, w_i in spec.nu.atoms:
        out = out + w_i * _green_raw(spec.a, spec.b, spec.sigma, spec.mu, x_i, ys, mu_switch)
    return out


@lru_cache(maxsize=256)
def _invariant_norm(spec: ProcessSpec, config: SolverConfig = DEFAULT_CONFIG) -> float:
    """Normalizer of the invariant density by adaptive quadrature.

    Atom locations are quadrature breakpoints; the integrand is smooth
    between them.
    """
    val, _ = quad(
        lambda y: float(_green_profile(spec, np.asarray(y), config)),
        spec.a,
        spec.b,
        points=list(spec.nu.locations),
        epsabs=0.0,
        epsrel=config.quad_rel_tol,
        limit=config.quad_limit,
    )
    return val


def mean_exit_time(spec: ProcessSpec, x: float,
                   config: SolverConfig = DEFAULT_CONFIG) -> float:
    """E_x of the first exit time, as the y-integral of the Green's function."""
    _require_inside(spec.interval, x)
    mu_switch = config.mu_switch_scale * spec.sigma**2 / spec.length
    val, _ = quad(
        lambda y: float(_green_raw(spec.a, spec.b, spec.sigma, spec.mu, x, y, mu_switch)),
        spec.a,
        spec.b,
        points=[x],
        epsabs=0.0,
        epsrel=config.quad_rel_tol,
        limit=config.quad_limit,
    )
    return val


def invariant_density(spec: ProcessSpec, y: float,
                      config: SolverConfig = DEFAULT_CONFIG) -> float:
    """Stationary density of the restarted process at y.

    Ratio of the atom-weighted Green profile to its integral over (a, b);
    integrates to one.
    """
    _require_inside(spec.interval, y)
    num = float(_green_profile(spec, np.asarray(y), config))
    return num / _invariant_norm(spec, config)


def invariant_density_grid(spec: ProcessSpec, ys: np.ndarray,
                           config: SolverConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Vectorized :func:`invariant_density` on interior grid points."""
    ys = np.asarray(ys, dtype=float)
    if np.any(ys <= spec.a) or np.any(ys >= spec.b):
        raise OutOfDomain("grid points must lie strictly inside the interval")
    return _green_profile(spec, ys, config) / _invariant_norm(spec, config)


def invariant_density_limit(nu: JumpDistribution, interval: Interval, y: float) -> float:
    """Large-drift limit density: nu((a, y]) normalized over the interval.

    For an atomic measure the normalizer is the exact sum of w_i (b - x_i).
    """
    _require_inside(interval, y)
    num = nu.mass_left_of(y)
    denom = sum(w * (interval.b - x) for x, w in nu.atoms)
    return num / denom


# ---------------------------------------------------------------------------
# Killed spectrum and survival
# ---------------------------------------------------------------------------

def dirichlet_bottom(spec: ProcessSpec, interval_override: Interval | None = None) -> float:
    """Bottom eigenvalue of the killed generator: sigma^2 pi^2 / (2 L^2) + mu^2 / (2 sigma^2)."""
    L = (interval_override or spec.interval).length
    return spec.sigma**2 * math.pi**2 / (2.0 * L**2) + spec.mu**2 / (2.0 * spec.sigma**2)


def _survival_terms(spec: ProcessSpec, u: float, L: float, n_terms: int):
    """Term magnitudes shared by the scalar and grid survival evaluations.

    Returns (omega, lam, coeff_minus, coeff_plus) with the k-th survival term
        (2/L) sin(omega_k u) * omega_k / (beta^2 + omega_k^2)
            * [exp(-beta u - lam_k t) - (-1)^k exp(beta (L - u) - lam_k t)].
    Exponents are combined before exponentiation so large drifts cannot
    overflow prematurely.
    """
    beta = spec.mu / spec.sigma**2
    k = np.arange(1, n_terms + 1, dtype=float)
    omega = k * math.pi / L
    lam = 0.5 * spec.sigma**2 * omega**2 + spec.mu**2 / (2.0 * spec.sigma**2)
    base = (2.0 / L) * np.sin(omega * u) * omega / (beta**2 + omega**2)
    sign = np.where(np.arange(1, n_terms + 1) % 2 == 0, 1.0, -1.0)
    return beta, omega, lam, base, sign


def killed_survival(spec: ProcessSpec, x: float, t: float, n_terms: int | None = None,
                    interval: Interval | None = None,
                    config: SolverConfig = DEFAULT_CONFIG) -> float:
    """P_x(exit time > t) by eigenexpansion of the killed drifted generator.

    Eigenvalues sigma^2 k^2 pi^2 / (2 L^2) + mu^2 / (2 sigma^2) with
    eigenfunctions exp(-mu (x-a)/sigma^2) sin(k pi (x-a)/L); the projection
    weights are the closed-form integrals of exp(+mu (y-a)/sigma^2)
    sin(k pi (y-a)/L).  Truncated at ``n_terms``; emits
    :class:`TruncationWarning` when the geometric tail bound exceeds the
    configured threshold.  ``interval`` restricts the exit problem to a
    sub-interval (the restart measure is irrelevant to the killed process).

    Raises:
        OutOfDomain: x outside the (possibly overridden) open interval.
    """
    iv = interval or spec.interval
    _require_inside(iv, x)
    if t < 0.0:
        raise OutOfDomain("time must be nonnegative")
    if t == 0.0:
        return 1.0
    n = n_terms or config.survival_n_terms
    L = iv.length
    u = x - iv.a
    beta, omega, lam, base, sign = _survival_terms(spec, u, L, n)
    val = float(np.sum(base * (np.exp(-beta * u - lam * t)
                               - sign * np.exp(beta * (L - u) - lam * t))))
    _warn_survival_tail(spec, u, L, n, t, config)
    return min(1.0, max(0.0, val))


def _warn_survival_tail(spec: ProcessSpec, u: float, L: float, n: int, t: float,
                        config: SolverConfig) -> None:
    beta = spec.mu / spec.sigma**2
    w1 = (n + 1) * math.pi / L
    lam1 = 0.5 * spec.sigma**2 * w1**2 + spec.mu**2 / (2.0 * spec.sigma**2)
    m1 = (2.0 / L) * w1 / (beta**2 + w1**2) * (
        math.exp(min(700.0, -beta * u - lam1 * t))
        + math.exp(min(700.0, beta * (L - u) - lam1 * t))
    )
    w2 = (n + 2) * math.pi / L
    lam2 = 0.5 * spec.sigma**2 * w2**2 + spec.mu**2 / (2.0 * spec.sigma**2)
    ratio = math.exp(-(lam2 - lam1) * t) * (n + 2) / (n + 1)
    if ratio >= 1.0:
        warnings.warn(TruncationWarning("survival tail bound diverges at this t"))
        return
    if m1 / (1.0 - ratio) > config.survival_tail_warn:
        warnings.warn(TruncationWarning(
            f"survival tail bound {m1 / (1.0 - ratio):.3e} above threshold"))


def killed_survival_grid(spec: ProcessSpec, x: float, ts: np.ndarray,
                         n_terms: int | None = None, interval: Interval | None = None,
                         config: SolverConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Vectorized :func:`killed_survival` over an array of times."""
    iv = interval or spec.interval
    _require_inside(iv, x)
    ts = np.asarray(ts, dtype=float)
    n = n_terms or config.survival_n_terms
    L = iv.length
    u = x - iv.a
    beta, omega, lam, base, sign = _survival_terms(spec, u, L, n)
    tt = ts[:, None]
    vals = np.sum(base * (np.exp(-beta * u - lam * tt) - sign * np.exp(beta * (L - u) - lam * tt)),
                  axis=1)
    vals = np.clip(vals, 0.0, 1.0)
    return np.where(ts == 0.0, 1.0, vals)


# ---------------------------------------------------------------------------
# Drift-dependent bounds for the centered single-atom case
# ---------------------------------------------------------------------------

def fast_coupling_bound(spec: ProcessSpec, t: float) -> float:
    """Upper bound on the total-variation distance between mirrored starts.

    exp((b-a)/2 * mu/sigma^2) * exp(-mu^2 t / (2 sigma^2)); valid for
    positive drift and a centered single-atom restart.
    """
    _require_centered(spec)
    if not spec.mu > 0.0:
        raise RequiresPositiveDrift("bound needs mu > 0")
    if t < 0.0:
        raise OutOfDomain("time must be nonnegative")
    lam = spec.mu**2 / (2.0 * spec.sigma**2)
    return math.exp(0.5 * spec.length * spec.mu / spec.sigma**2 - lam * t)


def theoretical_gap(spec: ProcessSpec) -> float:
    """Drift-independent plateau value 8 sigma^2 pi^2 / (b-a)^2."""
    _require_centered(spec)
    return 8.0 * spec.sigma**2 * math.pi**2 / spec.length**2


def conjectured_threshold(spec: ProcessSpec) -> float:
    """Conjectured smallest drift at which the plateau is reached: 2 sqrt(3) sigma^2 pi / (b-a)."""
    _require_centered(spec)
    return 2.0 * math.sqrt(3.0) * spec.sigma**2 * math.pi / spec.length


def coupling_tail_bound_rate(spec: ProcessSpec) -> float:
    """Largest certified coupling-time tail rate.

    min(2 sigma^2 pi^2 / L^2 + mu^2 / (2 sigma^2), 8 sigma^2 pi^2 / L^2);
    the branches cross exactly at the conjectured threshold drift.
    """
    _require_centered(spec)
    L = spec.length
    stage3 = 2.0 * spec.sigma**2 * math.pi**2 / L**2 + spec.mu**2 / (2.0 * spec.sigma**2)
    stage2 = 8.0 * spec.sigma**2 * math.pi**2 / L**2
    return min(stage3, stage2)
