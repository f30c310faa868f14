"""Exact and quadrature numerics for the continuous-time simple random walk.

All quantities refer to the nearest-neighbour walk on Z^d whose generator is
the graph Laplacian (each of the 2d directed edges fires at rate 1, so the
total jump rate is 2d and each coordinate performs an independent rate-2
continuous-time walk, jumping +-1 at rate 1 each).

Transition kernels are evaluated by uniformization: a Poisson(2t) mixture of
discrete-step one-dimensional walk masses, truncated with an explicit tail
bound.  Improper time integrals are split at ``max_time_cut`` and the tail is
integrated against the local-CLT asymptotic (4 pi s)^(-d/2) with correction
terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import gammaln


@dataclass(frozen=True)
class QuadratureSpec:
    """Error budget for kernel sums and time integrals.

    abs_tol bounds truncation error of uniformization / wrapping sums,
    rel_tol the relative quadrature error of improper integrals.  The
    asymptotic tail handling only activates beyond max_time_cut.
    """

    abs_tol: float = 1e-10
    rel_tol: float = 1e-8
    max_time_cut: float = 1e3

    def __post_init__(self) -> None:
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_time_cut <= 0:
            raise ValueError("max_time_cut must be positive")


DEFAULT_SPEC = QuadratureSpec()


class DivergentIntegralError(ValueError):
    """Raised when an integral diverges for the requested dimension."""


def _check_time(t: float) -> None:
    if t < 0 or math.isnan(t):
        raise ValueError(f"time must be nonnegative, got {t}")


def p1_kernel(k: int, t: float, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """One-coordinate kernel P(rate-1-per-direction walk is at k at time t).

    Equals e^{-2t} I_|k|(2t), computed as a Poisson(2t)-weighted sum of
    n-step symmetric walk masses truncated so the neglected Poisson mass
    is below spec.abs_tol.
    """
    _check_time(t)
    k = abs(int(k))
    if t == 0.0:
        return 1.0 if k == 0 else 0.0
    lam = 2.0 * t
    # Poisson mass outside [lo, hi] is far below abs_tol at 12 sigma + slack.
    half_width = 12.0 * math.sqrt(lam) + 30.0 - math.log10(spec.abs_tol)
    lo = max(k, int(lam - half_width))
    hi = int(lam + half_width) + 1
    n = np.arange(lo, hi + 1)
    n = n[(n - k) % 2 == 0]
    if n.size == 0:
        return 0.0
    m1 = (n + k) // 2
    m2 = (n - k) // 2
    # log of e^{-lam} lam^n/n! * C(n, m1)/2^n collapses to the two factorials
    log_terms = -lam + n * math.log(lam / 2.0) - gammaln(m1 + 1) - gammaln(m2 + 1)
    val = float(np.exp(log_terms).sum())
    return min(max(val, 0.0), 1.0)


def p_kernel(x, t: float, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """d-dimensional kernel p_t(O, x) as a product over coordinates."""
    _check_time(t)
    out = 1.0
    for k in x:
        out *= p1_kernel(k, t, spec)
        if out == 0.0:
            break
    return out


def p1_torus(k: int, t: float, L: int, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """Wrapped one-coordinate kernel on Z_L: sum_m p1(k + m L, t)."""
    _check_time(t)
    if L < 3:
        raise ValueError(f"torus side must be >= 3, got {L}")
    k = int(k) % L
    # displacement beyond the uniformization truncation carries no mass
    reach = int(2.0 * t + 12.0 * math.sqrt(2.0 * t) + 40.0)
    m_max = reach // L + 1
    total = 0.0
    for m in range(-m_max, m_max + 1):
        total += p1_kernel(k + m * L, t, spec)
    return min(total, 1.0)


def p_torus_kernel(x, t: float, L: int, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """Torus transition probability as a product of wrapped 1-d kernels."""
    out = 1.0
    for k in x:
        out *= p1_torus(k, t, L, spec)
    return out


def _return_asym(s: float, d: int) -> float:
    """Local-CLT asymptotic for p_s(O, O) with two correction orders."""
    return (4.0 * math.pi * s) ** (-d / 2.0) * (
        1.0 + d / (16.0 * s) + d * (d + 8.0) / (512.0 * s * s)
    )


def _p1_zero(s: float, spec: QuadratureSpec) -> float:
    return p1_kernel(0, s, spec)


def green0(d: int, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """Green's function at the origin, integral of p_s(O,O) over all time.

    Diverges for d <= 2 (recurrent walk).
    """
    if d <= 2:
        raise DivergentIntegralError(f"green0 diverges for d={d} (recurrent walk)")
    cut = spec.max_time_cut
    head, _ = quad(
        lambda s: _p1_zero(s, spec) ** d,
        0.0,
        cut,
        epsabs=spec.abs_tol,
        epsrel=spec.rel_tol,
        limit=400,
    )
    c = (4.0 * math.pi) ** (-d / 2.0)
    a = d / 2.0
    tail = c * (
        cut ** (1.0 - a) / (a - 1.0)
        + (d / 16.0) * cut ** (-a) / a
        + (d * (d + 8.0) / 512.0) * cut ** (-a - 1.0) / (a + 1.0)
    )
    return head + tail


def green1(d: int, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """Integral of s * p_s(O,O) ds; finite only for d >= 5."""
    if d <= 4:
        raise DivergentIntegralError(
            f"integral of s*p_s(O,O) diverges for d={d}; finite only for d >= 5"
        )
    cut = spec.max_time_cut
    head, _ = quad(
        lambda s: s * _p1_zero(s, spec) ** d,
        0.0,
        cut,
        epsabs=spec.abs_tol,
        epsrel=spec.rel_tol,
        limit=400,
    )
    c = (4.0 * math.pi) ** (-d / 2.0)
    a = d / 2.0
    tail = c * (
        cut ** (2.0 - a) / (a - 2.0)
        + (d / 16.0) * cut ** (1.0 - a) / (a - 1.0)
        + (d * (d + 8.0) / 512.0) * cut ** (-a) / a
    )
    return head + tail


def gamma_d(d: int, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """Escape probability: walk started next to the origin never hits it."""
    g = green0(d, spec)
    return 1.0 / (2.0 * d * g)


def c_const(d: int, p: float) -> float:
    """Scale constant of the limiting Gaussian process at density p."""
    if d < 2:
        raise ValueError(f"c_const requires d >= 2, got {d}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"density must lie in [0, 1], got {p}")
    pq = p * (1.0 - p)
    if pq == 0.0:
        return 0.0
    if d == 2:
        return math.sqrt(2.0 * pq)
    if d == 3:
        return math.sqrt(4.0 * pq * gamma_d(3) / math.pi**1.5)
    if d == 4:
        return math.sqrt(gamma_d(4) * pq / math.pi**2)
    return math.sqrt(4.0 * d * pq * gamma_d(d) * green1(d))


def h_scale(d: int, t: float) -> float:
    """Dimension-dependent normalization of the centered occupation time."""
    if d < 2:
        raise ValueError(f"h_scale requires d >= 2, got {d}")
    if d in (2, 4) and t <= 1.0:
        raise ValueError(f"h_scale undefined for d={d} at t <= 1 (log factor)")
    if t <= 0.0:
        raise ValueError(f"h_scale requires t > 0, got {t}")
    if d == 2:
        return t / math.sqrt(math.log(t))
    if d == 3:
        return t**0.75
    if d == 4:
        return math.sqrt(t * math.log(t))
    return math.sqrt(t)


def v_potential(t: float, x, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """Occupation potential v(t, x): integral of p_s(O, x) over [0, t].

    t may be math.inf for d >= 3 (the full Green's function at x).
    """
    d = len(x)
    if t == 0.0:
        return 0.0
    if math.isinf(t):
        if d <= 2:
            raise DivergentIntegralError(f"v(inf, x) diverges for d={d}")
        x2 = float(sum(k * k for k in x))
        cut = spec.max_time_cut
        head, _ = quad(
            lambda s: p_kernel(x, s, spec),
            0.0,
            cut,
            epsabs=spec.abs_tol,
            epsrel=spec.rel_tol,
            limit=400,
        )
        tail, _ = quad(
            lambda s: _return_asym(s, d) * math.exp(-x2 / (4.0 * s)),
            cut,
            np.inf,
            epsabs=spec.abs_tol,
            epsrel=spec.rel_tol,
            limit=400,
        )
        return head + tail
    _check_time(t)
    if t <= spec.max_time_cut:
        val, _ = quad(
            lambda s: p_kernel(x, s, spec),
            0.0,
            t,
            epsabs=spec.abs_tol,
            epsrel=spec.rel_tol,
            limit=400,
        )
        return val
    head, _ = quad(
        lambda s: p_kernel(x, s, spec),
        0.0,
        spec.max_time_cut,
        epsabs=spec.abs_tol,
        epsrel=spec.rel_tol,
        limit=400,
    )
    x2 = float(sum(k * k for k in x))
    tail, _ = quad(
        lambda s: _return_asym(s, d) * math.exp(-x2 / (4.0 * s)),
        spec.max_time_cut,
        t,
        epsabs=spec.abs_tol,
        epsrel=spec.rel_tol,
        limit=400,
    )
    return head + tail


def phi_resolvent(N: float, x, d: int | None = None, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """Killed-walk potential: integral of e^{-s/N} p_s(O, x) over all time."""
    if N < 1:
        raise ValueError(f"resolvent scale must be >= 1, got {N}")
    if d is None:
        d = len(x)
    if len(x) != d:
        raise ValueError("displacement length does not match dimension")
    if d <= 2:
        raise DivergentIntegralError(f"phi_N requires d >= 3, got {d}")
    cut = spec.max_time_cut
    head, _ = quad(
        lambda s: math.exp(-s / N) * p_kernel(x, s, spec),
        0.0,
        cut,
        epsabs=spec.abs_tol,
        epsrel=spec.rel_tol,
        limit=400,
    )
    x2 = float(sum(k * k for k in x))
    tail, _ = quad(
        lambda s: math.exp(-s / N) * _return_asym(s, d) * math.exp(-x2 / (4.0 * s)),
        cut,
        np.inf,
        epsabs=spec.abs_tol,
        epsrel=spec.rel_tol,
        limit=400,
    )
    return head + tail


def sum_phi_sq(N: float, d: int, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """Lattice sum of phi_N^2 via the identity with integral of s e^{-s/N} p_s(O,O)."""
    if N < 1:
        raise ValueError(f"resolvent scale must be >= 1, got {N}")
    if d <= 2:
        raise DivergentIntegralError(f"sum_phi_sq requires d >= 3, got {d}")
    cut = spec.max_time_cut
    head, _ = quad(
        lambda s: s * math.exp(-s / N) * _p1_zero(s, spec) ** d,
        0.0,
        cut,
        epsabs=spec.abs_tol,
        epsrel=spec.rel_tol,
        limit=400,
    )
    tail, _ = quad(
        lambda s: s * math.exp(-s / N) * _return_asym(s, d),
        cut,
        np.inf,
        epsabs=spec.abs_tol,
        epsrel=spec.rel_tol,
        limit=400,
    )
    return head + tail


def laplacian_residual_v(t: float, x, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """Residual of the graph-Laplacian identity for v at (t, x).

    sum_{y~x} v(t,y) - 2d v(t,x) should equal p_t(O,x) - 1_{x=O}.
    """
    d = len(x)
    lap = -2.0 * d * v_potential(t, x, spec)
    for j in range(d):
        for sgn in (1, -1):
            y = list(x)
            y[j] += sgn
            lap += v_potential(t, tuple(y), spec)
    rhs = p_kernel(x, t, spec) - (1.0 if all(k == 0 for k in x) else 0.0)
    return lap - rhs


def resolvent_residual_phi(N: float, x, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """Residual of the resolvent identity for phi_N at x.

    sum_{y~x} phi(y) - 2d phi(x) should equal phi(x)/N - 1_{x=O}.
    """
    d = len(x)
    phi_x = phi_resolvent(N, x, d, spec)
    lap = -2.0 * d * phi_x
    for j in range(d):
        for sgn in (1, -1):
            y = list(x)
            y[j] += sgn
            lap += phi_resolvent(N, tuple(y), d, spec)
    rhs = phi_x / N - (1.0 if all(k == 0 for k in x) else 0.0)
    return lap - rhs
