"""Independent ground-truth values for testing the samplers and estimators.

Nothing here touches the Monte-Carlo machinery: moments come from the
closed-form solution of the moment ODE hierarchy, the Laplace transform
from the affine closed form, and expectations of general test functions
from quadrature against the transition density.  These are the reference
side of every two-route check in the test suite.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy import integrate, special

from .errors import QuadratureNotConverged
from .model import CirParams
from .sampler import MixtureSplit


def gaussian_abs_moment(p: float) -> float:
    """E|Z|^(2p) for standard normal Z and real p >= 0: 2^p * Gamma(p + 1/2) / sqrt(pi)."""
    if p < 0:
        raise ValueError(f"p must be >= 0, got {p}")
    return 2.0**p * math.gamma(p + 0.5) / math.sqrt(math.pi)


def besq_moment(delta: float, t: float, x: float, p: int) -> float:
    """E[Y^delta_t(x)^p] from the moment recursion m_p' = p*(delta + 2*(p-1))*m_{p-1}.

    Solved exactly: m_p is a polynomial in t with m_p(0) = x^p.
    """
    if p < 0:
        raise ValueError(f"p must be a nonnegative integer, got {p}")
    coeffs = np.array([1.0])  # m_0(t) = 1, as a polynomial in t
    for pp in range(1, p + 1):
        integ = np.polynomial.polynomial.polyint(coeffs)
        coeffs = pp * (delta + 2.0 * (pp - 1)) * integ
        coeffs[0] += x**pp
    return float(np.polynomial.polynomial.polyval(t, coeffs))


def besq_mix_moment(split: MixtureSplit, t: float, x: float, p: int) -> float:
    """Exact p-th moment of the affine two-term combination lambda1*Y[n] + lambda2*Y[n+1].

    Binomial expansion over the two independent integer-dimension draws; this
    is the prediction the mixture audit compares against the true moments.
    """
    total = 0.0
    for m in range(p + 1):
        total += (
            math.comb(p, m)
            * split.lambda1**m
            * split.lambda2 ** (p - m)
            * besq_moment(float(split.n), t, x, m)
            * besq_moment(float(split.n + 1), t, x, p - m)
        )
    return total


@lru_cache(maxsize=256)
def _cir_moment_table(theta: float, kappa: float, sigma: float, p: int):
    """Coefficient matrices of m_p(t,x) = sum_{r,m} M_p[r,m] * exp(-r*theta*t) * x^m.

    Built from the triangular hierarchy m_p' = a_p*m_{p-1} - p*theta*m_p with
    a_p = p*(theta*kappa + sigma^2*(p-1)/2), integrating factor exp(p*theta*t).
    """
    tables = [np.array([[1.0]])]
    for pp in range(1, p + 1):
        prev = tables[-1]
        cur = np.zeros((pp + 1, pp + 1))
        cur[pp, pp] = 1.0  # the exp(-pp*theta*t) * x^pp homogeneous part
        a = pp * (theta * kappa + 0.5 * sigma**2 * (pp - 1))
        for r in range(prev.shape[0]):
            for m in range(prev.shape[1]):
                c = prev[r, m]
                if c == 0.0:
                    continue
                w = a * c / ((pp - r) * theta)
                cur[r, m] += w
                cur[pp, m] -= w
        tables.append(cur)
    return tables


def cir_moment(params: CirParams, t: float, x: float, p: int) -> float:
    """E[X_t(x)^p], exactly, via the closed-form moment hierarchy."""
    return cir_u_poly(np.eye(p + 1)[p], params, t, x)


def cir_u_poly(coeffs, params: CirParams, t: float, x: float,
               j: int = 0, i: int = 0) -> float:
    """d^j/dx^j d^i/dt^i of E[f(X_t(x))] for polynomial f with the given coefficients.

    Exact: differentiates the closed-form exponential-polynomial expression of
    the moments term by term.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    if j < 0 or i < 0:
        raise ValueError(f"derivative orders must be >= 0, got (j={j}, i={i})")
    deg = coeffs.shape[0] - 1
    tables = _cir_moment_table(params.theta, params.kappa, params.sigma, deg)
    total = 0.0
    for p, cp in enumerate(coeffs):
        if cp == 0.0:
            continue
        M = tables[p]
        for r in range(M.shape[0]):
            et = math.exp(-r * params.theta * t) * (-r * params.theta) ** i
            for m in range(j, M.shape[1]):
                c = M[r, m]
                if c == 0.0:
                    continue
                fall = math.perm(m, j)
                total += cp * c * et * fall * x ** (m - j)
    return float(total)


def cir_laplace(params: CirParams, t: float, x: float, lam: float) -> float:
    """E[exp(-lam * X_t(x))] in affine closed form, lam >= 0."""
    if lam < 0:
        raise ValueError(f"lam must be >= 0, got {lam}")
    c = lam * params.sigma**2 * (-math.expm1(-params.theta * t)) / (2.0 * params.theta)
    return (1.0 + c) ** (-params.delta / 2.0) * math.exp(
        -lam * x * math.exp(-params.theta * t) / (1.0 + c)
    )


def cir_laplace_dx(params: CirParams, t: float, x: float, lam: float, j: int = 0) -> float:
    """d^j/dx^j of the Laplace transform: multiply by (-beta)^j, beta the x-rate."""
    c = lam * params.sigma**2 * (-math.expm1(-params.theta * t)) / (2.0 * params.theta)
    beta = lam * math.exp(-params.theta * t) / (1.0 + c)
    return (-beta) ** j * cir_laplace(params, t, x, lam)


def _log_density_factory(params: CirParams, t: float, x: float):
    """Log transition density y -> log p_t(x, y), assembled in log space.

    For x > 0 this is the scaled noncentral-chi-square form with the Bessel
    factor evaluated through the exponentially scaled I_nu; for x = 0 it
    degenerates to a Gamma density.
    """
    theta, sigma, delta = params.theta, params.sigma, params.delta
    c = 2.0 * theta / (sigma**2 * (-math.expm1(-theta * t)))
    q = 0.5 * delta - 1.0
    if x == 0.0:
        log_norm = 0.5 * delta * math.log(c) - math.lgamma(0.5 * delta)

        def logp(y: float) -> float:
            if y <= 0.0:
                return -math.inf
            return log_norm + q * math.log(y) - c * y

        return logp

    u0 = c * x * math.exp(-theta * t)
    log_c, log_u0 = math.log(c), math.log(u0)

    def logp(y: float) -> float:
        if y <= 0.0:
            return -math.inf
        v = c * y
        z = 2.0 * math.sqrt(u0 * v)
        log_bessel = math.log(special.ive(q, z)) + z
        return log_c - u0 - v + 0.5 * q * (math.log(v) - log_u0) + log_bessel

    return logp


def density_u(f, params: CirParams, t: float, x: float,
              rel_tol: float = 1e-10, abs_tol: float = 1e-11) -> float:
    """E[f(X_t(x))] by adaptive quadrature against the transition density.

    Requires t > 0 and f of at most polynomial growth.  The integration
    window is grown until the tail integrand is negligible relative to the
    bulk; raises QuadratureNotConverged if the quadrature cannot certify the
    requested accuracy.
    """
    if t <= 0.0:
        raise ValueError(f"density oracle needs t > 0, got {t}")
    if x < 0.0:
        raise ValueError(f"x must be >= 0, got {x}")
    logp = _log_density_factory(params, t, x)
    mean = cir_moment(params, t, x, 1)
    var = max(cir_moment(params, t, x, 2) - mean**2, 1e-30)
    bulk = abs(float(f(np.asarray(mean)))) + 1.0

    y_max = mean + 12.0 * math.sqrt(var) + 1.0
    for _ in range(200):
        tail = (abs(float(f(np.asarray(y_max)))) + 1.0) * math.exp(logp(y_max))
        if tail < 1e-16 * bulk:
            break
        y_max *= 1.5
    else:
        raise QuadratureNotConverged("could not find a negligible-tail cutoff")

    def integrand(y: float) -> float:
        lp = logp(y)
        if lp == -math.inf:
            return 0.0
        return float(f(np.asarray(y))) * math.exp(lp)

    result, abserr = integrate.quad(
        integrand, 0.0, y_max, limit=500, epsabs=abs_tol, epsrel=rel_tol
    )
    if abserr > max(abs(result) * 1e-8, 1e-9):
        raise QuadratureNotConverged(
            f"estimated quadrature error {abserr:g} too large for result {result:g}"
        )
    return result
