"""Exact fixed-time marginal sampling of squared Bessel and CIR processes.

Every draw is produced in the decomposed form

    value = (sqrt(x) + a)^2 + b,        a = xi * sqrt(t),   b >= 0,

which is what the symmetrized derivative estimators consume: ``xi`` is the
driving (standard-normal-like) variate and ``b`` collects the rest of the
dimension, independent of ``xi``.  Three interchangeable representations of
the remainder are provided:

* ``gamma_additivity`` (default): b ~ Gamma((delta-1)/2, scale 2t).  By the
  additivity of squared Bessel laws, a dimension-delta draw splits into a
  one-dimensional square plus an independent dimension-(delta-1) draw
  started at 0, whose law is exactly that Gamma.  Valid for all real
  delta >= 1.
* ``explicit_squares`` (integer dimension only): b is the literal sum of
  n-1 independent squared Normal(0, t) draws.
* ``affine_mix`` (non-integer delta): the affine two-term combination
  lambda1 * Y~[n] + lambda2 * Y^[n+1] of independent integer-dimension
  draws, algebraically rearranged into the same (sqrt(x)+a)^2 + b shape
  with a = (lambda1*xi~ + lambda2*xi^)*sqrt(t) and
  b = lambda1*lambda2*(xi~ - xi^)^2*t + lambda1*b~ + lambda2*b^.
  Retained for auditing: its mean matches the exact law but its higher
  moments do not (see verify.mixture_audit).

Stream layout (part of the reproducibility contract): on each substream the
driving normals are drawn first, then remainder variates, in the order
documented on each function.  All estimates are pure functions of
(seed, shards, method, inputs).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AffineMixOnInteger, DimensionTooSmall
from .model import CirParams
from .streams import RngStream

#: canonical method names and their CLI aliases
METHOD_ALIASES = {
    "gamma": "gamma_additivity",
    "gamma_additivity": "gamma_additivity",
    "mix": "affine_mix",
    "affine_mix": "affine_mix",
    "squares": "explicit_squares",
    "explicit_squares": "explicit_squares",
}


def normalize_method(method: str) -> str:
    try:
        return METHOD_ALIASES[method]
    except KeyError:
        raise ValueError(
            f"unknown sampling method {method!r}; choose from "
            f"{sorted(set(METHOD_ALIASES.values()))} (aliases: gamma, mix, squares)"
        ) from None


@dataclass(frozen=True)
class MixtureSplit:
    """Weights of the affine two-term combination around a non-integer dimension."""

    delta: float
    n: int
    lambda1: float
    lambda2: float


def mixture_split(delta: float) -> MixtureSplit:
    if delta < 1.0:
        raise DimensionTooSmall(f"delta must be >= 1, got {delta}")
    n = math.floor(delta)
    if delta == n:
        raise AffineMixOnInteger(
            f"delta={delta:g} is an integer; the affine mixture is only defined "
            f"for n < delta < n+1"
        )
    return MixtureSplit(delta=delta, n=n, lambda1=n + 1.0 - delta, lambda2=delta - n)


@dataclass(frozen=True)
class DecomposedSample:
    """A batch of draws in the canonical form value = (sqrt(x)+a)^2 + b.

    ``xi`` and ``beta`` are the time-free standardized variates
    (a = xi*sqrt(tau), b = beta*tau), kept so the same randomness can be
    re-materialized at a different (tau, x) for common-random-number work.
    """

    xi: np.ndarray
    beta: np.ndarray
    tau: float
    x: float
    a: np.ndarray
    b: np.ndarray
    value: np.ndarray

    def rebase(self, tau: float, x: float) -> "DecomposedSample":
        """Same standardized draws, materialized at another (tau, x)."""
        return _materialize(self.xi, self.beta, tau, x)

    def antithetic(self) -> "DecomposedSample":
        """The sign-flipped twin (xi -> -xi, same remainder); equal in law."""
        return _materialize(-self.xi, self.beta, self.tau, self.x)

    def __len__(self) -> int:
        return self.xi.shape[0]


def _materialize(xi: np.ndarray, beta: np.ndarray, tau: float, x: float) -> DecomposedSample:
    if tau < 0.0:
        raise ValueError(f"time must be >= 0, got {tau}")
    if x < 0.0:
        raise ValueError(f"state must be >= 0, got {x}")
    if tau == 0.0:
        # Degenerate time: the draw is exactly the starting point.
        zero = np.zeros_like(xi)
        return DecomposedSample(
            xi=xi, beta=beta, tau=0.0, x=x, a=zero, b=zero,
            value=np.full_like(xi, x),
        )
    rt = math.sqrt(tau)
    a = xi * rt
    b = beta * tau
    value = (math.sqrt(x) + a) ** 2 + b
    return DecomposedSample(xi=xi, beta=beta, tau=tau, x=x, a=a, b=b, value=value)


def _remainder_beta(gen: np.random.Generator, dim: float, size: int,
                    explicit_squares: bool) -> np.ndarray:
    """Standardized remainder beta = b/t for the dimension-(dim) part started at 0.

    Gamma route: b ~ Gamma((dim-1)/2, scale 2t), i.e. beta = 2*Gamma((dim-1)/2, 1).
    Explicit squares (integer dim): beta = sum of dim-1 squared standard normals.
    Shape 0 is a point mass at 0 and consumes no draws.
    """
    shape = 0.5 * (dim - 1.0)
    if shape <= 0.0:
        return np.zeros(size)
    if explicit_squares:
        n = int(round(dim))
        if n != dim:
            raise ValueError(f"explicit squares need an integer dimension, got {dim}")
        eta = gen.standard_normal((size, n - 1))
        return np.einsum("ij,ij->i", eta, eta)
    return 2.0 * gen.standard_gamma(shape, size=size)


def sample_besq_int(n: int, t: float, x: float, stream: RngStream, size: int,
                    explicit_squares: bool = False) -> DecomposedSample:
    """Integer-dimension squared Bessel marginal Y^n_t(x), decomposed.

    a = xi*sqrt(t) with xi standard normal; b is the remainder of dimension
    n-1 started at zero (identically 0 when n = 1).  Draw order: xi, then
    remainder variates.
    """
    if n < 1:
        raise DimensionTooSmall(f"integer dimension must be >= 1, got {n}")
    gen = stream.generator()
    xi = gen.standard_normal(size)
    beta = _remainder_beta(gen, float(n), size, explicit_squares)
    return _materialize(xi, beta, t, x)


def sample_besq(delta: float, t: float, x: float, stream: RngStream, size: int,
                method: str = "gamma_additivity") -> DecomposedSample:
    """Squared Bessel marginal Y^delta_t(x) for real delta >= 1, decomposed.

    ``gamma_additivity`` is exact for every delta >= 1.  ``explicit_squares``
    requires integer delta.  ``affine_mix`` requires non-integer delta and
    reproduces the two-term affine combination exactly in decomposed form
    (draw order: xi~, xi^, remainder of dimension n, remainder of dimension
    n+1); for integer delta it falls back to the integer sampler.
    """
    method = normalize_method(method)
    if delta < 1.0:
        raise DimensionTooSmall(f"delta must be >= 1, got {delta}")
    if method == "explicit_squares":
        n = int(round(delta))
        if n != delta:
            raise AffineMixOnInteger(
                f"explicit squares need integer delta, got {delta}"
            )
        return sample_besq_int(n, t, x, stream, size, explicit_squares=True)
    if method == "affine_mix":
        if delta == math.floor(delta):
            return sample_besq_int(int(delta), t, x, stream, size)
        split = mixture_split(delta)
        gen = stream.generator()
        xi_lo = gen.standard_normal(size)
        xi_hi = gen.standard_normal(size)
        beta_lo = _remainder_beta(gen, float(split.n), size, False)
        beta_hi = _remainder_beta(gen, float(split.n + 1), size, False)
        l1, l2 = split.lambda1, split.lambda2
        xi = l1 * xi_lo + l2 * xi_hi
        beta = l1 * l2 * (xi_lo - xi_hi) ** 2 + l1 * beta_lo + l2 * beta_hi
        return _materialize(xi, beta, t, x)
    # gamma_additivity
    gen = stream.generator()
    xi = gen.standard_normal(size)
    beta = _remainder_beta(gen, delta, size, False)
    return _materialize(xi, beta, t, x)


def sample_cir(params: CirParams, t: float, x: float, stream: RngStream, size: int,
               method: str = "gamma_additivity"
               ) -> tuple[np.ndarray, DecomposedSample, float]:
    """CIR marginal X_t(x) via the scaled squared-Bessel representation.

    Returns (values, decomposed draw in besq time, scale): values equal
    scale * decomposed.value with scale = exp(-theta*t) and the draw taken
    at tau = phi(t), so estimators can fold the scaling into the test
    function instead of the sample.
    """
    tau = params.phi(t)
    scale = params.scale(t)
    ds = sample_besq(params.delta, tau, x, stream, size, method=method)
    return scale * ds.value, ds, scale
