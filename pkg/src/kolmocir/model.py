"""Model parameters, the time-space transform, and the smooth test-function catalog.

The mean-reverting square-root process

    dX = theta*(kappa - X) dt + sigma*sqrt(X) dB,    X_0 = x >= 0,

is handled through its squared-Bessel representation: at clock time t the
marginal of X equals exp(-theta*t) times a squared Bessel process of
dimension delta = 4*theta*kappa/sigma^2 read at the transformed time
phi(t) = sigma^2*(exp(theta*t) - 1)/(4*theta).  Everything downstream
(sampling, derivative estimators, verification) consumes either the "cir"
clock (t, with the scaling folded in) or the "besq" clock (tau = phi(t),
no scaling); APIs state which one they take.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (
    FellerTypeViolation,
    MissingArgs,
    NonPositiveParameter,
    OrderExceedsQ,
    UnknownFunction,
)

# Analytic catalog functions are infinitely differentiable; this cap bounds
# the derivative tower we expose (estimator depth never needs more than q/2).
Q_CAP = 32


@dataclass(frozen=True)
class CirParams:
    """Validated coefficients (theta, kappa, sigma) with derived dimension delta."""

    theta: float
    kappa: float
    sigma: float
    delta: float

    def phi(self, t: float) -> float:
        """Map cir-clock time t to besq-clock time tau."""
        return self.sigma**2 * math.expm1(self.theta * t) / (4.0 * self.theta)

    def scale(self, t: float) -> float:
        """State scale factor exp(-theta*t) at cir-clock time t."""
        return math.exp(-self.theta * t)


def validate_params(theta: float, kappa: float, sigma: float) -> CirParams:
    """Validate (theta, kappa, sigma) and derive delta = 4*theta*kappa/sigma^2.

    Raises NonPositiveParameter for nonpositive or non-finite inputs and
    FellerTypeViolation when sigma^2 > 4*theta*kappa (delta < 1).
    """
    for name, val in (("theta", theta), ("kappa", kappa), ("sigma", sigma)):
        if not math.isfinite(val) or val <= 0.0:
            raise NonPositiveParameter(f"{name} must be finite and > 0, got {val!r}")
    delta = 4.0 * theta * kappa / sigma**2
    if delta < 1.0:
        raise FellerTypeViolation(
            f"sigma^2 <= 4*theta*kappa required: sigma^2={sigma**2:g} > "
            f"4*theta*kappa={4 * theta * kappa:g} (delta={delta:g} < 1)"
        )
    return CirParams(theta=theta, kappa=kappa, sigma=sigma, delta=delta)


def time_transform(params: CirParams, t: float) -> tuple[float, float]:
    """Return (tau, scale) = (phi(t), exp(-theta*t)) for cir-clock time t >= 0."""
    if t < 0.0:
        raise ValueError(f"t must be >= 0, got {t}")
    return params.phi(t), params.scale(t)


@dataclass(frozen=True)
class TimeMap:
    """Bookkeeping for the two clocks over a fixed horizon.

    ``horizon`` is the cir-clock horizon T.  ``t_tilde`` is the cir-clock
    time at which the besq clock reads T, i.e. the unique solution of
    phi(t_tilde) = T; it equals (1/theta)*ln(1 + 4*theta*T/sigma^2).
    """

    params: CirParams
    horizon: float
    t_tilde: float

    def phi(self, t: float) -> float:
        return self.params.phi(t)

    def scale(self, t: float) -> float:
        return self.params.scale(t)


def time_map(params: CirParams, horizon: float) -> TimeMap:
    if horizon < 0.0:
        raise ValueError(f"horizon must be >= 0, got {horizon}")
    t_tilde = math.log1p(4.0 * params.theta * horizon / params.sigma**2) / params.theta
    return TimeMap(params=params, horizon=horizon, t_tilde=t_tilde)


@dataclass(frozen=True)
class SmoothTestFn:
    """A smooth test function with an exact derivative tower and growth constants.

    ``deriv(i, y)`` evaluates the i-th derivative for 0 <= i <= q (vectorized
    over y >= 0).  ``good_set[i] = (C_i, k_i)`` witnesses the polynomial
    growth |f^(i)(y)| <= C_i*(1 + y^k_i).  ``kind``/``args`` identify the
    catalog family for closed-form oracle dispatch ("derived" when no oracle
    applies).
    """

    name: str
    q: int
    good_set: tuple[tuple[float, int], ...]
    _eval: Callable[[int, np.ndarray], np.ndarray] = field(repr=False)
    kind: str = "derived"
    args: tuple[float, ...] = ()

    def __call__(self, y):
        return self.deriv(0, y)

    def deriv(self, i: int, y):
        if i < 0:
            raise ValueError(f"derivative order must be >= 0, got {i}")
        if i > self.q:
            raise OrderExceedsQ(f"{self.name}: order {i} exceeds available q={self.q}")
        return self._eval(i, np.asarray(y, dtype=float))

    def good_at(self, i: int) -> tuple[float, int]:
        if i > self.q:
            raise OrderExceedsQ(f"{self.name}: order {i} exceeds available q={self.q}")
        return self.good_set[i]

    def derivative_fn(self, r: int) -> "SmoothTestFn":
        """The r-th derivative as a test function in its own right."""
        if r == 0:
            return self
        if r > self.q:
            raise OrderExceedsQ(f"{self.name}: order {r} exceeds available q={self.q}")
        parent = self

        def ev(i, y):
            return parent._eval(i + r, y)

        return SmoothTestFn(
            name=f"{self.name}.d{r}",
            q=self.q - r,
            good_set=self.good_set[r:],
            _eval=ev,
        )

    def scale_arg(self, c: float) -> "SmoothTestFn":
        """The function y -> f(c*y), with its derivative tower and good set.

        |d^i/dy^i f(c*y)| = c^i |f^(i)(c*y)| <= c^i C_i (1 + (c*y)^k_i), so the
        good set maps to (C_i * c^i * max(1, c^k_i), k_i); for c <= 1 this only
        shrinks the constants.
        """
        if c <= 0.0 or not math.isfinite(c):
            raise ValueError(f"scale must be finite and > 0, got {c}")
        if c == 1.0:
            return self
        parent = self

        def ev(i, y):
            return c**i * parent._eval(i, c * y)

        good = tuple(
            (C * c**i * max(1.0, c**k), k) for i, (C, k) in enumerate(self.good_set)
        )
        return SmoothTestFn(
            name=f"{self.name}@{c:g}", q=self.q, good_set=good, _eval=ev
        )


@dataclass(frozen=True)
class DerivRequest:
    """A mixed-derivative request: spatial order j, temporal order i."""

    j: int
    i: int = 0

    def __post_init__(self):
        if self.j < 0 or self.i < 0:
            raise ValueError(f"orders must be >= 0, got (j={self.j}, i={self.i})")

    @property
    def smoothness_needed(self) -> int:
        return 2 * self.j + 4 * self.i


def _poly_fn(coeffs: Sequence[float]) -> SmoothTestFn:
    c0 = np.asarray(list(coeffs), dtype=float)
    if c0.ndim != 1 or c0.size == 0:
        raise MissingArgs("poly needs at least one coefficient c0[,c1,...]")
    if not np.all(np.isfinite(c0)):
        raise MissingArgs(f"poly coefficients must be finite, got {list(coeffs)}")
    # Precompute coefficient arrays of every derivative up to the cap.
    towers = [c0]
    for _ in range(Q_CAP):
        towers.append(np.polynomial.polynomial.polyder(towers[-1]))
    deg = int(np.max(np.nonzero(c0)[0])) if np.any(c0 != 0.0) else 0

    def ev(i, y):
        return np.polynomial.polynomial.polyval(y, towers[i])

    good = tuple(
        (float(np.abs(towers[i]).sum()), max(deg - i, 0)) for i in range(Q_CAP + 1)
    )
    name = "poly:" + ",".join(f"{v:g}" for v in c0)
    return SmoothTestFn(name=name, q=Q_CAP, good_set=good, _eval=ev,
                        kind="poly", args=tuple(float(v) for v in c0))


def _exp_neg_fn(lam: float) -> SmoothTestFn:
    if not math.isfinite(lam) or lam <= 0.0:
        raise MissingArgs(f"exp_neg needs lambda > 0, got {lam!r}")

    def ev(i, y):
        return (-lam) ** i * np.exp(-lam * y)

    good = tuple((lam**i, 0) for i in range(Q_CAP + 1))
    return SmoothTestFn(name=f"exp_neg:{lam:g}", q=Q_CAP, good_set=good, _eval=ev,
                        kind="exp_neg", args=(float(lam),))


def _sin_fn(omega: float) -> SmoothTestFn:
    if not math.isfinite(omega) or omega <= 0.0:
        raise MissingArgs(f"sin needs omega > 0, got {omega!r}")

    def ev(i, y):
        return omega**i * np.sin(omega * y + i * math.pi / 2.0)

    good = tuple((omega**i, 0) for i in range(Q_CAP + 1))
    return SmoothTestFn(name=f"sin:{omega:g}", q=Q_CAP, good_set=good, _eval=ev,
                        kind="sin", args=(float(omega),))


def catalog_fn(name: str, args: Sequence[float]) -> SmoothTestFn:
    """Construct a catalog test function.

    Supported: poly (coefficients c0..cd), exp_neg (lambda > 0), sin (omega > 0).
    Non-smooth payoffs are deliberately not in the catalog.
    """
    args = list(args)
    if name == "poly":
        return _poly_fn(args)
    if name == "exp_neg":
        if len(args) != 1:
            raise MissingArgs(f"exp_neg takes exactly one argument, got {args}")
        return _exp_neg_fn(args[0])
    if name == "sin":
        if len(args) != 1:
            raise MissingArgs(f"sin takes exactly one argument, got {args}")
        return _sin_fn(args[0])
    raise UnknownFunction(f"unknown test function {name!r} (try poly, exp_neg, sin)")


def parse_fn_spec(text: str) -> SmoothTestFn:
    """Parse the CLI/config syntax ``poly:c0,c1,...``, ``exp_neg:lam``, ``sin:omega``."""
    name, sep, rest = text.partition(":")
    name = name.strip()
    if not sep or not rest.strip():
        raise MissingArgs(f"function spec {text!r} needs arguments after ':'")
    try:
        args = [float(v) for v in rest.split(",")]
    except ValueError as exc:
        raise MissingArgs(f"malformed numeric arguments in {text!r}") from exc
    return catalog_fn(name, args)
