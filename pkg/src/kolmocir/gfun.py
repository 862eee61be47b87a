"""Calculus of the symmetrized quotient and its iterated-integral derivatives.

For a smooth test function f the symmetrized quotient

    g_i(x; a, b) = [f^(i)((sqrt(x)+a)^2 + b) - f^(i)((sqrt(x)-a)^2 + b)] / sqrt(x)

is the building block of the derivative estimators.  Writing A = a^2 + b,
the quotient has the integral form

    g_i(x; a, b) = 2a * Int_{-1}^{1} f^(i+1)(A + x + 2a*sqrt(x)*s) ds,

which is smooth in x on all of [0, inf) (at x = 0 it equals
4a*f^(i+1)(A)), so everything here evaluates through it rather than
through the raw quotient, whose numerator cancels catastrophically as
x -> 0.

x-derivatives of g_0 are combinations of the weighted iterated integrals

    F[p,q](x,a,b) = Int_{-1}^{1} s1 Int_0^{s1} s2 ... Int_0^{sp}
                        f^(q)(A + x + 2a*sqrt(x)*s_{p+1}) ds_{p+1} ... ds1.

Because the integrand depends on the innermost variable only, the outer
p levels integrate out exactly: with K_p(s) = (1-s^2)^p / (2^p * p!) one
has K_{p+1}'(s) = -s*K_p(s) and K_{p+1}(+-1) = 0, whence by repeated
order-of-integration swaps

    F[p,q](x,a,b) = Int_{-1}^{1} K_p(s) * f^(q)(A + x + 2a*sqrt(x)*s) ds.

This single-integral form is what ``F_pq`` evaluates (Gauss-Legendre,
order 64 by default, exact for the polynomial catalog); the literal
nested quadrature is kept in ``F_pq_nested`` as a cross-check.  The same
identity yields d/dx F[p,q] = F[p,q+1] + 2a^2*F[p+1,q+2] exactly, which
generates the derivative expansion

    d^l/dx^l g_0(x; a, b) = a * sum_{j=0..l} c[j,l] * a^(2j) * F[j, l+j+1]

with integer coefficients obeying c[0,0] = 2 and
c[j,l+1] = c[j,l] + 2*c[j-1,l].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import NestingTooDeep, OrderExceedsQ
from .model import SmoothTestFn

DEFAULT_ORDER = 64
NESTING_CAP = 4


@dataclass(frozen=True)
class GFunArgs:
    """Argument triple (x, a, b) with x >= 0, b >= 0; a and b may be arrays."""

    x: float
    a: np.ndarray
    b: np.ndarray

    @property
    def A(self) -> np.ndarray:
        return self.a**2 + self.b

    def __post_init__(self):
        if not (math.isfinite(self.x) and self.x >= 0.0):
            raise ValueError(f"x must be finite and >= 0, got {self.x}")
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValueError("a and b must be finite")
        if np.any(b < 0.0):
            raise ValueError("b must be >= 0")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)


def gfun_args(x: float, a, b) -> GFunArgs:
    return GFunArgs(x=float(x), a=a, b=b)


@lru_cache(maxsize=16)
def _nodes(order: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(order)


def _kernel(p: int, s: np.ndarray) -> np.ndarray:
    return (1.0 - s**2) ** p / (2.0**p * math.factorial(p))


def kernel_mass(p: int) -> float:
    """Int_{-1}^1 K_p(s) ds = 2^(p+1) * p! / (2p+1)!."""
    return 2.0 ** (p + 1) * math.factorial(p) / math.factorial(2 * p + 1)


@lru_cache(maxsize=64)
def coeffs(l: int) -> tuple[int, ...]:
    """Integer coefficient row (c[0,l], ..., c[l,l]) of the l-th derivative expansion."""
    if l < 0:
        raise ValueError(f"l must be >= 0, got {l}")
    row = (2,)
    for _ in range(l):
        prev = (0,) + row + (0,)
        row = tuple(prev[j + 1] + 2 * prev[j] for j in range(len(row) + 1))
    return row


def _check_orders(f: SmoothTestFn, p: int, q_ord: int) -> None:
    if p < 0:
        raise ValueError(f"p must be >= 0, got {p}")
    if p > NESTING_CAP:
        raise NestingTooDeep(f"nesting level {p} above cap {NESTING_CAP}")
    if q_ord > f.q:
        raise OrderExceedsQ(f"{f.name}: order {q_ord} exceeds available q={f.q}")


def F_pq(f: SmoothTestFn, p: int, q_ord: int, args: GFunArgs,
         order: int = DEFAULT_ORDER):
    """The weighted iterated integral F[p,q], via the collapsed kernel form."""
    _check_orders(f, p, q_ord)
    s, w = _nodes(order)
    kw = w * _kernel(p, s)
    x, a, A = args.x, args.a, args.A
    two_a_rx = 2.0 * a * math.sqrt(x)
    base = A + x
    acc = kw[0] * f.deriv(q_ord, base + two_a_rx * s[0])
    for k in range(1, order):
        acc = acc + kw[k] * f.deriv(q_ord, base + two_a_rx * s[k])
    return acc


def F_pq_nested(f: SmoothTestFn, p: int, q_ord: int, args: GFunArgs,
                order: int = 16):
    """Reference evaluation of F[p,q] by literal nested quadrature.

    Cost grows as order^(p+1); meant for cross-checking F_pq at moderate
    orders, not for production use.
    """
    _check_orders(f, p, q_ord)
    s, w = _nodes(order)
    x, A = args.x, args.A
    two_a_rx = 2.0 * args.a * math.sqrt(x)

    def inner(level: int, upper: float):
        # Levels 1..p carry weight s_i ds_i; level p+1 integrates plainly.
        if level == p + 1:
            lo, hi = 0.0, upper
            nodes = 0.5 * (hi - lo) * (s + 1.0) + lo
            scale = 0.5 * (hi - lo)
            total = 0.0
            for k in range(order):
                total = total + w[k] * scale * f.deriv(q_ord, A + x + two_a_rx * nodes[k])
            return total
        if level == 1:
            nodes, scale = s, 1.0
        else:
            nodes = 0.5 * upper * (s + 1.0)
            scale = 0.5 * upper
        total = 0.0
        for k in range(order):
            total = total + w[k] * scale * nodes[k] * inner(level + 1, nodes[k])
        return total

    if p == 0:
        return _plain_interval(f, q_ord, args, order)
    return inner(1, 1.0)


def _plain_interval(f: SmoothTestFn, q_ord: int, args: GFunArgs, order: int):
    s, w = _nodes(order)
    two_a_rx = 2.0 * args.a * math.sqrt(args.x)
    base = args.A + args.x
    total = 0.0
    for k in range(order):
        total = total + w[k] * f.deriv(q_ord, base + two_a_rx * s[k])
    return total


def g_eval(f: SmoothTestFn, i: int, args: GFunArgs, order: int = DEFAULT_ORDER):
    """g_i(x; a, b) through the integral form; valid on all of x >= 0."""
    if i + 1 > f.q:
        raise OrderExceedsQ(f"{f.name}: g_{i} needs order {i + 1} > q={f.q}")
    return 2.0 * args.a * F_pq(f, 0, i + 1, args, order=order)


def g_deriv(f: SmoothTestFn, l: int, args: GFunArgs, order: int = DEFAULT_ORDER):
    """The l-th x-derivative of g_0(x; a, b); needs 2l+1 <= q."""
    if 2 * l + 1 > f.q:
        raise OrderExceedsQ(f"{f.name}: g_deriv({l}) needs order {2 * l + 1} > q={f.q}")
    row = coeffs(l)
    s, w = _nodes(order)
    x, a, A = args.x, args.a, args.A
    two_a_rx = 2.0 * a * math.sqrt(x)
    base = A + x
    a2 = a**2
    kernels = [w * _kernel(j, s) for j in range(l + 1)]
    acc = 0.0
    for k in range(order):
        arg = base + two_a_rx * s[k]
        apow = 1.0
        term = 0.0
        for j in range(l + 1):
            term = term + row[j] * kernels[j][k] * apow * f.deriv(l + j + 1, arg)
            apow = apow * a2
        acc = acc + term
    return a * acc


def g_deriv_limit_at_zero(f: SmoothTestFn, l: int, a, b):
    """Closed-form limit of g_deriv as x -> 0: the kernel masses integrate out."""
    if 2 * l + 1 > f.q:
        raise OrderExceedsQ(f"{f.name}: g_deriv({l}) needs order {2 * l + 1} > q={f.q}")
    a = np.asarray(a, dtype=float)
    A = a**2 + np.asarray(b, dtype=float)
    row = coeffs(l)
    acc = 0.0
    apow = 1.0
    for j in range(l + 1):
        acc = acc + row[j] * kernel_mass(j) * apow * f.deriv(l + j + 1, A)
        apow = apow * a**2
    return a * acc


def growth_constants(f: SmoothTestFn, l: int) -> tuple[float, int]:
    """Constants (C, k) such that |g_deriv(f, l)| <= C*|a|*(1 + x^k + A^k).

    Computed from the good-set entries of orders 1..2l+1 only: k absorbs the
    extra a^(2j) <= A^j powers of the expansion (k = l + max k_i), and C is
    the larger of the blanket constant 4*2^(3k)*sum(C_i) and the per-term
    chain bound 9*sum_j c[j,l]*kernel_mass(j)*C_{l+j+1}*4^(k_{l+j+1}).
    """
    if 2 * l + 1 > f.q:
        raise OrderExceedsQ(f"{f.name}: growth bound for l={l} needs q >= {2 * l + 1}")
    entries = [f.good_at(i) for i in range(1, 2 * l + 2)]
    k = l + max(ki for _, ki in entries)
    c_sum = sum(Ci for Ci, _ in entries)
    blanket = 4.0 * 2.0 ** (3 * k) * c_sum
    row = coeffs(l)
    chain = 9.0 * sum(
        row[j] * kernel_mass(j) * f.good_at(l + j + 1)[0]
        * 4.0 ** f.good_at(l + j + 1)[1]
        for j in range(l + 1)
    )
    return max(blanket, chain), k


def g_growth_bound(f: SmoothTestFn, l: int, args: GFunArgs):
    """Value of the growth envelope C*|a|*(1 + x^k + A^k) at the given arguments."""
    C, k = growth_constants(f, l)
    return C * np.abs(args.a) * (1.0 + args.x**k + args.A**k)
