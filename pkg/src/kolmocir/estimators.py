"""Monte-Carlo estimators for u(t,x) = E f(X_t(x)) and its derivatives.

Spatial derivatives use the symmetrized decomposition of each draw
value = (sqrt(x)+a)^2 + b: because the law is invariant under a -> -a, the
x-derivative of the expectation splits into a plain term plus a
symmetrized-quotient remainder,

    D(m, f) = D(m-1, f') + (sqrt(tau)/2) * mean[ xi * g_deriv(f', m-1) ],

which unrolls to

    D(j, f) = mean[ f^(j)(Y) ]
            + (sqrt(tau)/2) * sum_{r=1..j} mean[ xi * g_deriv(f^(r), j-r) ].

All remainder factors evaluate through the integral form of the quotient,
so every estimator is finite at x = 0.  Time and mixed derivatives reduce
to spatial ones through the generator identity

    d^l_x d^i_t u = gamma*x * d^{l+2}_x d^{i-1}_t u
                  + (l*gamma + alpha + beta*x) * d^{l+1}_x d^{i-1}_t u
                  + l*beta * d^l_x d^{i-1}_t u,

with (alpha, beta, gamma) = (theta*kappa, -theta, sigma^2/2) on the cir
clock and (delta, 0, 2) on the besq clock.

Clocks: with ``clock="cir"`` the inputs (t, x) are CIR time and state; the
draw is taken at tau = phi(t) and the scale exp(-theta*t) is folded into
the test function.  With ``clock="besq"`` the inputs are squared-Bessel
time and state directly and no scaling is applied.

Per-path values of the *full* recursive expression are accumulated, so the
reported standard error is that of the actual estimator; shard partial
sums are merged with exactly rounded summation in fixed shard order, making
every estimate a deterministic function of (config, inputs).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientSmoothness, StepTooLarge
from .gfun import DEFAULT_ORDER, g_deriv, gfun_args, growth_constants
from .model import CirParams, DerivRequest, SmoothTestFn
from .oracle import besq_moment, gaussian_abs_moment
from .sampler import DecomposedSample, normalize_method, sample_besq
from .streams import CHANNEL_MAIN, RngStream, shard_sizes


@dataclass(frozen=True)
class McEstimate:
    """Result of one Monte-Carlo estimate."""

    mean: float
    stderr: float
    paths: int
    seed: int
    shards: int


@dataclass(frozen=True)
class EstimatorConfig:
    """Sampling and reduction knobs shared by all estimators.

    ``strict_order_check`` additionally requires 2j+1 <= q for spatial
    derivatives (the conservative smoothness reading); the default budget
    is 2j + 4i <= q.
    """

    method: str = "gamma_additivity"
    paths: int = 200_000
    seed: int = 0
    shards: int = 1
    clock: str = "cir"
    paired: bool = False
    strict_order_check: bool = False
    quad_order: int = DEFAULT_ORDER

    def __post_init__(self):
        if self.paths < 2:
            raise ValueError(f"paths must be >= 2, got {self.paths}")
        if self.shards < 1:
            raise ValueError(f"shards must be >= 1, got {self.shards}")
        if self.clock not in ("cir", "besq"):
            raise ValueError(f"clock must be 'cir' or 'besq', got {self.clock!r}")
        object.__setattr__(self, "method", normalize_method(self.method))


def _clock_setup(f: SmoothTestFn, params: CirParams, t: float,
                 cfg: EstimatorConfig) -> tuple[SmoothTestFn, float]:
    """Effective test function and besq-clock time for the configured clock."""
    if t < 0.0:
        raise ValueError(f"t must be >= 0, got {t}")
    if cfg.clock == "besq":
        return f, t
    return f.scale_arg(params.scale(t)), params.phi(t)


def _check_budget(f: SmoothTestFn, j: int, i: int, cfg: EstimatorConfig) -> None:
    need = 2 * j + 4 * i
    if cfg.strict_order_check and j >= 1:
        need += 1
    if need > f.q:
        raise InsufficientSmoothness(
            f"derivative (j={j}, i={i}) needs smoothness {need} > q={f.q} of {f.name}"
        )


def _reduce(cfg: EstimatorConfig, shard_stats: list[tuple[int, float, float]]) -> McEstimate:
    n = sum(c for c, _, _ in shard_stats)
    total = math.fsum(s for _, s, _ in shard_stats)
    total_sq = math.fsum(q for _, _, q in shard_stats)
    mean = total / n
    var = max(total_sq - n * mean * mean, 0.0) / (n - 1)
    return McEstimate(
        mean=mean, stderr=math.sqrt(var / n), paths=n, seed=cfg.seed, shards=cfg.shards
    )


def _mc_run(cfg: EstimatorConfig, value_fn) -> McEstimate:
    """Run value_fn(sample) per shard and reduce deterministically.

    value_fn receives the decomposed draw batch of one shard and returns the
    per-path value array; with ``paired`` the antithetic average
    (value(xi) + value(-xi)) / 2 is accumulated instead.
    """
    stats = []
    for shard, size in enumerate(shard_sizes(cfg.paths, cfg.shards)):
        stream = RngStream(cfg.seed, shard, CHANNEL_MAIN)
        sample = value_fn.draw(stream, size)
        v = value_fn(sample)
        if cfg.paired:
            v = 0.5 * (v + value_fn(sample.antithetic()))
        v = np.asarray(v, dtype=float)
        stats.append((size, float(np.sum(v)), float(np.dot(v, v))))
    return _reduce(cfg, stats)


class _DxValueFn:
    """Per-path values of the spatial-derivative estimator D(j, f) at (tau, x)."""

    def __init__(self, f: SmoothTestFn, j: int, tau: float, x: float,
                 delta: float, method: str, order: int):
        self.f, self.j, self.tau, self.x = f, j, tau, x
        self.delta, self.method, self.order = delta, method, order

    def draw(self, stream: RngStream, size: int) -> DecomposedSample:
        return sample_besq(self.delta, self.tau, self.x, stream, size, self.method)

    def __call__(self, sample: DecomposedSample) -> np.ndarray:
        return dx_path_values(self.f, self.j, self.x, sample, self.order)


def dx_path_values(f: SmoothTestFn, j: int, x: float, sample: DecomposedSample,
                   order: int = DEFAULT_ORDER) -> np.ndarray:
    """Per-path values whose mean estimates d^j/dx^j E f(Y_tau(x))."""
    v = np.asarray(f.deriv(j, sample.value), dtype=float)
    if j >= 1 and sample.tau > 0.0:
        half_rt = 0.5 * math.sqrt(sample.tau)
        args = gfun_args(x, sample.a, sample.b)
        for r in range(1, j + 1):
            fr = f.derivative_fn(r)
            v = v + half_rt * sample.xi * g_deriv(fr, j - r, args, order=order)
    return v


def estimate_u(f: SmoothTestFn, params: CirParams, t: float, x: float,
               cfg: EstimatorConfig) -> McEstimate:
    """Monte-Carlo mean of f over exact marginals; exact f(x) with stderr 0 at t = 0."""
    return estimate_dx(f, params, t, x, 0, cfg)


def estimate_dx(f: SmoothTestFn, params: CirParams, t: float, x: float, j: int,
                cfg: EstimatorConfig) -> McEstimate:
    """The j-th spatial derivative of u at (t, x) by the symmetrized recursion."""
    if x < 0.0:
        raise ValueError(f"x must be >= 0, got {x}")
    _check_budget(f, j, 0, cfg)
    f_eff, tau = _clock_setup(f, params, t, cfg)
    if tau == 0.0:
        # Degenerate time: u(0, .) = f, so the derivative is exact.
        exact = float(f_eff.deriv(j, x))
        return McEstimate(exact, 0.0, cfg.paths, cfg.seed, cfg.shards)
    return _mc_run(
        cfg, _DxValueFn(f_eff, j, tau, x, params.delta, cfg.method, cfg.quad_order)
    )


def mixed_spatial_coefficients(params: CirParams, req: DerivRequest, x: float,
                               clock: str = "cir") -> dict[int, float]:
    """Expand d^j_x d^i_t u at fixed x into {spatial order: coefficient}."""
    if clock == "cir":
        alpha, beta, gamma = (
            params.theta * params.kappa, -params.theta, 0.5 * params.sigma**2
        )
    else:
        alpha, beta, gamma = params.delta, 0.0, 2.0
    terms: dict[tuple[int, int], float] = {(req.j, req.i): 1.0}
    for _ in range(req.i):
        nxt: dict[tuple[int, int], float] = {}

        def put(key, val):
            nxt[key] = nxt.get(key, 0.0) + val

        for (l, ip), c in terms.items():
            if ip == 0:
                put((l, 0), c)
                continue
            put((l + 2, ip - 1), c * gamma * x)
            put((l + 1, ip - 1), c * (l * gamma + alpha + beta * x))
            if l > 0 and beta != 0.0:
                put((l, ip - 1), c * l * beta)
        terms = nxt
    return {l: c for (l, _), c in terms.items() if c != 0.0}


class _MixedValueFn:
    """Per-path values of the mixed-derivative expansion, on shared draws."""

    def __init__(self, f: SmoothTestFn, coeff: dict[int, float], tau: float,
                 x: float, delta: float, method: str, order: int):
        self.f, self.coeff, self.tau, self.x = f, coeff, tau, x
        self.delta, self.method, self.order = delta, method, order

    def draw(self, stream: RngStream, size: int) -> DecomposedSample:
        return sample_besq(self.delta, self.tau, self.x, stream, size, self.method)

    def __call__(self, sample: DecomposedSample) -> np.ndarray:
        total = 0.0
        for l in sorted(self.coeff):
            total = total + self.coeff[l] * dx_path_values(
                self.f, l, self.x, sample, self.order
            )
        return total


def estimate_mixed(f: SmoothTestFn, params: CirParams, t: float, x: float,
                   req: DerivRequest, cfg: EstimatorConfig) -> McEstimate:
    """d^j_x d^i_t u via the generator expansion over shared samples."""
    if req.i == 0:
        return estimate_dx(f, params, t, x, req.j, cfg)
    if t <= 0.0:
        raise ValueError(f"time derivatives need t > 0, got t={t}")
    if x < 0.0:
        raise ValueError(f"x must be >= 0, got {x}")
    _check_budget(f, req.j, req.i, cfg)
    f_eff, tau = _clock_setup(f, params, t, cfg)
    coeff = mixed_spatial_coefficients(params, req, x, cfg.clock)
    return _mc_run(
        cfg, _MixedValueFn(f_eff, coeff, tau, x, params.delta, cfg.method, cfg.quad_order)
    )


class _CrnFdValueFn:
    """Central difference of estimate_u in x on common random numbers."""

    def __init__(self, f: SmoothTestFn, tau: float, x: float, h: float,
                 delta: float, method: str):
        self.f, self.tau, self.x, self.h = f, tau, x, h
        self.delta, self.method = delta, method

    def draw(self, stream: RngStream, size: int) -> DecomposedSample:
        return sample_besq(self.delta, self.tau, self.x, stream, size, self.method)

    def __call__(self, sample: DecomposedSample) -> np.ndarray:
        up = sample.rebase(self.tau, self.x + self.h)
        dn = sample.rebase(self.tau, self.x - self.h)
        return (self.f(up.value) - self.f(dn.value)) / (2.0 * self.h)


def estimate_dx_crnfd(f: SmoothTestFn, params: CirParams, t: float, x: float,
                      h: float, cfg: EstimatorConfig, j: int = 1) -> McEstimate:
    """Independent first-derivative check: CRN central difference of the mean.

    The identical standardized draws are re-materialized at x+h and x-h, so
    the difference is smooth per path.  Only j = 1 is supported; requires
    0 < h <= x.
    """
    if j != 1:
        raise ValueError("the CRN finite-difference estimator only supports j=1")
    if h <= 0.0:
        raise ValueError(f"h must be > 0, got {h}")
    if h > x:
        raise StepTooLarge(f"step h={h:g} exceeds x={x:g}; x-h would be negative")
    f_eff, tau = _clock_setup(f, params, t, cfg)
    return _mc_run(cfg, _CrnFdValueFn(f_eff, tau, x, h, params.delta, cfg.method))


# ---------------------------------------------------------------------------
# Growth-envelope propagation: (C, k) with |estimate| <= C*(1 + x^k).
# ---------------------------------------------------------------------------


def _bound_to(C: float, k: int, K: int) -> float:
    """Convert C*(1+x^k) into the weaker C'*(1+x^K) for K >= k."""
    return C if k == K else 2.0 * C


def _bound_add(b1: tuple[float, int], b2: tuple[float, int]) -> tuple[float, int]:
    K = max(b1[1], b2[1])
    return _bound_to(*b1, K) + _bound_to(*b2, K), K


def _bound_mul_affine(b: tuple[float, int], alpha: float, beta: float) -> tuple[float, int]:
    """|alpha + beta*x| * C*(1+x^k) <= C'*(1+x^k') on x >= 0."""
    C, k = b
    out = (abs(alpha) * C, k)
    if beta != 0.0:
        # x*(1+x^k) <= 2*(1+x^(k+1))
        out = _bound_add(out, (2.0 * abs(beta) * C, k + 1))
    return out


def _xi2_a_moment(delta: float, k: int, tau: float) -> float:
    """E[xi^2 * A^k] for A = tau*(xi^2 + beta), beta = 2*Gamma((delta-1)/2, 1)."""
    shape = 0.5 * (delta - 1.0)
    total = 0.0
    for m in range(k + 1):
        if shape > 0.0:
            beta_mom = 2.0 ** (k - m) * math.gamma(shape + k - m) / math.gamma(shape)
        else:
            beta_mom = 1.0 if m == k else 0.0
        total += math.comb(k, m) * gaussian_abs_moment(m + 1) * beta_mom
    return tau**k * total


def dx_growth_envelope(f: SmoothTestFn, delta: float, j: int,
                       tau: float) -> tuple[float, int]:
    """(C, k) with |D(j, f)(tau, x)| <= C*(1 + x^k) for all x >= 0.

    Built from the good set and exact moments only (gamma remainder): the
    plain term through the moment bound E[Y^p] <= m_p(tau, 1)*(1 + x^p), the
    remainder terms through the quotient growth envelope integrated against
    the driving normal.
    """
    C_j, k_j = f.good_at(j)
    s_mom = besq_moment(delta, tau, 1.0, k_j)
    bound = (C_j * (1.0 + s_mom), k_j)
    for r in range(1, j + 1):
        Cg, kg = growth_constants(f.derivative_fn(r), j - r)
        const = 0.5 * tau * Cg * (1.0 + _xi2_a_moment(delta, kg, tau))
        bound = _bound_add(bound, (const, kg))
    # Fold in the order-0 exponent so one (C, k) covers every order <= j.
    return _bound_add(bound, (0.0, f.good_at(0)[1]))


def mixed_growth_envelope(f: SmoothTestFn, params: CirParams, req: DerivRequest,
                          t: float, cfg: EstimatorConfig) -> tuple[float, int]:
    """(C, k) envelope for the mixed estimator via the generator expansion.

    The x-dependent expansion coefficients are themselves bounded by affine
    envelopes, so the result is again of the form C*(1 + x^k).
    """
    f_eff, tau = _clock_setup(f, params, t, cfg)
    if req.i == 0:
        return dx_growth_envelope(f_eff, params.delta, req.j, tau)
    if cfg.clock == "cir":
        alpha, beta, gamma = (
            params.theta * params.kappa, -params.theta, 0.5 * params.sigma**2
        )
    else:
        alpha, beta, gamma = params.delta, 0.0, 2.0
    # Expand symbolically on (spatial order, time order) with affine-in-x weights
    # kept as growth envelopes.
    terms: dict[tuple[int, int], tuple[float, int]] = {(req.j, req.i): (1.0, 0)}
    for _ in range(req.i):
        nxt: dict[tuple[int, int], tuple[float, int]] = {}

        def put(key, val):
            nxt[key] = _bound_add(nxt[key], val) if key in nxt else val

        for (l, ip), w in terms.items():
            if ip == 0:
                put((l, 0), w)
                continue
            put((l + 2, ip - 1), _bound_mul_affine(w, 0.0, gamma))
            put((l + 1, ip - 1), _bound_mul_affine(w, l * gamma + alpha, beta))
            if l > 0 and beta != 0.0:
                put((l, ip - 1), _bound_mul_affine(w, l * beta, 0.0))
        terms = nxt
    total = (0.0, 0)
    for (l, _), (Cw, kw) in terms.items():
        Cd, kd = dx_growth_envelope(f_eff, params.delta, l, tau)
        # (1+x^kw)*(1+x^kd) <= 4*(1+x^(kw+kd)) on x >= 0
        total = _bound_add(total, (4.0 * Cw * Cd, kw + kd))
    return total
