"""Exact CIR/BESQ marginal sampling, symmetrized Monte-Carlo derivative
estimators, and executable verification of the backward-equation properties."""

from .errors import (
    AffineMixOnInteger,
    DimensionTooSmall,
    FellerTypeViolation,
    InsufficientSmoothness,
    KolmocirError,
    MissingArgs,
    NestingTooDeep,
    NonPositiveParameter,
    OrderExceedsQ,
    QuadratureNotConverged,
    StepTooLarge,
    UnknownFunction,
)
from .estimators import (
    EstimatorConfig,
    McEstimate,
    estimate_dx,
    estimate_dx_crnfd,
    estimate_mixed,
    estimate_u,
)
from .gfun import F_pq, GFunArgs, coeffs, g_deriv, g_eval, g_growth_bound, gfun_args
from .model import (
    CirParams,
    DerivRequest,
    SmoothTestFn,
    TimeMap,
    catalog_fn,
    parse_fn_spec,
    time_map,
    time_transform,
    validate_params,
)
from .oracle import (
    besq_moment,
    cir_laplace,
    cir_moment,
    cir_u_poly,
    density_u,
    gaussian_abs_moment,
)
from .sampler import (
    DecomposedSample,
    MixtureSplit,
    mixture_split,
    sample_besq,
    sample_besq_int,
    sample_cir,
)
from .streams import RngStream
from .verify import (
    VerifyReport,
    mixture_audit,
    verify_growth,
    verify_pde,
    verify_semigroup,
)

__version__ = "0.1.0"
