"""Partition-limit calculus of two-index functionals along real intervals
and simulated semimartingale paths, with Monte Carlo verification of the
generalized Ito and Tanaka decompositions for Lipschitz functions."""

from .catalog import list_catalog, make_scalar_fn
from .compensator import (
    CompoundPoissonIncreasing,
    ConstantY,
    DeterministicIncreasing,
    PathQV,
    PoissonCounting,
    StateY,
    StepY,
    compensator_closed_form,
    martingale_check,
    verify_compensator,
)
from .decompose import (
    BracketModel,
    DecompositionReport,
    ito_decompose,
    occupation_local_time,
    stochastic_integral,
    tanaka_decompose,
    verify_report,
)
from .errors import (
    NumericRangeError,
    OutsideDomainError,
    PathcalcError,
    ResolutionExhaustedError,
    SchemaError,
    UnsupportedModelError,
)
from .functional import (
    DyadicRefinement,
    ExpansionReport,
    Partition,
    RandomBisection,
    ScalarFn,
    TwoIndexFn,
    approx_derivative,
    custom_two_index,
    derivative_limit,
    increment_fn,
    incremental_ratio,
    linear_remainder,
    lipschitz_scan,
    partition_sum,
    squared_increment,
    summability_limit,
    taylor_check,
    variation_limit,
    weighted_increment,
)
from .paths import (
    BrownianMotion,
    CompoundPoissonJumps,
    FiniteVariationPath,
    JumpDiffusion,
    NormalLaw,
    SamplePath,
    TwoPointLaw,
    UniformLaw,
    realized_qv,
    reattach_jumps,
    simulate,
    split_jumps,
)
from .riemann import (
    ConvergenceDiagnostic,
    PathFunctional,
    RiemannGrid,
    boundedness_scan,
    build_grid,
    dyadic_grid,
    hitting_grid,
    limit_in_probability,
    pathwise_series,
    pathwise_sum,
    squared_increment_ratio,
    stopped_functional,
)

__version__ = "0.1.0"
