"""Nonparametric estimation of the distribution of random PDE parameters.

Grid-based Dirac-mixture estimates of the law of ``q = (q1, q2)`` in a
transdermal alcohol transport model, fitted to aggregate input/output data,
with sampling, a 2-D Kolmogorov-Smirnov check and cross-validation tools.
"""

__version__ = "0.1.0"

from .measures import (
    Cdf2D,
    DiscreteMeasure,
    ParameterDomain,
    ParameterGrid,
    ParameterPoint,
    cdf,
    make_uniform_grid,
    prohorov_distance,
)
from .pde_forward import (
    DiscreteTimeSystem,
    Episode,
    GalerkinSystem,
    TacSeries,
    assemble,
    discretize,
    filter_kernel,
    simulate,
)
from .estimator import (
    AggregateDataset,
    EstimateResult,
    OutputDictionary,
    RegularizationWeights,
    SolverOptions,
    aggregate_output,
    build_dictionary,
    estimate,
    objective,
)
from .sampler import McmcConfig, RefinedDensity, SampleSet, metropolis_sample, refine_density
from .gof import KsResult, kolmogorov_cdf, ks2d2s
from .evaluation import (
    BetaProduct,
    ConfidenceBand,
    LoocvReport,
    SyntheticConfig,
    confidence_band,
    loocv,
    nrmse,
    simulate_aggregate,
)
