"""Non-Gaussian signal dimension: two-scatter unmixing, hypothesis
tests for the number of non-Gaussian components, and sequential
estimators of that number, with Monte-Carlo experiment drivers.

The typical flow is ``two_scatter_unmixing`` to fit an unmixing for a
configured scatter pair, ``bootstrap_test`` (or the asymptotic test for
the cov-cov4 pair) to test a candidate signal count, and
``estimate_incremental`` / ``estimate_divide_conquer`` to search over
candidates.  Everything randomized takes explicit seeds and derives
per-task streams from them, so identical configurations give identical
results regardless of scheduling.
"""

from importlib import metadata

from ._rng import derive_rng, derive_seed
from .dimtest import (
    METHOD_LABELS,
    BootstrapConfig,
    MethodSpec,
    TestOutcome,
    asymptotic_split_tests,
    asymptotic_test_fobi,
    bootstrap_p_value,
    bootstrap_test,
    fobi_statistic,
    method_spec,
    resample_noise,
    resample_signal,
    sigma1_hat,
    split_statistics,
    tk_star_known_noise,
    variance_statistic,
)
from .estimator import (
    DimensionEstimate,
    VisitedTest,
    estimate_divide_conquer,
    estimate_incremental,
    replay_decisions,
)
from .exceptions import (
    BootstrapFailureError,
    ConvergenceError,
    DegenerateScatterError,
    InputDataError,
    NgdimError,
    SimulationFailureError,
    WhiteningError,
)
from .scatter import (
    WeightSpec,
    cov4,
    huber_weight_constants,
    huber_weights,
    identity_weights,
    incomplete_symmetrized_scatter,
    m_estimate,
    m_scatter,
    mean_location,
    sample_cov,
    symmetrized_scatter,
    t_weights,
)
from .simulation import (
    MODEL_NAMES,
    ModelSpec,
    SimulationReport,
    contaminate,
    estimator_experiment,
    glyph_moments,
    model_spec,
    rejection_rate_experiment,
    sample_gamma_glyph,
    sample_model,
)
from .unmixing import (
    PAIR_LABELS,
    ScatterKind,
    ScatterPairSpec,
    UnmixingResult,
    latent_components,
    order_for_known_noise,
    order_for_partition,
    scatter_pair,
    two_scatter_unmixing,
    whiten,
)

try:
    __version__ = metadata.version("ngdim")
except metadata.PackageNotFoundError:  # pragma: no cover - source tree use
    __version__ = "0+unknown"

__all__ = [
    "__version__",
    # rng
    "derive_rng",
    "derive_seed",
    # scatter
    "WeightSpec",
    "identity_weights",
    "t_weights",
    "huber_weights",
    "huber_weight_constants",
    "mean_location",
    "sample_cov",
    "cov4",
    "m_estimate",
    "m_scatter",
    "symmetrized_scatter",
    "incomplete_symmetrized_scatter",
    # unmixing
    "PAIR_LABELS",
    "ScatterKind",
    "ScatterPairSpec",
    "UnmixingResult",
    "scatter_pair",
    "whiten",
    "two_scatter_unmixing",
    "order_for_partition",
    "order_for_known_noise",
    "latent_components",
    # hypothesis tests
    "METHOD_LABELS",
    "BootstrapConfig",
    "MethodSpec",
    "TestOutcome",
    "method_spec",
    "fobi_statistic",
    "variance_statistic",
    "split_statistics",
    "tk_star_known_noise",
    "sigma1_hat",
    "asymptotic_test_fobi",
    "asymptotic_split_tests",
    "resample_signal",
    "resample_noise",
    "bootstrap_p_value",
    "bootstrap_test",
    # estimators
    "DimensionEstimate",
    "VisitedTest",
    "estimate_incremental",
    "estimate_divide_conquer",
    "replay_decisions",
    # simulation
    "MODEL_NAMES",
    "ModelSpec",
    "SimulationReport",
    "model_spec",
    "glyph_moments",
    "sample_gamma_glyph",
    "sample_model",
    "contaminate",
    "rejection_rate_experiment",
    "estimator_experiment",
    # errors
    "NgdimError",
    "DegenerateScatterError",
    "WhiteningError",
    "ConvergenceError",
    "BootstrapFailureError",
    "InputDataError",
    "SimulationFailureError",
]
