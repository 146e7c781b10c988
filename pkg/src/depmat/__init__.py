"""Deviation bounds and robust estimators for sums of dependent, heavy-tailed random matrices.

The package is organised around five pieces:

- :mod:`depmat.specmat`: symmetric spectral primitives (Jacobi
  eigendecomposition, operator norm, effective rank, eigenvalue truncation,
  pseudo-inverse);
- :mod:`depmat.procgen`: weakly dependent observation processes with
  closed-form moments, dependence coefficients and tail envelopes;
- :mod:`depmat.estimators`: the estimators the bounds certify;
- :mod:`depmat.bounds`: every deviation bound as explicit arithmetic with
  its failure-probability budget;
- :mod:`depmat.harness`: Monte Carlo coverage certification and sweeps,
  exposed through the ``depmat`` command line.
"""

from .bounds import (
    BoundInput,
    BoundReport,
    bound_bounded,
    bound_covariance,
    bound_heavy,
    bound_hmm,
    bound_lagged,
    bound_regression,
    lagged_effective_rank,
    select_tau,
)
from .errors import ConfigError, DomainError, NumericalError, VacuousBoundError
from .estimators import (
    HmmEstimate,
    HmmTruth,
    LaggedCovariance,
    MatrixSample,
    RegressionData,
    covariance_estimator,
    empirical_mean,
    excess_risk,
    excess_risk_mc,
    hmm_estimate,
    lagged_covariance,
    min_norm_regression,
    truncated_covariance,
    truncated_mean,
)
from .harness import (
    CoverageReport,
    DimensionSweepResult,
    ExperimentConfig,
    RateSweepResult,
    SpikedSpec,
    parse_config,
    process_to_config,
    run_coverage,
    run_dimension_sweep,
    run_rate_sweep,
    wilson_interval,
)
from .procgen import (
    CbsSpec,
    DependenceProfile,
    FiniteTaps,
    GeometricDecay,
    HmmSpec,
    NoiseSpec,
    PolynomialDecay,
    ProcessSpec,
    TailModel,
    cim_to_cbs,
    gamma_profile,
    iid_observation_sampler,
    lag1_cross_covariance,
    simulate_cbs,
    simulate_hmm,
    simulate_observations,
    split_seed,
    stationary_covariance,
    tail_model,
    var_as_cim,
)
from .specmat import (
    SpectralDecomposition,
    SymMatrix,
    effective_rank,
    operator_norm,
    pseudo_inverse,
    spectral_norm,
    sym_eig,
    truncate_eigenvalues,
)

__version__ = "0.1.0"
