"""Estimators whose deviations the bounds module certifies.

Empirical and eigenvalue-truncated matrix means, covariance and lagged
covariance of a vector sequence, the moment-based transition estimator for
linear hidden-state models, and the minimum-norm interpolant for
overparameterized regression together with its excess risk.

Pure functions over immutable inputs; the Monte Carlo risk evaluator takes
its own seed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .procgen import split_seed
from .specmat import (
    DEFAULT_RCOND,
    SymMatrix,
    as_sym,
    operator_norm,
    pseudo_inverse,
    spectral_norm,
    sym_eig,
    truncate_eigenvalues,
)


@dataclass(frozen=True)
class MatrixSample:
    """A finite sequence of symmetric matrices sharing one dimension."""

    items: tuple

    def __post_init__(self):
        if len(self.items) < 1:
            raise DomainError("a sample needs at least one matrix")
        items = tuple(as_sym(m) for m in self.items)
        dims = {m.dim for m in items}
        if len(dims) != 1:
            raise DomainError(f"sample mixes dimensions {sorted(dims)}")
        object.__setattr__(self, "items", items)

    @classmethod
    def from_arrays(cls, arrays) -> "MatrixSample":
        return cls(tuple(arrays))

    @property
    def n(self) -> int:
        return len(self.items)

    @property
    def dim(self) -> int:
        return self.items[0].dim


def empirical_mean(sample: MatrixSample) -> SymMatrix:
    """Arithmetic mean of the sample; linear in the sample."""
    acc = np.zeros((sample.dim, sample.dim))
    for m in sample.items:
        acc += m.entries
    return SymMatrix(acc / sample.n)


def truncated_mean(sample: MatrixSample, tau: float) -> SymMatrix:
    """Mean of the eigenvalue-truncated sample; operator norm at most tau.

    Coincides with ``empirical_mean`` whenever no matrix in the sample has
    operator norm above ``tau``.
    """
    if not tau > 0:
        raise DomainError(f"truncation level must be positive, got {tau}")
    acc = np.zeros((sample.dim, sample.dim))
    for m in sample.items:
        acc += truncate_eigenvalues(m, tau).entries
    return SymMatrix(acc / sample.n)


def covariance_estimator(observations: np.ndarray, center: bool = False) -> SymMatrix:
    """``(1/n) sum Y_l Y_l^T`` over the rows of an (n, p) array.

    No mean subtraction by default: the target is the second-moment matrix
    of a centered process.  ``center=True`` subtracts the sample mean for
    practitioners; leave it off when certifying against the bounds.
    """
    y = np.asarray(observations, dtype=np.float64)
    if y.ndim == 1:
        y = y[None, :]
    if y.shape[0] < 1:
        raise DomainError("need at least one observation")
    if center:
        y = y - y.mean(axis=0)
    return SymMatrix(y.T @ y / y.shape[0])


def truncated_covariance(observations: np.ndarray, tau: float) -> SymMatrix:
    """Eigenvalue-truncated covariance via the rank-one closed form.

    An outer product ``y y^T`` has the single eigenvalue ``||y||^2``, so
    clamping its spectrum into ``[-tau, tau]`` is the rescaling
    ``min(1, tau / ||y||^2) * y y^T``.  The truncated mean of the outer
    products is therefore a reweighted Gram matrix; this equals
    ``truncated_mean`` over the outer-product sample without the n
    eigendecompositions.
    """
    if not tau > 0:
        raise DomainError(f"truncation level must be positive, got {tau}")
    y = np.asarray(observations, dtype=np.float64)
    if y.ndim == 1:
        y = y[None, :]
    norms_sq = np.einsum("ij,ij->i", y, y)
    scale = np.where(norms_sq > tau, tau / np.maximum(norms_sq, tau), 1.0)
    weighted = y * np.sqrt(scale)[:, None]
    return SymMatrix(weighted.T @ weighted / y.shape[0])


@dataclass(frozen=True)
class LaggedCovariance:
    """Augmented-pair covariance estimate and the naive lagged block.

    ``augmented`` is the 2p x 2p mean of ``(Y_l, Y_{l+h}) (Y_l, Y_{l+h})^T``
    over the n-h available pairs; its top-right block equals ``naive`` bit
    for bit.  The two diagonal blocks are the leading- and trailing-window
    averages (they differ by the boundary terms).
    """

    augmented: SymMatrix
    naive: np.ndarray


def lagged_covariance(observations: np.ndarray, h: int = 1) -> LaggedCovariance:
    """Estimate the covariance of the lag-h augmented pair process."""
    y = np.asarray(observations, dtype=np.float64)
    if h < 1:
        raise DomainError(f"lag must be at least 1, got {h}")
    n = y.shape[0]
    if n <= h:
        raise DomainError(f"need more than h={h} observations, got {n}")
    pairs = n - h
    lead = y[:pairs]
    trail = y[h:]
    block00 = lead.T @ lead / pairs
    block11 = trail.T @ trail / pairs
    block01 = lead.T @ trail / pairs
    augmented = np.block([[block00, block01], [block01.T, block11]])
    return LaggedCovariance(augmented=SymMatrix(augmented), naive=block01)


@dataclass(frozen=True)
class HmmTruth:
    """Population quantities for judging a transition estimate.

    ``transition`` is the planted parameter; ``sigma`` and ``sigma1`` are
    the true observation covariance and lag-one cross-covariance.
    """

    transition: np.ndarray
    sigma: np.ndarray
    sigma1: np.ndarray


@dataclass(frozen=True)
class HmmEstimate:
    """Transition estimate with error decomposition diagnostics.

    ``target`` is the moment functional ``Sigma_1 (Sigma + I)^{-1}`` the
    estimator converges to; the error-decomposition inequality

        ``||A_hat - target|| <= ||Sigma1_hat - Sigma_1||
                                + ||Sigma - Sigma_hat|| * ||Sigma_1||``

    is algebraic and holds on every realisation, which
    ``decomposition_holds`` records.  ``error_vs_transition`` measures the
    distance to the planted parameter itself.
    """

    a_hat: np.ndarray
    sigma_hat: np.ndarray
    sigma1_hat: np.ndarray
    target: np.ndarray | None = None
    error_vs_target: float | None = None
    error_vs_transition: float | None = None
    decomposition_lhs: float | None = None
    decomposition_rhs: float | None = None
    decomposition_holds: bool | None = None


def hmm_estimate(observations: np.ndarray, truth: HmmTruth | None = None) -> HmmEstimate:
    """Moment-based transition estimate ``Sigma1_hat (Sigma_hat + I)^{-1}``.

    ``observations`` holds ``Y_0..Y_n`` as rows (n >= 2 transitions).  The
    inverse is taken by a linear solve: ``Sigma_hat + I`` is symmetric with
    eigenvalues at least 1, so the solve is always well posed.
    """
    y = np.asarray(observations, dtype=np.float64)
    n = y.shape[0] - 1
    if n < 2:
        raise DomainError(f"need at least 2 transitions, got {n}")
    past = y[:-1]
    future = y[1:]
    sigma_hat = past.T @ past / n
    sigma_hat = (sigma_hat + sigma_hat.T) / 2.0
    sigma1_hat = future.T @ past / n
    shifted = sigma_hat + np.eye(y.shape[1])
    a_hat = np.linalg.solve(shifted, sigma1_hat.T).T
    if truth is None:
        return HmmEstimate(a_hat=a_hat, sigma_hat=sigma_hat, sigma1_hat=sigma1_hat)
    target = np.linalg.solve(truth.sigma + np.eye(y.shape[1]), truth.sigma1.T).T
    lhs = spectral_norm(a_hat - target)
    rhs = spectral_norm(sigma1_hat - truth.sigma1) + operator_norm(
        truth.sigma - sigma_hat
    ) * spectral_norm(truth.sigma1)
    return HmmEstimate(
        a_hat=a_hat,
        sigma_hat=sigma_hat,
        sigma1_hat=sigma1_hat,
        target=target,
        error_vs_target=lhs,
        error_vs_transition=spectral_norm(a_hat - truth.transition),
        decomposition_lhs=lhs,
        decomposition_rhs=rhs,
        decomposition_holds=bool(lhs <= rhs + 1e-10 * max(1.0, rhs)),
    )


@dataclass(frozen=True)
class RegressionData:
    """Design rows, responses, the response-noise variance, optional truth."""

    covariates: np.ndarray
    responses: np.ndarray
    noise_variance: float
    truth: np.ndarray | None = None

    def __post_init__(self):
        cov = np.asarray(self.covariates, dtype=np.float64)
        resp = np.asarray(self.responses, dtype=np.float64)
        if cov.ndim != 2:
            raise DomainError(f"design must be a matrix, got shape {cov.shape}")
        if resp.shape != (cov.shape[0],):
            raise DomainError(
                f"row count {cov.shape[0]} does not match response length {resp.shape}"
            )
        if not self.noise_variance > 0:
            raise DomainError(f"noise variance must be positive, got {self.noise_variance}")
        object.__setattr__(self, "covariates", cov)
        object.__setattr__(self, "responses", resp)


def min_norm_regression(data: RegressionData, rcond: float = DEFAULT_RCOND) -> np.ndarray:
    """Least-norm interpolant ``Y^T (Y Y^T)^+ Z``.

    With a full-row-rank design (the overparameterized p > n case) the fit
    is exact and the returned vector has minimal norm among all
    interpolants.  A rank-deficient Gram matrix falls back to the
    pseudo-inverse and a warning records the rank gap.
    """
    y = data.covariates
    n = y.shape[0]
    gram = SymMatrix(y @ y.T)
    eigenvalues = sym_eig(gram).eigenvalues
    top = float(np.max(np.abs(eigenvalues))) if n else 0.0
    rank = int(np.sum(np.abs(eigenvalues) > rcond * top)) if top > 0 else 0
    if rank < n:
        warnings.warn(
            f"design Gram matrix is rank deficient ({rank} of {n}); "
            "falling back to the pseudo-inverse",
            stacklevel=2,
        )
    return y.T @ (pseudo_inverse(gram, rcond).entries @ data.responses)


def excess_risk(theta_hat: np.ndarray, theta_star: np.ndarray, sigma) -> float:
    """Closed-form excess prediction risk ``(d)^T Sigma (d)`` with ``d = theta_hat - theta_star``.

    This is the exact population risk gap for a fixed estimate under the
    linear model with centered independent response noise.
    """
    d = np.asarray(theta_hat, dtype=np.float64) - np.asarray(theta_star, dtype=np.float64)
    cov = as_sym(sigma)
    if cov.dim != d.shape[0]:
        raise DomainError(
            f"parameter dimension {d.shape[0]} does not match covariance dimension {cov.dim}"
        )
    return float(max(d @ cov.entries @ d, 0.0))


def excess_risk_mc(
    theta_hat: np.ndarray,
    theta_star: np.ndarray,
    noise_std: float,
    draw_covariates,
    n_draws: int,
    seed: int,
) -> tuple[float, float]:
    """Monte Carlo evaluation of the excess risk on fresh draws.

    ``draw_covariates(seed, count)`` must return independent stationary
    copies of the covariate vector.  Returns ``(estimate, standard_error)``
    for cross-checking the closed form.
    """
    if n_draws < 2:
        raise DomainError(f"need at least 2 draws, got {n_draws}")
    fresh = draw_covariates(seed, n_draws)
    rng = np.random.default_rng(split_seed(seed, 1))
    noise = noise_std * rng.standard_normal(n_draws)
    responses = fresh @ np.asarray(theta_star, dtype=np.float64) + noise
    gap = (responses - fresh @ np.asarray(theta_hat, dtype=np.float64)) ** 2 - noise**2
    return float(np.mean(gap)), float(np.std(gap, ddof=1) / np.sqrt(n_draws))
