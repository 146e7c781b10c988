"""Deviation bounds with explicit failure-probability budgets.

Every bound evaluates to a concrete number in operator-norm units together
with the probability budget it burns.  The main term is always

    ``2 sqrt(2) * ||Sigma|| * (2*level + Gamma_n) * sqrt((4 r + t) / n)``

with ``level`` the almost-sure norm cap (bounded samples) or the truncation
threshold ``tau`` (heavy tails); heavy tails add ``V sqrt(F(tau))`` and pay
``n F(tau)`` extra failure probability.  Regime-specific ``tau`` selectors
make that extra budget at most ``exp(-t)``.

Oracle quantities (``||Sigma||``, effective rank, ``Gamma_n``) are the
caller's responsibility; the harness feeds them from process closed forms.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .errors import DomainError, NumericalError
from .procgen import TailModel

_TWO_ROOT_TWO = 2.0 * math.sqrt(2.0)
_FOUR_ROOT_TWO = 4.0 * math.sqrt(2.0)

# Relative tolerance of the bisection used for composite tau selection.
BISECTION_RTOL = 1e-9


@dataclass(frozen=True)
class BoundInput:
    """Everything a bound formula consumes.

    ``sigma_norm`` and ``eff_rank`` refer to the estimation target,
    ``gamma_n`` is the dependence coefficient at horizon ``n``, ``t`` the
    confidence parameter, ``tail`` the tail model of the summands, and
    ``tau`` an optional explicit truncation threshold.
    """

    sigma_norm: float
    eff_rank: float
    gamma_n: float
    n: int
    t: float
    tail: TailModel
    tau: float | None = None

    def __post_init__(self):
        checks = {
            "sigma_norm": (self.sigma_norm, self.sigma_norm > 0),
            "eff_rank": (self.eff_rank, self.eff_rank >= 1),
            "gamma_n": (self.gamma_n, self.gamma_n >= 0),
            "n": (self.n, self.n >= 1),
            "t": (self.t, self.t > 0),
        }
        for name, (value, ok) in checks.items():
            if not ok or not math.isfinite(float(value)):
                raise DomainError(f"invalid {name}: {value}")
        if self.tau is not None and not self.tau > 0:
            raise DomainError(f"tau must be positive, got {self.tau}")


@dataclass(frozen=True)
class BoundReport:
    """A bound value, its failure budget, and the term breakdown.

    ``bound_value`` is exactly the sum of ``terms``; ``failure_prob`` is
    clipped to 1 and ``vacuous`` flags reports whose guarantee is empty.
    """

    bound_value: float
    failure_prob: float
    regime: str
    tau_used: float
    terms: dict[str, float]
    vacuous: bool = False
    notes: str = ""

    def as_dict(self) -> dict:
        return {
            "bound_value": self.bound_value,
            "failure_prob": self.failure_prob,
            "regime": self.regime,
            "tau_used": self.tau_used,
            "terms": dict(self.terms),
            "vacuous": self.vacuous,
            "notes": self.notes,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2)


def _main_term(sigma_norm: float, coefficient: float, eff_rank: float, t: float, n: int) -> float:
    return _TWO_ROOT_TWO * sigma_norm * coefficient * math.sqrt((4.0 * eff_rank + t) / n)


def _budget(t: float, extra: float) -> tuple[float, bool]:
    failure = math.exp(-t) + extra
    return min(1.0, failure), failure >= 1.0


def bound_bounded(inp: BoundInput) -> BoundReport:
    """Deviation bound for almost-surely bounded dependent samples.

    ``2 sqrt(2) ||Sigma|| (2 kappa^2 + Gamma_n) sqrt((4r + t)/n)`` with
    failure probability ``exp(-t)``.
    """
    if inp.tail.kind != "bounded":
        raise DomainError(f"bounded bound requires a bounded tail model, got {inp.tail.kind!r}")
    kappa_sq = inp.tail.kappa_sq
    main = _main_term(inp.sigma_norm, 2.0 * kappa_sq + inp.gamma_n, inp.eff_rank, inp.t, inp.n)
    failure, vacuous = _budget(inp.t, 0.0)
    return BoundReport(
        bound_value=main + 0.0,
        failure_prob=failure,
        regime="bounded",
        tau_used=kappa_sq,
        terms={"main": main, "additive": 0.0},
        vacuous=vacuous,
    )


def _resolve_tau(inp: BoundInput) -> float:
    if inp.tau is not None:
        return inp.tau
    if inp.tail.kind in ("bounded", "exp", "poly", "composite"):
        return select_tau(inp.tail, inp.n, inp.t)
    raise DomainError(f"no tau given and no selector for tail kind {inp.tail.kind!r}")


def bound_heavy(inp: BoundInput) -> BoundReport:
    """Truncation-robust deviation bound for heavy-tailed dependent samples.

    ``2 sqrt(2) ||Sigma|| (2 tau + Gamma_n) sqrt((4r + t)/n) + V sqrt(F(tau))``
    with failure probability ``exp(-t) + n F(tau)``.  With a bounded tail
    model and ``tau = kappa_sq`` this reproduces the bounded bound exactly.
    """
    tau = _resolve_tau(inp)
    tail_value = inp.tail.evaluate(tau)
    main = _main_term(inp.sigma_norm, 2.0 * tau + inp.gamma_n, inp.eff_rank, inp.t, inp.n)
    additive = inp.tail.moment_bound * math.sqrt(tail_value)
    failure, vacuous = _budget(inp.t, inp.n * tail_value)
    return BoundReport(
        bound_value=main + additive,
        failure_prob=failure,
        regime="heavy",
        tau_used=tau,
        terms={"main": main, "additive": additive},
        vacuous=vacuous,
    )


def select_tau(tail: TailModel, n: int, t: float) -> float:
    """Regime-specific truncation threshold making ``n F(tau) <= exp(-t)``.

    exp tail:   ``tau = ((log n + t) / a)^(1/b)``
    poly tail:  ``tau = (a n)^(1/b) * exp(t / b)``
    bounded:    the norm cap itself (F vanishes there)
    composite:  smallest feasible tau by bisection, to relative 1e-9
    """
    if n < 1 or t <= 0:
        raise DomainError(f"need n >= 1 and t > 0, got n={n}, t={t}")
    if tail.kind == "bounded":
        return tail.kappa_sq
    if tail.kind == "exp":
        return ((math.log(n) + t) / tail.decay_scale) ** (1.0 / tail.decay_power)
    if tail.kind == "poly":
        return (tail.decay_scale * n) ** (1.0 / tail.decay_power) * math.exp(t / tail.decay_power)
    target = math.exp(-t)

    def feasible(tau: float) -> bool:
        return n * tail.evaluate(tau) <= target

    lo = 4.0 * tail.envelope**2
    hi = max(2.0 * lo, 1.0)
    doublings = 0
    while not feasible(hi):
        hi *= 2.0
        doublings += 1
        if doublings > 200:
            raise NumericalError("no feasible truncation threshold found", residual=hi)
    while hi - lo > BISECTION_RTOL * hi:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi


def bound_covariance(inp: BoundInput) -> BoundReport:
    """Covariance-estimation bound: the heavy-tail bound with the composite tail.

    A threshold at or below ``4 B^2`` puts the indicator part of the tail at
    1 and the report certifies nothing; such reports are flagged vacuous
    rather than rejected.
    """
    if inp.tail.kind != "composite":
        raise DomainError(
            f"covariance bound requires a composite tail model, got {inp.tail.kind!r}"
        )
    report = bound_heavy(inp)
    notes = report.notes
    if report.tau_used <= 4.0 * inp.tail.envelope**2:
        notes = "threshold not above 4B^2: tail indicator is 1 and the report is vacuous"
    return BoundReport(
        bound_value=report.bound_value,
        failure_prob=report.failure_prob,
        regime="covariance",
        tau_used=report.tau_used,
        terms=report.terms,
        vacuous=report.vacuous,
        notes=notes,
    )


def _lagged_tail(tail: TailModel, threshold: float) -> float:
    """``4 * 1{theta <= 4B^2} + 4 F_eps(theta/2)``, clipped to [0, 1].

    One threshold serves both the indicator and the noise-tail slot; the
    budget charges ``n`` times this value.
    """
    indicator = 1.0 if threshold <= 4.0 * tail.envelope**2 else 0.0
    return min(1.0, 4.0 * indicator + 4.0 * tail.noise_tail(threshold / 2.0))


def bound_lagged(
    inp: BoundInput,
    sigma01_norm: float,
    r01: float,
    sigma1_norm: float,
) -> tuple[BoundReport, BoundReport]:
    """Deviation bounds for the augmented lag-one covariance estimator.

    Both displayed forms are evaluated from n observations (n - 1 pairs):
    the first scales with ``||Sigma_{0:1}||``, the second with the larger
    ``||Sigma_1|| + ||Sigma||``; the second therefore dominates the first.
    The coefficient is ``(32 B^2 + Gamma_n)`` with constant ``4 sqrt(2)``.
    """
    if inp.tail.kind != "composite":
        raise DomainError(f"lagged bound requires a composite tail model, got {inp.tail.kind!r}")
    if inp.n < 2:
        raise DomainError(f"need at least 2 observations, got {inp.n}")
    if not sigma01_norm > 0 or not r01 >= 1 or sigma1_norm < 0:
        raise DomainError("invalid augmented-covariance oracle quantities")
    threshold = _resolve_lagged_threshold(inp)
    tail_value = _lagged_tail(inp.tail, threshold)
    envelope_sq = inp.tail.envelope**2
    coefficient = 32.0 * envelope_sq + inp.gamma_n
    spread = math.sqrt((4.0 * r01 + inp.t) / (inp.n - 1))
    additive = inp.tail.moment_bound * math.sqrt(tail_value)
    failure, vacuous = _budget(inp.t, inp.n * tail_value)
    reports = []
    for regime, scale in (
        ("lagged", sigma01_norm),
        ("lagged-split", sigma1_norm + inp.sigma_norm),
    ):
        main = _FOUR_ROOT_TWO * scale * coefficient * spread
        reports.append(
            BoundReport(
                bound_value=main + additive,
                failure_prob=failure,
                regime=regime,
                tau_used=threshold,
                terms={"main": main, "additive": additive},
                vacuous=vacuous,
            )
        )
    return reports[0], reports[1]


def _resolve_lagged_threshold(inp: BoundInput) -> float:
    if inp.tau is not None:
        return inp.tau
    target = math.exp(-inp.t)

    def feasible(theta: float) -> bool:
        return inp.n * _lagged_tail(inp.tail, theta) <= target

    lo = 4.0 * inp.tail.envelope**2
    hi = max(2.0 * lo, 1.0)
    doublings = 0
    while not feasible(hi):
        hi *= 2.0
        doublings += 1
        if doublings > 200:
            raise NumericalError("no feasible lagged threshold found", residual=hi)
    while hi - lo > BISECTION_RTOL * hi:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi


def lagged_effective_rank(sigma_norm: float, eff_rank: float, sigma01_norm: float) -> float:
    """Effective rank of the augmented covariance via its trace identity.

    The augmented trace is twice the base trace, so
    ``r(Sigma_{0:1}) = 2 ||Sigma|| r(Sigma) / ||Sigma_{0:1}||``.
    """
    if not sigma01_norm > 0:
        raise DomainError(f"augmented norm must be positive, got {sigma01_norm}")
    return 2.0 * sigma_norm * eff_rank / sigma01_norm


def bound_hmm(inp: BoundInput, sigma1_norm: float) -> BoundReport:
    """Estimation-error bound for the moment-based transition estimator.

    ``4 sqrt(2) (||Sigma_1|| + ||Sigma||) ||Sigma|| (1 + ||Sigma_1||)
    (32 B^2 + Gamma_n) sqrt((4r + t)/n) + 2 V (1 + ||Sigma_1||)
    sqrt(F_eps(t/2))`` for ``t > 2 B^2``, with failure probability
    ``exp(-t) + n F_eps(t/2)``.
    """
    if inp.tail.kind != "composite":
        raise DomainError(f"hmm bound requires a composite tail model, got {inp.tail.kind!r}")
    if sigma1_norm < 0:
        raise DomainError(f"lagged norm must be non-negative, got {sigma1_norm}")
    envelope_sq = inp.tail.envelope**2
    if not inp.t > 2.0 * envelope_sq:
        raise DomainError(
            f"confidence parameter t={inp.t} must exceed 2 B^2 = {2.0 * envelope_sq}"
        )
    noise_tail = inp.tail.noise_tail(inp.t / 2.0)
    main = (
        _FOUR_ROOT_TWO
        * (sigma1_norm + inp.sigma_norm)
        * inp.sigma_norm
        * (1.0 + sigma1_norm)
        * (32.0 * envelope_sq + inp.gamma_n)
        * math.sqrt((4.0 * inp.eff_rank + inp.t) / inp.n)
    )
    additive = 2.0 * inp.tail.moment_bound * (1.0 + sigma1_norm) * math.sqrt(noise_tail)
    failure, vacuous = _budget(inp.t, inp.n * noise_tail)
    return BoundReport(
        bound_value=main + additive,
        failure_prob=failure,
        regime="hmm",
        tau_used=inp.t,
        terms={"main": main, "additive": additive},
        vacuous=vacuous,
    )


def bound_regression(
    inp: BoundInput,
    theta_norm: float,
    c: float,
    trace_c: float,
    noise_variance: float,
) -> BoundReport:
    """Excess-risk bound for the minimum-norm interpolant.

    ``2 sqrt(2) c ||theta*||^2 ||Sigma|| (2 tau + Gamma_n) sqrt((4r + t)/n)
    + V sqrt(F_eps(t/4)) + c t sigma^2 tr(C)`` for ``t`` in ``(B^2, n/c)``
    with ``c > 1``.  The variance term is reported from the realised design,
    never bounded.
    """
    if inp.tail.kind != "composite":
        raise DomainError(
            f"regression bound requires a composite tail model, got {inp.tail.kind!r}"
        )
    if not c > 1:
        raise DomainError(f"constant c must exceed 1, got {c}")
    if theta_norm < 0 or trace_c < 0 or noise_variance < 0:
        raise DomainError("norms, traces and variances must be non-negative")
    envelope_sq = inp.tail.envelope**2
    if not envelope_sq < inp.t < inp.n / c:
        raise DomainError(
            f"confidence parameter t={inp.t} must lie in (B^2, n/c) = "
            f"({envelope_sq}, {inp.n / c})"
        )
    tau = inp.tau if inp.tau is not None else select_tau(inp.tail, inp.n, inp.t)
    noise_tail = inp.tail.noise_tail(inp.t / 4.0)
    main = c * theta_norm**2 * _main_term(
        inp.sigma_norm, 2.0 * tau + inp.gamma_n, inp.eff_rank, inp.t, inp.n
    )
    additive = inp.tail.moment_bound * math.sqrt(noise_tail)
    variance = c * inp.t * noise_variance * trace_c
    failure, vacuous = _budget(inp.t, inp.n * noise_tail)
    return BoundReport(
        bound_value=main + additive + variance,
        failure_prob=failure,
        regime="regression",
        tau_used=tau,
        terms={"main": main, "additive": additive, "variance": variance},
        vacuous=vacuous,
    )
