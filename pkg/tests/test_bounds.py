"""Bound formulas, threshold selection, budgets, degeneration."""

import json
import math

import numpy as np
import pytest

from depmat.bounds import (
    BoundInput,
    bound_bounded,
    bound_covariance,
    bound_heavy,
    bound_hmm,
    bound_lagged,
    bound_regression,
    lagged_effective_rank,
    select_tau,
)
from depmat.errors import DomainError
from depmat.procgen import (
    CbsSpec,
    GeometricDecay,
    NoiseSpec,
    ProcessSpec,
    TailModel,
    tail_model,
)


def bounded_input(sigma_norm=1.0, eff_rank=4.0, gamma_n=0.0, kappa_sq=1.0, n=100, t=1.0):
    return BoundInput(sigma_norm=sigma_norm, eff_rank=eff_rank, gamma_n=gamma_n,
                      n=n, t=t, tail=TailModel.bounded(kappa_sq))


def composite_input(noise, b_envelope=1.0, **kwargs):
    spec = ProcessSpec(
        cbs=CbsSpec(dim=4, coeffs=GeometricDecay(b_envelope / 2.0, 0.5),
                    innovation_bound=1.0),
        noise=noise,
    )
    defaults = dict(sigma_norm=1.0, eff_rank=4.0, gamma_n=0.0, n=100, t=1.0)
    defaults.update(kwargs)
    return BoundInput(tail=tail_model(spec), **defaults)


class TestBoundBounded:
    def test_frozen_arithmetic_example(self):
        # 2 sqrt(2) * 1 * (2 + 0) * sqrt(17/100), evaluated independently
        report = bound_bounded(bounded_input())
        assert abs(report.bound_value - 2.3323807579381204) < 1e-14
        assert report.failure_prob == math.exp(-1.0)

    def test_quadrupling_n_halves_the_bound(self):
        small = bound_bounded(bounded_input(n=100))
        large = bound_bounded(bounded_input(n=400))
        assert large.bound_value == small.bound_value / 2.0

    def test_linear_in_dependence_coefficient(self):
        base = bound_bounded(bounded_input(gamma_n=0.0, kappa_sq=1.0))
        doubled = bound_bounded(bounded_input(gamma_n=2.0, kappa_sq=1.0))
        assert abs(doubled.bound_value - 2.0 * base.bound_value) < 1e-15 * base.bound_value

    def test_wrong_regime_rejected(self):
        inp = composite_input(NoiseSpec.bounded(4, 0.0))
        with pytest.raises(DomainError, match="bounded"):
            bound_bounded(inp)


class TestBoundHeavy:
    def test_degenerates_to_bounded_bit_for_bit(self):
        tail = TailModel.bounded(1.7)
        inp = BoundInput(sigma_norm=0.8, eff_rank=3.0, gamma_n=0.4, n=250, t=2.0,
                         tail=tail, tau=1.7)
        heavy = bound_heavy(inp)
        plain = bound_bounded(BoundInput(sigma_norm=0.8, eff_rank=3.0, gamma_n=0.4,
                                         n=250, t=2.0, tail=tail))
        assert heavy.bound_value == plain.bound_value
        assert heavy.failure_prob == plain.failure_prob
        assert heavy.terms == plain.terms

    def test_zero_moment_bound_kills_additive_term(self):
        tail = TailModel.poly_decay(1.0, 4.0, moment_bound=0.0)
        inp = BoundInput(sigma_norm=1.0, eff_rank=2.0, gamma_n=0.0, n=50, t=1.0,
                         tail=tail, tau=10.0)
        assert bound_heavy(inp).terms["additive"] == 0.0

    def test_poly_additive_term(self):
        tail = TailModel.poly_decay(1.0, 4.0, moment_bound=1.0)
        inp = BoundInput(sigma_norm=1.0, eff_rank=2.0, gamma_n=0.0, n=50, t=1.0,
                         tail=tail, tau=10.0)
        assert abs(bound_heavy(inp).terms["additive"] - 0.01) < 1e-15

    def test_terms_sum_to_bound(self):
        tail = TailModel.exp_decay(1.0, 1.0, moment_bound=2.0)
        inp = BoundInput(sigma_norm=1.0, eff_rank=2.0, gamma_n=0.3, n=50, t=1.0,
                         tail=tail, tau=3.0)
        report = bound_heavy(inp)
        assert report.bound_value == report.terms["main"] + report.terms["additive"]


class TestSelectTau:
    def test_exponential_closed_form(self):
        tail = TailModel.exp_decay(1.0, 1.0, moment_bound=1.0)
        tau = select_tau(tail, n=round(math.exp(2.0)), t=1.0)
        assert abs(tau - (math.log(round(math.exp(2.0))) + 1.0)) < 1e-12

    def test_polynomial_closed_form(self):
        tail = TailModel.poly_decay(1.0, 4.0, moment_bound=1.0)
        assert abs(select_tau(tail, n=16, t=1e-300) - 2.0) < 1e-12

    def test_bounded_returns_cap(self):
        assert select_tau(TailModel.bounded(2.5), n=100, t=3.0) == 2.5

    @pytest.mark.parametrize("tail,n,t", [
        (TailModel.exp_decay(0.7, 1.3, 1.0), 1000, 3.0),
        (TailModel.poly_decay(2.0, 3.0, 1.0), 500, 2.0),
        (TailModel.bounded(4.0), 200, 1.0),
    ])
    def test_budget_within_target(self, tail, n, t):
        tau = select_tau(tail, n, t)
        assert n * tail.evaluate(tau) <= math.exp(-t) + 1e-12

    def test_composite_bisection_tight(self):
        spec = ProcessSpec(
            cbs=CbsSpec(dim=4, coeffs=GeometricDecay(0.5, 0.5), innovation_bound=1.0),
            noise=NoiseSpec.poly_moment(4, 6.0, 1.0),
        )
        tail = tail_model(spec)
        n, t = 500, 3.0
        tau = select_tau(tail, n, t)
        assert n * tail.evaluate(tau) <= math.exp(-t) + 1e-12
        assert n * tail.evaluate(tau * (1.0 - 1e-6)) > math.exp(-t)

    def test_composite_respects_envelope_floor(self):
        spec = ProcessSpec(
            cbs=CbsSpec(dim=4, coeffs=GeometricDecay(0.5, 0.5), innovation_bound=1.0),
            noise=NoiseSpec.bounded(4, 0.0),
        )
        tau = select_tau(tail_model(spec), n=100, t=1.0)
        assert tau > 4.0  # 4 B^2 with B = 1


class TestBoundCovariance:
    def test_zero_noise_reduces_to_bounded_formula(self):
        inp = composite_input(NoiseSpec.bounded(4, 0.0), tau=4.0 + 1e-9)
        report = bound_covariance(inp)
        reference = bound_heavy(BoundInput(
            sigma_norm=1.0, eff_rank=4.0, gamma_n=0.0, n=100, t=1.0,
            tail=TailModel.bounded(4.0 + 1e-9), tau=4.0 + 1e-9,
        ))
        assert report.bound_value == reference.bound_value
        assert report.failure_prob == reference.failure_prob

    def test_vacuous_flagged(self):
        inp = composite_input(NoiseSpec.poly_moment(4, 6.0, 1.0), tau=1.0)
        report = bound_covariance(inp)
        assert report.vacuous
        assert report.failure_prob == 1.0
        assert "vacuous" in report.notes

    def test_full_substitution(self):
        noise = NoiseSpec.poly_moment(4, 6.0, 1.0)
        inp = composite_input(noise, tau=86.0, n=500, t=3.0, eff_rank=20.0, gamma_n=6.0)
        report = bound_covariance(inp)
        tail_at_tau = noise.tail(86.0 / 4.0)
        v = inp.tail.moment_bound
        expected = (2.0 * math.sqrt(2.0) * 1.0 * (2.0 * 86.0 + 6.0)
                    * math.sqrt((4.0 * 20.0 + 3.0) / 500.0) + v * math.sqrt(tail_at_tau))
        assert abs(report.bound_value - expected) < 1e-12 * expected
        assert abs(report.failure_prob - (math.exp(-3.0) + 500.0 * tail_at_tau)) < 1e-15


class TestBoundLagged:
    def test_split_form_dominates(self):
        rng = np.random.default_rng(4)
        noise = NoiseSpec.poly_moment(4, 6.0, 1.0)
        for _ in range(25):
            sigma_norm = float(rng.uniform(0.5, 2.0))
            sigma1_norm = float(rng.uniform(0.0, 1.5))
            sigma01_norm = float(rng.uniform(
                max(sigma_norm, 1e-6), sigma_norm + sigma1_norm + 1e-12
            ))
            inp = composite_input(noise, sigma_norm=sigma_norm, n=200, t=2.0, tau=90.0)
            first, second = bound_lagged(inp, sigma01_norm, 5.0, sigma1_norm)
            assert second.bound_value >= first.bound_value - 1e-12

    def test_trace_identity_rank(self):
        # augmented trace is twice the base trace
        assert abs(lagged_effective_rank(2.0, 3.0, 4.0) - 3.0) < 1e-15

    def test_full_substitution(self):
        noise = NoiseSpec.poly_moment(4, 6.0, 1.0)
        inp = composite_input(noise, n=400, t=2.0, gamma_n=1.5, tau=100.0)
        first, second = bound_lagged(inp, sigma01_norm=1.8, r01=6.0, sigma1_norm=0.9)
        tail_value = min(1.0, 4.0 * noise.tail(50.0))  # theta/2 with theta=100, above 4B^2
        v = inp.tail.moment_bound
        coeff = 32.0 * 1.0 + 1.5
        spread = math.sqrt((4.0 * 6.0 + 2.0) / 399.0)
        expected_first = 4.0 * math.sqrt(2.0) * 1.8 * coeff * spread + v * math.sqrt(tail_value)
        expected_second = (4.0 * math.sqrt(2.0) * (0.9 + 1.0) * coeff * spread
                           + v * math.sqrt(tail_value))
        assert abs(first.bound_value - expected_first) < 1e-12 * expected_first
        assert abs(second.bound_value - expected_second) < 1e-12 * expected_second
        assert abs(first.failure_prob - min(1.0, math.exp(-2.0) + 400 * tail_value)) < 1e-15


class TestBoundHmm:
    def composite(self, t=10.0, sigma1_norm=0.5):
        noise = NoiseSpec.exp_moment(4, 1.0, 1.0)
        inp = composite_input(noise, t=t)
        return bound_hmm(inp, sigma1_norm)

    def test_monotone_in_lagged_norm(self):
        low = self.composite(sigma1_norm=0.2)
        high = self.composite(sigma1_norm=0.8)
        assert high.bound_value > low.bound_value

    def test_bounded_noise_kills_additive(self):
        noise = NoiseSpec.bounded(4, 1.0)
        inp = composite_input(noise, t=10.0)  # t/2 = 5 > lam^2 = 1
        report = bound_hmm(inp, 0.5)
        assert report.terms["additive"] == 0.0

    def test_precondition_on_t(self):
        noise = NoiseSpec.exp_moment(4, 1.0, 1.0)
        inp = composite_input(noise, t=1.0)  # 2 B^2 = 2 with B = 1
        with pytest.raises(DomainError, match="2 B"):
            bound_hmm(inp, 0.5)

    def test_full_substitution(self):
        noise = NoiseSpec.exp_moment(4, 1.0, 1.0)
        inp = composite_input(noise, sigma_norm=1.2, eff_rank=3.0, gamma_n=0.7,
                              n=300, t=8.0)
        report = bound_hmm(inp, 0.6)
        noise_tail = noise.tail(4.0)
        v = inp.tail.moment_bound
        expected = (4.0 * math.sqrt(2.0) * (0.6 + 1.2) * 1.2 * 1.6
                    * (32.0 + 0.7) * math.sqrt((12.0 + 8.0) / 300.0)
                    + 2.0 * v * 1.6 * math.sqrt(noise_tail))
        assert abs(report.bound_value - expected) < 1e-12 * expected


class TestBoundRegression:
    def make(self, theta_norm=1.0, c=2.0, trace_c=0.1, noise_variance=0.5, **kwargs):
        noise = NoiseSpec.poly_moment(4, 6.0, 1.0)
        defaults = dict(t=5.0, n=100, tau=50.0)
        defaults.update(kwargs)
        inp = composite_input(noise, **defaults)
        return bound_regression(inp, theta_norm, c, trace_c, noise_variance)

    def test_zero_truth_leaves_variance_only(self):
        report = self.make(theta_norm=0.0)
        assert report.terms["main"] == 0.0
        assert report.terms["variance"] > 0.0

    def test_zero_noise_variance(self):
        report = self.make(noise_variance=0.0)
        assert report.terms["variance"] == 0.0

    def test_t_outside_interval(self):
        with pytest.raises(DomainError, match="must lie in"):
            self.make(t=0.5)  # below B^2 = 1
        with pytest.raises(DomainError, match="must lie in"):
            self.make(t=60.0)  # above n / c = 50

    def test_full_substitution(self):
        noise = NoiseSpec.poly_moment(4, 6.0, 1.0)
        inp = composite_input(noise, sigma_norm=0.9, eff_rank=5.0, gamma_n=0.4,
                              n=200, t=4.0, tau=30.0)
        report = bound_regression(inp, theta_norm=1.5, c=2.0, trace_c=0.25,
                                  noise_variance=0.36)
        v = inp.tail.moment_bound
        noise_tail = noise.tail(1.0)
        expected = (2.0 * math.sqrt(2.0) * 2.0 * 1.5**2 * 0.9 * (60.0 + 0.4)
                    * math.sqrt((20.0 + 4.0) / 200.0)
                    + v * math.sqrt(noise_tail)
                    + 2.0 * 4.0 * 0.36 * 0.25)
        assert abs(report.bound_value - expected) < 1e-12 * expected
        assert report.terms["variance"] == 2.0 * 4.0 * 0.36 * 0.25


class TestMonotonicityAndReports:
    def test_monotone_in_scalar_inputs(self):
        # Full bound is monotone in gamma_n, t, eff_rank (up) and n (down);
        # in tau only the main term is monotone, the additive term shrinks.
        rng = np.random.default_rng(44)
        tail = TailModel.exp_decay(0.8, 1.2, moment_bound=2.0)
        for _ in range(1000):
            base = dict(
                sigma_norm=float(rng.uniform(0.1, 3.0)),
                eff_rank=float(rng.uniform(1.0, 20.0)),
                gamma_n=float(rng.uniform(0.0, 5.0)),
                n=int(rng.integers(10, 5000)),
                t=float(rng.uniform(0.1, 6.0)),
                tau=float(rng.uniform(0.5, 8.0)),
            )
            bump = 1.0 + float(rng.uniform(0.01, 0.5))
            report = bound_heavy(BoundInput(tail=tail, **base))
            for key, direction in (("gamma_n", +1), ("t", +1), ("eff_rank", +1), ("n", -1)):
                shifted = dict(base)
                if key == "n":
                    shifted[key] = int(base[key] * 2)
                else:
                    shifted[key] = base[key] * bump
                other = bound_heavy(BoundInput(tail=tail, **shifted))
                if direction > 0:
                    assert other.bound_value >= report.bound_value - 1e-12
                else:
                    assert other.bound_value <= report.bound_value + 1e-12
            larger_tau = dict(base, tau=base["tau"] * bump)
            other = bound_heavy(BoundInput(tail=tail, **larger_tau))
            assert other.terms["main"] >= report.terms["main"] - 1e-12

    def test_report_round_trips_through_json(self):
        report = bound_bounded(bounded_input())
        parsed = json.loads(report.to_json())
        assert parsed["bound_value"] == report.bound_value
        assert parsed["failure_prob"] == report.failure_prob
        assert parsed["terms"]["main"] == report.terms["main"]
        assert parsed["regime"] == "bounded"
        assert set(parsed) == {"bound_value", "failure_prob", "regime", "tau_used",
                               "terms", "vacuous", "notes"}

    def test_invalid_inputs_rejected(self):
        tail = TailModel.bounded(1.0)
        with pytest.raises(DomainError):
            BoundInput(sigma_norm=0.0, eff_rank=1.0, gamma_n=0.0, n=10, t=1.0, tail=tail)
        with pytest.raises(DomainError):
            BoundInput(sigma_norm=1.0, eff_rank=0.5, gamma_n=0.0, n=10, t=1.0, tail=tail)
        with pytest.raises(DomainError):
            BoundInput(sigma_norm=1.0, eff_rank=1.0, gamma_n=-0.1, n=10, t=1.0, tail=tail)
