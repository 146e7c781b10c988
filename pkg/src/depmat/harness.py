"""Monte Carlo certification engine.

Turns a JSON experiment configuration into coverage certificates,
convergence-rate sweeps and dimension-freeness sweeps.  Every run is a pure
function of ``(config, master_seed)``: per-trial streams come from a
splittable hash of the master seed and the trial index, and aggregation is
ordered by trial index, so worker count and scheduling never change a
result.  ``DEPMAT_THREADS`` caps the worker pool (default: one worker per
core).

Bounds are evaluated in oracle mode only: the target norm, effective rank
and dependence coefficient come from the process closed forms, which is
what the guarantees are stated for.  Plug-in quantities estimated from data
are heuristic and are never asserted here.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

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
)
from .errors import ConfigError, VacuousBoundError
from .estimators import (
    HmmTruth,
    RegressionData,
    covariance_estimator,
    excess_risk,
    hmm_estimate,
    lagged_covariance,
    min_norm_regression,
    truncated_covariance,
)
from .procgen import (
    CbsSpec,
    FiniteTaps,
    GeometricDecay,
    HmmSpec,
    NoiseSpec,
    PolynomialDecay,
    ProcessSpec,
    TailModel,
    gamma_profile,
    simulate_hmm,
    simulate_observations,
    split_seed,
    stationary_covariance,
    lag1_cross_covariance,
    tail_model,
    var_as_cim,
)
from .specmat import effective_rank, operator_norm, spectral_norm

_WILSON_Z = 1.959963984540054  # two-sided 95%

_ESTIMATOR_KINDS = ("empirical", "covariance", "truncated", "lagged", "hmm", "regression")
_BOUND_REGIMES = ("auto", "bounded", "heavy", "covariance", "lagged", "hmm", "regression")

# Stream tags for experiment-level draws (distinct from trial indices).
_THETA_STREAM = 0x7468
_RESPONSE_STREAM = 0x7265


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpikedSpec:
    """Independent draws with a spiked spectrum of fixed effective rank.

    ``Y = sqrt(spectrum) * u`` with coordinates of ``u`` i.i.d. uniform on
    ``[-sqrt(3), sqrt(3)]`` (unit variance), so the covariance is
    ``diag(1, d, ..., d)`` with ``d = (r - 1)/(p - 1)`` and the norm cap is
    ``||Y||^2 <= 3 * trace = 3 r`` regardless of the dimension.
    """

    dim: int
    eff_rank: float

    def __post_init__(self):
        if self.dim < 2:
            raise ConfigError(f"spiked spectra need dimension >= 2, got {self.dim}")
        if not 1 <= self.eff_rank <= self.dim:
            raise ConfigError(
                f"effective rank must lie in [1, {self.dim}], got {self.eff_rank}"
            )

    @property
    def spectrum(self) -> np.ndarray:
        bulk = (self.eff_rank - 1.0) / (self.dim - 1.0)
        out = np.full(self.dim, bulk)
        out[0] = 1.0
        return out

    def covariance(self) -> np.ndarray:
        return np.diag(self.spectrum)

    def norm_cap(self) -> float:
        return 3.0 * self.eff_rank

    def sample(self, n: int, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        u = rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), size=(n, self.dim))
        return u * np.sqrt(self.spectrum)


@dataclass(frozen=True)
class EstimatorConfig:
    kind: str
    tau: float | None = None  # None means "auto" where a tau is needed
    center: bool = False


@dataclass(frozen=True)
class BoundConfig:
    regime: str
    t: float
    tau: float | None = None  # None means "auto"


@dataclass(frozen=True)
class RegressionConfig:
    theta_norm: float
    noise_std: float
    c: float


@dataclass(frozen=True)
class ExperimentConfig:
    """Parsed experiment description; see ``parse_config`` for the schema."""

    process: ProcessSpec | HmmSpec | SpikedSpec
    process_dict: dict
    estimator: EstimatorConfig
    bound: BoundConfig
    trials: int
    n_grid: tuple
    p: int
    master_seed: int
    p_grid: tuple | None = None
    output_path: str | None = None
    regression: RegressionConfig | None = None

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        return parse_config(raw)

    @classmethod
    def from_json_file(cls, path) -> "ExperimentConfig":
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        try:
            raw = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {p} is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
        return parse_config(raw)


def _check_keys(d: dict, required: set, optional: set, where: str) -> None:
    keys = set(d)
    missing = required - keys
    if missing:
        raise ConfigError(f"{where}: missing keys {sorted(missing)}")
    unknown = keys - required - optional
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")


def _number(d: dict, key: str, where: str, *, minimum=None, strict=False) -> float:
    value = d[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}.{key} must be a number, got {value!r}")
    value = float(value)
    if minimum is not None and (value <= minimum if strict else value < minimum):
        cmp = ">" if strict else ">="
        raise ConfigError(f"{where}.{key} must be {cmp} {minimum}, got {value}")
    return value


def _integer(d: dict, key: str, where: str, minimum: int) -> int:
    value = d[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{where}.{key} must be an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(f"{where}.{key} must be >= {minimum}, got {value}")
    return value


def _parse_coeffs(d: dict) -> GeometricDecay | PolynomialDecay | FiniteTaps:
    if not isinstance(d, dict) or "family" not in d:
        raise ConfigError("process.coeffs must be an object with a 'family' key")
    family = d["family"]
    if family == "geometric":
        _check_keys(d, {"family", "alpha1", "ratio"}, set(), "process.coeffs")
        return GeometricDecay(_number(d, "alpha1", "coeffs", minimum=0, strict=True),
                              _number(d, "ratio", "coeffs"))
    if family == "poly":
        _check_keys(d, {"family", "alpha1", "exponent"}, set(), "process.coeffs")
        return PolynomialDecay(_number(d, "alpha1", "coeffs", minimum=0, strict=True),
                               _number(d, "exponent", "coeffs"))
    if family == "taps":
        _check_keys(d, {"family", "values"}, set(), "process.coeffs")
        values = d["values"]
        if not isinstance(values, list) or not values:
            raise ConfigError("process.coeffs.values must be a non-empty list")
        return FiniteTaps(tuple(values))
    raise ConfigError(f"unknown coefficient family {family!r}")


def _parse_noise(d: dict, p: int) -> NoiseSpec:
    if not isinstance(d, dict) or "kind" not in d:
        raise ConfigError("process.noise must be an object with a 'kind' key")
    kind = d["kind"]
    if kind == "bounded":
        _check_keys(d, {"kind", "lam"}, set(), "process.noise")
        return NoiseSpec.bounded(p, _number(d, "lam", "noise", minimum=0))
    if kind == "poly":
        _check_keys(d, {"kind", "k", "lam"}, set(), "process.noise")
        return NoiseSpec.poly_moment(p, _number(d, "k", "noise"), _number(d, "lam", "noise"))
    if kind == "exp":
        _check_keys(d, {"kind", "k", "lam"}, set(), "process.noise")
        return NoiseSpec.exp_moment(p, _number(d, "k", "noise"), _number(d, "lam", "noise"))
    raise ConfigError(f"unknown noise kind {kind!r}")


def _parse_process(d: dict, p: int):
    if not isinstance(d, dict) or "kind" not in d:
        raise ConfigError("process must be an object with a 'kind' key")
    kind = d["kind"]
    if kind == "cbs":
        _check_keys(d, {"kind", "coeffs", "innovation_bound", "noise"},
                    {"horizon_tol"}, "process")
        cbs = CbsSpec(
            dim=p,
            coeffs=_parse_coeffs(d["coeffs"]),
            innovation_bound=_number(d, "innovation_bound", "process", minimum=0, strict=True),
            horizon_tol=_number(d, "horizon_tol", "process", minimum=0, strict=True)
            if "horizon_tol" in d else 1e-10,
        )
        return ProcessSpec(cbs=cbs, noise=_parse_noise(d["noise"], p))
    if kind == "var":
        _check_keys(d, {"kind", "transition_norm", "innovation_bound", "noise"},
                    {"horizon_tol"}, "process")
        cbs = var_as_cim(
            _number(d, "transition_norm", "process", minimum=0),
            _number(d, "innovation_bound", "process", minimum=0, strict=True),
            p,
            _number(d, "horizon_tol", "process", minimum=0, strict=True)
            if "horizon_tol" in d else 1e-10,
        )
        return ProcessSpec(cbs=cbs, noise=_parse_noise(d["noise"], p))
    if kind == "hmm":
        _check_keys(d, {"kind", "transition_coeff"}, {"horizon_tol"}, "process")
        return HmmSpec(
            dim=p,
            transition_coeff=_number(d, "transition_coeff", "process"),
            horizon_tol=_number(d, "horizon_tol", "process", minimum=0, strict=True)
            if "horizon_tol" in d else 1e-10,
        )
    if kind == "spiked":
        _check_keys(d, {"kind", "eff_rank"}, set(), "process")
        return SpikedSpec(dim=p, eff_rank=_number(d, "eff_rank", "process", minimum=1))
    raise ConfigError(f"unknown process kind {kind!r}")


def process_to_config(spec: ProcessSpec | HmmSpec | SpikedSpec) -> dict:
    """Emit the config-format dict a process spec parses back from."""
    if isinstance(spec, SpikedSpec):
        return {"kind": "spiked", "eff_rank": spec.eff_rank}
    if isinstance(spec, HmmSpec):
        return {"kind": "hmm", "transition_coeff": spec.transition_coeff,
                "horizon_tol": spec.horizon_tol}
    cbs = spec.cbs
    noise = spec.noise
    if noise.kind == "bounded":
        noise_dict = {"kind": "bounded", "lam": noise.lam}
    else:
        noise_dict = {"kind": noise.kind, "k": noise.k, "lam": noise.lam}
    if cbs.recursion is not None:
        return {
            "kind": "var",
            "transition_norm": cbs.coeffs.ratio,
            "innovation_bound": cbs.innovation_bound,
            "horizon_tol": cbs.horizon_tol,
            "noise": noise_dict,
        }
    if isinstance(cbs.coeffs, GeometricDecay):
        coeffs = {"family": "geometric", "alpha1": cbs.coeffs.alpha1, "ratio": cbs.coeffs.ratio}
    elif isinstance(cbs.coeffs, PolynomialDecay):
        coeffs = {"family": "poly", "alpha1": cbs.coeffs.alpha1,
                  "exponent": cbs.coeffs.exponent}
    else:
        coeffs = {"family": "taps", "values": list(cbs.coeffs.values)}
    return {
        "kind": "cbs",
        "coeffs": coeffs,
        "innovation_bound": cbs.innovation_bound,
        "horizon_tol": cbs.horizon_tol,
        "noise": noise_dict,
    }


def _parse_tau(d: dict, key: str, where: str) -> float | None:
    if key not in d or d[key] == "auto":
        return None
    return _number(d, key, where, minimum=0, strict=True)


def parse_config(raw: dict) -> ExperimentConfig:
    """Parse and validate the JSON experiment schema; unknown keys are rejected.

    Top level: ``process``, ``estimator``, ``bound``, ``trials``,
    ``n_grid``, ``p``, ``master_seed`` (all required), plus optional
    ``p_grid``, ``output_path`` and ``regression``.
    """
    _check_keys(
        raw,
        {"process", "estimator", "bound", "trials", "n_grid", "p", "master_seed"},
        {"p_grid", "output_path", "regression"},
        "config",
    )
    p = _integer(raw, "p", "config", minimum=1)
    process = _parse_process(raw["process"], p)

    est_raw = raw["estimator"]
    if not isinstance(est_raw, dict) or "kind" not in est_raw:
        raise ConfigError("estimator must be an object with a 'kind' key")
    _check_keys(est_raw, {"kind"}, {"tau", "center"}, "estimator")
    if est_raw["kind"] not in _ESTIMATOR_KINDS:
        raise ConfigError(f"unknown estimator kind {est_raw['kind']!r}")
    estimator = EstimatorConfig(
        kind=est_raw["kind"],
        tau=_parse_tau(est_raw, "tau", "estimator"),
        center=bool(est_raw.get("center", False)),
    )

    bound_raw = raw["bound"]
    if not isinstance(bound_raw, dict):
        raise ConfigError("bound must be an object")
    _check_keys(bound_raw, {"regime", "t"}, {"tau"}, "bound")
    if bound_raw["regime"] not in _BOUND_REGIMES:
        raise ConfigError(f"unknown bound regime {bound_raw['regime']!r}")
    bound = BoundConfig(
        regime=bound_raw["regime"],
        t=_number(bound_raw, "t", "bound", minimum=0, strict=True),
        tau=_parse_tau(bound_raw, "tau", "bound"),
    )

    trials = _integer(raw, "trials", "config", minimum=1)
    n_grid = raw["n_grid"]
    if (not isinstance(n_grid, list) or not n_grid
            or any(isinstance(v, bool) or not isinstance(v, int) for v in n_grid)):
        raise ConfigError("n_grid must be a non-empty list of integers")
    if any(b <= a for a, b in zip(n_grid, n_grid[1:])) or n_grid[0] < 1:
        raise ConfigError("n_grid must be strictly increasing and positive")

    p_grid = None
    if "p_grid" in raw:
        pg = raw["p_grid"]
        if (not isinstance(pg, list) or not pg
                or any(isinstance(v, bool) or not isinstance(v, int) for v in pg)):
            raise ConfigError("p_grid must be a non-empty list of integers")
        if any(b <= a for a, b in zip(pg, pg[1:])) or pg[0] < 1:
            raise ConfigError("p_grid must be strictly increasing and positive")
        p_grid = tuple(pg)

    master_seed = raw["master_seed"]
    if isinstance(master_seed, bool) or not isinstance(master_seed, int):
        raise ConfigError(f"master_seed must be an integer, got {master_seed!r}")

    regression = None
    if "regression" in raw:
        reg = raw["regression"]
        _check_keys(reg, {"theta_norm", "noise_std", "c"}, set(), "regression")
        regression = RegressionConfig(
            theta_norm=_number(reg, "theta_norm", "regression", minimum=0),
            noise_std=_number(reg, "noise_std", "regression", minimum=0),
            c=_number(reg, "c", "regression", minimum=1, strict=True),
        )

    config = ExperimentConfig(
        process=process,
        process_dict=raw["process"],
        estimator=estimator,
        bound=bound,
        trials=trials,
        n_grid=tuple(n_grid),
        p=p,
        master_seed=master_seed,
        p_grid=p_grid,
        output_path=raw.get("output_path"),
        regression=regression,
    )
    _validate_combination(config)
    return config


def _validate_combination(config: ExperimentConfig) -> None:
    kind = config.estimator.kind
    regime = config.bound.regime
    process = config.process
    if kind == "regression" and config.regression is None:
        raise ConfigError("regression estimator requires a 'regression' block")
    combos = {
        "empirical": {"auto", "bounded", "heavy", "covariance"},
        "covariance": {"auto", "bounded", "heavy", "covariance"},
        "truncated": {"auto", "bounded", "heavy", "covariance"},
        "lagged": {"auto", "lagged"},
        "hmm": {"auto", "hmm"},
        "regression": {"auto", "regression"},
    }
    if regime not in combos[kind]:
        raise ConfigError(f"bound regime {regime!r} does not certify estimator {kind!r}")
    if isinstance(process, HmmSpec) and kind != "hmm":
        raise ConfigError("hidden-state processes pair with the hmm estimator only")
    if kind == "hmm" and not isinstance(process, HmmSpec):
        raise ConfigError("the hmm estimator needs a process of kind 'hmm'")
    if isinstance(process, SpikedSpec):
        if kind not in ("covariance", "empirical"):
            raise ConfigError("spiked processes pair with the covariance estimator")
        if regime not in ("auto", "bounded"):
            raise ConfigError("spiked processes certify through the bounded regime")


def _resolve_regime(config: ExperimentConfig) -> str:
    regime = config.bound.regime
    if regime != "auto":
        return regime
    kind = config.estimator.kind
    if kind in ("empirical", "covariance", "truncated"):
        process = config.process
        if isinstance(process, SpikedSpec):
            return "bounded"
        if isinstance(process, ProcessSpec) and process.noise.is_bounded:
            return "bounded"
        return "covariance"
    return kind  # lagged / hmm / regression name their own regime


# ---------------------------------------------------------------------------
# Coverage
# ---------------------------------------------------------------------------


def wilson_interval(successes: int, total: int, z: float = _WILSON_Z) -> tuple[float, float]:
    """95% Wilson score interval for a binomial proportion."""
    if total < 1 or not 0 <= successes <= total:
        raise ConfigError(f"invalid counts for an interval: {successes}/{total}")
    phat = successes / total
    denom = 1.0 + z * z / total
    center = (phat + z * z / (2.0 * total)) / denom
    half = z * math.sqrt(phat * (1.0 - phat) / total + z * z / (4.0 * total * total)) / denom
    return max(0.0, center - half), min(1.0, center + half)


@dataclass(frozen=True)
class CoverageReport:
    """Empirical certificate of a probabilistic bound.

    ``empirical_coverage`` is the fraction of trials whose deviation fell
    below the bound; for a correct conservative bound it should not
    undershoot ``nominal_coverage`` beyond binomial noise (the Wilson
    interval quantifies that noise).
    """

    per_trial_deviation: tuple
    per_trial_bound: tuple
    bound_value: float
    nominal_coverage: float
    empirical_coverage: float
    wilson_interval: tuple
    n: int
    p: int
    trials: int
    regime: str
    notes: str = ""

    def as_dict(self) -> dict:
        return {
            "bound_value": self.bound_value,
            "nominal_coverage": self.nominal_coverage,
            "empirical_coverage": self.empirical_coverage,
            "wilson_low": self.wilson_interval[0],
            "wilson_high": self.wilson_interval[1],
            "n": self.n,
            "p": self.p,
            "trials": self.trials,
            "regime": self.regime,
            "notes": self.notes,
        }

    def csv_rows(self):
        for i, (dev, bnd) in enumerate(zip(self.per_trial_deviation, self.per_trial_bound)):
            yield {
                "trial": i,
                "n": self.n,
                "p": self.p,
                "deviation": dev,
                "bound": bnd,
                "covered": int(dev <= bnd),
            }

    def write_csv(self, path) -> None:
        write_csv(path, ("trial", "n", "p", "deviation", "bound", "covered"),
                  self.csv_rows())


def write_csv(path, header, rows) -> None:
    """Write rows of numbers; floats use repr so parsing them back is exact."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_csv_cell(row[name]) for name in header))
    Path(path).write_text("\n".join(lines) + "\n")


def _csv_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def read_csv(path) -> list[dict]:
    """Parse a file written by ``write_csv`` back into typed rows."""
    lines = Path(path).read_text().strip().splitlines()
    header = lines[0].split(",")
    rows = []
    for line in lines[1:]:
        cells = line.split(",")
        row = {}
        for name, cell in zip(header, cells):
            try:
                row[name] = int(cell)
            except ValueError:
                row[name] = float(cell)
        rows.append(row)
    return rows


def _worker_count() -> int:
    raw = os.environ.get("DEPMAT_THREADS")
    if raw is None or raw == "":
        return os.cpu_count() or 1
    try:
        count = int(raw)
    except ValueError as exc:
        raise ConfigError(f"DEPMAT_THREADS must be an integer, got {raw!r}") from exc
    return max(1, count)


def _map_trials(fn, count: int) -> list:
    workers = min(_worker_count(), count)
    if workers <= 1:
        return [fn(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(count)))


@dataclass(frozen=True)
class _CoverageMachinery:
    report: BoundReport
    nominal: float
    trial: object  # callable seed -> (deviation, bound)
    notes: str = ""


def _covariance_machinery(config: ExperimentConfig, n: int) -> _CoverageMachinery:
    process = config.process
    regime = _resolve_regime(config)
    if isinstance(process, SpikedSpec):
        sigma = process.covariance()
        sigma_norm = 1.0
        rank = float(process.eff_rank)
        gamma_n = 0.0
        tail = TailModel.bounded(process.norm_cap())
        simulate = process.sample
    else:
        sigma = stationary_covariance(process)
        sigma_norm = operator_norm(sigma)
        rank = effective_rank(sigma)
        gamma_n = gamma_profile(process, n).max
        if regime == "bounded":
            cap = process.norm_cap()
            if cap is None:
                raise ConfigError("bounded regime needs a bounded noise model")
            tail = TailModel.bounded(cap)
        else:
            tail = tail_model(process)

        def simulate(count, seed):
            return simulate_observations(process, count, seed)

    inp = BoundInput(sigma_norm=sigma_norm, eff_rank=rank, gamma_n=gamma_n,
                     n=n, t=config.bound.t, tail=tail, tau=config.bound.tau)
    if regime == "bounded":
        report = bound_bounded(inp)
    elif regime == "heavy":
        report = bound_heavy(inp)
    else:
        report = bound_covariance(inp)

    nominal = 1.0 - report.failure_prob
    notes = ""
    if config.estimator.kind == "truncated":
        # The truncated-sample mean keeps the same bound and only pays the
        # exp(-t) budget; no tail-event budget is burned.
        nominal = 1.0 - math.exp(-config.bound.t)
        notes = "truncated estimator: nominal coverage uses the exp(-t) budget only"

    est_tau = config.estimator.tau
    if config.estimator.kind == "truncated" and est_tau is None:
        est_tau = report.tau_used

    kind = config.estimator.kind
    center = config.estimator.center

    def trial(seed: int) -> tuple[float, float]:
        y = simulate(n, seed)
        if kind == "truncated":
            est = truncated_covariance(y, est_tau)
        else:
            est = covariance_estimator(y, center=center)
        deviation = operator_norm(est.entries - sigma)
        return deviation, report.bound_value

    return _CoverageMachinery(report=report, nominal=nominal, trial=trial, notes=notes)


def _lagged_machinery(config: ExperimentConfig, n: int) -> _CoverageMachinery:
    process = config.process
    if not isinstance(process, ProcessSpec):
        raise ConfigError("the lagged estimator needs a cbs or var process")
    sigma = stationary_covariance(process)
    sigma1 = lag1_cross_covariance(process)
    sigma01 = np.block([[sigma, sigma1], [sigma1.T, sigma]])
    sigma_norm = operator_norm(sigma)
    sigma01_norm = operator_norm(sigma01)
    rank01 = lagged_effective_rank(sigma_norm, effective_rank(sigma), sigma01_norm)
    # The augmented pair process carries doubled filter weights, hence
    # twice the base dependence coefficient.
    gamma_n = 2.0 * gamma_profile(process, n).max
    inp = BoundInput(sigma_norm=sigma_norm, eff_rank=rank01, gamma_n=gamma_n,
                     n=n, t=config.bound.t, tail=tail_model(process), tau=config.bound.tau)
    report, _split_report = bound_lagged(inp, sigma01_norm, rank01,
                                         spectral_norm(sigma1))

    def trial(seed: int) -> tuple[float, float]:
        y = simulate_observations(process, n, seed)
        est = lagged_covariance(y, h=1)
        deviation = operator_norm(est.augmented.entries - sigma01)
        return deviation, report.bound_value

    return _CoverageMachinery(report=report, nominal=1.0 - report.failure_prob, trial=trial)


def _hmm_machinery(config: ExperimentConfig, n: int) -> _CoverageMachinery:
    process = config.process
    assert isinstance(process, HmmSpec)
    sigma, sigma1 = process.true_moments()
    truth = HmmTruth(transition=process.transition, sigma=sigma, sigma1=sigma1)
    latent = process.latent
    observed = ProcessSpec(cbs=latent, noise=process.noise)
    gamma_n = 2.0 * gamma_profile(latent, n).max
    inp = BoundInput(
        sigma_norm=operator_norm(sigma),
        eff_rank=effective_rank(sigma),
        gamma_n=gamma_n,
        n=n,
        t=config.bound.t,
        tail=tail_model(observed),
    )
    report = bound_hmm(inp, spectral_norm(sigma1))

    def trial(seed: int) -> tuple[float, float]:
        y = simulate_hmm(process, n, seed)
        est = hmm_estimate(y, truth)
        return est.error_vs_target, report.bound_value

    return _CoverageMachinery(report=report, nominal=1.0 - report.failure_prob, trial=trial)


def _regression_machinery(config: ExperimentConfig, n: int) -> _CoverageMachinery:
    process = config.process
    if not isinstance(process, ProcessSpec):
        raise ConfigError("the regression estimator needs a cbs or var process")
    reg = config.regression
    sigma = stationary_covariance(process)
    sigma_norm = operator_norm(sigma)
    rank = effective_rank(sigma)
    gamma_n = gamma_profile(process, n).max
    tail = tail_model(process)
    rng = np.random.default_rng(split_seed(config.master_seed, _THETA_STREAM))
    direction = rng.standard_normal(config.p)
    theta_star = reg.theta_norm * direction / np.linalg.norm(direction)
    noise_var = reg.noise_std**2

    inp = BoundInput(sigma_norm=sigma_norm, eff_rank=rank, gamma_n=gamma_n,
                     n=n, t=config.bound.t, tail=tail, tau=config.bound.tau)
    # Trial-independent parts of the report; trace(C) is realised per design.
    probe = bound_regression(inp, reg.theta_norm, reg.c, 0.0, noise_var)

    def trial(seed: int) -> tuple[float, float]:
        y = simulate_observations(process, n, seed)
        noise_rng = np.random.default_rng(split_seed(seed, _RESPONSE_STREAM))
        responses = y @ theta_star + reg.noise_std * noise_rng.standard_normal(n)
        data = RegressionData(covariates=y, responses=responses,
                              noise_variance=max(noise_var, 1e-300))
        theta_hat = min_norm_regression(data)
        risk = excess_risk(theta_hat, theta_star, sigma)
        gram_inv_y = np.linalg.solve(y @ y.T, y)
        trace_c = float(np.sum(gram_inv_y * (gram_inv_y @ sigma)))
        report = bound_regression(inp, reg.theta_norm, reg.c, trace_c, noise_var)
        return risk, report.bound_value

    return _CoverageMachinery(
        report=probe,
        nominal=1.0 - probe.failure_prob,
        trial=trial,
        notes="per-trial bounds include the realised design variance term",
    )


def _machinery(config: ExperimentConfig, n: int) -> _CoverageMachinery:
    kind = config.estimator.kind
    if kind in ("empirical", "covariance", "truncated"):
        return _covariance_machinery(config, n)
    if kind == "lagged":
        return _lagged_machinery(config, n)
    if kind == "hmm":
        return _hmm_machinery(config, n)
    return _regression_machinery(config, n)


def run_coverage(config: ExperimentConfig) -> CoverageReport:
    """Certify the configured bound empirically over independent trials.

    Runs ``trials`` simulations at the single sample size in ``n_grid``,
    measures each operator-norm deviation against the oracle-mode bound and
    reports the empirical coverage with a 95% Wilson interval.  Vacuous
    bounds (failure probability at least 1) refuse to run.
    """
    if len(config.n_grid) != 1:
        raise ConfigError(
            f"coverage runs at a single sample size; n_grid has {len(config.n_grid)} "
            "entries (use sweep-rate for grids)"
        )
    n = config.n_grid[0]
    machinery = _machinery(config, n)
    if machinery.report.vacuous:
        raise VacuousBoundError(
            f"bound is vacuous: failure probability "
            f"{machinery.report.failure_prob:.6f} >= 1 "
            f"(regime {machinery.report.regime}, tau {machinery.report.tau_used:.6g}); "
            "raise tau or t, or increase n"
        )

    def one(i: int) -> tuple[float, float]:
        return machinery.trial(split_seed(config.master_seed, i))

    outcomes = _map_trials(one, config.trials)
    deviations = tuple(float(d) for d, _ in outcomes)
    per_bound = tuple(float(b) for _, b in outcomes)
    covered = sum(1 for d, b in zip(deviations, per_bound) if d <= b)
    interval = wilson_interval(covered, config.trials)
    return CoverageReport(
        per_trial_deviation=deviations,
        per_trial_bound=per_bound,
        bound_value=float(np.median(per_bound)),
        nominal_coverage=machinery.nominal,
        empirical_coverage=covered / config.trials,
        wilson_interval=interval,
        n=n,
        p=config.p,
        trials=config.trials,
        regime=machinery.report.regime,
        notes=machinery.notes,
    )


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RateSweepResult:
    """Median deviation per sample size and the fitted log-log slope."""

    rows: tuple  # (n, median_deviation)
    slope: float
    slope_stderr: float
    trials: int
    p: int

    def as_dict(self) -> dict:
        return {
            "rows": [{"n": n, "median_deviation": m} for n, m in self.rows],
            "slope": self.slope,
            "slope_stderr": self.slope_stderr,
            "trials": self.trials,
            "p": self.p,
        }

    def write_csv(self, path) -> None:
        write_csv(path, ("n", "median_deviation"),
                  ({"n": n, "median_deviation": m} for n, m in self.rows))


def run_rate_sweep(config: ExperimentConfig) -> RateSweepResult:
    """Median deviation against n and the least-squares log-log slope.

    Requires at least four grid points so the slope has a standard error
    worth reporting.
    """
    if len(config.n_grid) < 4:
        raise ConfigError(f"rate sweeps need an n_grid of length >= 4, got {len(config.n_grid)}")
    medians = []
    for idx, n in enumerate(config.n_grid):
        machinery = _machinery(config, n)
        cell_seed = split_seed(config.master_seed, idx)

        def one(i: int, _m=machinery, _s=cell_seed) -> float:
            return _m.trial(split_seed(_s, i))[0]

        deviations = _map_trials(one, config.trials)
        medians.append(float(np.median(deviations)))
    log_n = np.log(np.asarray(config.n_grid, dtype=np.float64))
    log_median = np.log(np.asarray(medians))
    slope, stderr = _fit_line(log_n, log_median)
    rows = tuple((int(n), m) for n, m in zip(config.n_grid, medians))
    return RateSweepResult(rows=rows, slope=slope, slope_stderr=stderr,
                           trials=config.trials, p=config.p)


def _fit_line(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    xbar = x.mean()
    ybar = y.mean()
    sxx = float(np.sum((x - xbar) ** 2))
    slope = float(np.sum((x - xbar) * (y - ybar)) / sxx)
    residuals = y - ybar - slope * (x - xbar)
    dof = len(x) - 2
    stderr = math.sqrt(float(np.sum(residuals**2)) / dof / sxx) if dof > 0 else float("nan")
    return slope, stderr


@dataclass(frozen=True)
class DimensionSweepResult:
    """Median deviation per dimension at a fixed effective rank.

    ``bound_value`` is the common theoretical bound: the formula carries no
    dimension, so it is one number for the whole grid.
    """

    rows: tuple  # (p, median_deviation)
    bound_value: float
    ratio: float
    trials: int
    n: int

    def as_dict(self) -> dict:
        return {
            "rows": [{"p": p, "median_deviation": m} for p, m in self.rows],
            "bound_value": self.bound_value,
            "max_min_ratio": self.ratio,
            "trials": self.trials,
            "n": self.n,
        }

    def write_csv(self, path) -> None:
        write_csv(
            path,
            ("p", "median_deviation", "bound"),
            ({"p": p, "median_deviation": m, "bound": self.bound_value}
             for p, m in self.rows),
        )


def run_dimension_sweep(config: ExperimentConfig) -> DimensionSweepResult:
    """Median deviation across a dimension grid with the spectrum's shape fixed.

    The spiked construction keeps ``||Sigma|| = 1`` and the effective rank
    constant while p grows, so the bounded-case bound is literally the same
    number at every p; the sweep certifies that the realised deviations are
    (nearly) flat too.
    """
    if config.p_grid is None:
        raise ConfigError("dimension sweeps need a p_grid")
    if not isinstance(config.process, SpikedSpec):
        raise ConfigError("dimension sweeps use the spiked process kind")
    if len(config.n_grid) != 1:
        raise ConfigError("dimension sweeps run at a single sample size")
    base = config.process
    n = config.n_grid[0]
    eff_rank = float(base.eff_rank)
    tail = TailModel.bounded(3.0 * eff_rank)
    inp = BoundInput(sigma_norm=1.0, eff_rank=eff_rank, gamma_n=0.0,
                     n=n, t=config.bound.t, tail=tail)
    report = bound_bounded(inp)
    rows = []
    for idx, p in enumerate(config.p_grid):
        spiked = SpikedSpec(dim=p, eff_rank=base.eff_rank)
        sigma = spiked.covariance()
        cell_seed = split_seed(config.master_seed, idx)

        def one(i: int, _s=spiked, _sig=sigma, _seed=cell_seed) -> float:
            y = _s.sample(n, split_seed(_seed, i))
            est = covariance_estimator(y)
            return operator_norm(est.entries - _sig)

        deviations = _map_trials(one, config.trials)
        rows.append((int(p), float(np.median(deviations))))
    medians = [m for _, m in rows]
    ratio = max(medians) / min(medians) if min(medians) > 0 else float("inf")
    return DimensionSweepResult(rows=tuple(rows), bound_value=report.bound_value,
                                ratio=ratio, trials=config.trials, n=n)


def bound_report_for(config: ExperimentConfig) -> BoundReport:
    """The oracle-mode bound report for a config (used by the CLI's bound command)."""
    if len(config.n_grid) < 1:
        raise ConfigError("n_grid must not be empty")
    return _machinery(config, config.n_grid[0]).report
