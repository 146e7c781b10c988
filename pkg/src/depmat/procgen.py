"""Dependent, heavy-tailed observation processes with closed-form structure.

The observation model is ``Y_l = X_l + eps_l`` where ``X_l`` is a causal
linear filter of bounded i.i.d. innovations (a stationary, weakly dependent
sequence with summable filter weights) and ``eps_l`` is independent noise in
one of three tail regimes: almost-surely bounded, polynomial moments, or
exponential moments.

Everything a certification run needs is available in closed form: the
process envelope, the dependence coefficients, the stationary covariance
and lag-one cross-covariance, the tail envelope of ``||Y Y^T||`` and a
second-moment bound.  Simulators are pure functions of ``(spec, n, seed)``;
per-trial streams are derived with :func:`split_seed` so results are
independent of worker scheduling.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.signal
import scipy.special

from .errors import DomainError
from .specmat import spectral_norm

DEFAULT_HORIZON_TOL = 1e-10

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_NOISE_STREAM = 0x6E6F6973  # tag separating the noise stream from the innovation stream

# Beyond this many filter taps the simulator switches to FFT convolution.
_DIRECT_FILTER_CAP = 256


def split_seed(master_seed: int, index: int) -> int:
    """SplitMix64-style hash of ``(master_seed, index)``.

    Gives every trial (or sub-stream) its own seed deterministically, so a
    run is a pure function of the master seed no matter how trials are
    scheduled across workers.
    """
    z = (master_seed + _GOLDEN * (index + 1)) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


# ---------------------------------------------------------------------------
# Filter coefficient families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GeometricDecay:
    """Filter weights ``alpha_i = alpha1 * ratio**(i - 1)`` for i >= 1."""

    alpha1: float
    ratio: float

    def __post_init__(self):
        if not self.alpha1 > 0:
            raise DomainError(f"alpha1 must be positive, got {self.alpha1}")
        if not 0 < self.ratio < 1:
            raise DomainError(f"ratio must lie in (0, 1), got {self.ratio}")

    def weights(self, m: int) -> np.ndarray:
        return self.alpha1 * self.ratio ** np.arange(m, dtype=np.float64)

    def total(self) -> float:
        return self.alpha1 / (1.0 - self.ratio)

    def tail(self, m) -> float:
        """``sum_{i > m} alpha_i``."""
        return self.alpha1 * self.ratio**m / (1.0 - self.ratio)

    def indexed_tail(self, a) -> float:
        """``sum_{i >= a} i * alpha_i`` (closed form)."""
        q = self.ratio
        return self.alpha1 * q ** (a - 1) * (a - (a - 1) * q) / (1.0 - q) ** 2

    def square_total(self) -> float:
        return self.alpha1**2 / (1.0 - self.ratio**2)

    def lag1_total(self) -> float:
        """``sum_i alpha_i * alpha_{i+1}``."""
        return self.alpha1**2 * self.ratio / (1.0 - self.ratio**2)

    def horizon(self, tol: float, scale: float) -> int:
        """Smallest m with ``tail(m) * scale <= tol``."""
        target = tol / (scale * self.alpha1 / (1.0 - self.ratio))
        if target >= 1.0:
            return 1
        return max(1, math.ceil(math.log(target) / math.log(self.ratio)))


@dataclass(frozen=True)
class PolynomialDecay:
    """Filter weights ``alpha_i = alpha1 * i**(-exponent)``, exponent > 2."""

    alpha1: float
    exponent: float

    def __post_init__(self):
        if not self.alpha1 > 0:
            raise DomainError(f"alpha1 must be positive, got {self.alpha1}")
        if not self.exponent > 2:
            raise DomainError(
                f"exponent must exceed 2 so that sum(i * alpha_i) converges, got {self.exponent}"
            )

    def weights(self, m: int) -> np.ndarray:
        return self.alpha1 * np.arange(1, m + 1, dtype=np.float64) ** (-self.exponent)

    def total(self) -> float:
        return self.alpha1 * float(scipy.special.zeta(self.exponent, 1))

    def tail(self, m) -> float:
        return self.alpha1 * float(scipy.special.zeta(self.exponent, np.asarray(m) + 1))

    def indexed_tail(self, a):
        # sum_{i >= a} i^(1 - s) is the Hurwitz zeta at (s - 1, a)
        return self.alpha1 * scipy.special.zeta(self.exponent - 1, a)

    def square_total(self) -> float:
        return self.alpha1**2 * float(scipy.special.zeta(2 * self.exponent, 1))

    def lag1_total(self) -> float:
        idx = np.arange(1, 200_001, dtype=np.float64)
        partial = float(np.sum(idx**-self.exponent * (idx + 1) ** -self.exponent))
        return self.alpha1**2 * partial

    def horizon(self, tol: float, scale: float) -> int:
        lo, hi = 1, 2
        while self.tail(hi) * scale > tol:
            hi *= 2
            if hi > 10**9:
                raise DomainError("filter horizon exceeds 1e9 taps; raise horizon_tol")
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if self.tail(mid) * scale <= tol:
                hi = mid
            else:
                lo = mid
        return hi if self.tail(lo) * scale > tol else lo


@dataclass(frozen=True)
class FiniteTaps:
    """An explicit finite list of non-negative filter weights; alpha_i = 0 beyond it."""

    values: tuple

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if len(vals) == 0 or vals[0] <= 0:
            raise DomainError("need at least one tap with a positive leading weight")
        if any(v < 0 for v in vals):
            raise DomainError("tap weights must be non-negative")
        object.__setattr__(self, "values", vals)

    def weights(self, m: int) -> np.ndarray:
        out = np.zeros(m)
        out[: min(m, len(self.values))] = self.values[:m]
        return out

    def total(self) -> float:
        return float(sum(self.values))

    def tail(self, m) -> float:
        return float(sum(self.values[int(m):]))

    def indexed_tail(self, a):
        idx = np.arange(1, len(self.values) + 1, dtype=np.float64)
        weighted = idx * np.asarray(self.values)
        a_arr = np.atleast_1d(np.asarray(a))
        out = np.array([weighted[idx >= bound].sum() for bound in a_arr])
        return out if np.ndim(a) else float(out[0])

    def square_total(self) -> float:
        return float(sum(v * v for v in self.values))

    def lag1_total(self) -> float:
        return float(sum(a * b for a, b in zip(self.values, self.values[1:])))

    def horizon(self, tol: float, scale: float) -> int:
        return len(self.values)


# ---------------------------------------------------------------------------
# Process specifications
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CbsSpec:
    """A causal linear filter of bounded i.i.d. innovations.

    ``X_l = sum_i alpha_i xi_{l-i+1}`` with innovation coordinates i.i.d.
    uniform on ``[-B_xi/sqrt(p), B_xi/sqrt(p)]``, so ``||xi|| <= B_xi``
    surely and the innovation covariance is ``B_xi^2/(3p) I``.  The sample
    path is bounded by ``B = (sum_i alpha_i) * B_xi``.

    When ``recursion`` is set the filter is realised as the first-order
    recursion ``X_l = recursion @ X_{l-1} + xi_l`` (whose unrolled weights
    are geometric in ``||recursion||``); the infinite past is replaced by a
    burn-in long enough that the discarded prefix contributes less than
    ``horizon_tol``.
    """

    dim: int
    coeffs: GeometricDecay | PolynomialDecay | FiniteTaps
    innovation_bound: float
    horizon_tol: float = DEFAULT_HORIZON_TOL
    recursion: np.ndarray | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise DomainError(f"dimension must be positive, got {self.dim}")
        if not self.innovation_bound > 0:
            raise DomainError(f"innovation bound must be positive, got {self.innovation_bound}")
        if not self.horizon_tol > 0:
            raise DomainError(f"horizon_tol must be positive, got {self.horizon_tol}")
        if self.recursion is not None:
            mat = np.asarray(self.recursion, dtype=np.float64)
            if mat.shape != (self.dim, self.dim):
                raise DomainError(f"recursion matrix must be {self.dim}x{self.dim}")
            if not isinstance(self.coeffs, GeometricDecay) or self.coeffs.alpha1 != 1.0:
                raise DomainError("a recursion requires geometric weights with alpha1 = 1")
            if spectral_norm(mat) > self.coeffs.ratio + 1e-9:
                raise DomainError("recursion norm exceeds the declared contraction ratio")
            mat.flags.writeable = False
            object.__setattr__(self, "recursion", mat)

    @property
    def envelope(self) -> float:
        """Almost-sure bound B on ``||X_l||``."""
        return self.coeffs.total() * self.innovation_bound

    @property
    def innovation_halfwidth(self) -> float:
        return self.innovation_bound / math.sqrt(self.dim)

    @property
    def innovation_cov_scale(self) -> float:
        """Innovation covariance is this scalar times the identity."""
        return self.innovation_halfwidth**2 / 3.0

    def filter_horizon(self) -> int:
        return self.coeffs.horizon(self.horizon_tol, self.innovation_bound)


@dataclass(frozen=True)
class NoiseSpec:
    """Centered isotropic observation noise in one of three tail regimes.

    kind "bounded":  coordinates i.i.d. uniform, ``||eps|| <= lam`` surely.
    kind "poly":     radial law ``R`` of Pareto type with shape ``k + 1``,
                     scaled so the moment bound ``E[R^k] = lam`` holds with
                     equality; direction uniform on the sphere.
    kind "exp":      Weibull radial law meeting ``P(||eps|| >= u) =
                     exp(-u^k / lam)`` with equality.

    ``tail(s)`` returns the implied bound on ``P(||eps||^2 >= s)``.
    """

    kind: str
    dim: int
    lam: float
    k: float | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise DomainError(f"dimension must be positive, got {self.dim}")
        if self.kind == "bounded":
            if self.lam < 0:
                raise DomainError(f"bounded noise level must be >= 0, got {self.lam}")
        elif self.kind == "poly":
            if self.k is None or not self.k > 4:
                raise DomainError(f"polynomial-moment order must exceed 4, got {self.k}")
            if not self.lam > 0:
                raise DomainError(f"moment bound must be positive, got {self.lam}")
        elif self.kind == "exp":
            if self.k is None or not self.k > 0:
                raise DomainError(f"exponential-moment exponent must be positive, got {self.k}")
            if not self.lam > 0:
                raise DomainError(f"scale must be positive, got {self.lam}")
        else:
            raise DomainError(f"unknown noise kind {self.kind!r}")

    @classmethod
    def bounded(cls, dim: int, lam: float) -> "NoiseSpec":
        return cls("bounded", dim, lam)

    @classmethod
    def poly_moment(cls, dim: int, k: float, lam: float) -> "NoiseSpec":
        return cls("poly", dim, lam, k)

    @classmethod
    def exp_moment(cls, dim: int, k: float, lam: float) -> "NoiseSpec":
        return cls("exp", dim, lam, k)

    @property
    def is_bounded(self) -> bool:
        return self.kind == "bounded"

    def _pareto_shape(self) -> float:
        return self.k + 1.0

    def _pareto_scale(self) -> float:
        # E[R^k] = x_m^k * a / (a - k) with a = k + 1 gives x_m^k = lam / (k + 1).
        return (self.lam / self._pareto_shape()) ** (1.0 / self.k)

    def _weibull_scale(self) -> float:
        return self.lam ** (1.0 / self.k)

    def radial_moment(self, order: int) -> float:
        """``E[||eps||^order]`` for order in {2, 4}, exact for the sampled law."""
        if self.kind == "bounded":
            c = self.lam / math.sqrt(self.dim)
            p = self.dim
            if order == 2:
                return p * c**2 / 3.0
            if order == 4:
                return c**4 * (p / 5.0 + p * (p - 1) / 9.0)
        elif self.kind == "poly":
            a = self._pareto_shape()
            xm = self._pareto_scale()
            if order < a:
                return xm**order * a / (a - order)
        elif self.kind == "exp":
            theta = self._weibull_scale()
            return theta**order * math.gamma(1.0 + order / self.k)
        raise DomainError(f"moment of order {order} unavailable for {self.kind} noise")

    @property
    def covariance_scale(self) -> float:
        """Noise covariance is this scalar times the identity."""
        if self.kind == "bounded" and self.lam == 0.0:
            return 0.0
        return self.radial_moment(2) / self.dim

    @property
    def fourth_moment(self) -> float:
        if self.kind == "bounded" and self.lam == 0.0:
            return 0.0
        return self.radial_moment(4)

    def tail(self, s: float) -> float:
        """Upper bound on ``P(||eps||^2 >= s)``, clipped to [0, 1]."""
        if s <= 0:
            return 1.0
        if self.kind == "bounded":
            return 1.0 if s <= self.lam**2 else 0.0
        if self.kind == "poly":
            return min(1.0, self.lam * s ** (-self.k / 2.0))
        return min(1.0, math.exp(-(s ** (self.k / 2.0)) / self.lam))

    def sample(self, n: int, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        if self.kind == "bounded":
            if self.lam == 0.0:
                return np.zeros((n, self.dim))
            half = self.lam / math.sqrt(self.dim)
            return rng.uniform(-half, half, size=(n, self.dim))
        direction = rng.standard_normal((n, self.dim))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        u = rng.random(n)
        if self.kind == "poly":
            radius = self._pareto_scale() * (1.0 - u) ** (-1.0 / self._pareto_shape())
        else:
            radius = self._weibull_scale() * (-np.log1p(-u)) ** (1.0 / self.k)
        return radius[:, None] * direction


@dataclass(frozen=True)
class ProcessSpec:
    """Observation process ``Y_l = X_l + eps_l``: filtered innovations plus noise."""

    cbs: CbsSpec
    noise: NoiseSpec

    def __post_init__(self):
        if self.cbs.dim != self.noise.dim:
            raise DomainError(
                f"filter dimension {self.cbs.dim} and noise dimension {self.noise.dim} disagree"
            )

    @property
    def dim(self) -> int:
        return self.cbs.dim

    @property
    def envelope(self) -> float:
        return self.cbs.envelope

    def norm_cap(self) -> float | None:
        """Almost-sure bound on ``||Y Y^T|| = ||Y||^2`` when the noise is bounded."""
        if self.noise.is_bounded:
            return (self.cbs.envelope + self.noise.lam) ** 2
        return None


# ---------------------------------------------------------------------------
# Dependence coefficients
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DependenceProfile:
    """Weak-dependence coefficients of the filtered process at horizon n.

    ``per_index[l-1]`` bounds the influence of the first ``l`` observations
    on Lipschitz statistics of the remaining ones; ``max`` is the worst
    case over ``l``, and ``cap`` is the horizon-free ceiling (infinite when
    the weighted tail diverges).
    """

    per_index: np.ndarray
    max: float
    cap: float


def _weighted_tail(coeffs, ells: np.ndarray, n: int) -> np.ndarray:
    """``sum_{i > l} min(i, n) alpha_i`` evaluated for each l in ells."""
    out = np.empty(len(ells), dtype=np.float64)
    below = ells < n
    if np.any(below):
        lo = ells[below]
        head = np.asarray(coeffs.indexed_tail(lo + 1)) - coeffs.indexed_tail(n + 1)
        out[below] = head + n * coeffs.tail(n)
    if np.any(~below):
        hi = ells[~below]
        tails = np.asarray([coeffs.tail(int(l)) for l in hi], dtype=np.float64)
        out[~below] = n * tails
    return out


def gamma_profile(spec: CbsSpec | ProcessSpec, n: int) -> DependenceProfile:
    """Dependence coefficients ``4 B B_xi sum_{i>l} min(i, n) alpha_i`` for l = 1..n.

    Closed form for geometric weights; Hurwitz-zeta evaluation for
    polynomial weights (exact, no truncation).  Independent noise does not
    change the coefficients, so a full observation spec is accepted too.
    """
    cbs = spec.cbs if isinstance(spec, ProcessSpec) else spec
    if n < 1:
        raise DomainError(f"horizon must be at least 1, got {n}")
    scale = 4.0 * cbs.envelope * cbs.innovation_bound
    ells = np.arange(1, n + 1)
    per_index = scale * _weighted_tail(cbs.coeffs, ells, n)
    per_index = np.maximum(per_index, 0.0)
    cap = scale * float(cbs.coeffs.indexed_tail(2))
    return DependenceProfile(per_index=per_index, max=float(per_index[0]), cap=cap)


# ---------------------------------------------------------------------------
# Tail models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TailModel:
    """Non-increasing envelope ``F`` on ``P(||M_l|| > t)`` plus a moment bound V.

    Regimes: "bounded" (indicator at ``kappa_sq``), "exp" (``exp(-a t^b)``),
    "poly" (``a t^-b`` with b > 2), and "composite" (bounded filter part
    plus noise: ``1{t <= 4B^2} + F_eps(t/4)``).
    """

    kind: str
    moment_bound: float
    kappa_sq: float | None = None
    decay_scale: float | None = None
    decay_power: float | None = None
    envelope: float | None = None
    noise: NoiseSpec | None = None
    moment_note: str = ""

    @classmethod
    def bounded(cls, kappa_sq: float, moment_bound: float | None = None) -> "TailModel":
        if not kappa_sq > 0:
            raise DomainError(f"norm cap must be positive, got {kappa_sq}")
        v = moment_bound if moment_bound is not None else kappa_sq
        return cls(kind="bounded", moment_bound=v, kappa_sq=kappa_sq)

    @classmethod
    def exp_decay(cls, a: float, b: float, moment_bound: float) -> "TailModel":
        if not (a > 0 and b > 0):
            raise DomainError(f"exponential decay needs a, b > 0, got a={a}, b={b}")
        return cls(kind="exp", moment_bound=moment_bound, decay_scale=a, decay_power=b)

    @classmethod
    def poly_decay(cls, a: float, b: float, moment_bound: float) -> "TailModel":
        if not (a > 0 and b > 2):
            raise DomainError(f"polynomial decay needs a > 0 and b > 2, got a={a}, b={b}")
        return cls(kind="poly", moment_bound=moment_bound, decay_scale=a, decay_power=b)

    @classmethod
    def composite(cls, envelope: float, noise: NoiseSpec, moment_bound: float,
                  moment_note: str = "") -> "TailModel":
        if not envelope > 0:
            raise DomainError(f"envelope must be positive, got {envelope}")
        return cls(kind="composite", moment_bound=moment_bound, envelope=envelope,
                   noise=noise, moment_note=moment_note)

    def evaluate(self, t: float) -> float:
        """F(t), clipped into [0, 1]."""
        if t <= 0:
            return 1.0
        if self.kind == "bounded":
            # Strict inequality: the cap is attained with probability zero,
            # so F vanishes exactly at t = kappa_sq.
            return 1.0 if t < self.kappa_sq else 0.0
        if self.kind == "exp":
            return min(1.0, math.exp(-self.decay_scale * t**self.decay_power))
        if self.kind == "poly":
            return min(1.0, self.decay_scale * t ** (-self.decay_power))
        value = (1.0 if t <= 4.0 * self.envelope**2 else 0.0) + self.noise.tail(t / 4.0)
        return min(1.0, max(0.0, value))

    def noise_tail(self, s: float) -> float:
        if self.kind != "composite":
            raise DomainError("noise tail is only defined for composite models")
        return self.noise.tail(s)


def tail_model(spec: ProcessSpec) -> TailModel:
    """Composite tail envelope and moment bound for ``M_l = Y_l Y_l^T``.

    ``V^2 = 8 (B^4 + E||eps||^4)`` via the crude quartic expansion of
    ``||Y||^4 <= (B + ||eps||)^4``; an upper bound, not tight, as recorded
    in ``moment_note``.
    """
    b = spec.envelope
    fourth = spec.noise.fourth_moment
    v = math.sqrt(8.0 * (b**4 + fourth))
    return TailModel.composite(
        envelope=b,
        noise=spec.noise,
        moment_bound=v,
        moment_note="V^2 = 8(B^4 + E||eps||^4): upper bound, not tight",
    )


# ---------------------------------------------------------------------------
# Reductions between process classes
# ---------------------------------------------------------------------------


def cim_to_cbs(beta0: float, contraction: float) -> GeometricDecay:
    """Rewrite a contracting memory chain as a filter with geometric weights.

    A chain ``X_l = D(xi_l, X_{l-1}, ...)`` whose memory weights sum to
    ``contraction`` unrolls into filter weights ``beta0 * contraction**(i-1)``.
    """
    if not beta0 > 0:
        raise DomainError(f"leading weight must be positive, got {beta0}")
    if not 0 < contraction < 1:
        raise DomainError(
            f"memory-weight sum must lie in (0, 1) for a stationary chain, got {contraction}"
        )
    return GeometricDecay(alpha1=beta0, ratio=contraction)


def var_as_cim(a_norm: float, noise_bound: float, dim: int,
               horizon_tol: float = DEFAULT_HORIZON_TOL,
               transition: np.ndarray | None = None) -> CbsSpec:
    """A first-order vector autoregression viewed as a contracting chain.

    ``X_l = A X_{l-1} + xi_l`` with ``||A|| = a_norm < 1`` has geometric
    unrolled weights ``a_norm**(i-1)`` (leading weight 1).  The returned
    spec simulates the recursion directly, with a burn-in chosen so the
    discarded prefix contributes less than ``horizon_tol``.  ``transition``
    defaults to ``a_norm * I``; ``a_norm = 0`` degenerates to an i.i.d.
    sequence.
    """
    if a_norm < 0 or a_norm >= 1:
        raise DomainError(f"transition norm must lie in [0, 1), got {a_norm}")
    if a_norm == 0.0:
        return CbsSpec(dim=dim, coeffs=FiniteTaps((1.0,)),
                       innovation_bound=noise_bound, horizon_tol=horizon_tol)
    mat = np.asarray(transition, dtype=np.float64) if transition is not None \
        else a_norm * np.eye(dim)
    return CbsSpec(dim=dim, coeffs=cim_to_cbs(1.0, a_norm),
                   innovation_bound=noise_bound, horizon_tol=horizon_tol,
                   recursion=mat)


# ---------------------------------------------------------------------------
# Simulators
# ---------------------------------------------------------------------------


def simulate_cbs(spec: CbsSpec, n: int, seed: int) -> np.ndarray:
    """Draw ``X_1..X_n`` as an (n, p) array, deterministically in (spec, n, seed).

    The infinite filter is truncated at the horizon where the neglected
    tail contributes at most ``spec.horizon_tol`` to ``||X_l||``; every
    sample satisfies ``||X_l|| <= B``.
    """
    if n < 1:
        raise DomainError(f"sample count must be at least 1, got {n}")
    rng = np.random.default_rng(seed)
    p = spec.dim
    half = spec.innovation_halfwidth
    m = spec.filter_horizon()
    if spec.recursion is not None:
        innov = rng.uniform(-half, half, size=(n + m, p))
        out = np.empty((n, p))
        state = np.zeros(p)
        for step in range(n + m):
            state = spec.recursion @ state + innov[step]
            if step >= m:
                out[step - m] = state
        return out
    innov = rng.uniform(-half, half, size=(n + m - 1, p))
    weights = spec.coeffs.weights(m)
    if m <= _DIRECT_FILTER_CAP:
        out = np.zeros((n, p))
        for i in range(1, m + 1):
            out += weights[i - 1] * innov[m - i : m - i + n]
        return out
    return scipy.signal.fftconvolve(innov, weights[:, None], mode="valid", axes=0)


def simulate_observations(spec: ProcessSpec, n: int, seed: int) -> np.ndarray:
    """Draw ``Y_1..Y_n = X + eps`` with the noise on its own derived stream.

    The filtered component reproduces ``simulate_cbs(spec.cbs, n, seed)``
    exactly, so zero noise yields the bare filter run bit for bit.
    """
    x = simulate_cbs(spec.cbs, n, seed)
    eps = spec.noise.sample(n, split_seed(seed, _NOISE_STREAM))
    return x + eps


def iid_observation_sampler(spec: ProcessSpec):
    """Independent stationary copies of ``Y_1``: a callable ``(seed, count) -> (count, p)``.

    Each draw uses its own innovation block, so the copies are genuinely
    independent (unlike consecutive samples of a single path).
    """
    cbs = spec.cbs
    p = cbs.dim
    half = cbs.innovation_halfwidth
    m = cbs.filter_horizon()

    def draw(seed: int, count: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        if cbs.recursion is not None:
            x = np.zeros((count, p))
            for _ in range(m):
                x = x @ cbs.recursion.T + rng.uniform(-half, half, size=(count, p))
            x = x @ cbs.recursion.T + rng.uniform(-half, half, size=(count, p))
        else:
            weights = cbs.coeffs.weights(m)
            x = np.zeros((count, p))
            for i in range(m):
                x += weights[i] * rng.uniform(-half, half, size=(count, p))
        eps = spec.noise.sample(count, split_seed(seed, _NOISE_STREAM))
        return x + eps

    return draw


# ---------------------------------------------------------------------------
# Closed-form stationary moments (the oracles the harness certifies against)
# ---------------------------------------------------------------------------


def stationary_covariance(spec: CbsSpec | ProcessSpec) -> np.ndarray:
    """Exact covariance of the stationary observation (or bare filter) sample."""
    cbs = spec.cbs if isinstance(spec, ProcessSpec) else spec
    if cbs.recursion is not None:
        innovation_cov = cbs.innovation_cov_scale * np.eye(cbs.dim)
        cov_x = scipy.linalg.solve_discrete_lyapunov(cbs.recursion, innovation_cov)
        cov_x = (cov_x + cov_x.T) / 2.0
    else:
        cov_x = cbs.coeffs.square_total() * cbs.innovation_cov_scale * np.eye(cbs.dim)
    if isinstance(spec, ProcessSpec):
        return cov_x + spec.noise.covariance_scale * np.eye(cbs.dim)
    return cov_x


def lag1_cross_covariance(spec: CbsSpec | ProcessSpec) -> np.ndarray:
    """Exact ``E[Y_l Y_{l+1}^T]``; independent noise contributes nothing."""
    cbs = spec.cbs if isinstance(spec, ProcessSpec) else spec
    if cbs.recursion is not None:
        cov_x = stationary_covariance(cbs)
        return cov_x @ cbs.recursion.T
    return cbs.coeffs.lag1_total() * cbs.innovation_cov_scale * np.eye(cbs.dim)


# ---------------------------------------------------------------------------
# Linear hidden-state processes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HmmSpec:
    """Latent recursion ``X_l = a X_{l-1} + xi_l`` observed through unit-covariance noise.

    Innovations and noise are bounded with identity covariance
    (``B_xi = lam = sqrt(3 p)``), matching the premises of the
    moment-based transition estimator.
    """

    dim: int
    transition_coeff: float
    horizon_tol: float = DEFAULT_HORIZON_TOL
    noise: NoiseSpec = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if not 0 < self.transition_coeff < 1:
            raise DomainError(
                f"transition coefficient must lie in (0, 1), got {self.transition_coeff}"
            )
        if self.noise is None:
            object.__setattr__(
                self, "noise", NoiseSpec.bounded(self.dim, math.sqrt(3.0 * self.dim))
            )

    @property
    def latent(self) -> CbsSpec:
        return var_as_cim(self.transition_coeff, math.sqrt(3.0 * self.dim), self.dim,
                          self.horizon_tol)

    @property
    def transition(self) -> np.ndarray:
        return self.transition_coeff * np.eye(self.dim)

    def latent_envelope(self) -> float:
        return self.latent.envelope

    def true_moments(self) -> tuple[np.ndarray, np.ndarray]:
        """Exact ``(Sigma, Sigma_1)`` of the observations."""
        cov_x = stationary_covariance(self.latent)
        sigma = cov_x + self.noise.covariance_scale * np.eye(self.dim)
        sigma1 = self.transition @ cov_x
        return sigma, sigma1


def simulate_hmm(spec: HmmSpec, n: int, seed: int) -> np.ndarray:
    """Draw ``Y_0..Y_n`` (an (n+1, p) array) from the hidden-state model.

    Warns when either noise or innovation covariance deviates from the
    identity, since the transition identity behind the moment estimator is
    derived under that premise; the simulation itself still runs.
    """
    if n < 1:
        raise DomainError(f"need at least 1 transition, got n={n}")
    if not math.isclose(spec.noise.covariance_scale, 1.0, rel_tol=1e-9):
        warnings.warn(
            "observation noise covariance is not the identity; the moment-based "
            "transition estimator's premise does not hold",
            stacklevel=2,
        )
    x = simulate_cbs(spec.latent, n + 1, seed)
    eps = spec.noise.sample(n + 1, split_seed(seed, _NOISE_STREAM))
    return x + eps
