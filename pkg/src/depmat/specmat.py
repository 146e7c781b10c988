"""Dense symmetric spectral linear algebra.

Eigendecomposition by cyclic Jacobi rotations, operator norms, effective
rank, eigenvalue truncation and spectral pseudo-inversion.  These are the
primitives every estimator and bound in this package is built on.

All operations are pure functions of immutable inputs; values are safe to
share read-only across concurrent workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericalError

# Constructors reject asymmetry beyond this relative level and repair the rest.
ASYMMETRY_RTOL = 1e-8
# PSD slack for effective rank: eigenvalues in [-PSD_RTOL * norm, 0) count as 0.
PSD_RTOL = 1e-10
# Jacobi sweep loop: stop once off-diagonal Frobenius mass falls below
# OFF_DIAG_RTOL * ||M||_F, give up after SWEEP_CAP full sweeps.
OFF_DIAG_RTOL = 1e-14
SWEEP_CAP = 100
DEFAULT_RCOND = 1e-12


class SymMatrix:
    """Dense real symmetric p x p matrix.

    Symmetry is enforced at construction by averaging with the transpose;
    inputs whose asymmetry exceeds ``ASYMMETRY_RTOL`` relative to the entry
    scale are rejected rather than silently repaired.  Entries are stored
    read-only.
    """

    __slots__ = ("entries",)

    def __init__(self, entries: np.ndarray):
        arr = np.asarray(entries, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise DomainError(f"expected a square matrix, got shape {arr.shape}")
        if arr.shape[0] < 1:
            raise DomainError("matrix dimension must be positive")
        if not np.all(np.isfinite(arr)):
            raise DomainError("matrix entries must all be finite")
        scale = np.max(np.abs(arr))
        if scale > 0:
            asym = np.max(np.abs(arr - arr.T))
            if asym > ASYMMETRY_RTOL * scale:
                raise DomainError(
                    f"input asymmetry {asym:.3e} exceeds {ASYMMETRY_RTOL:.0e} "
                    f"relative to entry scale {scale:.3e}"
                )
        sym = (arr + arr.T) / 2.0
        sym.flags.writeable = False
        object.__setattr__(self, "entries", sym)

    def __setattr__(self, name, value):
        raise AttributeError("SymMatrix is immutable")

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def __repr__(self) -> str:
        return f"SymMatrix(dim={self.dim})"


def as_sym(m) -> SymMatrix:
    """Coerce an array or SymMatrix to SymMatrix."""
    return m if isinstance(m, SymMatrix) else SymMatrix(m)


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenvalues (non-increasing) and the orthonormal basis holding them.

    Satisfies ``Q @ diag(eigenvalues) @ Q.T == M`` and ``Q @ Q.T == I`` to
    within 1e-10 relative of the source matrix.
    """

    eigenvalues: np.ndarray
    basis: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.basis * self.eigenvalues) @ self.basis.T


def _off_diagonal_norm(a: np.ndarray) -> float:
    # Summing the squared off-diagonal entries directly; subtracting the
    # diagonal mass from the total cancels catastrophically near convergence.
    off = a.copy()
    np.fill_diagonal(off, 0.0)
    return float(np.linalg.norm(off))


def _round_robin(p: int) -> list:
    """Tournament schedule: p-1 rounds of disjoint index pairs covering all pairs once."""
    players = list(range(p)) + ([-1] if p % 2 else [])
    size = len(players)
    rounds = []
    for _ in range(size - 1):
        pairs_i = []
        pairs_j = []
        for k in range(size // 2):
            a, b = players[k], players[size - 1 - k]
            if a >= 0 and b >= 0:
                pairs_i.append(min(a, b))
                pairs_j.append(max(a, b))
        rounds.append((np.array(pairs_i), np.array(pairs_j)))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def _apply_rotations(a, q, rows, cols, skip_level) -> None:
    """Annihilate the disjoint pivots (rows[k], cols[k]) simultaneously.

    Rotations in disjoint planes commute, so batching a whole round is
    exact, not an approximation of the sequential sweep.
    """
    pivots = a[rows, cols]
    active = np.abs(pivots) > skip_level
    if not np.any(active):
        return
    i = rows[active]
    j = cols[active]
    pivots = pivots[active]
    theta = (a[j, j] - a[i, i]) / (2.0 * pivots)
    t = np.sign(theta) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
    t[t == 0.0] = 1.0  # theta == 0: rotate by pi/4
    c = 1.0 / np.sqrt(t * t + 1.0)
    s = t * c
    rows_i = a[i, :]
    rows_j = a[j, :]
    a[i, :] = c[:, None] * rows_i - s[:, None] * rows_j
    a[j, :] = s[:, None] * rows_i + c[:, None] * rows_j
    cols_i = a[:, i]
    cols_j = a[:, j]
    a[:, i] = c * cols_i - s * cols_j
    a[:, j] = s * cols_i + c * cols_j
    basis_i = q[:, i]
    basis_j = q[:, j]
    q[:, i] = c * basis_i - s * basis_j
    q[:, j] = s * basis_i + c * basis_j


def sym_eig(m) -> SpectralDecomposition:
    """Full eigendecomposition of a symmetric matrix by cyclic Jacobi sweeps.

    Each sweep visits every off-diagonal pair exactly once, in tournament
    order so that disjoint rotations apply as one vectorized batch.  Sweeps
    run until the off-diagonal Frobenius mass drops below
    ``OFF_DIAG_RTOL * ||M||_F`` or ``SWEEP_CAP`` sweeps have run; the
    latter raises ``NumericalError`` with the residual attached.
    Eigenvalues come back sorted non-increasing.
    """
    sym = as_sym(m)
    p = sym.dim
    a = np.array(sym.entries, dtype=np.float64)
    q = np.eye(p)
    frobenius = float(np.linalg.norm(a))
    threshold = OFF_DIAG_RTOL * frobenius
    # Pivots this small cannot matter at the target accuracy.
    skip_level = threshold / max(p * p, 1)

    converged = frobenius == 0.0 or p == 1
    if not converged:
        schedule = _round_robin(p)
        for _ in range(SWEEP_CAP):
            if _off_diagonal_norm(a) <= threshold:
                converged = True
                break
            for rows, cols in schedule:
                _apply_rotations(a, q, rows, cols, skip_level)
        else:
            converged = _off_diagonal_norm(a) <= threshold
    if not converged:
        residual = _off_diagonal_norm(a)
        raise NumericalError(
            f"Jacobi sweeps did not converge after {SWEEP_CAP} sweeps "
            f"(off-diagonal residual {residual:.3e}, threshold {threshold:.3e})",
            residual=residual,
        )
    eigenvalues = np.diag(a).copy()
    order = np.argsort(-eigenvalues, kind="stable")
    return SpectralDecomposition(eigenvalues=eigenvalues[order], basis=q[:, order])


def operator_norm(m) -> float:
    """Largest absolute eigenvalue; zero exactly for the zero matrix."""
    decomp = sym_eig(m)
    return float(np.max(np.abs(decomp.eigenvalues)))


def spectral_norm(m: np.ndarray) -> float:
    """Largest singular value of a general (possibly rectangular) matrix."""
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2:
        raise DomainError(f"expected a matrix, got shape {arr.shape}")
    gram = arr.T @ arr if arr.shape[0] >= arr.shape[1] else arr @ arr.T
    top = float(np.max(sym_eig(gram).eigenvalues))
    return float(np.sqrt(max(top, 0.0)))


def effective_rank(m) -> float:
    """Trace over operator norm of a positive semi-definite matrix.

    Eigenvalues in ``[-PSD_RTOL * norm, 0)`` are treated as exact zeros, so
    covariance matrices that are PSD only up to rounding are accepted.  The
    result lies in ``[1, rank(M)]``.
    """
    decomp = sym_eig(m)
    lam = decomp.eigenvalues
    norm = float(np.max(np.abs(lam)))
    if norm == 0.0:
        raise DomainError("effective rank of the zero matrix is undefined")
    floor = -PSD_RTOL * norm
    smallest = float(np.min(lam))
    if smallest < floor:
        raise DomainError(
            f"matrix is not positive semi-definite: eigenvalue {smallest:.6e} "
            f"is below the tolerance {floor:.6e}"
        )
    clipped = np.maximum(lam, 0.0)
    top = float(np.max(clipped))
    if top == 0.0:
        raise DomainError("matrix is zero to within the PSD tolerance")
    return float(np.sum(clipped) / top)


def truncate_eigenvalues(m, tau: float) -> SymMatrix:
    """Clamp every eigenvalue into ``[-tau, tau]``, keeping the eigenbasis.

    When no eigenvalue exceeds ``tau`` in magnitude the input is returned
    unchanged, so below the truncation level this map is exactly the
    identity.
    """
    if not tau > 0:
        raise DomainError(f"truncation level must be positive, got {tau}")
    sym = as_sym(m)
    decomp = sym_eig(sym)
    if np.max(np.abs(decomp.eigenvalues)) <= tau:
        return sym
    clamped = np.clip(decomp.eigenvalues, -tau, tau)
    return SymMatrix((decomp.basis * clamped) @ decomp.basis.T)


def pseudo_inverse(m, rcond: float = DEFAULT_RCOND) -> SymMatrix:
    """Spectral pseudo-inverse: invert eigenvalues above ``rcond * max|eig|``, zero the rest."""
    if not rcond > 0:
        raise DomainError(f"rcond must be positive, got {rcond}")
    decomp = sym_eig(m)
    lam = decomp.eigenvalues
    cutoff = rcond * float(np.max(np.abs(lam))) if lam.size else 0.0
    inverted = np.where(np.abs(lam) > cutoff, 1.0 / np.where(lam == 0.0, 1.0, lam), 0.0)
    return SymMatrix((decomp.basis * inverted) @ decomp.basis.T)
