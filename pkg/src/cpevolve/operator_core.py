"""Dense operator algebra, density-matrix validation and a one-particle Fock oracle.

Everything here works on plain ``numpy`` arrays. A :class:`DensityMatrix`
wraps a validated, read-only copy of its entries.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import scipy.sparse as sp

DEFAULT_HERM_TOL = 1e-10
DEFAULT_PSD_TOL = 1e-10
DEFAULT_TRACE_TOL = 1e-10


class DimensionMismatch(ValueError):
    pass


class DensityMatrixError(ValueError):
    """Base class for failed density-matrix validation.

    ``violations`` maps each failed invariant to its measured value, so a
    single exception reports every problem found, not just the first.
    """

    def __init__(self, message: str, violations: dict[str, float]):
        super().__init__(message)
        self.violations = violations


class NotHermitian(DensityMatrixError):
    @property
    def residual(self) -> float:
        return self.violations["hermiticity"]


class NotPositive(DensityMatrixError):
    @property
    def min_eig(self) -> float:
        return self.violations["min_eig"]


class TraceDeviation(DensityMatrixError):
    @property
    def value(self) -> float:
        return self.violations["trace"]


def as_operator(entries, name: str = "matrix") -> np.ndarray:
    """Return ``entries`` as a square, finite complex array."""
    m = np.asarray(entries, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
        raise DimensionMismatch(f"{name} must be a non-empty square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    return m


def hermitian_residual(m: np.ndarray) -> float:
    """Max-norm of ``m - m^dagger``."""
    return float(np.max(np.abs(m - m.conj().T), initial=0.0))


def hermitize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.conj().T)


def min_eigenvalue(m: np.ndarray) -> float:
    """Smallest eigenvalue of the Hermitian part of ``m``."""
    return float(np.linalg.eigvalsh(hermitize(m))[0])


def measure(m: np.ndarray) -> dict[str, float]:
    """Measured residuals of the three density-matrix invariants."""
    return {
        "hermiticity": hermitian_residual(m),
        "min_eig": min_eigenvalue(m),
        "trace": float(np.trace(m).real),
    }


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, positive semidefinite, unit-trace matrix.

    Construct through :func:`make_density_matrix`; direct construction skips
    validation.
    """

    matrix: np.ndarray
    herm_tol: float = DEFAULT_HERM_TOL
    psd_tol: float = DEFAULT_PSD_TOL
    trace_tol: float = DEFAULT_TRACE_TOL

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)


def make_density_matrix(
    entries,
    herm_tol: float = DEFAULT_HERM_TOL,
    psd_tol: float = DEFAULT_PSD_TOL,
    trace_tol: float = DEFAULT_TRACE_TOL,
) -> DensityMatrix:
    """Validate ``entries`` and wrap them as a :class:`DensityMatrix`.

    Raises the exception class of the first violated invariant (checked in
    the order Hermiticity, positivity, trace) carrying all violations.
    """
    m = as_operator(entries, "density matrix").copy()
    r = measure(m)
    violations = {}
    if r["hermiticity"] > herm_tol:
        violations["hermiticity"] = r["hermiticity"]
    if r["min_eig"] < -psd_tol:
        violations["min_eig"] = r["min_eig"]
    if abs(r["trace"] - 1.0) > trace_tol:
        violations["trace"] = r["trace"]
    if violations:
        msg = ", ".join(f"{k}={v:.6g}" for k, v in violations.items())
        for key, cls in (("hermiticity", NotHermitian), ("min_eig", NotPositive), ("trace", TraceDeviation)):
            if key in violations:
                raise cls(f"invalid density matrix: {msg}", violations)
    m.setflags(write=False)
    return DensityMatrix(m, herm_tol, psd_tol, trace_tol)


def expectation(A, w) -> complex:
    """One-particle expectation value ``sum_fg A_fg w_gf``."""
    A = np.asarray(A, dtype=complex)
    w = np.asarray(w, dtype=complex)
    if A.shape != w.shape or A.ndim != 2:
        raise DimensionMismatch(f"operator {A.shape} and state {w.shape} differ")
    return complex(np.einsum("fg,gf->", A, w))


@dataclass(frozen=True)
class FockSectorRep:
    """Bilinear field operator ``sum_fg a_f^dagger M_fg a_g`` over ``modes`` modes."""

    modes: int
    statistics: Literal["fermi", "bose"]
    one_particle_matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.modes < 1:
            raise ValueError("modes must be positive")
        if self.statistics not in ("fermi", "bose"):
            raise ValueError(f"unknown statistics {self.statistics!r}")
        m = np.asarray(self.one_particle_matrix, dtype=complex)
        if m.shape != (self.modes, self.modes):
            raise DimensionMismatch(f"one_particle_matrix must be {self.modes}x{self.modes}")
        object.__setattr__(self, "one_particle_matrix", m)


# Bosonic occupations are truncated at this value. Two quanta per mode keep the
# local algebra non-trivial while leaving the one-particle sector exact.
BOSE_CUTOFF = 2


def _ladder_operators(modes: int, statistics: str) -> list[sp.csr_matrix]:
    """Annihilation operators ``a_f`` on the (truncated) Fock space."""
    if statistics == "fermi":
        local = sp.csr_matrix(np.array([[0.0, 1.0], [0.0, 0.0]]))
        parity = sp.csr_matrix(np.diag([1.0, -1.0]))
        eye = sp.identity(2, format="csr")
    else:
        levels = BOSE_CUTOFF + 1
        local = sp.csr_matrix(np.diag(np.sqrt(np.arange(1, levels)), k=1))
        parity = eye = sp.identity(levels, format="csr")
    ops = []
    for f in range(modes):
        # Jordan-Wigner string for fermions; plain identities for bosons
        factors = [parity] * f + [local] + [eye] * (modes - f - 1)
        op = factors[0]
        for factor in factors[1:]:
            op = sp.kron(op, factor, format="csr")
        ops.append(op.astype(complex))
    return ops


def _number_operator(ops) -> sp.csr_matrix:
    return sum(a.conj().T @ a for a in ops)


def fock_expectation(rep_A: FockSectorRep, rep_w: FockSectorRep) -> complex:
    """``Tr(A rho)`` computed on an explicitly constructed Fock space.

    ``A = sum_fg a_f^dagger A_fg a_g`` and ``rho = sum_gf a_g^dagger |0><0| a_f w_gf``
    with the matter state taken as the vacuum. The result agrees with
    :func:`expectation` on the one-particle matrices for either statistics;
    only the Jordan-Wigner strings differ between the two Fock spaces.
    """
    if rep_A.modes != rep_w.modes:
        raise DimensionMismatch(f"{rep_A.modes} modes vs {rep_w.modes} modes")
    if rep_A.statistics != rep_w.statistics:
        raise ValueError("operator and state must use the same statistics")
    n = rep_A.modes
    w = rep_w.one_particle_matrix
    make_density_matrix(w)

    ops = _ladder_operators(n, rep_A.statistics)
    size = ops[0].shape[0]
    vacuum = np.zeros(size, dtype=complex)
    vacuum[0] = 1.0

    number = _number_operator(ops)
    A_full = sp.csr_matrix((size, size), dtype=complex)
    for f in range(n):
        for g in range(n):
            if rep_A.one_particle_matrix[f, g] != 0:
                A_full = A_full + rep_A.one_particle_matrix[f, g] * (ops[f].conj().T @ ops[g])

    created = [ops[f].conj().T @ vacuum for f in range(n)]  # a_f^dagger |0>
    occupied = np.flatnonzero(np.abs(number.diagonal() - 1.0) < 1e-12)
    if occupied.size != n:
        raise AssertionError(f"one-particle sector has dimension {occupied.size}, expected {n}")
    for v in created:
        if not np.allclose(number @ v, v, atol=1e-12):
            raise AssertionError("created state is not a number eigenstate with eigenvalue one")

    # <f|A|g> = <0| a_f A a_g^dagger |0>
    a_sector = np.array([[(ops[f] @ (A_full @ created[g]))[0] for g in range(n)] for f in range(n)])
    # <g|rho|f> with rho|x> = sum_{g'f'} w_{g'f'} a_{g'}^dagger|0> <0|a_{f'} x
    overlaps = np.array([[(ops[fp] @ created[f])[0] for f in range(n)] for fp in range(n)])
    rho_columns = [sum(w[gp, fp] * overlaps[fp, f] * created[gp] for gp in range(n) for fp in range(n))
                   for f in range(n)]
    rho_sector = np.array([[np.vdot(created[g], rho_columns[f]) for f in range(n)] for g in range(n)])
    return complex(np.trace(a_sector @ rho_sector))


def random_density_matrix(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Random full-rank (or rank-``rank``) density matrix from a Ginibre sample."""
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_hermitian(dim: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return scale * hermitize(g)
