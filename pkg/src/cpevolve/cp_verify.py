"""Linear maps on d x d operators and complete-positivity checks.

All representations use column stacking: ``vec(X)[a + b*d] = X[a, b]``, so that
``vec(A X B) = (B^T kron A) vec(X)``. A :class:`SuperoperatorMap` stores the
Schroedinger-picture action ``vec(Phi(X)) = S vec(X)``; the Heisenberg dual used
by the positivity inequality over operator families is ``S^dagger``.

The Choi matrix is ``C = sum_ij E_ij kron Phi(E_ij)``, i.e.
``C[(i, a), (j, b)] = Phi(E_ij)[a, b]`` with row index ``i*d + a``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .operator_core import hermitian_residual, hermitize

DEFAULT_TOL = 1e-10
HERMITICITY_PRESERVING_TOL = 1e-8
MAX_EXTENDED_DIM = 64


class NotHermiticityPreserving(ValueError):
    pass


class NotCP(ValueError):
    def __init__(self, message: str, min_eig: float):
        super().__init__(message)
        self.min_eig = min_eig


class ResourceCap(ValueError):
    pass


def vec(X: np.ndarray) -> np.ndarray:
    return np.asarray(X).reshape(-1, order="F")


def unvec(v: np.ndarray, dim: int | None = None) -> np.ndarray:
    v = np.asarray(v)
    dim = int(round(np.sqrt(v.size))) if dim is None else dim
    return v.reshape((dim, dim), order="F")


def _choi_reshuffle(m: np.ndarray, d: int) -> np.ndarray:
    # S[(b, a) row-major, (j, i) row-major] <-> C[(i, a), (j, b)]; the index
    # permutation swaps axes 0 and 3, hence is its own inverse
    return m.reshape(d, d, d, d).transpose(3, 1, 2, 0).reshape(d * d, d * d)


@dataclass(frozen=True)
class SuperoperatorMap:
    dim: int
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (self.dim**2, self.dim**2):
            raise ValueError(f"superoperator must be {self.dim**2}x{self.dim**2}, got {m.shape}")
        object.__setattr__(self, "matrix", m)

    def __call__(self, X) -> np.ndarray:
        return unvec(self.matrix @ vec(X), self.dim)

    def heisenberg(self, A) -> np.ndarray:
        """Dual map with respect to the Hilbert-Schmidt inner product."""
        return unvec(self.matrix.conj().T @ vec(A), self.dim)

    def __add__(self, other: "SuperoperatorMap") -> "SuperoperatorMap":
        return SuperoperatorMap(self.dim, self.matrix + other.matrix)

    def __rmul__(self, scalar) -> "SuperoperatorMap":
        return SuperoperatorMap(self.dim, scalar * self.matrix)

    @classmethod
    def from_function(cls, fn: Callable[[np.ndarray], np.ndarray], dim: int) -> "SuperoperatorMap":
        """Tabulate a linear map by applying it to the matrix units."""
        cols = []
        for k in range(dim * dim):
            unit = np.zeros(dim * dim, dtype=complex)
            unit[k] = 1.0
            cols.append(vec(fn(unvec(unit, dim))))
        return cls(dim, np.column_stack(cols))

    @classmethod
    def from_kraus(cls, operators: Sequence[np.ndarray]) -> "SuperoperatorMap":
        ops = [np.asarray(M, dtype=complex) for M in operators]
        d = ops[0].shape[0]
        return cls(d, sum(np.kron(M.conj(), M) for M in ops))

    @classmethod
    def from_choi(cls, choi: "ChoiMatrix") -> "SuperoperatorMap":
        return cls(choi.dim, _choi_reshuffle(choi.matrix, choi.dim))

    @classmethod
    def identity(cls, dim: int) -> "SuperoperatorMap":
        return cls(dim, np.eye(dim * dim))

    @classmethod
    def transpose(cls, dim: int) -> "SuperoperatorMap":
        return cls.from_function(lambda X: X.T, dim)

    @classmethod
    def depolarizing(cls, dim: int) -> "SuperoperatorMap":
        """Full depolarization ``X -> Tr(X) 1/d``."""
        return cls.from_function(lambda X: np.trace(X) * np.eye(dim) / dim, dim)


@dataclass(frozen=True)
class ChoiMatrix:
    dim: int
    matrix: np.ndarray

    @property
    def hermiticity_residual(self) -> float:
        return hermitian_residual(self.matrix)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(hermitize(self.matrix))


@dataclass(frozen=True)
class KrausSet:
    """Operators ``M_k`` of the map ``X -> sum_k M_k X M_k^dagger``."""

    dim: int
    operators: tuple[np.ndarray, ...]

    @classmethod
    def of(cls, operators: Sequence[np.ndarray]) -> "KrausSet":
        ops = tuple(np.asarray(M, dtype=complex) for M in operators)
        if not ops:
            raise ValueError("need at least one Kraus operator")
        return cls(ops[0].shape[0], ops)

    def __call__(self, X) -> np.ndarray:
        return sum(M @ X @ M.conj().T for M in self.operators)

    def heisenberg(self, A) -> np.ndarray:
        return sum(M.conj().T @ A @ M for M in self.operators)

    def superoperator(self) -> SuperoperatorMap:
        return SuperoperatorMap.from_kraus(self.operators)

    @property
    def trace_residual(self) -> float:
        """``max|sum M^dagger M - 1|``; zero for trace-preserving sets."""
        s = sum(M.conj().T @ M for M in self.operators)
        return float(np.max(np.abs(s - np.eye(self.dim))))

    @property
    def unital_residual(self) -> float:
        """``max|sum M M^dagger - 1|``; zero for unital sets."""
        s = sum(M @ M.conj().T for M in self.operators)
        return float(np.max(np.abs(s - np.eye(self.dim))))


@dataclass(frozen=True)
class Verdict:
    is_cp: bool
    min_eig: float

    def __str__(self):
        return "CP" if self.is_cp else f"NotCP({self.min_eig:.6g})"


@dataclass(frozen=True)
class CPWitness:
    """Finite data violating ``sum_ij <psi_i| Phi'(B_i^dagger B_j) |psi_j> >= 0``."""

    vectors: tuple[np.ndarray, ...]
    operators: tuple[np.ndarray, ...]
    value: float

    @property
    def n(self) -> int:
        return len(self.vectors)


@dataclass(frozen=True)
class ExtensionReport:
    n: int
    samples: int
    min_eig: float
    worst_sample: int


def choi_of(phi: SuperoperatorMap) -> ChoiMatrix:
    return ChoiMatrix(phi.dim, _choi_reshuffle(phi.matrix, phi.dim))


def is_completely_positive(phi: SuperoperatorMap, tol: float = DEFAULT_TOL) -> Verdict:
    choi = choi_of(phi)
    resid = choi.hermiticity_residual
    if resid > HERMITICITY_PRESERVING_TOL:
        raise NotHermiticityPreserving(f"Choi matrix Hermiticity residual {resid:.3g}")
    lam = float(choi.eigenvalues()[0])
    return Verdict(lam >= -tol, lam)


def operator_sum(phi: SuperoperatorMap, vectors, operators) -> complex:
    """Left side of the complete-positivity inequality, evaluated term by term."""
    total = 0j
    for psi_i, B_i in zip(vectors, operators):
        for psi_j, B_j in zip(vectors, operators):
            total += np.vdot(psi_i, phi.heisenberg(B_i.conj().T @ B_j) @ psi_j)
    return complex(total)


def cp_witness(phi: SuperoperatorMap, tol: float = DEFAULT_TOL) -> CPWitness | None:
    """Witness of non-complete-positivity, or ``None`` if the Choi matrix is PSD.

    With ``psi_i = e_i`` the inequality's sum equals
    ``sum_ij Tr(B_i^dagger B_j Phi(E_ji))``. Choosing ``B_i = |e_0><x_i|`` gives
    ``B_i^dagger B_j = |x_i><x_j|`` and the sum becomes
    ``sum_ij <x_j| Phi(E_ji) |x_i> = <v|C|v>`` with ``v[i*d + b] = x_i[b]``.
    Taking ``v`` as the lowest Choi eigenvector makes it the negative eigenvalue.
    """
    d = phi.dim
    lam, vecs = np.linalg.eigh(hermitize(choi_of(phi).matrix))
    if lam[0] >= -tol:
        return None
    rows = vecs[:, 0].reshape(d, d)  # rows[i] = x_i
    e0 = np.zeros(d)
    e0[0] = 1.0
    vectors = tuple(np.eye(d, dtype=complex)[i] for i in range(d))
    operators = tuple(np.outer(e0, rows[i].conj()) for i in range(d))
    value = operator_sum(phi, vectors, operators)
    return CPWitness(vectors, operators, float(value.real))


def kraus_of(choi: ChoiMatrix, tol: float = DEFAULT_TOL) -> KrausSet:
    """Spectral Kraus decomposition; ``M = sqrt(lam) * unvec-transpose(v)``."""
    d = choi.dim
    lam, vecs = np.linalg.eigh(hermitize(choi.matrix))
    if lam[0] < -tol:
        raise NotCP(f"Choi matrix has eigenvalue {lam[0]:.6g}", float(lam[0]))
    keep = lam > tol
    ops = [np.sqrt(l) * v.reshape(d, d).T for l, v in zip(lam[keep], vecs[:, keep].T)]
    if not ops:
        ops = [np.zeros((d, d), dtype=complex)]
    return KrausSet.of(ops)


def apply_extended(phi: SuperoperatorMap, rho: np.ndarray, n: int) -> np.ndarray:
    """``(Phi kron 1_n)(rho)`` with the system factor first."""
    d = phi.dim
    blocks = rho.reshape(d, n, d, n)
    out = np.empty_like(blocks, dtype=complex)
    for k in range(n):
        for l in range(n):
            out[:, k, :, l] = phi(blocks[:, k, :, l])
    return out.reshape(d * n, d * n)


def maximally_entangled(d: int, n: int) -> np.ndarray:
    m = min(d, n)
    psi = np.zeros(d * n, dtype=complex)
    for i in range(m):
        psi[i * n + i] = 1.0
    return psi / np.sqrt(m)


def tensor_extension_positive(
    phi: SuperoperatorMap,
    n: int,
    samples: int,
    rng: np.random.Generator | None = None,
) -> ExtensionReport:
    """Probe positivity of ``Phi kron 1_n`` on random pure states.

    Sample 0 is always the maximally entangled state, so a transpose-like map
    is caught deterministically whenever ``n >= d``.
    """
    d = phi.dim
    if n < 1:
        raise ValueError("n must be positive")
    if n * d > MAX_EXTENDED_DIM:
        raise ResourceCap(f"n*d = {n * d} exceeds {MAX_EXTENDED_DIM}")
    rng = np.random.default_rng(0) if rng is None else rng
    states = [maximally_entangled(d, n)]
    for _ in range(max(samples - 1, 0)):
        g = rng.normal(size=d * n) + 1j * rng.normal(size=d * n)
        states.append(g / np.linalg.norm(g))
    worst, worst_idx = np.inf, 0
    for idx, psi in enumerate(states):
        out = apply_extended(phi, np.outer(psi, psi.conj()), n)
        lam = float(np.linalg.eigvalsh(hermitize(out))[0])
        if lam < worst:
            worst, worst_idx = lam, idx
    return ExtensionReport(n, len(states), worst, worst_idx)


def random_kraus(dim: int, count: int, rng: np.random.Generator, trace_preserving: bool = True) -> KrausSet:
    """Random Kraus set; normalized to ``sum M^dagger M = 1`` when requested."""
    ops = rng.normal(size=(count, dim, dim)) + 1j * rng.normal(size=(count, dim, dim))
    if trace_preserving:
        s = np.einsum("kba,kbc->ac", ops.conj(), ops)
        lam, u = np.linalg.eigh(s)
        inv_sqrt = u @ np.diag(lam**-0.5) @ u.conj().T
        ops = ops @ inv_sqrt
    return KrausSet.of(list(ops))
