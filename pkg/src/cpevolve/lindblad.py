"""One-particle master equation with hbar = 1.

    dw/dt = -i[H0 + V, w] - {Gamma, w} + sum_k L_k w L_k^dagger

Trace is conserved exactly when ``Gamma = 1/2 sum_k L_k^dagger L_k``: the
anticommutator then contributes ``-Tr(sum L^dagger L w)`` and the sandwich term
``+Tr(sum L w L^dagger)``, which are equal by cyclicity.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .cp_verify import SuperoperatorMap, vec, unvec
from .operator_core import (
    DimensionMismatch,
    NotHermitian,
    NotPositive,
    as_operator,
    hermitian_residual,
    hermitize,
    min_eigenvalue,
    random_density_matrix,
)

logger = logging.getLogger(__name__)

HERM_TOL = 1e-12
GAMMA_PSD_TOL = 1e-10
BREACH_TOL = 1e-8


@dataclass(frozen=True)
class LindbladGenerator:
    H0: np.ndarray
    V: np.ndarray
    Gamma: np.ndarray
    Ls: tuple[np.ndarray, ...]
    gamma_residual: float

    @property
    def dim(self) -> int:
        return self.H0.shape[0]

    @property
    def hamiltonian(self) -> np.ndarray:
        return self.H0 + self.V

    def scale(self) -> float:
        """Largest max-norm among ``H0 + V``, ``Gamma`` and ``L_k^2``."""
        norms = [np.max(np.abs(self.hamiltonian)), np.max(np.abs(self.Gamma))]
        norms += [np.max(np.abs(L)) ** 2 for L in self.Ls]
        return float(max(norms))

    def default_dt(self) -> float:
        s = self.scale()
        return 1e-3 / s if s > 0 else 1e-3


def build_generator(H0, V=None, Ls: Sequence = (), Gamma=None) -> LindbladGenerator:
    """Assemble and check the generator operators.

    With ``Gamma=None`` the damping operator is derived as ``1/2 sum L^dagger L``;
    otherwise the given matrix is stored and its distance from that value is
    recorded as ``gamma_residual``.
    """
    H0 = as_operator(H0, "H0")
    d = H0.shape[0]
    V = np.zeros((d, d), dtype=complex) if V is None else as_operator(V, "V")
    Ls = tuple(as_operator(L, "L") for L in Ls)
    for name, m in (("V", V), *(("L", L) for L in Ls)):
        if m.shape != (d, d):
            raise DimensionMismatch(f"{name} has shape {m.shape}, expected {(d, d)}")
    for name, m in (("H0", H0), ("V", V)):
        r = hermitian_residual(m)
        if r > HERM_TOL:
            raise NotHermitian(f"{name} is not Hermitian (residual {r:.3g})", {"hermiticity": r})

    derived = 0.5 * sum((L.conj().T @ L for L in Ls), np.zeros((d, d), dtype=complex))
    if Gamma is None:
        return LindbladGenerator(H0, V, derived, Ls, 0.0)

    Gamma = as_operator(Gamma, "Gamma")
    if Gamma.shape != (d, d):
        raise DimensionMismatch(f"Gamma has shape {Gamma.shape}, expected {(d, d)}")
    r = hermitian_residual(Gamma)
    if r > HERM_TOL:
        raise NotHermitian(f"Gamma is not Hermitian (residual {r:.3g})", {"hermiticity": r})
    lam = min_eigenvalue(Gamma)
    if lam < -GAMMA_PSD_TOL:
        raise NotPositive(f"Gamma has eigenvalue {lam:.6g}", {"min_eig": lam})
    residual = float(np.max(np.abs(Gamma - derived)))
    return LindbladGenerator(H0, V, Gamma, Ls, residual)


def rhs(gen: LindbladGenerator, w) -> np.ndarray:
    w = np.asarray(w, dtype=complex)
    if w.shape != (gen.dim, gen.dim):
        raise DimensionMismatch(f"state {w.shape} vs generator dimension {gen.dim}")
    H = gen.hamiltonian
    out = -1j * (H @ w - w @ H) - (gen.Gamma @ w + w @ gen.Gamma)
    for L in gen.Ls:
        out = out + L @ w @ L.conj().T
    return out


def liouvillian(gen: LindbladGenerator) -> np.ndarray:
    """Matrix of :func:`rhs` acting on column-stacked states."""
    d = gen.dim
    eye = np.eye(d)
    K = -1j * gen.hamiltonian - gen.Gamma  # rhs = K w + w K^dagger + sum L w L^dagger
    out = np.kron(eye, K) + np.kron(K.conj(), eye)
    for L in gen.Ls:
        out = out + np.kron(L.conj(), L)
    return out


def euler_map(gen: LindbladGenerator, dt: float) -> SuperoperatorMap:
    """First-order propagator ``w -> w + dt * rhs(w)``."""
    d = gen.dim
    return SuperoperatorMap(d, np.eye(d * d) + dt * liouvillian(gen))


def kraus_step_operators(gen: LindbladGenerator, dt: float) -> list[np.ndarray]:
    d = gen.dim
    M0 = np.eye(d) - 1j * dt * gen.hamiltonian - dt * gen.Gamma
    return [M0] + [math.sqrt(dt) * L for L in gen.Ls]


def step_kraus(gen: LindbladGenerator, w, dt: float, renormalize: bool = False) -> np.ndarray:
    """One step of the infinitesimal Kraus decomposition.

    ``w' = M0 w M0^dagger + dt sum L w L^dagger`` with
    ``M0 = 1 - i dt (H0 + V) - dt Gamma``. The result is positive for every
    ``dt`` because it is an operator sum; the trace error is ``O(dt^2)``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    w = np.asarray(w, dtype=complex)
    out = sum(M @ w @ M.conj().T for M in kraus_step_operators(gen, dt))
    out = hermitize(out)
    if renormalize:
        out = out / np.trace(out).real
    return out


def step_rk4(gen: LindbladGenerator, w, dt: float) -> np.ndarray:
    if dt <= 0:
        raise ValueError("dt must be positive")
    w = np.asarray(w, dtype=complex)
    k1 = rhs(gen, w)
    k2 = rhs(gen, w + 0.5 * dt * k1)
    k3 = rhs(gen, w + 0.5 * dt * k2)
    k4 = rhs(gen, w + dt * k3)
    return hermitize(w + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4))


def _rk4_propagator(L: np.ndarray, dt: float) -> np.ndarray:
    # classical RK4 on a linear system is this degree-4 Taylor polynomial
    n = L.shape[0]
    hL = dt * L
    out = np.eye(n, dtype=complex)
    term = np.eye(n, dtype=complex)
    for k in range(1, 5):
        term = term @ hL / k
        out = out + term
    return out


@dataclass(frozen=True)
class EvolutionConfig:
    dt: float
    t_final: float
    integrator: Literal["rk4", "kraus_step"] = "rk4"
    renormalize: bool = False
    monitor_every: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_final < 0:
            raise ValueError("t_final must be non-negative")
        if self.t_final > 0 and self.dt > self.t_final:
            raise ValueError("dt must not exceed t_final")
        if self.integrator not in ("rk4", "kraus_step"):
            raise ValueError(f"unknown integrator {self.integrator!r}")
        if self.monitor_every < 1:
            raise ValueError("monitor_every must be >= 1")


@dataclass(frozen=True)
class Monitor:
    trace_dev: float
    min_eig: float
    herm_residual: float

    @classmethod
    def of(cls, w: np.ndarray) -> "Monitor":
        return cls(float(np.trace(w).real - 1.0), min_eigenvalue(w), hermitian_residual(w))


@dataclass(frozen=True)
class PositivityBreach:
    time: float
    min_eig: float


@dataclass
class Trajectory:
    times: list[float] = field(default_factory=list)
    states: list[np.ndarray] = field(default_factory=list)
    monitors: list[Monitor] = field(default_factory=list)
    breaches: list[PositivityBreach] = field(default_factory=list)

    def record(self, t: float, w: np.ndarray) -> Monitor:
        mon = Monitor.of(w)
        self.times.append(t)
        self.states.append(w.copy())
        self.monitors.append(mon)
        return mon

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def population(self, index: int) -> np.ndarray:
        return np.array([s[index, index].real for s in self.states])

    def rows(self, include_states: bool = False) -> tuple[list[str], list[list[float]]]:
        header = ["t", "trace_dev", "min_eig", "herm_residual"]
        d = self.states[0].shape[0] if self.states else 0
        if include_states:
            for a in range(d):
                for b in range(d):
                    header += [f"re_{a}_{b}", f"im_{a}_{b}"]
        rows = []
        for t, s, m in zip(self.times, self.states, self.monitors):
            row = [t, m.trace_dev, m.min_eig, m.herm_residual]
            if include_states:
                for z in s.reshape(-1):
                    row += [z.real, z.imag]
            rows.append(row)
        return header, rows

    def to_csv(self, include_states: bool = False) -> str:
        header, rows = self.rows(include_states)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_float(x) for x in row])
        return buf.getvalue()

    def to_dict(self, include_states: bool = False) -> dict:
        header, rows = self.rows(include_states)
        return {
            "columns": header,
            "rows": rows,
            "breaches": [{"time": b.time, "min_eig": b.min_eig} for b in self.breaches],
        }

    def to_json(self, include_states: bool = False) -> str:
        return json.dumps(self.to_dict(include_states), indent=2)


def format_float(x: float) -> str:
    """17 significant digits, locale independent."""
    return format(float(x), ".17g")


def evolve(gen: LindbladGenerator, w0, config: EvolutionConfig) -> Trajectory:
    """Integrate from ``t = 0`` to ``config.t_final``.

    A final step shorter than ``dt`` closes the interval when ``dt`` does not
    divide ``t_final``. The final state is always recorded.
    """
    w = np.asarray(w0, dtype=complex).copy()
    traj = Trajectory()
    traj.record(0.0, w)
    if config.t_final == 0:
        return traj

    n_full = int(math.floor(config.t_final / config.dt + 1e-9))
    tail = config.t_final - n_full * config.dt
    if tail <= 1e-12 * config.t_final:
        tail = 0.0
    steps = [config.dt] * n_full + ([tail] if tail > 0 else [])

    d = gen.dim
    propagators: dict[float, np.ndarray] = {}
    t = 0.0
    for k, h in enumerate(steps, start=1):
        if config.integrator == "rk4":
            if h not in propagators:
                propagators[h] = _rk4_propagator(liouvillian(gen), h)
            w = hermitize(unvec(propagators[h] @ vec(w), d))
        else:
            w = step_kraus(gen, w, h, config.renormalize)
        t = k * config.dt if k <= n_full else config.t_final
        if k % config.monitor_every == 0 or k == len(steps):
            mon = traj.record(t, w)
            if config.integrator == "rk4" and mon.min_eig < -BREACH_TOL:
                traj.breaches.append(PositivityBreach(t, mon.min_eig))
                logger.warning("positivity breach at t=%g: min eigenvalue %.3g", t, mon.min_eig)
    return traj


@dataclass(frozen=True)
class GeneratorReport:
    gamma_residual: float
    trace_rate_bound: float
    hermiticity_residuals: dict[str, float]
    conserves_trace: bool


def validate_generator(
    gen: LindbladGenerator,
    tol: float = 1e-10,
    samples: int = 32,
    rng: np.random.Generator | None = None,
) -> GeneratorReport:
    """Residual checks plus an empirical bound on ``|Tr rhs(w)|``.

    The bound is a maximum over random density matrices and pure basis states.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    d = gen.dim
    states = [np.diag(np.eye(d)[i]).astype(complex) for i in range(d)]
    states += [random_density_matrix(d, rng) for _ in range(samples)]
    bound = max(abs(np.trace(rhs(gen, w))) for w in states)
    herm = {
        "H0": hermitian_residual(gen.H0),
        "V": hermitian_residual(gen.V),
        "Gamma": hermitian_residual(gen.Gamma),
    }
    return GeneratorReport(gen.gamma_residual, float(bound), herm, gen.gamma_residual <= tol)


def random_generator(
    dim: int,
    n_ops: int,
    rng: np.random.Generator,
    scale: float = 1.0,
) -> LindbladGenerator:
    """Random derived-Gamma generator with entries of order ``scale``."""

    def herm():
        g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        return scale * hermitize(g) / np.sqrt(dim)

    Ls = []
    for _ in range(n_ops):
        g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        Ls.append(np.sqrt(scale) * g / np.sqrt(2 * dim))
    return build_generator(herm(), herm(), Ls)
