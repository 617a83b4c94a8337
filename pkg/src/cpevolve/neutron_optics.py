"""Neutron optics of a homogeneous medium: refraction, diffuse attenuation and
their balance.

Lengths are in angstrom, scattering lengths enter in fm. Every reported number
is dimensionless or a length: velocities cancel once rates are multiplied by the
traversal time ``t_D = D m / p0``, so neither the neutron mass nor hbar appear.

Elastic static kinematics give a momentum transfer ``q = 2 k0 sin(theta/2)``,
equivalently ``q^2 = 2 k0^2 (1 - cos theta)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Union

import numpy as np
from numpy.polynomial.legendre import leggauss

from .lindblad import EvolutionConfig, LindbladGenerator, Trajectory, build_generator, evolve

FM_TO_ANGSTROM = 1e-5
DEFAULT_ORDER = 64


class NegativeStructure(ValueError):
    pass


@dataclass(frozen=True)
class ConstantStructure:
    value: float = 1.0

    def __post_init__(self):
        if self.value < 0:
            raise NegativeStructure(f"structure function value {self.value} < 0")

    def __call__(self, q):
        return np.full_like(np.asarray(q, dtype=float), self.value)

    @property
    def breakpoints(self) -> np.ndarray:
        return np.empty(0)


@dataclass(frozen=True)
class TabulatedStructure:
    """Piecewise-linear ``S(q)``, held constant beyond the table ends."""

    q: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if q.ndim != 1 or q.shape != v.shape or q.size < 2:
            raise ValueError("structure table needs matching q and S columns with at least two rows")
        if np.any(np.diff(q) <= 0):
            raise ValueError("structure table q grid must be strictly increasing")
        if np.any(v < 0):
            raise NegativeStructure(f"structure table has negative value {v.min()}")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "values", v)

    def __call__(self, q):
        return np.interp(q, self.q, self.values)

    @property
    def breakpoints(self) -> np.ndarray:
        return self.q

    def rescaled(self, alpha: float) -> "TabulatedStructure":
        """Same table with momenta ``q -> q / alpha``."""
        return TabulatedStructure(self.q / alpha, self.values)


StructureFunction = Union[ConstantStructure, TabulatedStructure]


def load_structure_table(path) -> TabulatedStructure:
    """Read a two-column ``q  S`` text table; ``#`` starts a comment."""
    data = np.loadtxt(Path(path), comments="#", ndmin=2)
    if data.shape[1] != 2:
        raise ValueError(f"{path}: expected two columns, found {data.shape[1]}")
    return TabulatedStructure(data[:, 0], data[:, 1])


@dataclass(frozen=True)
class Medium:
    n_o: float  # number density [1/A^3]
    b_fm: float  # coherent scattering length [fm]
    D: float  # thickness [A]
    s_model: StructureFunction = field(default_factory=ConstantStructure)

    def __post_init__(self):
        if self.n_o < 0:
            raise ValueError("number density must be non-negative")
        if self.D < 0:
            raise ValueError("thickness must be non-negative")

    @property
    def b(self) -> float:
        """Scattering length in angstrom."""
        return self.b_fm * FM_TO_ANGSTROM


@dataclass(frozen=True)
class Beam:
    wavelength: float  # [A]

    def __post_init__(self):
        if not self.wavelength > 0:
            raise ValueError("wavelength must be positive")

    @property
    def k0(self) -> float:
        return 2 * np.pi / self.wavelength


@dataclass(frozen=True)
class PolarQuadrature:
    """Nodes in ``cos(theta)`` with weights that include the azimuthal ``2 pi``."""

    cos_theta: np.ndarray
    weights: np.ndarray

    @property
    def theta(self) -> np.ndarray:
        return np.arccos(np.clip(self.cos_theta, -1.0, 1.0))

    def momentum_transfer(self, k0: float) -> np.ndarray:
        return k0 * np.sqrt(2.0 * np.clip(1.0 - self.cos_theta, 0.0, None))


def polar_quadrature(order: int = DEFAULT_ORDER, k0: float | None = None, breakpoints=()) -> PolarQuadrature:
    """Composite Gauss-Legendre rule in ``cos(theta)`` over the full sphere.

    Each momentum in ``breakpoints`` that falls inside ``(0, 2 k0)`` splits the
    interval at its scattering angle, so a piecewise-linear ``S(q)`` is smooth
    inside every panel. ``order`` nodes are used per panel.
    """
    if order < 2:
        raise ValueError("quadrature order must be >= 2")
    edges = [-1.0, 1.0]
    bp = np.asarray(breakpoints, dtype=float)
    if bp.size:
        if k0 is None:
            raise ValueError("k0 is needed to place breakpoints")
        x = 1.0 - bp**2 / (2.0 * k0**2)
        edges = np.unique(np.concatenate([edges, x[(x > -1.0) & (x < 1.0)]]))
    g, w = leggauss(order)
    xs, ws = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        half = 0.5 * (hi - lo)
        xs.append(half * g + 0.5 * (hi + lo))
        ws.append(half * w)
    return PolarQuadrature(np.concatenate(xs), 2 * np.pi * np.concatenate(ws))


def _quadrature_for(medium: Medium, beam: Beam, order: int) -> PolarQuadrature:
    return polar_quadrature(order, beam.k0, medium.s_model.breakpoints)


def structure_integral(medium: Medium, beam: Beam, order: int = DEFAULT_ORDER) -> float:
    """``integral dOmega S(q)`` over the sphere."""
    quad = _quadrature_for(medium, beam, order)
    s = medium.s_model(quad.momentum_transfer(beam.k0))
    if np.any(s < 0):
        raise NegativeStructure(f"structure function evaluates to {s.min()}")
    return float(np.sum(quad.weights * s))


def index_deviation(medium: Medium, beam: Beam) -> float:
    """``n - 1``, computed directly so that no digits cancel."""
    return -beam.wavelength**2 / (2 * np.pi) * medium.b * medium.n_o


def refractive_index(medium: Medium, beam: Beam) -> float:
    return 1.0 + index_deviation(medium, beam)


def phase_shift(medium: Medium, beam: Beam) -> float:
    """Coherent phase ``chi = (n - 1) k0 D = -n_o b lambda D`` in radians."""
    return -medium.n_o * medium.b * beam.wavelength * medium.D


def diffusion_cross_section(medium: Medium, beam: Beam, order: int = DEFAULT_ORDER) -> float:
    """Total diffusion cross section per particle ``b^2 integral dOmega S`` [A^2]."""
    return medium.b**2 * structure_integral(medium, beam, order)


def attenuation_exponent(medium: Medium, beam: Beam, order: int = DEFAULT_ORDER) -> float:
    """``n_o sigma_d D``: forward intensity falls as ``exp(-Sigma)``."""
    return medium.n_o * diffusion_cross_section(medium, beam, order) * medium.D


def complex_optical_potential(medium: Medium, beam: Beam, order: int = DEFAULT_ORDER) -> complex:
    """Bracket ``n_o (b - i b^2/(4 pi) k0 integral dOmega S)`` of the optical potential.

    Multiply by ``2 pi hbar^2 / m`` for an energy. The imaginary part equals
    ``-n_o k0 sigma_d / (4 pi)``.
    """
    b = medium.b
    integral = structure_integral(medium, beam, order)
    return complex(medium.n_o * b, -medium.n_o * b**2 / (4 * np.pi) * beam.k0 * integral)


def potential_phase(medium: Medium, beam: Beam) -> float:
    """Phase ``-Re(U) t_D / hbar`` accumulated across the sample; equals ``chi``."""
    # Re(U) t_D / hbar = (2 pi hbar / m) n_o b * D m / (hbar k0) = 2 pi n_o b D / k0
    return -2 * np.pi * medium.n_o * medium.b * medium.D / beam.k0


def potential_attenuation(medium: Medium, beam: Beam, order: int = DEFAULT_ORDER) -> float:
    """Intensity exponent ``2 |Im U| t_D / hbar`` implied by the complex potential."""
    # 2 |Im U| t_D / hbar = 2 (2 pi hbar / m) |Im bracket| D m / (hbar k0)
    return 4 * np.pi * abs(complex_optical_potential(medium, beam, order).imag) * medium.D / beam.k0


def optical_theorem_residual(
    medium: Medium,
    beam: Beam,
    order: int = DEFAULT_ORDER,
    potential_order: int | None = None,
) -> float:
    """Relative mismatch between potential-implied and incoherent attenuation.

    Both are expressed per traversal time. With a shared quadrature the two
    agree to rounding; ``potential_order`` lets the potential side use its own
    rule so the residual measures quadrature error only.
    """
    incoherent = attenuation_exponent(medium, beam, order)
    coherent = potential_attenuation(medium, beam, order if potential_order is None else potential_order)
    scale = max(abs(incoherent), abs(coherent))
    if scale == 0:
        return 0.0
    return abs(coherent - incoherent) / scale


@dataclass(frozen=True)
class ScatteringScenario:
    """Forward state 0 plus ``n_dirs`` diffuse directions, time in units of ``t_D``."""

    theta: np.ndarray  # representative polar angle per direction
    solid_angle: np.ndarray
    q: np.ndarray
    rates: np.ndarray  # per direction, dimensionless (rate * t_D)
    generator: LindbladGenerator
    Sigma: float
    forward_index: int = 0

    @property
    def n_dirs(self) -> int:
        return self.rates.size

    def forward_state(self) -> np.ndarray:
        w = np.zeros((self.n_dirs + 1,) * 2, dtype=complex)
        w[self.forward_index, self.forward_index] = 1.0
        return w

    def evolve(self, s_final: float, dt: float | None = None, integrator: str = "rk4") -> Trajectory:
        dt = self.generator.default_dt() if dt is None else dt
        cfg = EvolutionConfig(min(dt, s_final) if s_final > 0 else dt, s_final, integrator)
        return evolve(self.generator, self.forward_state(), cfg)


def build_scattering_generator(
    medium: Medium,
    beam: Beam,
    n_dirs: int,
    order: int = DEFAULT_ORDER,
) -> ScatteringScenario:
    """Momentum-grid generator with jumps ``L_i = sqrt(rate_i) |k_i><k_0|``.

    The quadrature nodes, sorted by angle, are grouped into ``n_dirs``
    contiguous bins; each bin is one diffuse direction whose rate is
    ``n_o b^2 D sum_bin w S(q)``. The rates therefore add up to the
    attenuation exponent computed with the same rule. The real optical
    potential is the same for every in-medium momentum, so it is proportional
    to the identity and is left out of the Hamiltonian.
    """
    if n_dirs < 1:
        raise ValueError("n_dirs must be >= 1")
    quad = _quadrature_for(medium, beam, order)
    if n_dirs > quad.weights.size:
        raise ValueError(f"n_dirs={n_dirs} exceeds the {quad.weights.size} quadrature nodes")
    idx = np.argsort(quad.theta)
    theta = quad.theta[idx]
    weights = quad.weights[idx]
    q = quad.momentum_transfer(beam.k0)[idx]
    s = medium.s_model(q)
    if np.any(s < 0):
        raise NegativeStructure(f"structure function evaluates to {s.min()}")

    bins = np.array_split(np.arange(theta.size), n_dirs)
    solid = np.array([weights[b].sum() for b in bins])
    rates = np.array([medium.n_o * medium.b**2 * medium.D * np.sum(weights[b] * s[b]) for b in bins])
    mean_theta = np.array([np.sum(weights[b] * theta[b]) / weights[b].sum() for b in bins])
    q_dir = 2 * beam.k0 * np.sin(mean_theta / 2)

    dim = n_dirs + 1
    H0 = np.zeros((dim, dim), dtype=complex)
    Ls = []
    for i, r in enumerate(rates, start=1):
        L = np.zeros((dim, dim), dtype=complex)
        L[i, 0] = np.sqrt(r)
        Ls.append(L)
    gen = build_generator(H0, None, Ls)
    return ScatteringScenario(mean_theta, solid, q_dir, rates, gen, float(rates.sum()))


@dataclass(frozen=True)
class InterferometerResult:
    chi: float  # arg(w_12) after the sample
    contrast: float  # 2 |w_12|
    expected_chi: float
    expected_contrast: float
    trajectory: Trajectory = field(repr=False)


def interferometer_generator(medium: Medium, beam: Beam, order: int = DEFAULT_ORDER) -> LindbladGenerator:
    """Two-path model: path 0 crosses the sample, path 1 is free.

    Scattered neutrons leave both paths, so Gamma is given explicitly with no
    jump operators and the trace decays like the in-sample intensity.
    """
    chi = phase_shift(medium, beam)
    Sigma = attenuation_exponent(medium, beam, order)
    H0 = np.diag([-chi, 0.0]).astype(complex)
    Gamma = np.diag([Sigma / 2, 0.0]).astype(complex)
    return build_generator(H0, None, (), Gamma=Gamma)


def interferometer_contrast(
    medium: Medium,
    beam: Beam,
    order: int = DEFAULT_ORDER,
    integrator: Literal["rk4", "kraus_step"] = "rk4",
    dt: float | None = None,
) -> InterferometerResult:
    gen = interferometer_generator(medium, beam, order)
    w0 = np.full((2, 2), 0.5, dtype=complex)
    dt = gen.default_dt() if dt is None else dt
    traj = evolve(gen, w0, EvolutionConfig(min(dt, 1.0), 1.0, integrator))
    w12 = traj.final[0, 1]
    chi = phase_shift(medium, beam)
    Sigma = attenuation_exponent(medium, beam, order)
    return InterferometerResult(
        chi=float(np.angle(w12)),
        contrast=float(2 * abs(w12)),
        expected_chi=chi,
        expected_contrast=float(np.exp(-Sigma / 2)),
        trajectory=traj,
    )


def wrap_phase(x: float) -> float:
    """Map an angle to ``(-pi, pi]``."""
    return float(-((-x + np.pi) % (2 * np.pi) - np.pi))
