"""Completely positive one-particle dynamics and neutron-optical attenuation."""
from .operator_core import (
    DensityMatrix,
    FockSectorRep,
    expectation,
    fock_expectation,
    make_density_matrix,
)
from .cp_verify import (
    ChoiMatrix,
    KrausSet,
    SuperoperatorMap,
    choi_of,
    cp_witness,
    is_completely_positive,
    kraus_of,
    tensor_extension_positive,
)
from .lindblad import (
    EvolutionConfig,
    LindbladGenerator,
    Trajectory,
    build_generator,
    evolve,
    rhs,
    step_kraus,
    step_rk4,
    validate_generator,
)
from .neutron_optics import (
    Beam,
    Medium,
    attenuation_exponent,
    build_scattering_generator,
    complex_optical_potential,
    diffusion_cross_section,
    interferometer_contrast,
    optical_theorem_residual,
    phase_shift,
    refractive_index,
)

__version__ = "0.1.0"
