"""Self-adjoint vertex couplings, standing waves and orbital stability of the
cubic NLS on looping-edge (tadpole-type) metric graphs."""

__version__ = "0.1.0"

from .graph_model import GraphFunction, GraphSpec, TraceVector  # noqa: E402
from .boundary_system import (ExtensionSpec, build_delta, build_delta_prime,  # noqa: E402
                              build_delta_prime_loop, build_matrix, build_subspace,
                              greens_identity_defect, is_krein_unitary,
                              membership_residual, operator_extension)
from .standing_waves import (StandingWave, admissible_interval, loop_only_wave,  # noqa: E402
                             mass, mass_slope, solve_eta, solve_shift)
from .spectral import (AssembledOperator, SpectralReport, assemble,  # noqa: E402
                       l_minus_nonnegativity, lowest_eigenpairs, morse_and_nullity,
                       resolvent_check)
from .evolution import (EvolutionConfig, OrbitDistance, conserved_quantities,  # noqa: E402
                        orbital_experiment, step)

__all__ = [
    "GraphFunction", "GraphSpec", "TraceVector", "ExtensionSpec", "build_delta",
    "build_delta_prime", "build_delta_prime_loop", "build_matrix", "build_subspace",
    "greens_identity_defect", "is_krein_unitary", "membership_residual",
    "operator_extension", "StandingWave", "admissible_interval", "loop_only_wave", "mass",
    "mass_slope", "solve_eta", "solve_shift", "AssembledOperator", "SpectralReport",
    "assemble", "l_minus_nonnegativity", "lowest_eigenpairs", "morse_and_nullity",
    "resolvent_check", "EvolutionConfig", "OrbitDistance", "conserved_quantities",
    "orbital_experiment", "step",
]
