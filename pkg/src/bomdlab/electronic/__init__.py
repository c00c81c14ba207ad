"""Electronic structure stage: model Hamiltonians, eigensolver and surfaces."""

from .jacobi import EigenSolution, eigensolve, jacobi_diagonalize
from .models import (
    MODEL_KINDS,
    ElectronicModel,
    LinearCrossing,
    ScalarSurface,
    ShiftedOscillators,
    SoftCoulombChain,
    fd_hamiltonian_gradient,
)
from .surfaces import (
    GAP_MIN,
    AdiabaticTracker,
    SurfacePoint,
    adiabatic_continuation,
    density_force,
    ground_surface,
    hellmann_feynman_force,
    phase_fix,
)

__all__ = [
    "AdiabaticTracker",
    "EigenSolution",
    "ElectronicModel",
    "GAP_MIN",
    "LinearCrossing",
    "MODEL_KINDS",
    "ScalarSurface",
    "ShiftedOscillators",
    "SoftCoulombChain",
    "SurfacePoint",
    "adiabatic_continuation",
    "density_force",
    "eigensolve",
    "fd_hamiltonian_gradient",
    "ground_surface",
    "hellmann_feynman_force",
    "jacobi_diagonalize",
    "phase_fix",
]
