"""Trajectory methods for Born-Oppenheimer dynamics and their quantum references.

Subpackages and modules:

``units``       atomic-unit parameters and the dimensionless mass ratio ``mu``
``electronic``  model Hamiltonians, Jacobi eigensolver, adiabatic surfaces
``bomd``        on-the-fly Born-Oppenheimer molecular dynamics
``bohmion``     kernel-regularized particle closure of quantum hydrodynamics
``koopmon``     phase-space particle closure of mixed quantum-classical dynamics
``madelung``    grid TDSE reference solver and hydrodynamic field diagnostics
``cli``         configuration, orchestration and output
"""

__version__ = "0.1.0"
