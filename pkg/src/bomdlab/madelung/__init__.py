"""Grid TDSE reference solver and exact-factorization field diagnostics."""

from .fields import (ElectronicPotential, MadelungFields, berry_connection, check_fields,
                     electronic_potential, quantum_potential, regauge, tangent_gradient,
                     velocity_field, xf_extract)
from .grid import Grid, GridWavefunction
from .hydro import HydroResiduals, hydro_residuals
from .io import decode_snapshot, encode_snapshot, read_snapshot, write_snapshot
from .tdse import (ElectronicTable, Observables, TDSEPropagator, TDSERun, adiabatic_states,
                   boundary_mass, check_resolution, gaussian_packet, observables, run_tdse,
                   spectral_tail, tdse_step)

__all__ = [
    "ElectronicPotential", "ElectronicTable", "Grid", "GridWavefunction", "HydroResiduals",
    "MadelungFields", "Observables", "TDSEPropagator", "TDSERun", "adiabatic_states",
    "berry_connection", "boundary_mass", "check_fields", "check_resolution",
    "decode_snapshot", "electronic_potential", "encode_snapshot", "gaussian_packet",
    "hydro_residuals", "observables", "quantum_potential", "read_snapshot", "regauge",
    "run_tdse", "spectral_tail", "tangent_gradient", "tdse_step", "velocity_field",
    "write_snapshot", "xf_extract",
]
