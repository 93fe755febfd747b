"""
slowflow: slowly varying Navier-Stokes flows on periodic boxes.

Pseudo-spectral solvers for the slice family of two-dimensional flows, the
anisotropic corrector, the assembled approximate solution and the
remainder system, plus the norms and audits used to measure how the
remainder and its forcing scale with the variation parameter ``eps``.
"""
from .assembly import (
    Background,
    EpsParams,
    ForcingBundle,
    build_u0_eps,
    build_vapp,
    fast_to_slow,
    forcing_feps,
    residual_check,
    slow_to_fast,
)
from .errors import CFLWarning, ConfigError, NumericalError
from .experiment import (
    ExperimentConfig,
    SweepRecord,
    default_config,
    emit_report,
    fit_all,
    fit_scaling,
    generate_initial_data,
    run_sweep,
)
from .norms import (
    aniso_norms,
    besov_heat_norm,
    bmo_inverse_norm,
    carleson_term,
    hs_norm,
    inequality_audit,
)
from .ns2d import SliceFamily, SliceTrajectory, energy_report, solve_slice_family
from .pipeline import run_lockstep
from .remainder import solve_remainder, weight_Veps
from .snapshot import read_snapshot, write_snapshot
from .spectral import Grid, ScalarField, VectorField, make_grid, to_physical, to_spectral
from .transport import TransportState, solve_transport

__version__ = "0.1.0"
