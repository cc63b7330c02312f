"""Simulation and verification harness for a damped viscoelastic wave
equation with a dynamic boundary condition and time-varying boundary delay."""

from .analysis import (
    DecayFit,
    ValidationReport,
    convergence_order,
    cross_validate_delay,
    cross_validate_memory,
    fit_decay,
    integrate_xi,
    stability_sweep,
)
from .delay import DelaySpec, tau_eval, validate_delay
from .energy import ZetaSelection, choose_zeta, compute_energy, equivalence_ratios
from .kernels import KernelSpec, compress_to_expsum, evaluate_kernel, validate_kernel, xi_of
from .profiles import Profile
from .solver import Grid1D, SimConfig, Trajectory, advance, init_state, run

__version__ = "0.1.0"
