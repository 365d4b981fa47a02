"""Transient effective mass of a Bloch wavepacket after a suddenly applied force.

Modules
-------
scenario
    Physical parameters, scaling to lattice units, presets and config files.
bands
    Bloch eigenproblem, momentum matrix elements, gauge-smooth paths and
    effective masses.
firstorder
    First-order (in the force) acceleration, velocity and band populations.
splitstep
    Split-step Fourier reference solver for the full time-dependent problem.
cli
    ``blochmass`` command line entry point.
"""
from .bands import (
    LatticeSpec,
    band_structure,
    effective_mass,
    gauge_chain,
    inverse_effective_mass,
    matrix_elements,
    solve_bloch,
    solve_many,
)
from .errors import (
    BlochMassError,
    ConfigError,
    DegeneracyError,
    NumericalError,
    PathResolutionError,
    ResolutionError,
    SizingError,
)
from .firstorder import (
    DriveSpec,
    FirstOrderModel,
    TimeSeries,
    WavepacketSpec,
    acceleration_series,
    envelope_approx,
    population_firstorder,
    timescales,
    velocity_series,
)
from .scenario import PhysicalParams, ScaledParams, SolverSettings, load_config, preset, scale, scaled
from .splitstep import Propagator, SimGrid, run

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
