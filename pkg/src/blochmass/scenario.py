"""Physical scenarios, the scaled unit system and run configuration.

Everything downstream works in lattice units: lengths in ``1/k_L``, energies
in the recoil energy ``E_R = hbar^2 k_L^2 / 2m`` and times in ``hbar / E_R``,
with ``k_L = pi / b``.  Only four numbers then control the dynamics: the
potential strength ``s``, the scaled force ``F~ = F / (k_L E_R)``, the packet
width ``sigma~`` and the initial band ``N``.  This module is the only place
where SI units appear.

Physical constants are the CODATA values shipped with :mod:`scipy.constants`.
The two atomic masses are the standard-atomic-weight table values for the
isotopes (Rb-87: 86.909 u, Na-23: 22.990 u).
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Optional

from scipy import constants as sc

from .errors import ConfigError

HBAR = sc.hbar
PLANCK = sc.h
AMU = sc.atomic_mass
ELECTRON_MASS = sc.m_e
ELEMENTARY_CHARGE = sc.e

RB87_AMU = 86.909
NA23_AMU = 22.990

#: Longest horizon accepted by the first-order engine, in Bloch periods.
MAX_DURATION = 1.25


@dataclass(frozen=True)
class PhysicalParams:
    """Scenario in SI units.

    Parameters
    ----------
    particle_mass : float
        Mass in kg.
    lattice_constant : float
        Lattice period ``b`` in m.
    s : float
        Potential depth in recoil energies.
    accel : float
        Lattice acceleration ``a_L`` in m/s^2; the force is ``mass * accel``.
    band : int
        Initial band ``N``.
    sigma : float
        Gaussian width of the packet in units of ``k_L``.
    duration : float
        Length of the run in Bloch periods.
    label : str
        Free-form name carried into outputs.
    """

    particle_mass: float
    lattice_constant: float
    s: float
    accel: float
    band: int = 0
    sigma: float = 0.2
    duration: float = 1.0
    label: str = ""

    def __post_init__(self):
        for name in ("particle_mass", "lattice_constant", "duration"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ConfigError(f"{name} must be positive and finite, got {value!r}")
        if not (math.isfinite(self.s) and self.s >= 0):
            raise ConfigError(f"s must be >= 0, got {self.s!r}")
        if not (math.isfinite(self.accel) and self.accel >= 0):
            raise ConfigError(f"accel must be >= 0, got {self.accel!r}")
        if not (0 < self.sigma < 1):
            raise ConfigError(f"sigma must lie in (0, 1) (units of k_L), got {self.sigma!r}")
        if int(self.band) != self.band or self.band < 0:
            raise ConfigError(f"band must be an integer >= 0, got {self.band!r}")

    @property
    def force(self) -> float:
        """Force in newtons."""
        return self.particle_mass * self.accel


@dataclass(frozen=True)
class ScaledParams:
    """Dimensionless scenario plus the unit conversions back to SI.

    ``tau_B`` and ``tau_B_scaled`` are ``inf`` when the force vanishes.
    """

    s: float
    force: float
    sigma: float
    band: int
    duration: float
    recoil_energy: float
    k_lattice: float
    recoil_velocity: float
    tau_B: float
    tau_B_scaled: float
    time_unit: float
    label: str = ""

    @property
    def horizon(self) -> float:
        """Run length in scaled time (``inf`` at zero force)."""
        return self.duration * self.tau_B_scaled

    def to_seconds(self, t_scaled):
        return t_scaled * self.time_unit


def scale(params: PhysicalParams) -> ScaledParams:
    """Convert a physical scenario to lattice units.

    Examples
    --------
    >>> p = preset("rb-s7")
    >>> round(scale(p).force, 3)
    0.173
    """
    m = params.particle_mass
    b = params.lattice_constant
    k_lattice = math.pi / b
    recoil = HBAR**2 * k_lattice**2 / (2.0 * m)
    # Linear in the acceleration so that a -> 2a doubles F~ exactly.
    force = (2.0 * m**2 * b**3 / (math.pi**3 * HBAR**2)) * params.accel
    if params.accel > 0:
        tau_B = (PLANCK / (b * m)) / params.accel
        tau_B_scaled = 2.0 / force
    else:
        tau_B = tau_B_scaled = math.inf
    return ScaledParams(
        s=float(params.s),
        force=force,
        sigma=float(params.sigma),
        band=int(params.band),
        duration=float(params.duration),
        recoil_energy=recoil,
        k_lattice=k_lattice,
        recoil_velocity=HBAR * k_lattice / m,
        tau_B=tau_B,
        tau_B_scaled=tau_B_scaled,
        time_unit=HBAR / recoil,
        label=params.label,
    )


def scaled(s: float, force: float, sigma: float, band: int = 0, duration: float = 1.0) -> ScaledParams:
    """Purely dimensionless scenario (SI conversions refer to a unit system with ``E_R = hbar = k_L = 1``)."""
    tau = 2.0 / force if force > 0 else math.inf
    return ScaledParams(
        s=float(s), force=float(force), sigma=float(sigma), band=int(band),
        duration=float(duration), recoil_energy=1.0, k_lattice=1.0,
        recoil_velocity=1.0, tau_B=tau, tau_B_scaled=tau, time_unit=1.0,
        label="scaled",
    )


# --------------------------------------------------------------------------
# presets

_ELECTRON_FIELD = 1.7e7  # V/m

_PRESETS = {
    "electron-s10-N2": dict(
        particle_mass=ELECTRON_MASS, lattice_constant=0.5e-9, s=10.0,
        accel=ELEMENTARY_CHARGE * _ELECTRON_FIELD / ELECTRON_MASS,
        band=2, sigma=0.2, duration=0.05,
    ),
    "electron-s10-N0": dict(
        particle_mass=ELECTRON_MASS, lattice_constant=0.5e-9, s=10.0,
        accel=ELEMENTARY_CHARGE * _ELECTRON_FIELD / ELECTRON_MASS,
        band=0, sigma=0.2, duration=0.05,
    ),
    "rb-s7": dict(
        particle_mass=RB87_AMU * AMU, lattice_constant=390e-9, s=7.0,
        accel=24.2, band=0, sigma=0.2,
    ),
    "rb-s7-strong": dict(
        particle_mass=RB87_AMU * AMU, lattice_constant=390e-9, s=7.0,
        accel=72.6, band=0, sigma=0.2,
    ),
    "rb-s13": dict(
        particle_mass=RB87_AMU * AMU, lattice_constant=390e-9, s=13.0,
        accel=24.2, band=0, sigma=0.2,
    ),
    "na-s7-narrow": dict(
        particle_mass=NA23_AMU * AMU, lattice_constant=295e-9, s=7.0,
        accel=800.0, band=0, sigma=0.004,
    ),
    "na-s13-N1": dict(
        particle_mass=NA23_AMU * AMU, lattice_constant=295e-9, s=13.0,
        accel=800.0, band=1, sigma=0.01,
    ),
    "na-s14": dict(
        particle_mass=NA23_AMU * AMU, lattice_constant=295e-9, s=14.0,
        accel=1700.0, band=0, sigma=0.01,
    ),
}

#: Figure each preset is taken from, used by ``presets`` listings.
PRESET_FIGURES = {
    "electron-s10-N2": "Fig. 2 (effective mass, electron, N=2)",
    "electron-s10-N0": "Fig. 3 (acceleration, electron, N=0)",
    "rb-s7": "Figs. 4-5 (Rb-87, acceleration and velocity)",
    "rb-s7-strong": "Figs. 6 and 11 (Rb-87, tripled force, populations)",
    "rb-s13": "Fig. 7 (Rb-87, deeper lattice)",
    "na-s7-narrow": "Fig. 8 (Na-23, narrow packet)",
    "na-s13-N1": "Figs. 9 and 12 (Na-23, N=1, populations)",
    "na-s14": "Fig. 10 (Na-23, s=14, larger force)",
}

PRESET_NAMES = tuple(_PRESETS)


def preset(name: str) -> PhysicalParams:
    """Scenario from the figure catalog (see ``PRESET_NAMES``)."""
    try:
        values = _PRESETS[name]
    except KeyError:
        raise ConfigError(
            f"unknown preset {name!r}; valid names: {', '.join(PRESET_NAMES)}"
        ) from None
    return PhysicalParams(label=name, **values)


# --------------------------------------------------------------------------
# configuration documents


@dataclass(frozen=True)
class SolverSettings:
    """Numerical knobs.  ``None`` means "choose automatically".

    Attributes
    ----------
    cutoff : int
        Plane-wave cutoff ``J`` of the band solver.
    n_bands : int
        Bands used for split-step population projection.
    grid_cells, pts_per_cell, dt :
        Split-step grid (cells ``M``, points per cell ``P``) and time step.
    samples : int or None
        First-order time samples.
    q_points : int or None
        First-order quadrature points.
    top_band : int or None
        Highest band in the first-order interband sum.
    """

    cutoff: int = 32
    n_bands: int = 8
    grid_cells: Optional[int] = None
    pts_per_cell: int = 32
    dt: float = 1e-3
    samples: Optional[int] = None
    q_points: Optional[int] = None
    top_band: Optional[int] = None

    def __post_init__(self):
        if self.cutoff < 1:
            raise ConfigError(f"cutoff must be >= 1, got {self.cutoff}")
        if self.n_bands < 1:
            raise ConfigError(f"n_bands must be >= 1, got {self.n_bands}")
        if self.grid_cells is not None and self.grid_cells < 1:
            raise ConfigError(f"grid_cells must be >= 1, got {self.grid_cells}")
        if self.pts_per_cell < 4:
            raise ConfigError(f"pts_per_cell must be >= 4, got {self.pts_per_cell}")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigError(f"dt must be positive, got {self.dt}")
        for name in ("samples", "q_points"):
            value = getattr(self, name)
            if value is not None and value < 16:
                raise ConfigError(f"{name} must be >= 16, got {value}")
        if self.top_band is not None and self.top_band < 1:
            raise ConfigError(f"top_band must be >= 1, got {self.top_band}")


# key -> (parser, permitted-range text, check)
_SCENARIO_KEYS = {
    "mass_amu": (float, "> 0", lambda v: v > 0),
    "lattice_nm": (float, "> 0", lambda v: v > 0),
    "s": (float, ">= 0", lambda v: v >= 0),
    "accel": (float, ">= 0", lambda v: v >= 0),
    "band": (int, ">= 0", lambda v: v >= 0),
    "sigma": (float, "in (0, 1)", lambda v: 0 < v < 1),
    "duration_bloch": (float, "in (0, 1.25]", lambda v: 0 < v <= MAX_DURATION),
}
_SETTING_KEYS = {
    "cutoff": (int, ">= 1", lambda v: v >= 1),
    "n_bands": (int, ">= 1", lambda v: v >= 1),
    "grid_cells": (int, ">= 1", lambda v: v >= 1),
    "pts_per_cell": (int, ">= 4", lambda v: v >= 4),
    "dt": (float, "> 0", lambda v: v > 0),
    "samples": (int, ">= 16", lambda v: v >= 16),
    "q_points": (int, ">= 16", lambda v: v >= 16),
    "top_band": (int, ">= 1", lambda v: v >= 1),
}
_REQUIRED = ("mass_amu", "lattice_nm", "s", "accel")


def _parse_value(key, raw, lineno, parser, allowed, check):
    try:
        value = parser(raw)
    except ValueError:
        raise ConfigError(f"line {lineno}: cannot parse {key}={raw!r}") from None
    if isinstance(value, float) and not math.isfinite(value):
        raise ConfigError(f"line {lineno}: {key} must be finite")
    if not check(value):
        raise ConfigError(f"line {lineno}: {key}={raw} out of range, {key} must be {allowed}")
    return value


def load_config(text: str, label: str = "config") -> tuple[PhysicalParams, SolverSettings]:
    """Parse a ``key = value`` document.

    Blank lines and ``#`` comments are ignored.  Required keys are
    ``mass_amu``, ``lattice_nm``, ``s`` and ``accel``; ``band`` (0), ``sigma``
    (0.2) and ``duration_bloch`` (1.0) are optional, as are the solver
    overrides listed in :class:`SolverSettings`.

    Raises
    ------
    ConfigError
        On syntax errors (with line number), unknown or repeated keys,
        out-of-range values and missing required keys.
    """
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        spec = _SCENARIO_KEYS.get(key) or _SETTING_KEYS.get(key)
        if spec is None:
            known = ", ".join(list(_SCENARIO_KEYS) + list(_SETTING_KEYS))
            raise ConfigError(f"line {lineno}: unknown key {key!r} (known: {known})")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _parse_value(key, raw, lineno, *spec)
    for key in _REQUIRED:
        if key not in values:
            raise ConfigError(f"{key} required")
    params = PhysicalParams(
        particle_mass=values["mass_amu"] * AMU,
        lattice_constant=values["lattice_nm"] * 1e-9,
        s=values["s"],
        accel=values["accel"],
        band=values.get("band", 0),
        sigma=values.get("sigma", 0.2),
        duration=values.get("duration_bloch", 1.0),
        label=label,
    )
    settings = SolverSettings(**{k: values[k] for k in _SETTING_KEYS if k in values})
    return params, settings


def format_config(params: PhysicalParams, settings: SolverSettings | None = None) -> str:
    """Fully resolved configuration in the ``load_config`` format.

    Floats use ``repr`` so the echo parses back to identical values.
    """
    settings = settings or SolverSettings()
    lines = [
        f"mass_amu = {params.particle_mass / AMU!r}",
        f"lattice_nm = {params.lattice_constant * 1e9!r}",
        f"s = {float(params.s)!r}",
        f"accel = {float(params.accel)!r}",
        f"band = {int(params.band)}",
        f"sigma = {float(params.sigma)!r}",
        f"duration_bloch = {float(params.duration)!r}",
    ]
    for f in dataclasses.fields(settings):
        value = getattr(settings, f.name)
        if value is not None:
            lines.append(f"{f.name} = {value!r}")
    return "\n".join(lines) + "\n"


def describe(sp: ScaledParams) -> dict:
    """Scaled and SI summary values, handy for headers and listings."""
    return {
        "label": sp.label,
        "s": sp.s,
        "F_scaled": sp.force,
        "sigma_scaled": sp.sigma,
        "band": sp.band,
        "E_R_J": sp.recoil_energy,
        "v_R_m_per_s": sp.recoil_velocity,
        "tau_B_s": sp.tau_B,
        "tau_B_scaled": sp.tau_B_scaled,
        "time_unit_s": sp.time_unit,
    }
