"""Split-step spectral reference solver.

The Schrodinger equation in lattice units, ``i dpsi/dt = [k^2 + s sin^2 x - F x] psi``,
is solved in the vector-potential gauge ``phi = exp(-i F t x) psi``, where

    i dphi/dt = [(k + F t)^2 + s sin^2 x] phi.

The Hamiltonian stays periodic, canonical momentum ``k`` is conserved and the
mechanical momentum is ``k + F t``.  A box of ``M`` lattice cells with ``P``
points per cell resolves canonical momenta ``k = 2m/M``; the plane waves
``k_m + 2j`` belong to quasimomentum sector ``m``, which the lattice potential
never mixes with other sectors.

Time stepping is Strang splitting (half potential, full kinetic, half
potential).  The kinetic phase over a step is integrated exactly,
``int (k + F t')^2 dt'``, so the only splitting error is the usual
second-order commutator term.

Because sectors decouple, a state occupying a few sectors can be stepped on
those sectors alone: :class:`SectorPropagator` applies the same Strang step
to an ``(n_sectors, P)`` block with ``P``-point transforms, which gives the
full-grid result to rounding at a fraction of the cost for narrow packets.
:class:`Propagator` steps the whole grid and serves as the reference.
"""
from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import fft

from .bands import LatticeSpec, gauge_chain, solve_many
from .errors import ConfigError, NumericalError, SizingError
from .firstorder import TimeSeries, WavepacketSpec, mstar_ratio

#: The packet is sampled over ``|k| <= 8 sigma``.
K_SPAN = 8.0
#: Velocity change allowed when the time step is doubled.
GATE_TOL = 1e-4

CHECKPOINT_MAGIC = b"BLMSCKPT"
CHECKPOINT_VERSION = 1
# magic, version, cells, pts_per_cell, step count, t, dt, s, F
_HEADER = struct.Struct("<8sIIIQdddd")


def required_cells(sigma: float) -> int:
    """Smallest power of two ``M >= 128`` with ``2/M <= sigma/8``."""
    m = 128
    while 2.0 / m > sigma / 8.0:
        m *= 2
    return m


def default_cells(sigma: float) -> int:
    """Default box size: 128 cells for wide packets, 4096 below sigma = 0.02."""
    if sigma < 0.02:
        return max(4096, required_cells(sigma))
    return required_cells(sigma)


@dataclass(frozen=True)
class SimGrid:
    """Periodic grid of ``cells`` lattice cells, ``pts_per_cell`` points each.

    Scaled box length is ``cells * pi``; canonical momenta are ``2 m / cells``.
    """

    cells: int
    pts_per_cell: int = 32
    dt: float = 1e-3

    def __post_init__(self):
        n = self.cells * self.pts_per_cell
        if n & (n - 1):
            raise ConfigError(f"cells * pts_per_cell must be a power of two, got {n}")
        if self.pts_per_cell < 8:
            raise ConfigError("pts_per_cell must be >= 8")
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")

    @classmethod
    def for_packet(cls, sigma: float, cells: Optional[int] = None, pts_per_cell: int = 32, dt: float = 1e-3):
        """Grid for a packet of width ``sigma``; raises if ``cells`` is too small."""
        need = required_cells(sigma)
        if cells is None:
            cells = default_cells(sigma)
        elif 2.0 / cells > sigma / 8.0 + 1e-15:
            raise SizingError(
                f"{cells} cells give dk = {2.0 / cells:.3g} > sigma/8 = {sigma / 8:.3g}; "
                f"use at least {need} cells"
            )
        return cls(cells=int(cells), pts_per_cell=int(pts_per_cell), dt=float(dt))

    @property
    def size(self) -> int:
        return self.cells * self.pts_per_cell

    @property
    def dx(self) -> float:
        return math.pi / self.pts_per_cell

    @property
    def x(self) -> np.ndarray:
        return self.dx * np.arange(self.size)

    @property
    def k(self) -> np.ndarray:
        """Canonical momenta in FFT order."""
        return fft.fftfreq(self.size, d=1.0 / self.size) * (2.0 / self.cells)

    @property
    def basis_cutoff(self) -> int:
        """Largest ``J`` whose plane waves ``k + 2j`` fit below the grid Nyquist limit."""
        return self.pts_per_cell // 2 - 1

    def index(self, m, j):
        """FFT index of plane wave ``k_m + 2j`` (``m`` is the signed sector index)."""
        return np.mod(np.asarray(m)[..., None] + np.asarray(j) * self.cells, self.size)


@dataclass
class FieldState:
    """Wavefunction samples ``phi(x)`` (vector-potential gauge) at time ``t``.

    Normalization is ``sum |phi|^2 = 1`` over grid points.
    """

    psi: np.ndarray
    t: float = 0.0
    steps: int = 0
    norm: float = 1.0

    def copy(self) -> "FieldState":
        return FieldState(self.psi.copy(), self.t, self.steps, self.norm)


def _active_sectors(grid: SimGrid, packet: WavepacketSpec):
    """Extended momenta ``k`` sampled for the packet and their sector indices."""
    m_max = int(math.floor(K_SPAN * packet.sigma * grid.cells / 2.0 + 1e-9))
    c = int(round(packet.center * grid.cells / 2.0))
    m_ext = np.arange(c - m_max, c + m_max + 1)
    k_ext = 2.0 * m_ext / grid.cells
    return k_ext, m_ext


def occupied_sectors(grid: SimGrid, packet: WavepacketSpec) -> np.ndarray:
    """Sorted signed sector indices ``m`` holding the synthesized packet."""
    _, m_ext = _active_sectors(grid, packet)
    half = grid.cells // 2
    return np.unique(np.mod(m_ext + half, grid.cells) - half)


def synthesize_initial(grid: SimGrid, s: float, packet: WavepacketSpec) -> FieldState:
    """Gaussian superposition of band-``N`` Bloch states on the grid.

    ``phi = sum_k f(k) psi_N(k, x)`` over the box momenta with ``|k| <= 8 sigma``,
    using eigenvectors from one gauge chain so the packet is smooth and
    localized; normalized to one.  Only bands ``0..N`` are solved, so
    degeneracies among higher bands (as at ``s = 0``) do not matter.
    """
    if 2.0 / grid.cells > packet.sigma / 8.0 + 1e-15:
        raise SizingError(
            f"box of {grid.cells} cells cannot resolve sigma={packet.sigma}; "
            f"use at least {required_cells(packet.sigma)} cells"
        )
    spec = LatticeSpec(s, grid.basis_cutoff, packet.band + 1)
    k_ext, m_ext = _active_sectors(grid, packet)
    path = gauge_chain(spec, k_ext)
    coeffs = path.coeffs[:, packet.band, :]  # (nk, 2J+1), relative to k_ext
    amp = packet.amplitude(k_ext)
    spectrum = np.zeros(grid.size, dtype=complex)
    j = spec.j
    idx = grid.index(m_ext, j)
    np.add.at(spectrum, idx, amp[:, None] * coeffs)
    spectrum /= np.linalg.norm(spectrum)
    psi = fft.ifft(spectrum, norm="ortho")
    return FieldState(psi=psi, t=0.0, steps=0, norm=float(np.vdot(psi, psi).real))


class Propagator:
    """Strang-split stepper for one grid, potential strength and force."""

    def __init__(self, grid: SimGrid, s: float, force: float):
        self.grid = grid
        self.s = float(s)
        self.force = float(force)
        x = grid.x
        self.potential = self.s * np.sin(x) ** 2
        self.sin2x = np.sin(2.0 * x)
        self.k = grid.k
        self._half = np.exp(-0.5j * grid.dt * self.potential)

    def kinetic_phase(self, t: float, dt: float) -> np.ndarray:
        """Exact ``int_t^{t+dt} (k + F t')^2 dt'`` for every grid momentum."""
        a = self.k + self.force * t
        f = self.force
        return a * a * dt + a * f * dt * dt + f * f * dt**3 / 3.0

    def step(self, state: FieldState) -> FieldState:
        """Advance ``state`` in place by one time step and return it."""
        dt = self.grid.dt
        psi = state.psi * self._half
        spec = fft.fft(psi, norm="ortho")
        spec *= np.exp(-1j * self.kinetic_phase(state.t, dt))
        psi = fft.ifft(spec, norm="ortho")
        psi *= self._half
        state.psi = psi
        state.steps += 1
        state.t = state.steps * dt
        return state

    def advance(self, state: FieldState, n: int) -> FieldState:
        """``n`` steps, with consecutive half potential steps fused."""
        if n <= 0:
            return state
        dt = self.grid.dt
        full = self._half * self._half
        psi = state.psi * self._half
        for i in range(n):
            t = (state.steps + i) * dt
            spec = fft.fft(psi, norm="ortho")
            spec *= np.exp(-1j * self.kinetic_phase(t, dt))
            psi = fft.ifft(spec, norm="ortho")
            psi *= full if i < n - 1 else self._half
        state.psi = psi
        state.steps += n
        state.t = state.steps * dt
        if not np.all(np.isfinite(psi)):
            raise NumericalError(f"non-finite wavefunction at step {state.steps}")
        return state


@dataclass
class SectorState:
    """Cell-periodic parts ``u_m(x_p)`` of the occupied sectors at time ``t``.

    Row ``i`` belongs to sector ``sectors[i]``; column ``p`` is the point
    ``x_p = p pi / P`` within one cell.  ``fft(u, axis=1, norm="ortho")``
    gives the amplitudes of the plane waves ``k_m + 2j`` with ``j`` in FFT
    order, identical to the corresponding entries of the full-grid spectrum.
    """

    u: np.ndarray
    sectors: np.ndarray
    t: float = 0.0
    steps: int = 0


class SectorPropagator:
    """Strang stepper restricted to a set of quasimomentum sectors.

    Equivalent to :class:`Propagator` for states supported on ``sectors``:
    the potential acts pointwise within a cell and the kinetic factor is
    diagonal in the plane waves, so neither operation couples sectors.
    """

    def __init__(self, grid: SimGrid, s: float, force: float, sectors):
        self.grid = grid
        self.s = float(s)
        self.force = float(force)
        self.sectors = np.asarray(sectors, dtype=int)
        if np.unique(self.sectors).size != self.sectors.size:
            raise ConfigError("sector indices must be distinct")
        p = grid.pts_per_cell
        self.idx = grid.index(self.sectors, np.arange(p))  # (n_sectors, P)
        self.k = grid.k[self.idx]
        xp = grid.dx * np.arange(p)
        self.potential = self.s * np.sin(xp) ** 2
        self.sin2x = np.sin(2.0 * xp)
        self._half = np.exp(-0.5j * grid.dt * self.potential)

    def from_field(self, state: FieldState) -> SectorState:
        block = fft.fft(state.psi, norm="ortho")[self.idx]
        return SectorState(fft.ifft(block, axis=1, norm="ortho"), self.sectors, state.t, state.steps)

    def to_field(self, state: SectorState) -> FieldState:
        spec = np.zeros(self.grid.size, dtype=complex)
        spec[self.idx] = self.spectrum(state)
        psi = fft.ifft(spec, norm="ortho")
        return FieldState(psi, state.t, state.steps, float(np.vdot(psi, psi).real))

    def spectrum(self, state: SectorState) -> np.ndarray:
        return fft.fft(state.u, axis=1, norm="ortho")

    def kinetic_phase(self, t: float, dt: float) -> np.ndarray:
        a = self.k + self.force * t
        f = self.force
        return a * a * dt + a * f * dt * dt + f * f * dt**3 / 3.0

    def advance(self, state: SectorState, n: int) -> SectorState:
        """``n`` steps, with consecutive half potential steps fused."""
        if n <= 0:
            return state
        dt = self.grid.dt
        full = self._half * self._half
        u = state.u * self._half
        for i in range(n):
            t = (state.steps + i) * dt
            block = fft.fft(u, axis=1, norm="ortho")
            block *= np.exp(-1j * self.kinetic_phase(t, dt))
            u = fft.ifft(block, axis=1, norm="ortho")
            u *= full if i < n - 1 else self._half
        state.u = u
        state.steps += n
        state.t = state.steps * dt
        if not np.all(np.isfinite(u)):
            raise NumericalError(f"non-finite wavefunction at step {state.steps}")
        return state

    def observables(self, state: SectorState) -> dict:
        """Same quantities as :func:`observables`, from the sector block."""
        weights = np.abs(self.spectrum(state)) ** 2
        norm = float(weights.sum())
        v = float(np.sum(weights * (self.k + self.force * state.t))) / norm
        dens = np.sum(np.abs(state.u) ** 2, axis=0)
        a = self.force - self.s * float(np.dot(dens, self.sin2x)) / norm
        return {"v": v, "a": a, "norm": norm}


def observables(state: FieldState, grid: SimGrid, s: float, force: float) -> dict:
    """Mean velocity (mechanical momentum) and acceleration ``F - s <sin 2x>``."""
    dens = np.abs(state.psi) ** 2
    norm = float(dens.sum())
    spec = np.abs(fft.fft(state.psi, norm="ortho")) ** 2
    v = float(np.sum(spec * (grid.k + force * state.t))) / norm
    a = force - s * float(np.sum(dens * np.sin(2.0 * grid.x))) / norm
    return {"v": v, "a": a, "norm": norm}


class Projector:
    """Band populations from the instantaneous band states.

    Sector ``m`` at time ``t`` is projected on the band states at the
    mechanical quasimomentum ``k_m + F t``.  Only the sectors holding the
    packet are projected; the others stay empty because sectors never mix.
    """

    def __init__(self, grid: SimGrid, s: float, packet: WavepacketSpec, n_bands: int = 8):
        self.grid = grid
        self.spec = LatticeSpec(s, grid.basis_cutoff, n_bands)
        m = occupied_sectors(grid, packet)
        self.sectors = m
        self.k_sector = 2.0 * m / grid.cells
        self.idx = grid.index(m, self.spec.j)
        self._cols = np.mod(self.spec.j, grid.pts_per_cell)

    def _project(self, amps, total, t, force):
        _, coeffs = solve_many(self.spec, self.k_sector + force * t)
        proj = np.einsum("knj,kj->kn", coeffs, amps)
        return np.sum(np.abs(proj) ** 2, axis=0) / total

    def populations(self, state: FieldState, force: float) -> np.ndarray:
        spec = fft.fft(state.psi, norm="ortho")
        return self._project(spec[self.idx], float(np.sum(np.abs(spec) ** 2)), state.t, force)

    def populations_block(self, block: np.ndarray, t: float, force: float) -> np.ndarray:
        """Populations from a sector spectrum whose rows follow ``self.sectors``."""
        return self._project(block[:, self._cols], float(np.sum(np.abs(block) ** 2)), t, force)


def band_populations(state: FieldState, grid: SimGrid, s: float, packet: WavepacketSpec, force: float, n_bands: int = 8):
    """Populations of bands ``0..n_bands-1`` (see :class:`Projector`)."""
    return Projector(grid, s, packet, n_bands).populations(state, force)


# --------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, state: FieldState, grid: SimGrid, s: float, force: float) -> None:
    """Write a versioned checkpoint.

    Layout (little-endian): 8-byte magic ``BLMSCKPT``, uint32 version,
    uint32 cells, uint32 points per cell, uint64 step count, float64 t,
    dt, s and F, followed by ``cells * pts_per_cell`` complex128 samples.
    """
    header = _HEADER.pack(
        CHECKPOINT_MAGIC, CHECKPOINT_VERSION, grid.cells, grid.pts_per_cell,
        state.steps, state.t, grid.dt, s, force,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(state.psi, dtype="<c16").tobytes())


def load_checkpoint(path):
    """Read a checkpoint; returns ``(state, grid, s, force)``."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ConfigError(f"{path}: truncated checkpoint header")
    magic, version, cells, ppc, steps, t, dt, s, force = _HEADER.unpack_from(raw)
    if magic != CHECKPOINT_MAGIC:
        raise ConfigError(f"{path}: not a checkpoint file")
    if version != CHECKPOINT_VERSION:
        raise ConfigError(f"{path}: unsupported checkpoint version {version}")
    grid = SimGrid(cells=cells, pts_per_cell=ppc, dt=dt)
    data = np.frombuffer(raw, dtype="<c16", offset=_HEADER.size)
    if data.size != grid.size:
        raise ConfigError(f"{path}: expected {grid.size} samples, found {data.size}")
    state = FieldState(psi=data.astype(complex), t=t, steps=steps)
    state.norm = float(np.vdot(state.psi, state.psi).real)
    return state, grid, s, force


# --------------------------------------------------------------------------
# driver


@dataclass
class RunResult:
    series: TimeSeries
    state: FieldState
    grid: SimGrid
    meta: dict = field(default_factory=dict)


def _final_velocity(grid, s, force, packet, n_steps, n_bands):
    prop = SectorPropagator(grid, s, force, occupied_sectors(grid, packet))
    state = prop.from_field(synthesize_initial(grid, s, packet))
    prop.advance(state, n_steps)
    return prop.observables(state)["v"]


def run(
    s: float,
    packet: WavepacketSpec,
    force: float,
    horizon: float,
    grid: Optional[SimGrid] = None,
    sample_every: Optional[int] = None,
    populations: bool = False,
    n_bands: int = 8,
    gate: bool = True,
    baseline=None,
) -> RunResult:
    """Propagate a synthesized packet to ``horizon`` and sample observables.

    Parameters
    ----------
    s, packet, force, horizon
        Lattice depth, initial packet, scaled force and run length (scaled time).
    grid : SimGrid, optional
        Defaults to :meth:`SimGrid.for_packet`.
    sample_every : int, optional
        Steps between samples; defaults to about 0.01 scaled time units.
    populations : bool
        Also record band populations (slower).
    gate : bool
        Run the step-doubling convergence gate: the final velocity with
        ``2 dt`` must agree to ``1e-4``.
    baseline : callable, optional
        ``baseline(t) -> (a, v)`` giving the effective-mass prediction on the
        sample times; NaN columns are stored otherwise.
    """
    grid = grid or SimGrid.for_packet(packet.sigma)
    n_steps = int(round(horizon / grid.dt))
    if abs(n_steps * grid.dt - horizon) > 1e-9 * max(1.0, horizon):
        raise ConfigError(f"horizon {horizon} is not a multiple of dt={grid.dt}")
    if sample_every is None:
        sample_every = max(1, int(round(0.01 / grid.dt)))
    prop = SectorPropagator(grid, s, force, occupied_sectors(grid, packet))
    state = prop.from_field(synthesize_initial(grid, s, packet))
    proj = Projector(grid, s, packet, n_bands) if populations else None

    marks = list(range(0, n_steps + 1, sample_every))
    if marks[-1] != n_steps:
        marks.append(n_steps)
    t = np.empty(len(marks))
    a = np.empty(len(marks))
    v = np.empty(len(marks))
    pops = np.empty((n_bands, len(marks))) if populations else None
    norm_dev = 0.0
    for i, mark in enumerate(marks):
        prop.advance(state, mark - state.steps)
        obs = prop.observables(state)
        t[i], a[i], v[i] = state.t, obs["a"], obs["v"]
        norm_dev = max(norm_dev, abs(obs["norm"] - 1.0))
        if proj is not None:
            pops[:, i] = proj.populations_block(prop.spectrum(state), state.t, force)
    final = prop.to_field(state)

    meta = {
        "cells": grid.cells,
        "pts_per_cell": grid.pts_per_cell,
        "dt": grid.dt,
        "steps": n_steps,
        "max_norm_deviation": norm_dev,
        "sectors": int(prop.sectors.size),
    }
    if gate:
        coarse = SimGrid(grid.cells, grid.pts_per_cell, 2.0 * grid.dt)
        if n_steps % 2:
            meta["gate"] = "skipped (odd step count)"
        else:
            v2 = _final_velocity(coarse, s, force, packet, n_steps // 2, n_bands)
            change = abs(v2 - v[-1])
            meta["gate_velocity_change"] = change
            meta["gate"] = "pass" if change < GATE_TOL else "fail"
            if change >= GATE_TOL:
                raise NumericalError(
                    f"time step not converged: doubling dt changes the final velocity "
                    f"by {change:.3g} (>= {GATE_TOL:g}); reduce dt below {grid.dt}"
                )
    if baseline is not None:
        a_b, v_b = baseline(t)
    else:
        a_b = v_b = np.full(t.size, np.nan)
    series = TimeSeries(
        t=t,
        a=a,
        v=v,
        mstar=mstar_ratio(a, force),
        a_baseline=np.asarray(a_b, dtype=float),
        v_baseline=np.asarray(v_b, dtype=float),
        provenance="full-numeric",
        populations=pops,
        bands=tuple(range(n_bands)) if populations else (),
        meta=meta,
    )
    return RunResult(series=series, state=final, grid=grid, meta=meta)
