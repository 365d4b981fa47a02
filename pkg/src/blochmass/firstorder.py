"""First-order dynamics of a Bloch wavepacket after a sudden force.

The packet starts in band ``N`` with a Gaussian quasimomentum distribution
centred at ``k = 0``.  To first order in the interband mixing, the mean
acceleration in lattice units is

    a(t) = F sum_q w(q) [ 1/m*_N(K)
           + 4 sum_{n != N} E_nN(K) / E_nN(q)^2 p_Nn(K) p_nN(q) cos g_Nn(q, t) ]

with ``K = q + F t`` the drifted quasimomentum, ``w(q) = |f_N(q)|^2 dq`` and
the dynamical phase difference

    g_Nn(q, t) = int_0^t [E_N(q + F t') - E_n(q + F t')] dt'.

At ``t = 0`` the bracket equals the effective-mass sum rule truncated to the
retained bands, so the packet starts with the bare mass.  The first term alone
is the usual effective-mass (baseline) prediction.

All band quantities come from one gauge-continuous table along ``K``, so the
mixed products ``p(K) p(q)`` are always evaluated in a common gauge.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline, PPoly

from .bands import (
    DEGENERACY_TOL,
    LatticeSpec,
    gauge_chain,
    inverse_effective_mass,
    momentum_elements,
    solve_many,
    solve_bloch,
)
from .errors import ConfigError, DegeneracyError, NumericalError, ResolutionError

SQRT15 = math.sqrt(15.0)
#: Sum-rule tail accepted when choosing the highest retained band.
TAIL_TOL = 1e-7
#: Quadrature grids extend this many widths on either side of the centre.
Q_SPAN = 8.0
#: Largest change of the interband phase between neighbouring q points used
#: when sizing the grid (trapezoid sums of Gaussian-weighted oscillations
#: converge geometrically once this is well below pi).
PHASE_STEP = 2.0
#: Half-width, in sigma, of the region whose phase slope sizes the grid.
PHASE_SPAN = 6.0
#: Grid doublings tried when the quadrature check fails.
MAX_DOUBLINGS = 3
#: Mixing strength above which first-order theory is flagged as unreliable.
ZENER_WARN = 0.3
#: Doubling the q grid must not move any sample by more than this times F.
QUAD_TOL = 1e-4
#: Richardson estimate of the velocity error that triggers a resolution error.
VELOCITY_TOL = 1e-4
MSTAR_FLOOR = 1e-3

_CHUNK_POINTS = 200_000


class ZenerWarning(UserWarning):
    """The interband mixing is too strong for first-order theory."""


@dataclass(frozen=True)
class WavepacketSpec:
    """Gaussian packet in band ``band`` with width ``sigma`` (units of ``k_L``)."""

    band: int
    sigma: float
    center: float = 0.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        if self.band < 0:
            raise ConfigError(f"band must be >= 0, got {self.band}")

    def amplitude(self, q):
        """Scaled amplitude ``f(q)``, normalized so that ``int |f|^2 dq = 1``."""
        q = np.asarray(q, dtype=float)
        norm = (self.sigma * math.sqrt(2.0 * math.pi)) ** -0.5
        return norm * np.exp(-((q - self.center) ** 2) / (4.0 * self.sigma**2))

    def quadrature(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Uniform grid over ``center +- 8 sigma`` and weights summing to one."""
        half = Q_SPAN * self.sigma
        q = np.linspace(self.center - half, self.center + half, n)
        w = self.amplitude(q) ** 2
        return q, w / w.sum()

    def default_points(self) -> int:
        return 2048 if self.sigma <= 0.01 else 512


@dataclass(frozen=True)
class DriveSpec:
    """Step force of scaled strength ``force`` switched on at ``t = 0``.

    ``horizon`` is the run length in scaled time; ``samples`` optionally fixes
    the number of time samples.
    """

    force: float
    horizon: float
    samples: Optional[int] = None
    max_periods: float = 1.25

    def __post_init__(self):
        if not (self.force >= 0 and math.isfinite(self.force)):
            raise ConfigError(f"force must be >= 0, got {self.force}")
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise ConfigError(f"horizon must be positive, got {self.horizon}")
        if self.force > 0 and self.horizon > self.max_periods * self.tau_B + 1e-12:
            raise ConfigError(
                f"horizon {self.horizon:.6g} exceeds {self.max_periods} Bloch periods"
            )

    @classmethod
    def in_bloch_periods(cls, force: float, periods: float, samples: Optional[int] = None):
        return cls(force=force, horizon=periods * 2.0 / force, samples=samples)

    @property
    def tau_B(self) -> float:
        return 2.0 / self.force if self.force > 0 else math.inf


@dataclass
class TimeSeries:
    """Sampled response.

    ``provenance`` is one of ``"first-order"``, ``"full-numeric"`` or
    ``"effective-mass"``.  ``mstar`` is NaN wherever ``|a| < 1e-3 F``.
    ``populations`` has one row per entry of ``bands``.
    """

    t: np.ndarray
    a: np.ndarray
    v: np.ndarray
    mstar: np.ndarray
    a_baseline: np.ndarray
    v_baseline: np.ndarray
    provenance: str
    populations: Optional[np.ndarray] = None
    bands: tuple = ()
    meta: dict = field(default_factory=dict)


def mstar_ratio(a, force):
    """``m*(t)/m = F / a(t)``, NaN where the acceleration is too small."""
    a = np.asarray(a, dtype=float)
    out = np.full(a.shape, np.nan)
    if force == 0:
        return out
    ok = np.abs(a) >= MSTAR_FLOOR * force
    out[ok] = force / a[ok]
    return out


# --------------------------------------------------------------------------
# band tables


def sumrule_tail(s: float, band: int, top: int, ks, cutoff: int = 32, reference: int = 24) -> float:
    """Largest sum-rule contribution of bands above ``top`` over ``ks``.

    Bands up to ``reference`` are used as a stand-in for the full set.
    """
    reference = max(reference, top + 4)
    spec = LatticeSpec(s, cutoff, min(reference, 2 * cutoff + 1))
    energies, coeffs = solve_many(spec, ks)
    momenta = np.asarray(ks)[:, None] + 2.0 * spec.j[None, :]
    cn = coeffs[:, band, :]
    p = np.einsum("kj,kmj->km", cn * momenta, coeffs[:, top + 1 :, :])
    gap = energies[:, band, None] - energies[:, top + 1 :]
    return float(np.max(np.abs(4.0 * np.sum(p**2 / gap, axis=1))))


def select_top_band(s: float, band: int, cutoff: int = 32, tol: float = TAIL_TOL) -> int:
    """Smallest highest band in ``N+4 .. N+6`` whose omitted tail is below ``tol``."""
    if s == 0:
        return band + 4
    ks = np.linspace(-1.0, 1.0, 41)
    for top in range(band + 4, band + 7):
        if sumrule_tail(s, band, top, ks, cutoff) < tol:
            return top
    return band + 6


class BandTable:
    """Spline tables of ``E_n``, ``p_Nn`` and ``1/m*_N`` along one gauge chain.

    Parameters
    ----------
    s : float
        Potential strength.
    band : int
        Reference band ``N`` whose momentum row is stored.
    top : int
        Highest band kept.
    k_lo, k_hi : float
        Range covered; evaluation outside it raises.
    dk : float
        Base node spacing.  Extra nodes are inserted where eigenvectors
        rotate quickly.
    """

    def __init__(self, s, band, top, k_lo, k_hi, cutoff=32, dk=1e-3, min_gap=1e-6):
        if top <= band:
            raise ConfigError("top band must lie above the reference band")
        self.s = float(s)
        self.band = int(band)
        self.top = int(top)
        self.spec = LatticeSpec(self.s, cutoff, self.top + 1)
        n = max(int(math.ceil((k_hi - k_lo) / dk)), 8)
        base = np.linspace(k_lo, k_hi, n + 1)
        path = gauge_chain(self.spec, base, threshold=0.9999, keep_refined=True)
        keep = _thin(path.k, base, min_gap)
        self.k = path.k[keep]
        self.energies = path.energies[keep]
        coeffs = path.coeffs[keep]
        momenta = self.k[:, None] + 2.0 * self.spec.j[None, :]
        self.p_row = np.einsum("kj,kmj->km", coeffs[:, self.band, :] * momenta, coeffs)
        self.gauge_tag = path.gauge_tag
        self.k_lo, self.k_hi = float(self.k[0]), float(self.k[-1])
        self._e = CubicSpline(self.k, self.energies)
        self._g = self._e.antiderivative()
        self._p = CubicSpline(self.k, self.p_row)
        # 1/m* = d p_NN / dk (Hellmann-Feynman slope differentiated once more).
        self._invm = self._p.derivative()
        # Everything in one quartic piecewise polynomial so a single interval
        # search serves all quantities: columns E | G | p | 1/m*.
        nb = self.top + 1
        parts = [self._e.c, self._g.c, self._p.c, self._invm.c[:, :, [self.band]]]
        width = max(c.shape[0] for c in parts)
        padded = [np.concatenate([np.zeros((width - c.shape[0],) + c.shape[1:]), c]) for c in parts]
        self._all = PPoly(np.concatenate(padded, axis=2), self._e.x)
        self._cols = {
            "E": slice(0, nb),
            "G": slice(nb, 2 * nb),
            "p": slice(2 * nb, 3 * nb),
            "invm": 3 * nb,
        }

    def _check(self, k):
        k = np.asarray(k, dtype=float)
        if k.size and (k.min() < self.k_lo - 1e-12 or k.max() > self.k_hi + 1e-12):
            raise NumericalError(
                f"k range [{k.min():.6g}, {k.max():.6g}] outside table "
                f"[{self.k_lo:.6g}, {self.k_hi:.6g}]"
            )
        return k

    def evaluate(self, k) -> dict:
        """All tabulated quantities at ``k``: keys ``E``, ``G``, ``p``, ``invm``."""
        vals = self._all(self._check(k))
        return {name: vals[..., sl] for name, sl in self._cols.items()}

    def covers(self, lo: float, hi: float) -> bool:
        return self.k_lo <= lo + 1e-12 and hi <= self.k_hi + 1e-12

    def energies_at(self, k):
        return self._e(self._check(k))

    def antiderivative_at(self, k):
        return self._g(self._check(k))

    def momentum_at(self, k):
        """``p_Nn(k)`` for every retained band ``n``."""
        return self._p(self._check(k))

    def inverse_mass_at(self, k):
        return self._invm(self._check(k))[..., self.band]

    def momentum_diag_at(self, k):
        return self._p(self._check(k))[..., self.band]


def _thin(k, base, min_gap):
    """Mask keeping every base node and refined nodes at least ``min_gap`` apart."""
    is_base = np.isin(k, base)
    keep = np.zeros(k.size, dtype=bool)
    last = -np.inf
    next_base = np.empty(k.size)
    upcoming = np.inf
    for i in range(k.size - 1, -1, -1):
        next_base[i] = upcoming
        if is_base[i]:
            upcoming = k[i]
    for i in range(k.size):
        if is_base[i] or (k[i] - last >= min_gap and next_base[i] - k[i] >= min_gap):
            keep[i] = True
            last = k[i]
    return keep


def gamma_phase(table: BandTable, n: int, kappa, t, force: float):
    """Dynamical phase ``int_0^t E_n(kappa + F t') dt'`` from the table.

    Uses the exact antiderivative of the spline for ``E_n``, so phases are
    additive in time to rounding.  For ``F = 0`` this is ``E_n(kappa) t``.
    """
    kappa = np.asarray(kappa, dtype=float)
    t = np.asarray(t, dtype=float)
    if force == 0:
        return table.energies_at(kappa)[..., n] * t
    g_end = table.antiderivative_at(kappa + force * t)[..., n]
    g_start = table.antiderivative_at(kappa)[..., n]
    return (g_end - g_start) / force


# --------------------------------------------------------------------------
# the engine


@dataclass
class _Lattice:
    """Quadrature grid plus a uniform lattice holding every drifted ``K``.

    The q spacing is ``lq`` lattice steps and one time step drifts ``K`` by
    ``lt`` lattice steps, so ``K(q_i, t_j)`` is lattice point ``i*lq + j*lt``
    and band data are evaluated once per lattice point.
    """

    q: np.ndarray
    w: np.ndarray
    lq: int
    lt: int
    vals: dict

    def at_q(self, name):
        return self.vals[name][:: self.lq][: self.q.size]

    def gather(self, name, rows):
        idx = np.arange(self.q.size)[None, :] * self.lq + rows[:, None] * self.lt
        return self.vals[name][idx]


class FirstOrderModel:
    """First-order response for one (lattice, packet, drive) combination.

    The band table and quadrature grid are built once; time series are then
    evaluated in chunks.  Bands ``0..top`` except ``N`` enter the interband
    sum; ``top`` defaults to the smallest value in ``N+4..N+6`` whose omitted
    sum-rule tail is below ``1e-7``.
    """

    def __init__(
        self,
        s: float,
        packet: WavepacketSpec,
        drive: DriveSpec,
        cutoff: int = 32,
        top: Optional[int] = None,
        q_points: Optional[int] = None,
        samples: Optional[int] = None,
        table: Optional[BandTable] = None,
    ):
        self.s = float(s)
        self.packet = packet
        self.drive = drive
        self.cutoff = cutoff
        self.top = top if top is not None else select_top_band(self.s, packet.band, cutoff)
        self.free = self.s == 0.0
        if self.free:
            self._init_free(samples, q_points)
            return
        lo = packet.center - Q_SPAN * packet.sigma
        hi = packet.center + Q_SPAN * packet.sigma + drive.force * drive.horizon
        pad = 1e-3
        if table is None or not table.covers(lo, hi) or table.top < self.top or table.band != packet.band:
            table = BandTable(self.s, packet.band, self.top, lo - pad, hi + pad, cutoff)
        self.table = table
        self.others = np.array([n for n in range(self.top + 1) if n != packet.band])
        self._check_gaps(lo, hi)
        self.times = self._time_grid(samples or drive.samples)
        self.q_points = q_points or self._q_points()

    # -- setup helpers -----------------------------------------------------
    def _init_free(self, samples, q_points):
        # Without a lattice the band states are plane waves, every interband
        # momentum element vanishes and the packet moves as a free particle.
        # Band 0 is a single plane wave only inside the first zone, so the
        # sampled packet must stay clear of the touching points at k = +-1.
        if self.packet.band != 0 or abs(self.packet.center) + Q_SPAN * self.packet.sigma >= 1.0:
            raise DegeneracyError(
                f"band {self.packet.band} touches a neighbouring band inside the packet at s = 0"
            )
        self.table = None
        self.others = np.array([n for n in range(self.top + 1) if n != 0])
        self.max_mixing = 0.0
        self.quadrature_change = 0.0
        self.times = np.linspace(0.0, self.drive.horizon, int(samples or self.drive.samples or 4096))
        self.q_points = q_points or self.packet.default_points()
        self.q_used = int(self.q_points)

    def _check_gaps(self, lo, hi):
        sel = (self.table.k >= lo) & (self.table.k <= hi)
        e = self.table.energies[sel]
        gaps = np.abs(e[:, self.others] - e[:, [self.packet.band]])
        if gaps.min() < DEGENERACY_TOL:
            raise DegeneracyError(
                f"band {self.packet.band} comes within {gaps.min():.2e} of another "
                "band on the traversed path; first-order theory does not apply"
            )
        p = np.abs(self.table.p_row[sel][:, self.others])
        mix = 2.0 * self.drive.force * p / gaps**2
        self.max_mixing = float(mix.max())
        if self.max_mixing > ZENER_WARN:
            warnings.warn(
                f"interband mixing reaches {self.max_mixing:.3g}; first-order "
                "results are unreliable (Zener regime)",
                ZenerWarning,
                stacklevel=3,
            )

    def nearest_band(self) -> int:
        if self.free:
            return 1
        e0 = self.table.energies_at(self.packet.center)
        d = np.abs(e0[self.others] - e0[self.packet.band])
        return int(self.others[np.argmin(d)])

    def _time_grid(self, samples):
        horizon = self.drive.horizon
        if samples is None:
            sel = (self.table.k >= self.table.k_lo) & (self.table.k <= self.table.k_hi)
            e = self.table.energies[sel]
            nbar = self.nearest_band()
            fastest = np.max(np.abs(e[:, nbar] - e[:, self.packet.band]))
            per_osc = 2.0 * math.pi / fastest
            samples = max(4096, int(math.ceil(40.0 * horizon / per_osc)) + 1)
        return np.linspace(0.0, horizon, int(samples))

    def _q_points(self):
        """Default grid, doubled until the phase step between q points is small."""
        n = self.packet.default_points()
        probe_t = np.linspace(0.0, self.drive.horizon, 65)
        q = np.linspace(-PHASE_SPAN, PHASE_SPAN, 193) * self.packet.sigma + self.packet.center
        e_q = self.table.energies_at(q)
        n_ref = self.packet.band
        slope = 0.0
        for t in probe_t:
            if self.drive.force > 0:
                e_k = self.table.energies_at(q + self.drive.force * t)
                d = (e_k[:, self.others] - e_k[:, [n_ref]]) - (e_q[:, self.others] - e_q[:, [n_ref]])
                dg = np.abs(d) / self.drive.force
            else:
                de = np.gradient(e_q[:, self.others] - e_q[:, [n_ref]], q, axis=0)
                dg = np.abs(de) * t
            slope = max(slope, float(dg.max()))
        span = 2.0 * Q_SPAN * self.packet.sigma
        while span / (n - 1) * slope > PHASE_STEP:
            n *= 2
        return n

    def _lattice(self, n_target: int, halve: bool = False) -> _Lattice:
        half = Q_SPAN * self.packet.sigma
        dq_target = 2.0 * half / (n_target - 1)
        f = self.drive.force
        if f == 0 or self.times.size < 2:
            lt, h, lq = 0, dq_target, 1
        else:
            step = f * (self.times[1] - self.times[0])
            lt = max(1, math.ceil(step / dq_target - 1e-9))
            h = step / lt
            lq = max(1, math.floor(dq_target / h + 1e-9))
        if halve:
            h *= 0.5
            lt *= 2
        dq = lq * h
        m = int(math.floor(half / dq + 1e-9))
        q = self.packet.center + dq * np.arange(-m, m + 1)
        w = self.packet.amplitude(q) ** 2
        size = (q.size - 1) * lq + (self.times.size - 1) * lt + 1
        kk = q[0] + h * np.arange(size)
        return _Lattice(q=q, w=w / w.sum(), lq=lq, lt=lt, vals=self.table.evaluate(kk))

    def _chunks(self, nq):
        step = max(1, _CHUNK_POINTS // nq)
        for start in range(0, self.times.size, step):
            yield np.arange(start, min(start + step, self.times.size))

    def _phases(self, lat: _Lattice, rows, g_k):
        """``g_Nn(q, t)`` for the interband set, shape ``(nt, nq, len(others))``."""
        n = self.packet.band
        if self.drive.force == 0:
            e_q = lat.at_q("E")
            de = e_q[:, n, None] - e_q[:, self.others]
            return de[None, :, :] * self.times[rows, None, None]
        g_q = lat.at_q("G")
        dg_k = g_k[..., [n]] - g_k[..., self.others]
        dg_q = g_q[:, [n]] - g_q[:, self.others]
        return (dg_k - dg_q[None]) / self.drive.force

    # -- observables ---------------------------------------------------------
    def _acceleration(self, lat: _Lattice):
        f = self.drive.force
        n = self.packet.band
        e_q, p_q = lat.at_q("E"), lat.at_q("p")
        gap_q = e_q[:, self.others] - e_q[:, [n]]
        weight_q = 4.0 * p_q[:, self.others] / gap_q**2
        accel = np.empty(self.times.size)
        base = np.empty(self.times.size)
        for rows in self._chunks(lat.q.size):
            e_k = lat.gather("E", rows)
            p_k = lat.gather("p", rows)
            invm = lat.gather("invm", rows)
            g_k = lat.gather("G", rows) if f > 0 else None
            gap_k = e_k[..., self.others] - e_k[..., [n]]
            osc = np.sum(
                gap_k * p_k[..., self.others] * weight_q[None] * np.cos(self._phases(lat, rows, g_k)),
                axis=-1,
            )
            accel[rows] = f * np.sum(lat.w * (invm + osc), axis=-1)
            base[rows] = f * np.sum(lat.w * invm, axis=-1)
        return accel, base

    def _baseline_velocity(self, lat: _Lattice):
        n = self.packet.band
        p0 = lat.at_q("p")[:, n]
        out = np.empty(self.times.size)
        for rows in self._chunks(lat.q.size):
            out[rows] = np.sum(lat.w * (lat.gather("p", rows)[..., n] - p0), axis=-1)
        return out

    def acceleration(self, check: bool = True):
        """Acceleration and baseline samples; with ``check`` the q grid is doubled once."""
        if self.free:
            const = np.full(self.times.size, self.drive.force)
            return const, const.copy()
        self.quadrature_change = None
        for attempt in range(MAX_DOUBLINGS + 1):
            lat = self._lattice(self.q_points)
            self.q_used = int(lat.q.size)
            accel, base = self._acceleration(lat)
            if not check:
                return accel, base
            fine, _ = self._acceleration(self._lattice(self.q_points, halve=True))
            change = float(np.max(np.abs(fine - accel)))
            self.quadrature_change = change
            if change <= QUAD_TOL * max(self.drive.force, 1e-300):
                return accel, base
            if attempt < MAX_DOUBLINGS:
                self.q_points = 2 * self.q_points - 1
        raise ResolutionError(
            f"q quadrature not converged: doubling the grid moved a sample by "
            f"{change:.3g} (> {QUAD_TOL:g} F) with {self.q_used} points"
        )

    def populations(self):
        """First-order populations of every retained band, shape ``(top+1, nt)``."""
        if self.free:
            # plane wave K lies in band n for n < |K| < n + 1
            q, w = self.packet.quadrature(self.q_points)
            rank = np.floor(np.abs(q[None, :] + self.drive.force * self.times[:, None])).astype(int)
            pops = np.zeros((self.top + 1, self.times.size))
            for n in range(self.top + 1):
                pops[n] = np.sum(w * (rank == n), axis=1)
            return pops
        lat = self._lattice(self.q_points)
        f = self.drive.force
        n = self.packet.band
        pops = np.zeros((self.top + 1, self.times.size))
        e_q, p_q = lat.at_q("E"), lat.at_q("p")
        d_q = 2.0 * f * p_q[:, self.others] / (e_q[:, self.others] - e_q[:, [n]]) ** 2
        for rows in self._chunks(lat.q.size):
            e_k = lat.gather("E", rows)
            p_k = lat.gather("p", rows)
            g_k = lat.gather("G", rows) if f > 0 else None
            d_k = 2.0 * f * p_k[..., self.others] / (e_k[..., self.others] - e_k[..., [n]]) ** 2
            cos = np.cos(self._phases(lat, rows, g_k))
            c2 = d_k**2 + d_q[None] ** 2 - 2.0 * d_k * d_q[None] * cos
            pops[np.ix_(self.others, rows)] = np.sum(lat.w[None, :, None] * c2, axis=1).T
        pops[n] = 1.0 - pops[self.others].sum(axis=0)
        return pops

    def series(self, populations: bool = False, check: bool = True) -> TimeSeries:
        accel, base = self.acceleration(check=check)
        if self.free:
            v = self.drive.force * self.times
            v_base = v.copy()
        else:
            v = velocity_from_acceleration(self.times, accel)
            v_base = self._baseline_velocity(self._lattice(self.q_points))
        ts = TimeSeries(
            t=self.times.copy(),
            a=accel,
            v=v,
            mstar=mstar_ratio(accel, self.drive.force),
            a_baseline=base,
            v_baseline=v_base,
            provenance="first-order",
            meta={
                "top_band": self.top,
                "q_points": self.q_used,
                "samples": int(self.times.size),
                "quadrature_change": self.quadrature_change,
                "max_mixing": self.max_mixing,
                "gauge": "plane-wave" if self.free else self.table.gauge_tag,
            },
        )
        if populations:
            ts.populations = self.populations()
            ts.bands = tuple(range(self.top + 1))
        return ts

    def baseline_at(self, times):
        """Effective-mass acceleration and velocity at arbitrary ``times``."""
        times = np.asarray(times, dtype=float)
        if self.free:
            return np.full(times.size, self.drive.force), self.drive.force * times
        q, w = self.packet.quadrature(self.q_points)
        n = self.packet.band
        p0 = self.table.evaluate(q)["p"][:, n]
        a = np.empty(times.size)
        v = np.empty(times.size)
        step = max(1, _CHUNK_POINTS // q.size)
        for start in range(0, times.size, step):
            sl = slice(start, start + step)
            vals = self.table.evaluate(q[None, :] + self.drive.force * times[sl, None])
            a[sl] = self.drive.force * np.sum(w * vals["invm"], axis=-1)
            v[sl] = np.sum(w * (vals["p"][..., n] - p0), axis=-1)
        return a, v

    def baseline_series(self) -> TimeSeries:
        """Usual effective-mass prediction on the same time grid."""
        if self.free:
            base, vb = self.baseline_at(self.times)
            q_used = self.q_used
        else:
            lat = self._lattice(self.q_points)
            q_used = int(lat.q.size)
            base = np.empty(self.times.size)
            for rows in self._chunks(lat.q.size):
                base[rows] = self.drive.force * np.sum(lat.w * lat.gather("invm", rows), axis=-1)
            vb = self._baseline_velocity(lat)
        return TimeSeries(
            t=self.times.copy(),
            a=base,
            v=vb,
            mstar=mstar_ratio(base, self.drive.force),
            a_baseline=base,
            v_baseline=vb,
            provenance="effective-mass",
            meta={"q_points": q_used, "samples": int(self.times.size)},
        )


def velocity_from_acceleration(t, a, check: bool = True):
    """Cumulative trapezoid ``v(t) = int_0^t a``, starting at exactly zero.

    With ``check`` the result is compared with the same rule on every other
    sample; a Richardson error estimate above ``VELOCITY_TOL`` raises
    :class:`ResolutionError`.
    """
    t = np.asarray(t, dtype=float)
    a = np.asarray(a, dtype=float)
    v = np.concatenate(([0.0], np.cumsum(0.5 * (a[1:] + a[:-1]) * np.diff(t))))
    if check and t.size >= 5:
        coarse_t, coarse_a = t[::2], a[::2]
        vc = np.concatenate(([0.0], np.cumsum(0.5 * (coarse_a[1:] + coarse_a[:-1]) * np.diff(coarse_t))))
        err = float(np.max(np.abs(v[::2] - vc))) / 3.0
        if err > VELOCITY_TOL:
            raise ResolutionError(
                f"velocity quadrature error estimate {err:.3g} exceeds {VELOCITY_TOL:g}; "
                "sample the acceleration more densely"
            )
    return v


# --------------------------------------------------------------------------
# convenience wrappers


def acceleration_series(packet: WavepacketSpec, drive: DriveSpec, lattice: LatticeSpec, **kw) -> TimeSeries:
    """First-order acceleration, velocity and baseline (see :class:`FirstOrderModel`)."""
    return FirstOrderModel(lattice.s, packet, drive, cutoff=lattice.cutoff, **kw).series()


def velocity_series(ts: TimeSeries) -> TimeSeries:
    """Recompute ``ts.v`` from ``ts.a`` by cumulative trapezoid."""
    ts.v = velocity_from_acceleration(ts.t, ts.a)
    return ts


def population_firstorder(packet: WavepacketSpec, drive: DriveSpec, lattice: LatticeSpec, **kw) -> np.ndarray:
    """First-order band populations, shape ``(top+1, n_samples)``."""
    return FirstOrderModel(lattice.s, packet, drive, cutoff=lattice.cutoff, **kw).populations()


# --------------------------------------------------------------------------
# timescales and the envelope law


@dataclass(frozen=True)
class Timescales:
    """Characteristic times in scaled units (multiply by ``time_unit`` for SI).

    ``tau_decay`` and ``m_red`` are ``None`` when the two curvatures coincide.
    """

    band: int
    nbar: int
    gap: float
    inv_mass: float
    inv_mass_nbar: float
    m_red: Optional[float]
    tau_osc: float
    tau_decay: Optional[float]
    tau_B: float
    force: float
    sigma: float

    @property
    def ratio_osc(self) -> float:
        return self.tau_osc / self.tau_B

    @property
    def ratio_decay(self) -> Optional[float]:
        return None if self.tau_decay is None else self.tau_decay / self.tau_B


def nearest_band(s: float, band: int, k: float = 0.0, cutoff: int = 32) -> int:
    """Band closest in energy to ``band`` at ``k`` (ties go to the lower band)."""
    sol = solve_bloch(LatticeSpec(s, cutoff, band + 3), k)
    d = np.abs(sol.energies - sol.energies[band])
    d[band] = np.inf
    return int(np.argmin(d))


def timescales(s: float, band: int, sigma: float, force: float, cutoff: int = 32) -> Timescales:
    """Oscillation period, decay estimate and Bloch period at ``k = 0``.

    ``tau_osc = 2 pi / |E_N - E_nbar|``; ``tau_decay = (sqrt(15)/2) |m_red| / sigma^2``
    is the time at which the envelope ``[1 + (2 sigma^2 t / m_red)^2]^(-1/4)``
    falls to one half; ``tau_B = 2 / F``.
    """
    nbar = nearest_band(s, band, 0.0, cutoff)
    spec = LatticeSpec(s, cutoff, max(band, nbar) + 3)
    sol = solve_bloch(spec, 0.0)
    gap = float(sol.energies[band] - sol.energies[nbar])
    inv_n = inverse_effective_mass(spec, band, 0.0)
    inv_b = inverse_effective_mass(spec, nbar, 0.0)
    diff = inv_n - inv_b
    m_red = None if abs(diff) < 1e-12 else 1.0 / diff
    tau_decay = None if m_red is None else 0.5 * SQRT15 * abs(m_red) / sigma**2
    return Timescales(
        band=band,
        nbar=nbar,
        gap=gap,
        inv_mass=inv_n,
        inv_mass_nbar=inv_b,
        m_red=m_red,
        tau_osc=2.0 * math.pi / abs(gap),
        tau_decay=tau_decay,
        tau_B=2.0 / force if force > 0 else math.inf,
        force=force,
        sigma=sigma,
    )


def envelope_approx(s: float, band: int, sigma: float, force: float, t, matched_amplitude: Optional[float] = None, cutoff: int = 32):
    """Near-zone-centre approximation of the oscillating acceleration.

    Keeps only the nearest band ``nbar``, expands both bands to quadratic
    order around ``k = 0`` and ignores the drift of the packet, which gives

        a_osc(t) = A [1 + x^2]^(-1/4) cos(E_Nnbar(0) t + atan(x) / 2),
        x = 2 sigma^2 t / m_red,

    with the raw amplitude ``A = 4 F p_Nnbar(0)^2 / E_nbarN(0)``.  Valid only
    for early times.  Passing ``matched_amplitude`` (e.g. the exact oscillating
    part at ``t = 0``) replaces ``A``.

    Returns
    -------
    dict
        ``t``, ``envelope``, ``a_osc``, ``amplitude``, ``raw_amplitude`` and
        ``matched`` (whether the amplitude was replaced).
    """
    ts = timescales(s, band, sigma, force, cutoff)
    t = np.asarray(t, dtype=float)
    spec = LatticeSpec(s, cutoff, max(band, ts.nbar) + 3)
    p = momentum_elements(solve_bloch(spec, 0.0))[band, ts.nbar]
    raw = 4.0 * force * p**2 / (-ts.gap)
    if ts.m_red is None:
        x = np.zeros_like(t)
    else:
        x = 2.0 * sigma**2 * t / ts.m_red
    env = (1.0 + x**2) ** -0.25
    amp = raw if matched_amplitude is None else float(matched_amplitude)
    return {
        "t": t,
        "envelope": env,
        "a_osc": amp * env * np.cos(ts.gap * t + 0.5 * np.arctan(x)),
        "amplitude": amp,
        "raw_amplitude": raw,
        "matched": matched_amplitude is not None,
    }


def half_amplitude_time(t, signal, period: float) -> float:
    """First time the peak envelope of ``signal`` drops to half its initial value.

    The envelope is the running maximum of ``|signal|`` over windows one
    ``period`` long; returns ``nan`` if it never halves.
    """
    t = np.asarray(t, dtype=float)
    y = np.abs(np.asarray(signal, dtype=float))
    dt = t[1] - t[0]
    width = max(1, int(round(period / dt)))
    peaks = np.array([y[i : i + width].max() for i in range(0, y.size - width + 1)])
    start = peaks[0]
    below = np.nonzero(peaks <= 0.5 * start)[0]
    if below.size == 0:
        return float("nan")
    i = below[0]
    # Window i is the first whose maximum is at most half the start; its
    # centre is the best single-time estimate for the envelope crossing.
    return float(t[i] + 0.5 * width * dt)
