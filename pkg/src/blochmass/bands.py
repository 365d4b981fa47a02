"""Bloch bands of the Mathieu lattice ``V(x) = s sin^2(x)`` in scaled units.

Lengths are measured in ``1/k_L``, energies in the recoil energy ``E_R`` and
quasimomenta in ``k_L``, so the Brillouin zone is ``[-1, 1]`` and the
reciprocal lattice vector is 2.  In a truncated plane-wave basis
``exp(i (k + 2j) x)``, ``j = -J..J``, the Hamiltonian is the real symmetric
tridiagonal matrix

    H[j, j]     = (k + 2j)^2 + s/2
    H[j, j+-1]  = -s/4

Eigenvector coefficients are stored relative to the *unreduced* quasimomentum
that was asked for, which makes ``E_n(k + 2) == E_n(k)`` hold by construction
and lets a gauge chain run continuously through any number of zones.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import ConfigError, DegeneracyError, PathResolutionError

DEGENERACY_TOL = 1e-6
FD_STEP = 1e-3
OVERLAP_THRESHOLD = 0.9


class ConvergenceWarning(UserWarning):
    """Basis or band truncation is tighter than recommended."""


@dataclass(frozen=True)
class LatticeSpec:
    """Potential strength ``s`` plus basis truncation.

    ``cutoff`` is J (plane waves ``j = -J..J``), ``n_bands`` the number of
    lowest bands kept in every solution.
    """

    s: float
    cutoff: int = 32
    n_bands: int = 8

    def __post_init__(self):
        if not np.isfinite(self.s) or self.s < 0:
            raise ConfigError(f"s must be >= 0, got {self.s}")
        if self.cutoff < 1:
            raise ConfigError(f"cutoff must be >= 1, got {self.cutoff}")
        if not 1 <= self.n_bands <= self.basis_size:
            raise ConfigError(
                f"n_bands={self.n_bands} exceeds basis size {self.basis_size} "
                f"(cutoff J={self.cutoff})"
            )
        if self.basis_size < self.n_bands + 8:
            warnings.warn(
                f"basis size {self.basis_size} leaves fewer than 8 plane waves "
                f"above the {self.n_bands} retained bands",
                ConvergenceWarning,
                stacklevel=3,
            )

    @property
    def basis_size(self) -> int:
        return 2 * self.cutoff + 1

    @property
    def j(self) -> np.ndarray:
        return np.arange(-self.cutoff, self.cutoff + 1)


@dataclass(frozen=True)
class BlochSolution:
    """Bands at one quasimomentum.

    ``coeffs[n, j]`` multiplies ``exp(i (k + 2j) x)`` with ``j`` running from
    ``-J`` to ``J``; each row has unit norm.
    """

    k: float
    energies: np.ndarray
    coeffs: np.ndarray
    gauge_tag: str = "seed:max-positive"

    @property
    def cutoff(self) -> int:
        return (self.coeffs.shape[1] - 1) // 2

    @property
    def n_bands(self) -> int:
        return self.energies.shape[0]

    @property
    def momenta(self) -> np.ndarray:
        """Plane-wave momenta ``k + 2j`` matching the coefficient columns."""
        return self.k + 2.0 * np.arange(-self.cutoff, self.cutoff + 1)


def _reduce(k: float) -> tuple[float, int]:
    m = math.floor(k / 2.0 + 0.5)
    return k - 2.0 * m, m


def _shift_columns(vecs: np.ndarray, m: int) -> np.ndarray:
    """Return ``out[..., j] = vecs[..., j + m]``, zero where out of range."""
    if m == 0:
        return vecs
    out = np.zeros_like(vecs)
    size = vecs.shape[-1]
    if abs(m) >= size:
        return out
    if m > 0:
        out[..., : size - m] = vecs[..., m:]
    else:
        out[..., -m:] = vecs[..., : size + m]
    return out


def _seed_gauge(coeffs: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(coeffs), axis=-1)
    lead = np.take_along_axis(coeffs, idx[..., None], axis=-1)
    return coeffs * np.where(lead < 0, -1.0, 1.0)


_TINY = 1e-290
_CHUNK = 1024
# Below this many k points LAPACK per point beats the vectorized solver.
_BATCH_MIN = 24
# Up to this basis size batched dense diagonalization is the fastest route.
_DENSE_MAX = 48


def _nonzero(q: np.ndarray) -> np.ndarray:
    return np.where(q == 0.0, -_TINY, q)


def _sturm_count(diag: np.ndarray, b2: float, x: np.ndarray) -> np.ndarray:
    """Number of eigenvalues below ``x`` for each row of ``diag``.

    ``diag`` has shape ``(nk, n)`` and ``x`` shape ``(nk, m)``.  A zero pivot
    turns into an infinity that the next step absorbs, which keeps the count
    exact under IEEE arithmetic, so no guard is needed.
    """
    q = diag[:, :1] - x
    tmp = np.empty_like(q)
    count = (q < 0).astype(np.int64)
    with np.errstate(divide="ignore"):
        for i in range(1, diag.shape[1]):
            np.divide(b2, q, out=tmp)
            np.subtract(diag[:, i : i + 1], x, out=q)
            q -= tmp
            count += q < 0
    return count


def _lowest_eigenpairs(diag: np.ndarray, off: float, nb: int):
    """Lowest ``nb`` eigenpairs of tridiagonal matrices with constant off-diagonal.

    Vectorized over the rows of ``diag`` (one matrix per row).  Eigenvalues
    come from Sturm-sequence bisection, eigenvectors from a twisted
    factorization, and a final Rayleigh-Ritz pass over a couple of extra
    vectors restores orthogonality inside close clusters.
    """
    nk, n = diag.shape
    if off == 0.0:
        order = np.argsort(diag, axis=1, kind="stable")[:, :nb]
        w = np.take_along_axis(diag, order, axis=1)
        v = np.zeros((nk, nb, n))
        np.put_along_axis(v, order[:, :, None], 1.0, axis=2)
        return w, v
    m = min(n, nb + 1)
    b2 = off * off
    # Weyl: the i-th eigenvalue lies within 2|off| of the i-th smallest diagonal.
    spread = 2.0 * abs(off) * (1.0 + 1e-12)
    base = np.sort(diag, axis=1)[:, :m]
    lo, hi = base - spread, base + spread
    idx = np.arange(m)[None, :]
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        below = _sturm_count(diag, b2, mid) > idx
        hi = np.where(below, mid, hi)
        lo = np.where(below, lo, mid)
        if np.all(hi - lo <= 4e-16 * np.maximum(np.abs(lo), np.abs(hi))):
            break
    lam = 0.5 * (lo + hi)

    a = diag[:, None, :] - lam[:, :, None]
    dplus = np.empty_like(a)
    dminus = np.empty_like(a)
    dplus[..., 0] = _nonzero(a[..., 0])
    for i in range(1, n):
        dplus[..., i] = _nonzero(a[..., i] - b2 / dplus[..., i - 1])
    dminus[..., n - 1] = _nonzero(a[..., n - 1])
    for i in range(n - 2, -1, -1):
        dminus[..., i] = _nonzero(a[..., i] - b2 / dminus[..., i + 1])
    twist = np.argmin(np.abs(dplus + dminus - a), axis=-1)
    z = np.zeros_like(a)
    np.put_along_axis(z, twist[..., None], 1.0, axis=-1)
    for i in range(n - 2, -1, -1):
        z[..., i] = np.where(i < twist, -off * z[..., i + 1] / dplus[..., i], z[..., i])
    for i in range(1, n):
        z[..., i] = np.where(i > twist, -off * z[..., i - 1] / dminus[..., i], z[..., i])

    q, _ = np.linalg.qr(np.swapaxes(z, 1, 2))
    tq = diag[:, :, None] * q
    tq[:, 1:, :] += off * q[:, :-1, :]
    tq[:, :-1, :] += off * q[:, 1:, :]
    ritz, rot = np.linalg.eigh(np.swapaxes(q, 1, 2) @ tq)
    vecs = np.swapaxes(q @ rot, 1, 2)
    return ritz[:, :nb], vecs[:, :nb, :]


def _dense_lowest(diag: np.ndarray, off: float, nb: int):
    nk, n = diag.shape
    h = np.zeros((nk, n, n))
    i = np.arange(n)
    h[:, i, i] = diag
    h[:, i[:-1], i[1:]] = off
    h[:, i[1:], i[:-1]] = off
    w, v = np.linalg.eigh(h)
    return w[:, :nb], np.swapaxes(v, 1, 2)[:, :nb, :]


def solve_many(spec: LatticeSpec, ks) -> tuple[np.ndarray, np.ndarray]:
    """Energies ``(nk, nb)`` and seeded coefficients ``(nk, nb, 2J+1)`` at many k.

    Same conventions as :func:`solve_bloch`, vectorized over ``ks``.
    """
    ks = np.atleast_1d(np.asarray(ks, dtype=float))
    shifts = np.floor(ks / 2.0 + 0.5)
    k0 = ks - 2.0 * shifts
    j = spec.j
    energies = np.empty((ks.size, spec.n_bands))
    coeffs = np.empty((ks.size, spec.n_bands, spec.basis_size))
    if ks.size < _BATCH_MIN:
        off = np.full(spec.basis_size - 1, -0.25 * spec.s)
        for i in range(ks.size):
            w, v = eigh_tridiagonal(
                (k0[i] + 2.0 * j) ** 2 + 0.5 * spec.s,
                off,
                select="i",
                select_range=(0, spec.n_bands - 1),
            )
            energies[i] = w
            coeffs[i] = _seed_gauge(_shift_columns(v.T, int(shifts[i])))
        return energies, coeffs
    for start in range(0, ks.size, _CHUNK):
        sl = slice(start, start + _CHUNK)
        diag = (k0[sl, None] + 2.0 * j[None, :]) ** 2 + 0.5 * spec.s
        if spec.basis_size <= _DENSE_MAX:
            w, v = _dense_lowest(diag, -0.25 * spec.s, spec.n_bands)
        else:
            w, v = _lowest_eigenpairs(diag, -0.25 * spec.s, spec.n_bands)
        for i, m in enumerate(shifts[sl].astype(int)):
            v[i] = _shift_columns(v[i], m)
        energies[sl] = w
        coeffs[sl] = _seed_gauge(v)
    return energies, coeffs


def solve_bloch(spec: LatticeSpec, k: float) -> BlochSolution:
    """Diagonalize the Bloch Hamiltonian at quasimomentum ``k`` (any real).

    The problem is solved at the reduced ``k0 = k - 2m`` in the first zone
    and the coefficients are translated by ``m`` plane waves, so solutions at
    ``k`` and ``k + 2`` describe the same state.  Each band's sign is fixed by
    making its largest coefficient positive.
    """
    k = float(k)
    energies, coeffs = solve_many(spec, [k])
    return BlochSolution(k=k, energies=energies[0], coeffs=coeffs[0])


def momentum_elements(sol: BlochSolution) -> np.ndarray:
    """Scaled momentum matrix ``p[n, n'] = sum_j (k + 2j) C[n, j] C[n', j]``.

    The diagonal is half the band slope (Hellmann-Feynman).
    """
    return (sol.coeffs * sol.momenta) @ sol.coeffs.T


def band_gaps(energies: np.ndarray) -> np.ndarray:
    """``E[n'] - E[n]`` as an ``[n', n]`` matrix."""
    return energies[:, None] - energies[None, :]


def delta_parameters(sol: BlochSolution, force: float) -> np.ndarray:
    """First-order interband mixing ``Delta[n', n] = F xi[n', n] / E[n', n]``.

    With ``xi[n', n] = -2i p[n', n] / E[n', n]`` (scaled units) this is
    ``-2i F p[n', n] / E[n', n]^2``; purely imaginary for real coefficients.
    """
    gaps = band_gaps(sol.energies)
    off = ~np.eye(sol.n_bands, dtype=bool)
    if force != 0 and np.any(np.abs(gaps[off]) < DEGENERACY_TOL):
        n1, n2 = np.argwhere((np.abs(gaps) < DEGENERACY_TOL) & off)[0]
        raise DegeneracyError(
            f"bands {n1} and {n2} are degenerate at k={sol.k:.6g} "
            f"(|dE| < {DEGENERACY_TOL})"
        )
    p = momentum_elements(sol)
    delta = np.zeros((sol.n_bands, sol.n_bands), dtype=complex)
    delta[off] = -2j * force * p[off] / gaps[off] ** 2
    return delta


@dataclass(frozen=True)
class MatrixElements:
    p: np.ndarray
    delta: np.ndarray
    xi_diag: np.ndarray


def matrix_elements(spec: LatticeSpec, k: float, force: float = 0.0) -> MatrixElements:
    """Momentum matrix, mixing parameters and the diagonal Lax connection at ``k``."""
    sol = solve_bloch(spec, k)
    xi = lax_connection(spec, k)
    return MatrixElements(
        p=momentum_elements(sol),
        delta=delta_parameters(sol, force),
        xi_diag=np.diag(xi).real.copy(),
    )


@dataclass(frozen=True)
class BlochPath:
    """Solutions along an ordered path in one continuous real gauge."""

    k: np.ndarray
    energies: np.ndarray  # (nk, nb)
    coeffs: np.ndarray  # (nk, nb, 2J+1)
    gauge_tag: str
    flips: np.ndarray = field(repr=False)  # (nk, nb) bool, sign flips applied
    min_overlap: float = 1.0

    def __len__(self) -> int:
        return self.k.shape[0]

    def __getitem__(self, i: int) -> BlochSolution:
        return BlochSolution(
            k=float(self.k[i]),
            energies=self.energies[i],
            coeffs=self.coeffs[i],
            gauge_tag=self.gauge_tag,
        )

    @property
    def momenta(self) -> np.ndarray:
        J = (self.coeffs.shape[-1] - 1) // 2
        return self.k[:, None] + 2.0 * np.arange(-J, J + 1)[None, :]

    def momentum(self) -> np.ndarray:
        """Momentum matrices at every point, shape ``(nk, nb, nb)``."""
        weighted = self.coeffs * self.momenta[:, None, :]
        return np.einsum("knj,kmj->knm", weighted, self.coeffs)

    def overlaps(self) -> np.ndarray:
        """Same-band overlaps between consecutive points, shape ``(nk-1, nb)``."""
        return np.einsum("knj,knj->kn", self.coeffs[:-1], self.coeffs[1:])

    def loop_overlaps(self) -> np.ndarray:
        """Overlap of the end point with the start for a path spanning whole zones.

        The end coefficients are translated back onto the start frame before
        the overlap is taken; for a closed loop every entry is +-1 and a -1
        records a pi Zak phase that the continuous gauge cannot remove.
        """
        span = self.k[-1] - self.k[0]
        shift = round(span / 2.0)
        if shift == 0 or abs(span - 2.0 * shift) > 1e-9:
            raise ValueError("path does not span a whole number of zones")
        # u_{k+2m}(x) = u_k(x) exp(-2imx): coefficient index moves by m
        end = _shift_columns(self.coeffs[-1], -shift)
        return np.einsum("nj,nj->n", self.coeffs[0], end)


def _aligned(spec, prev, k_prev, k, threshold, depth, solved=None, trail=None):
    """Solve at ``k`` and align signs to ``prev`` (coefficients at ``k_prev``).

    Where an overlap falls below ``threshold`` the step is bisected, so narrow
    avoided crossings are followed continuously.  ``solved`` optionally holds
    a precomputed ``(energies, coeffs)`` pair for ``k``; bisection points are
    appended to ``trail`` when it is a list.  Returns energies, aligned
    coefficients and the smallest overlap magnitude met on the way.
    """
    if solved is None:
        sol = solve_bloch(spec, k)
        solved = (sol.energies, sol.coeffs)
    energies, coeffs = solved
    ov = np.einsum("nj,nj->n", prev, coeffs)
    worst = float(np.min(np.abs(ov)))
    if worst < threshold:
        if depth <= 0:
            n = int(np.argmin(np.abs(ov)))
            raise PathResolutionError(
                f"overlap {worst:.3g} for band {n} between k={k_prev:.12g} "
                f"and k={k:.12g}; use a finer path"
            )
        mid = 0.5 * (k_prev + k)
        e_mid, c_mid, w1 = _aligned(spec, prev, k_prev, mid, threshold, depth - 1, None, trail)
        if trail is not None:
            trail.append((mid, e_mid, c_mid))
        e, c, w2 = _aligned(spec, c_mid, mid, k, threshold, depth - 1, solved, trail)
        return e, c, min(w1, w2)
    c = np.where((ov < 0)[:, None], -coeffs, coeffs)
    return energies, c, worst


def gauge_chain(
    spec: LatticeSpec,
    k_path: Sequence[float],
    threshold: float = OVERLAP_THRESHOLD,
    refine: int = 40,
    keep_refined: bool = False,
) -> BlochPath:
    """Solve along a monotone path and make each band's gauge continuous.

    The first point keeps the seed convention (largest coefficient positive);
    every later eigenvector gets the sign that makes its overlap with the
    predecessor positive.  If some overlap magnitude is below ``threshold`` the
    step is bisected up to ``refine`` times (``refine=0`` disables this);
    failure raises :class:`PathResolutionError`.  With ``keep_refined`` the
    bisection points are kept in the returned path, which is then denser
    than ``k_path`` wherever eigenvectors rotate quickly.
    """
    ks = np.asarray(k_path, dtype=float)
    if ks.ndim != 1 or ks.size == 0:
        raise ValueError("k_path must be a non-empty 1-D sequence")
    steps = np.diff(ks)
    if ks.size > 1 and not (np.all(steps > 0) or np.all(steps < 0)):
        raise ValueError("k_path must be strictly monotone")
    raw_e, raw_c = solve_many(spec, ks)
    out_k, out_e, out_c = [ks[0]], [raw_e[0]], [raw_c[0]]
    min_overlap = 1.0
    for i in range(1, ks.size):
        trail = [] if keep_refined else None
        e, c, worst = _aligned(
            spec, out_c[-1], ks[i - 1], ks[i], threshold, refine, (raw_e[i], raw_c[i]), trail
        )
        for k_mid, e_mid, c_mid in trail or ():
            out_k.append(k_mid)
            out_e.append(e_mid)
            out_c.append(c_mid)
        out_k.append(ks[i])
        out_e.append(e)
        out_c.append(c)
        min_overlap = min(min_overlap, worst)
    coeffs = np.array(out_c)
    flips = _flipped(coeffs)
    tag = f"chain:seed=max-positive@k={ks[0]:.6g};flips={int(flips.sum())}"
    return BlochPath(
        k=np.array(out_k),
        energies=np.array(out_e),
        coeffs=coeffs,
        gauge_tag=tag,
        flips=flips,
        min_overlap=min_overlap,
    )


def _flipped(coeffs: np.ndarray) -> np.ndarray:
    """Bands whose sign differs from the seed convention."""
    idx = np.argmax(np.abs(coeffs), axis=-1)
    lead = np.take_along_axis(coeffs, idx[..., None], axis=-1)[..., 0]
    return lead < 0


_FIVE_POINT_D1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0


def lax_connection(spec: LatticeSpec, k: float, h: float = FD_STEP) -> np.ndarray:
    """Lax connection ``xi[n', n] = i <u_n'| d/dk u_n>`` by finite differences.

    Built from a five-point gauge chain centred on ``k``.  This route does not
    use the momentum matrix and serves as an independent check of it.
    """
    path = gauge_chain(spec, k + h * np.arange(-2, 3))
    dcoef = np.tensordot(_FIVE_POINT_D1, path.coeffs, axes=(0, 0)) / h
    return 1j * path.coeffs[2] @ dcoef.T


def _group_velocity_derivative(spec: LatticeSpec, n: int, k: float, h: float) -> float:
    v = np.array(
        [momentum_elements(solve_bloch(spec, k + i * h))[n, n] for i in range(-2, 3)]
    )
    return float(_FIVE_POINT_D1 @ v) / h


def _inverse_mass_curvature(spec: LatticeSpec, n: int, k: float, h: float) -> float:
    # d^2E/dk^2 = 2 dp_nn/dk; differentiating the Hellmann-Feynman slope avoids
    # the eps*||H||/h^2 noise of differencing eigenvalues twice.  The step is
    # halved until the Richardson error estimate settles, which is needed near
    # narrow avoided crossings.
    coarse = _group_velocity_derivative(spec, n, k, h)
    for _ in range(24):
        h *= 0.5
        fine = _group_velocity_derivative(spec, n, k, h)
        err = abs(fine - coarse) / 15.0
        value = fine + (fine - coarse) / 15.0
        if err <= 1e-9 * max(1.0, abs(value)):
            break
        coarse = fine
    return value


def _inverse_mass_sumrule(spec: LatticeSpec, n: int, k: float) -> float:
    sol = solve_bloch(spec, k)
    p = momentum_elements(sol)
    gaps = sol.energies[n] - sol.energies
    others = np.arange(sol.n_bands) != n
    return 1.0 + 4.0 * float(np.sum(p[n, others] ** 2 / gaps[others]))


def inverse_effective_mass(
    spec: LatticeSpec, n: int, k: float, method: str = "curvature", h: float = FD_STEP
) -> float:
    """``m / m*_n(k)``: half the band curvature, or the f-sum rule.

    The curvature route differentiates the diagonal momentum element with a
    five-point stencil, starting at step ``h`` and halving it until two
    successive steps agree (Richardson-extrapolated); the sum rule runs over
    the retained bands only.
    """
    if not 0 <= n < spec.n_bands:
        raise ConfigError(f"band {n} outside the {spec.n_bands} retained bands")
    if method == "curvature":
        return _inverse_mass_curvature(spec, n, k, h)
    if method == "sumrule":
        return _inverse_mass_sumrule(spec, n, k)
    raise ValueError(f"unknown method {method!r}; use 'curvature' or 'sumrule'")


def effective_mass(
    spec: LatticeSpec, n: int, k: float, method: str = "curvature"
) -> float:
    """Band effective mass in units of the bare mass (may be negative)."""
    inv = inverse_effective_mass(spec, n, k, method)
    return math.inf if inv == 0 else 1.0 / inv


def reduced_mass(
    spec: LatticeSpec, n: int, nbar: int, k: float = 0.0, method: str = "curvature"
) -> float | None:
    """Reduced mass ``1/m_red = 1/m*_n - 1/m*_nbar``; ``None`` when singular."""
    diff = inverse_effective_mass(spec, n, k, method) - inverse_effective_mass(
        spec, nbar, k, method
    )
    if abs(diff) < 1e-12:
        warnings.warn(
            f"bands {n} and {nbar} have equal curvature at k={k}; "
            "reduced mass is unbounded",
            RuntimeWarning,
            stacklevel=2,
        )
        return None
    return 1.0 / diff


def band_structure(spec: LatticeSpec, ks: Sequence[float]) -> np.ndarray:
    """Energies of the retained bands on a k grid, shape ``(len(ks), n_bands)``."""
    return solve_many(spec, np.asarray(ks, dtype=float))[0]
