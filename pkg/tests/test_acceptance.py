"""Acceptance suite: one reported line per criterion, tolerances pinned here.

The split-step runs for all eight presets are shared by several criteria and
take a few minutes in total.
"""
import math
import time

import numpy as np
import pytest
from scipy import constants as sc

from blochmass.bands import LatticeSpec, inverse_effective_mass, momentum_elements, solve_bloch
from blochmass.cli import main, run_engines
from blochmass.firstorder import (
    DriveSpec,
    FirstOrderModel,
    WavepacketSpec,
    half_amplitude_time,
    timescales,
)
from blochmass.scenario import PRESET_NAMES, PhysicalParams, SolverSettings, preset, scale
from blochmass.splitstep import FieldState, Propagator, SimGrid, run

pytestmark = pytest.mark.slow

# --- pinned tolerances -------------------------------------------------------
TIMESCALE_REL = 0.03
TIMESCALE_RUNTIME_S = 1.0
ONSET_REL = 1e-4
CROSS_SOLVER_DV = 0.02
SPLITSTEP_RUNTIME_S = 120.0
REVIVAL_MIN = 0.60
NO_DECAY_MIN = 0.50
LEAK_MAX = 0.02
P2_STRONG_MAX = 1e-3
P3_NA_MAX = 3.5e-3
OVERSHOOT_FACTOR = 2.0
ENVELOPE_REL = 0.15
UNITARITY = 1e-10
SUMRULE_REL = 1e-5

US, FS = 1e-6, 1e-15

# Reported timescales: (tau_osc/tau_B, tau_osc in s, tau_decay/tau_B or None).
# Ratios quoted with one significant figure are compared at that precision.
QUOTED_TIMESCALES = {
    "rb-s7": (0.105, 51.1 * US, 0.425),
    "rb-s7-strong": (0.315, 51.1 * US, None),
    "rb-s13": (0.0859, 41.8 * US, None),
    "na-s7-narrow": (0.105, 7.73 * US, None),
    "na-s13-N1": (0.176, 12.9 * US, None),
    "na-s14": (0.176, 6.10 * US, None),
    "electron-s10-N2": (0.003, 1.30 * FS, None),
    "electron-s10-N0": (0.001, None, None),
}
# electron-s10-N0 quotes the decay time rather than the period
ELECTRON_N0_DECAY = 4.78 * FS


def close(value, ref, rel=TIMESCALE_REL):
    return abs(value / ref - 1.0) <= rel


def significant_figures(x):
    digits = f"{x:.6g}".lstrip("0.").replace(".", "")
    return len(digits.rstrip("0")) or 1


def matches_quoted(value, quoted):
    """3 % for three-figure values, half a unit in the last place for one-figure values."""
    if significant_figures(quoted) >= 3:
        return close(value, quoted)
    unit = 10.0 ** (math.floor(math.log10(quoted)))
    return abs(value - quoted) <= 0.5 * unit


# --- shared runs ---------------------------------------------------------------


@pytest.fixture(scope="module")
def splitstep_runs():
    """Default-settings split-step run with populations for every preset."""
    out = {}
    for name in PRESET_NAMES:
        sp = scale(preset(name))
        t0 = time.perf_counter()
        series = run_engines(sp, SolverSettings(), ["splitstep"], populations=True)["splitstep"]
        out[name] = (sp, series, time.perf_counter() - t0)
    return out


def window_amplitude(t, r, lo, hi):
    sel = (t >= lo - 1e-12) & (t <= hi + 1e-12)
    return float(np.max(np.abs(r[sel])))


# --- criteria --------------------------------------------------------------------


def test_c1_timescale_table(report):
    t0 = time.perf_counter()
    computed = {}
    for name in PRESET_NAMES:
        sp = scale(preset(name))
        computed[name] = (sp, timescales(sp.s, sp.band, sp.sigma, sp.force))
    elapsed = time.perf_counter() - t0
    ok_all = True
    for name, (ratio, period, decay) in QUOTED_TIMESCALES.items():
        sp, ts = computed[name]
        period_s = ts.tau_osc * sp.time_unit
        checks = [matches_quoted(ts.ratio_osc, ratio)]
        detail = f"tau_osc/tau_B={ts.ratio_osc:.4g} (quoted {ratio:g})"
        if period is not None:
            checks.append(close(period_s, period))
            detail += f", tau_osc={period_s:.4g} s (quoted {period:.3g})"
        if decay is not None:
            checks.append(close(ts.ratio_decay, decay))
            detail += f", tau_decay/tau_B={ts.ratio_decay:.4g} (quoted {decay:g})"
        if name == "electron-s10-N0":
            decay_s = ts.tau_decay * sp.time_unit
            checks.append(close(decay_s, ELECTRON_N0_DECAY))
            detail += f", tau_decay={decay_s:.4g} s (quoted {ELECTRON_N0_DECAY:.3g})"
        ok_all &= report(f"C1 timescales {name}", all(checks), detail)
    ok_all &= report("C1 timescale runtime", elapsed < TIMESCALE_RUNTIME_S, f"{elapsed:.3f} s for all presets")
    assert ok_all


def test_c2_bare_mass_onset(report, splitstep_runs):
    ok_all = True
    for name in PRESET_NAMES:
        sp, ss, _ = splitstep_runs[name]
        model = FirstOrderModel(
            sp.s, WavepacketSpec(sp.band, sp.sigma), DriveSpec(sp.force, ss.t[-1]), samples=16
        )
        a_fo = model.acceleration()[0][0]
        dev_fo = abs(a_fo / sp.force - 1.0)
        dev_ss = abs(ss.a[0] / sp.force - 1.0)
        ok = dev_fo <= ONSET_REL and dev_ss <= ONSET_REL
        ok_all &= report(f"C2 onset {name}", ok, f"|a(0)/F-1| first-order {dev_fo:.2e}, split-step {dev_ss:.2e}")
    assert ok_all


def test_c3_cross_solver(report, splitstep_runs):
    sp, ss, elapsed = splitstep_runs["rb-s7"]
    model = FirstOrderModel(sp.s, WavepacketSpec(sp.band, sp.sigma), DriveSpec(sp.force, ss.t[-1]))
    fo = model.series()
    v_fo = np.interp(ss.t, fo.t, fo.v)
    dv = float(np.max(np.abs(v_fo - ss.v)))
    periods = ss.t[-1] / sp.tau_B_scaled
    ok = report("C3 cross-solver rb-s7", dv <= CROSS_SOLVER_DV and periods >= 0.999,
                f"max|v_fo - v_ss| = {dv:.4f} v_R over {periods:.3f} Bloch periods")
    ok &= report("C3 split-step runtime", elapsed < SPLITSTEP_RUNTIME_S,
                 f"{elapsed:.1f} s (defaults, with populations and step-doubling gate)")
    assert ok


def test_c4_revival_and_no_decay(report, splitstep_runs):
    sp, ss, _ = splitstep_runs["rb-s7"]
    t = ss.t / sp.tau_B_scaled
    r = ss.a - ss.a_baseline
    start = window_amplitude(t, r, 0.0, 0.1)
    end = window_amplitude(t, r, 0.9, 1.0)
    ok = report("C4 revival rb-s7", end >= REVIVAL_MIN * start,
                f"amplitude [0.9,1.0] tau_B / [0,0.1] tau_B = {end / start:.3f} (need >= {REVIVAL_MIN})")
    for name in ("rb-s7-strong", "rb-s13"):
        sp, ss, _ = splitstep_runs[name]
        ts = timescales(sp.s, sp.band, sp.sigma, sp.force)
        t = ss.t / sp.tau_B_scaled
        r = ss.a - ss.a_baseline
        # windows one oscillation period long, slid across the Bloch period
        width = max(ts.ratio_osc, 0.1)
        first = window_amplitude(t, r, 0.0, width)
        lows = [window_amplitude(t, r, x, x + width) for x in np.arange(0.0, 1.0 - width + 1e-9, 0.01)]
        ratio = min(lows) / first
        ok &= report(f"C4 no mid-period decay {name}", ratio >= NO_DECAY_MIN,
                     f"smallest windowed amplitude / initial = {ratio:.3f} (need >= {NO_DECAY_MIN})")
    assert ok


def test_c5_population_bounds(report, splitstep_runs):
    ok = True
    for name in PRESET_NAMES:
        sp, ss, _ = splitstep_runs[name]
        leak = float(np.max(1.0 - ss.populations[sp.band]))
        ok &= report(f"C5 leakage {name}", leak <= LEAK_MAX, f"max sum_(n!=N) P_n = {leak:.3e}")
    sp, ss, _ = splitstep_runs["rb-s7-strong"]
    p2 = float(np.max(ss.populations[2]))
    ok &= report("C5 P_2 rb-s7-strong", p2 <= P2_STRONG_MAX, f"max P_2 = {p2 * 100:.4f} %")
    t = ss.t / sp.tau_B_scaled
    p1 = ss.populations[1]
    mid = float(np.max(p1[(t >= 0.25) & (t <= 0.75)]))
    ok &= report("C5 mid-cycle overshoot rb-s7-strong", mid >= OVERSHOOT_FACTOR * p1[-1],
                 f"max P_1 mid-cycle {mid:.3e} vs end {p1[-1]:.3e}")
    sp, ss, _ = splitstep_runs["na-s13-N1"]
    p3 = float(np.max(ss.populations[3]))
    ok &= report("C5 P_3 na-s13-N1", p3 <= P3_NA_MAX, f"max P_3 = {p3 * 100:.4f} %")
    assert ok


def test_c6_envelope_law(report, splitstep_runs):
    sp, ss, _ = splitstep_runs["electron-s10-N0"]
    ts = timescales(sp.s, sp.band, sp.sigma, sp.force)
    found = half_amplitude_time(ss.t, ss.a - ss.a_baseline, ts.tau_osc) * sp.time_unit
    ok = report("C6 envelope electron-s10-N0", close(found, ELECTRON_N0_DECAY, ENVELOPE_REL),
                f"half-amplitude time {found / FS:.3f} fs vs {ELECTRON_N0_DECAY / FS:.2f} fs")
    assert ok


def test_c7_property_suite(report, tmp_path):
    ok = True
    # unitarity
    grid = SimGrid(8, 16, 1e-3)
    rng = np.random.default_rng(7)
    psi = rng.normal(size=grid.size) + 1j * rng.normal(size=grid.size)
    state = FieldState(psi / np.linalg.norm(psi))
    Propagator(grid, 7.0, 0.3).advance(state, 100_000)
    drift = abs(np.vdot(state.psi, state.psi).real - 1.0)
    ok &= report("C7 unitarity", drift <= UNITARITY, f"norm drift {drift:.1e} after 1e5 steps")

    # sum rule versus curvature
    spec = LatticeSpec(7.0, 32, 16)
    worst = 0.0
    for n, k in ((0, 0.0), (0, 0.3), (1, 0.5), (2, 0.9)):
        c = inverse_effective_mass(spec, n, k, "curvature")
        r = inverse_effective_mass(spec, n, k, "sumrule")
        worst = max(worst, abs(r / c - 1.0))
    ok &= report("C7 sum rule vs curvature", worst <= SUMRULE_REL, f"worst relative difference {worst:.1e}")

    # extended-zone periodicity and parity selection
    # only pairs whose floating-point k + 2m is an exact translate of k
    spec = LatticeSpec(7.0, 32, 6)
    pairs = [(k, k + 2 * m) for k in np.linspace(-1.0, 1.0, 41) for m in (-3, -1, 1, 2, 4) if (k + 2 * m) - 2 * m == k]
    same, p_dev = True, 0.0
    for k, kk in pairs:
        a, b = solve_bloch(spec, k), solve_bloch(spec, kk)
        same &= np.array_equal(a.energies, b.energies)
        p_dev = max(p_dev, float(np.max(np.abs(np.abs(momentum_elements(a)) - np.abs(momentum_elements(b))))))
    ok &= report("C7 extended-zone periodicity", same and p_dev <= 1e-14 and len(pairs) > 50,
                 f"E(k + 2m) bit-identical over {len(pairs)} exact translates; max ||p| difference| {p_dev:.1e}")
    p02 = abs(momentum_elements(solve_bloch(spec, 0.0))[0, 2])
    ok &= report("C7 parity selection", p02 <= 1e-13, f"|p_02(0)| = {p02:.1e}")

    # degenerate cases
    free = run(0.0, WavepacketSpec(0, 0.1), 0.2, 2.0, gate=False).series
    free_dev = float(np.max(np.abs(free.v - 0.2 * free.t)))
    fo_free = FirstOrderModel(0.0, WavepacketSpec(0, 0.1), DriveSpec(0.2, 2.0)).series()
    ok &= report("C7 s=0 exact", free_dev <= 1e-8 and np.all(fo_free.v == 0.2 * fo_free.t),
                 f"split-step max|v - F t| = {free_dev:.1e}; first-order exact")
    still = run(7.0, WavepacketSpec(0, 0.2), 0.0, 2.0, gate=False).series
    fo_still = FirstOrderModel(7.0, WavepacketSpec(0, 0.2), DriveSpec(0.0, 2.0), samples=64).series()
    still_dev = max(np.max(np.abs(still.a)), np.max(np.abs(still.v)))
    ok &= report("C7 F=0 exact", still_dev <= 1e-12 and not np.any(fo_still.a) and not np.any(fo_still.v),
                 f"split-step max(|a|,|v|) = {still_dev:.1e}; first-order identically zero")

    # byte-identical reruns
    cfg = tmp_path / "det.cfg"
    cfg.write_text("mass_amu = 86.909\nlattice_nm = 390\ns = 7\naccel = 24.2\nduration_bloch = 0.05\n")
    blobs = []
    for sub in ("one", "two"):
        main(["run", "--config", str(cfg), "--engines", "firstorder,splitstep,baseline", "--out", str(tmp_path / sub)])
        blobs.append({p.name: p.read_bytes() for p in sorted((tmp_path / sub).iterdir())})
    ok &= report("C7 deterministic reruns", blobs[0] == blobs[1] and len(blobs[0]) == 4,
                 f"{len(blobs[0])} files byte-identical")

    # scaled-units invariance across (mass, b)
    series = []
    for mass, b in ((86.909 * sc.atomic_mass, 390e-9), (22.990 * sc.atomic_mass, 295e-9)):
        accel = 0.17 * math.pi**3 * sc.hbar**2 / (2.0 * mass**2 * b**3)
        sp = scale(PhysicalParams(mass, b, 7.0, accel))
        fo = FirstOrderModel(sp.s, WavepacketSpec(0, sp.sigma), DriveSpec(sp.force, 1.0), samples=257).series()
        ss = run(sp.s, WavepacketSpec(0, sp.sigma), sp.force, 1.0, gate=False).series
        series.append((sp.force, fo.a, ss.v))
    rel = max(
        abs(series[0][0] / series[1][0] - 1.0),
        float(np.max(np.abs(series[0][1] - series[1][1]))) / 0.17,
        float(np.max(np.abs(series[0][2] - series[1][2]))),
    )
    ok &= report("C7 scaled-units invariance", rel <= 1e-13, f"Rb vs Na at equal (s, F~, sigma, N): {rel:.1e}")
    assert ok
