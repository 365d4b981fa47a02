"""Cross-check the first-order velocity against the split-step solver.

Runs both engines on the rb-s7 preset for one Bloch period and reports the
largest velocity difference, plus how the deviation from the effective-mass
baseline looks in each.  The split-step run takes around half a minute.
"""
import time

import numpy as np

from blochmass.cli import run_engines
from blochmass.scenario import SolverSettings, preset, scale

sp = scale(preset("rb-s7"))
t0 = time.perf_counter()
series = run_engines(sp, SolverSettings(), ["firstorder", "splitstep"])
print(f"both engines finished in {time.perf_counter() - t0:.1f} s")

fo, ss = series["firstorder"], series["splitstep"]
v_fo = np.interp(ss.t, fo.t, fo.v)
print(f"max |v_firstorder - v_splitstep| = {np.max(np.abs(v_fo - ss.v)):.4f} v_R")
print(f"split-step gate: {ss.meta.get('gate')}, max norm drift {ss.meta.get('max_norm_deviation'):.1e}")

print("\n t/tau_B   dv first-order   dv split-step")
for frac in np.linspace(0.0, 1.0, 11):
    i = min(np.searchsorted(ss.t, frac * sp.tau_B_scaled), ss.t.size - 1)
    j = min(np.searchsorted(fo.t, ss.t[i]), fo.t.size - 1)
    print(f"{frac:7.2f}   {fo.v[j] - fo.v_baseline[j]:+.5f}        {ss.v[i] - ss.v_baseline[i]:+.5f}")
