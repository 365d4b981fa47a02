"""Interband populations during one Bloch period.

The strong-force rubidium preset moves a few percent of the packet into the
first excited band in mid-cycle; most of it returns by the end of the period.
Both engines report the populations, computed in a gauge-invariant way.
"""
import numpy as np

from blochmass.cli import run_engines
from blochmass.scenario import SolverSettings, preset, scale

sp = scale(preset("rb-s7-strong"))
series = run_engines(sp, SolverSettings(), ["firstorder", "splitstep"], populations=True)

for engine, ts in series.items():
    pops = ts.populations
    t = ts.t / sp.tau_B_scaled
    print(f"\n{engine}: bands {ts.bands}")
    print(" t/tau_B    P_0       P_1        P_2")
    for frac in np.linspace(0.0, 1.0, 11):
        i = min(np.searchsorted(t, frac), t.size - 1)
        print(f"{t[i]:7.2f}  {pops[0, i]:.5f}  {pops[1, i]:.3e}  {pops[2, i]:.3e}")
    print(f"max leakage {np.max(1 - pops[0]):.3e}; P_1 at the end {pops[1, -1]:.3e}")
