"""First-order transient response for the rubidium preset.

A ground-band packet is suddenly accelerated.  At the instant the force is
switched on the packet responds with the bare mass; it then oscillates about
the band effective-mass motion at the interband frequency.  This script
prints the acceleration relative to the force and the deviation from the
effective-mass baseline at a handful of times across one Bloch period.
"""
import numpy as np

from blochmass.firstorder import DriveSpec, FirstOrderModel, WavepacketSpec, timescales
from blochmass.scenario import preset, scale

sp = scale(preset("rb-s7"))
print(f"rb-s7: s = {sp.s:g}, F~ = {sp.force:.4f}, sigma = {sp.sigma:g}, tau_B = {sp.tau_B * 1e3:.3f} ms")

ts = timescales(sp.s, sp.band, sp.sigma, sp.force)
print(f"interband period {ts.tau_osc * sp.time_unit * 1e6:.2f} us = {ts.ratio_osc:.4f} tau_B")
print(f"dephasing time  {ts.tau_decay * sp.time_unit * 1e6:.2f} us = {ts.ratio_decay:.4f} tau_B")

model = FirstOrderModel(sp.s, WavepacketSpec(sp.band, sp.sigma), DriveSpec(sp.force, sp.horizon))
series = model.series()
print(f"\nupper band retained: {model.top}; samples: {series.t.size}")

print("\n t/tau_B    a/F      m*/m     (v - v_baseline)/v_R")
for frac in np.linspace(0.0, 1.0, 21):
    i = min(np.searchsorted(series.t, frac * sp.tau_B_scaled), series.t.size - 1)
    dv = series.v[i] - series.v_baseline[i]
    print(f"{series.t[i] / sp.tau_B_scaled:7.3f}  {series.a[i] / sp.force:8.4f}  {series.mstar[i]:8.3f}  {dv:+.5f}")
