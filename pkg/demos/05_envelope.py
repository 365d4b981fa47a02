"""Dephasing of the interband oscillation for an electron in a deep lattice.

Compares the analytic envelope (nearest band, quadratic bands, no drift) with
the first-order acceleration for the electron-s10-N0 preset, and extracts the
half-amplitude time from both.
"""
from blochmass.firstorder import (
    DriveSpec,
    FirstOrderModel,
    WavepacketSpec,
    envelope_approx,
    half_amplitude_time,
    timescales,
)
from blochmass.scenario import preset, scale

sp = scale(preset("electron-s10-N0"))
ts = timescales(sp.s, sp.band, sp.sigma, sp.force)
fs = 1e-15 / sp.time_unit
print(f"electron-s10-N0: period {ts.tau_osc / fs:.3f} fs, predicted half-amplitude time {ts.tau_decay / fs:.3f} fs")

model = FirstOrderModel(sp.s, WavepacketSpec(sp.band, sp.sigma), DriveSpec(sp.force, sp.horizon))
series = model.series()
osc = series.a - series.a_baseline
env = envelope_approx(sp.s, sp.band, sp.sigma, sp.force, series.t, matched_amplitude=abs(osc[0]))

found = half_amplitude_time(series.t, osc, ts.tau_osc)
approx = half_amplitude_time(series.t, env["a_osc"], ts.tau_osc)
print(f"first-order half-amplitude time: {found / fs:.3f} fs")
print(f"analytic envelope:               {approx / fs:.3f} fs")

print("\n t [fs]   envelope   |a - a_baseline| / initial")
step = series.t.size // 16
for i in range(0, series.t.size, step):
    lo, hi = max(0, i - step // 2), min(series.t.size, i + step // 2)
    print(f"{series.t[i] / fs:6.2f}   {env['envelope'][i]:.3f}      {abs(osc[lo:hi]).max() / abs(osc[0]):.3f}")
