"""Band structure, gaps and effective masses of the cosine lattice.

Run with ``python demos/01_bands_and_masses.py``.  Prints the lowest bands
across the Brillouin zone for a few depths, then compares the band-curvature
mass with the f-sum-rule mass and shows how the two approach each other as
more bands enter the sum.
"""
import numpy as np

from blochmass.bands import (
    LatticeSpec,
    band_structure,
    effective_mass,
    inverse_effective_mass,
    momentum_elements,
    solve_bloch,
)

ks = np.linspace(-1.0, 1.0, 9)

for s in (0.0, 3.0, 7.0, 13.0):
    spec = LatticeSpec(s, cutoff=32, n_bands=4)
    energies = band_structure(spec, ks)
    print(f"\ns = {s:g}: E_n(k) in recoil energies")
    print("   k    " + "  ".join(f"E_{n:<6d}" for n in range(4)))
    for k, row in zip(ks, energies):
        print(f"{k:6.2f}  " + "  ".join(f"{e:8.4f}" for e in row))
    gap = energies[len(ks) // 2, 1] - energies[len(ks) // 2, 0]
    print(f"gap E_1 - E_0 at k = 0: {gap:.6f}")

# Effective mass of the ground band at the zone centre
print("\nground-band effective mass m*/m at k = 0")
for s in (1.0, 3.0, 7.0, 13.0, 20.0):
    print(f"  s = {s:5.1f}: {effective_mass(LatticeSpec(s), 0, 0.0):9.4f}")

# Sum rule convergence: m/m* = 1 + 4 sum_n' |p_nn'|^2 / (E_n - E_n')
spec = LatticeSpec(7.0, n_bands=12)
curv = inverse_effective_mass(spec, 0, 0.3, "curvature")
sol = solve_bloch(spec, 0.3)
p = momentum_elements(sol)
e = sol.energies
print(f"\ns = 7, k = 0.3: curvature gives m/m* = {curv:.10f}")
for top in (1, 2, 4, 8, 11):
    partial = 1.0 + 4.0 * sum(abs(p[0, j]) ** 2 / (e[0] - e[j]) for j in range(1, top + 1))
    print(f"  sum rule through band {top:2d}: {partial:.10f}  (difference {partial - curv:+.2e})")
