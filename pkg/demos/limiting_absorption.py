"""Weighted resolvents near the real axis and local decay of a photon wave packet.

The weighted norm stays bounded as eps -> 0 between levels of the discretized
band, and differences in lambda scale like |lambda - lambda'|^(s - 1/2).
"""
import numpy as np

from fiberlap.fock import build_mode_grid
from fiberlap.lap import (SweepConfig, build_weight, gaussian_one_photon, holder_fit, lap_sweep,
                          local_decay, midpoint_pairs)
from fiberlap.model import assemble_fiber
from fiberlap.spectral import eig_decompose

grid = build_mode_grid({"radii": list(np.linspace(0.05, 1.0, 256)), "directions": "x"})
m = assemble_fiber([0, 0, 0], 0.0, grid, Lam=2.0, n_max=1)
d = eig_decompose(m.H)
w = build_weight("y", 1.0, m.basis)

mids = 0.5 * (d.values[1:] + d.values[:-1])
lams = [mids[60], mids[150]]
rep = lap_sweep(m.H, SweepConfig((0.02, 1.2), lams, [1e-2, 1e-3, 1e-4]), w, d)
for lam in lams:
    v = rep.summary[f"{lam:.17g}"]
    print(f"lambda = {lam:.4f}: relative change over the last eps step {v['rel_change']:.1e}")

pairs = midpoint_pairs(d.values, 0.625)
for s in (0.75, 1.0):
    fit = holder_fit(m.H, build_weight("y", s, m.basis), s, pairs, 1e-4, d)
    print(f"s = {s}: Hoelder exponent {fit.exponent:.3f} (reference {s - 0.5})")

phi = gaussian_one_photon(m.basis, 0.5, 0.2)
dr = local_decay(m.H, w, 1.0, phi, decomp=d, floor_factor=3.0)
print(f"\nwave packet: recurrence time {dr.t_rec:.0f}, norm/floor at most {dr.norms.max() / dr.floor:.1f}")
print(f"tail exponent on the 3x-floor window {dr.exponent:.2f}")
