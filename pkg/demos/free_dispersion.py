"""The free fiber energy E(P): P^2/2 up to |P| = 1, then |P| - 1/2.

At zero coupling the ground state of H(P) switches from the bare electron
to an electron plus one photon carrying momentum P - 1 along P.
"""
import numpy as np

from fiberlap.fock import build_mode_grid
from fiberlap.model import assemble_fiber, free_dispersion

grid = build_mode_grid({"radii": list(np.linspace(0.1, 1.0, 10)), "directions": "pm_x"})

print(" |P|      E(P)      brute force   continuum")
for p in np.linspace(0, 1.5, 7):
    P = np.array([p, 0, 0])
    m = assemble_fiber(P, 0.0, grid, Lam=1.0, n_max=2, p_crit=np.inf)
    brute = free_dispersion(m.basis, P).min()
    cont = p**2 / 2 if p <= 1 else p - 0.5
    print(f"{p:5.2f}  {m.ground.E:9.6f}  {brute:9.6f}    {cont:9.6f}")

# a small coupling lowers the energy by O(alpha)
m0 = assemble_fiber([0.02, 0, 0], 0.0, grid, 1.0, n_max=2)
m1 = assemble_fiber([0.02, 0, 0], 1e-3, grid, 1.0, n_max=2)
print(f"\nalpha = 1e-3 shifts E(0.02) by {m1.ground.E - m0.ground.E:.3e}")
