"""Landau-Zener drive under dephasing: exact state versus the adiabatic reference.

Prints the fidelity every 0.25 ms for the three preset dephasing rates, the
time after which it stays above 0.99, and the largest adiabatic parameter
of the slow block.
"""

import numpy as np

from lindblad_adiabatic import IntegratorConfig, build_path, integrate_master, lz_model
from lindblad_adiabatic.adiabatic import xi_table
from lindblad_adiabatic.measurement import fidelity
from lindblad_adiabatic.models import GAMMAS, LZParams

TMAX = 3e-3
cfg = IntegratorConfig(rel_tol=1e-10, abs_tol=1e-13)
grid = np.linspace(0, TMAX, 3001)

for gamma in GAMMAS:
    m = lz_model(LZParams(gamma=gamma))
    tr = integrate_master(m.hamiltonian, m.channel, m.rho0, TMAX, cfg, grid=grid)
    fid = np.array([fidelity(m.adiabatic_reference(t), r, check=False)
                    for t, r in zip(grid, tr.states)])
    low = np.flatnonzero(fid < 0.99)
    settle = grid[low[-1] + 1] if low.size else 0.0
    xi, _, _ = xi_table(build_path(m.superop(), grid), [(2, 1)], on_gap="flag")
    print(f"gamma = {gamma:g} 1/s: fid >= 0.99 from t = {settle * 1e3:.3f} ms, "
          f"max xi_21 = {xi.max():.3g}")
    for t in np.arange(0, TMAX + 1e-12, 2.5e-4):
        k = int(round(t / grid[1]))
        print(f"  t = {grid[k] * 1e3:5.2f} ms  fid = {fid[k]:.5f}  purity = {tr.purity[k]:.5f}")
