"""Adiabatic Deutsch algorithm with dephasing: how long should the sweep take?

Longer sweeps follow the instantaneous steady state more closely
(``fid_adiabatic`` rises) but lose coherence (``fid_target`` falls toward
``1/sqrt(2)``).  The table shows the trade-off for the balanced function.
"""

import numpy as np

from lindblad_adiabatic import IntegratorConfig, deutsch_model, integrate_master
from lindblad_adiabatic.measurement import fidelity
from lindblad_adiabatic.models import DeutschParams, deutsch_target

cfg = IntegratorConfig(rel_tol=1e-10, abs_tol=1e-13)
target = deutsch_target(0, 1)

print(f"{'gamma':>6} {'tau/ms':>7} {'fid_adiabatic':>14} {'fid_target':>11}")
for gamma in (0.0, 1256.0, 3141.0):
    for tau in np.geomspace(2e-5, 2e-3, 9):
        m = deutsch_model(DeutschParams(gamma=gamma, tau=tau))
        rho = integrate_master(m.hamiltonian, m.channel, m.rho0, tau, cfg, grid=[tau]).states[-1]
        print(f"{gamma:6g} {tau * 1e3:7.3f} {fidelity(m.adiabatic_reference(tau), rho):14.6f} "
              f"{fidelity(target, rho):11.6f}")
print(f"floor 1/sqrt(2) = {1 / np.sqrt(2):.6f}")
