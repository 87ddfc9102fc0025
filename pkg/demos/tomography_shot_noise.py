"""Virtual Pauli tomography: reconstruction error against the number of shots.

The Bloch-vector error falls as ``1/sqrt(N)``; the fitted log-log slope is
printed at the end.
"""

import numpy as np

from lindblad_adiabatic.measurement import TomographyProtocol, from_bloch, tomography

truth_r = np.array([0.3, 0.2, 0.1])
rho = from_bloch(truth_r)
shots = [100, 400, 1600, 6400, 25600]
errs = []
for n in shots:
    e = [np.linalg.norm(tomography(rho, TomographyProtocol(shots=n, seed=s))[1].raw_bloch
                        - truth_r, axis=1).mean() for s in range(20)]
    errs.append(np.mean(e))
    print(f"N = {n:6d}  mean |r_est - r| = {errs[-1]:.5f}")
print(f"slope = {np.polyfit(np.log(shots), np.log(errs), 1)[0]:.3f} (ideal -0.5)")
