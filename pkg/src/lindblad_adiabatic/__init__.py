"""Adiabatic dynamics of open qubit systems under Lindblad dephasing.

Submodules
----------
linalg       dense eigen-solvers and PSD square roots
superop      operator bases, vectorization and superoperator matrices
spectral     biorthogonal eigen-frames and their tracking in time
adiabatic    adiabatic parameters, adiabatic and coefficient-space propagation
dynamics     adaptive Dormand-Prince integration of the master equation
models       Landau-Zener and adiabatic Deutsch models
measurement  fidelity and virtual state tomography
cli          command-line scenario runner
"""

from .adiabatic import (
    AdiabaticReport, CoefficientState, adiabatic_propagate, adiabatic_series,
    asymptotic_two_block_check, check_aqc, initial_coefficients, integrate_coefficients, xi,
    xi_series,
)
from .dynamics import IntegratorConfig, Trajectory, integrate_master, integrate_superop
from .errors import *  # noqa: F401,F403
from .linalg import eig_general, sqrtm_psd
from .measurement import (
    TomographyProtocol, bloch, fidelity, fidelity_qubit, reconstruct, sample_counts,
    trace_distance,
)
from .models import DeutschParams, LZParams, deutsch_model, lz_model, make_model
from .spectral import SpectralFrame, SpectralPath, build_path, decompose, track
from .superop import (
    NoiseChannel, PauliHamiltonian, SuperoperatorFn, build_superop, devectorize, pauli_basis,
    vectorize,
)

__version__ = "0.1.0"
