"""Driven qubit models: an oscillating Landau-Zener drive and an adiabatic
Deutsch algorithm, both under dephasing.

Every superoperator is built from the Hamiltonian and the channel through
:func:`~lindblad_adiabatic.superop.build_superop`.  Closed-form matrices and
eigen-data quoted in the literature are available separately
(``*_printed_*`` and ``*_analytic_*``) so they can be compared against the
numerics rather than trusted.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .superop import (
    SIGMA_I, SIGMA_X, SIGMA_Y, SIGMA_Z, NoiseChannel, PauliHamiltonian, build_superop,
)

TWO_PI = 2 * np.pi

#: drive parameters of the Landau-Zener experiment (angular, s^-1)
LZ_OMEGA0 = TWO_PI * 1e6
LZ_OMEGAX = TWO_PI * 2e4
#: dephasing rates used for both models (s^-1)
GAMMAS = (1256.0, 3141.0, 6283.0)
#: Deutsch drive (angular, s^-1)
DEUTSCH_OMEGA = TWO_PI * 1e4
#: readout bit-flip probability of the reference trapped-ion setup
READOUT_ERROR = 0.006


def angular(freq_hz):
    """Convert an ordinary frequency in Hz to angular frequency ``2 pi f``."""
    return TWO_PI * np.asarray(freq_hz, dtype=float)


# -- Landau-Zener -----------------------------------------------------------


@dataclass(frozen=True)
class LZParams:
    """Parameters of ``H = (w0/2) sz + (wx/2) sin(w t) sx`` with dephasing ``gamma``."""

    omega0: float = LZ_OMEGA0
    omegax: float = LZ_OMEGAX
    omega: float = LZ_OMEGA0
    gamma: float = GAMMAS[0]

    def __post_init__(self):
        for name in ("omega0", "omegax", "omega", "gamma"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise InputError(f"{name} must be finite")
        if not self.omega0 > 0:
            raise InputError("omega0 must be positive")
        if self.omegax < 0 or self.gamma < 0:
            raise InputError("omegax and gamma must be non-negative")

    @property
    def theta(self):
        return float(np.arctan(self.omegax / self.omega0))

    @property
    def detuning(self):
        """Relative detuning ``|w0 - w| / w0``."""
        return abs(self.omega0 - self.omega) / self.omega0


def lz_drive(p):
    """The Landau-Zener Hamiltonian as a :class:`PauliHamiltonian`."""
    return PauliHamiltonian(const=(0, 0, p.omega0 / 2), sin=(p.omegax / 2, 0, 0),
                            freq=(p.omega, 0, 0))


def lz_hamiltonian(p, t):
    return lz_drive(p)(t)


def lz_rotating_frame(p, t, form="printed"):
    """Hamiltonian in the frame ``R(t) = exp(-i w t sz / 2)``.

    ``form="printed"`` returns ``((w0 - w)/2) sz + (f/2) sy`` with
    ``f = exp(i w t) w0 sin(w t) tan(theta)``, which is not Hermitian for
    ``f`` complex; ``form="exact"`` returns ``R H R^dagger + i R dR^dagger/dt``.

    Returns
    -------
    H_R : ndarray, shape (2, 2)
    detuning : float
        ``|w0 - w| / w0``.
    """
    if form == "printed":
        f = np.exp(1j * p.omega * t) * p.omega0 * np.sin(p.omega * t) * np.tan(p.theta)
        HR = 0.5 * (p.omega0 - p.omega) * SIGMA_Z + 0.5 * f * SIGMA_Y
    elif form == "exact":
        R = np.diag([np.exp(-0.5j * p.omega * t), np.exp(0.5j * p.omega * t)])
        HR = R @ lz_hamiltonian(p, t) @ R.conj().T - 0.5 * p.omega * SIGMA_Z
    else:
        raise InputError("form must be 'printed' or 'exact'")
    return HR, p.detuning


def lz_adiabatic_reference(p, t, variant="quoted"):
    """Closed-form adiabatic state of the Landau-Zener model.

    ``variant="quoted"``:
    ``(1/2)[1 - (1/2) e^{-2 g t} sin(w t) tan(theta) sy - e^{-2 g t} sz]``.
    ``variant="eigenvector"`` drops the inner factor 1/2 on ``sy``, as implied
    by ``|D_0>> - e^{-2 g t} |D_1>>`` with ``D_1 = (0, 0, sin tan, 1)``.
    """
    k = {"quoted": 0.5, "eigenvector": 1.0}.get(variant)
    if k is None:
        raise InputError("variant must be 'quoted' or 'eigenvector'")
    d = np.exp(-2 * p.gamma * t)
    y = -k * d * np.sin(p.omega * t) * np.tan(p.theta)
    return 0.5 * (SIGMA_I + y * SIGMA_Y - d * SIGMA_Z)


def lz_printed_superop(p, t):
    """The 4x4 Landau-Zener superoperator exactly as typeset in the literature."""
    g, w0 = p.gamma, p.omega0
    a = w0 * np.sin(p.omega * t) * np.tan(p.theta)
    return np.array([
        [0, 0, 0, 0],
        [0, -2 * g, -w0, a],
        [0, w0, -2 * g, 0],
        [0, -a, 0, 0],
    ], dtype=complex)


def lz_analytic_eigenvalues(p, t):
    """Quoted closed forms ``{0, -2g, -g -+ Delta(t) sec(theta) / 2}``."""
    g, w0, th = p.gamma, p.omega0, p.theta
    d2 = 2 * g**2 + w0**2 * (2 * np.cos(2 * t * p.omega) * np.sin(th) ** 2 - 3) \
        + (2 * g**2 - w0**2) * np.cos(2 * th)
    delta = np.sqrt(complex(d2))
    sec = 1 / np.cos(th)
    return np.array([0, -2 * g, -g - delta * sec / 2, -g + delta * sec / 2])


def lz_analytic_d1(p, t):
    return np.array([0, 0, np.sin(p.omega * t) * np.tan(p.theta), 1], dtype=complex)


# -- Deutsch ----------------------------------------------------------------

_CONVENTIONS = ("superoperator", "hamiltonian")


@dataclass(frozen=True)
class DeutschParams:
    """Adiabatic Deutsch algorithm for ``f(0) = f0``, ``f(1) = f1``.

    ``convention`` fixes the drive amplitude.  ``"superoperator"`` uses
    ``H = -(w/2)[cos(phi) sx + sin(phi) sy]``, which makes the Bloch
    rotation rate ``w`` and the decaying eigenvalues ``-(g +- sqrt(g^2 - w^2))``;
    ``"hamiltonian"`` uses ``-w[...]`` literally (rotation rate ``2w``).

    ``f_convention`` picks ``F = 1 - (-1)^(f0+f1)`` (``"parity"``) or
    ``F = (-1)^f0 - (-1)^f1`` (``"difference"``).
    """

    omega: float = DEUTSCH_OMEGA
    f0: int = 0
    f1: int = 1
    tau: float = 1e-3
    gamma: float = GAMMAS[0]
    convention: str = "superoperator"
    f_convention: str = "parity"

    def __post_init__(self):
        if self.f0 not in (0, 1) or self.f1 not in (0, 1):
            raise InputError("f0 and f1 must be bits")
        if not (np.isfinite(self.tau) and self.tau > 0):
            raise InputError("tau must be positive")
        if not (np.isfinite(self.omega) and np.isfinite(self.gamma)) or self.gamma < 0:
            raise InputError("omega must be finite and gamma non-negative")
        if self.convention not in _CONVENTIONS:
            raise InputError(f"convention must be one of {_CONVENTIONS}")
        if self.f_convention not in ("parity", "difference"):
            raise InputError("f_convention must be 'parity' or 'difference'")

    @property
    def F(self):
        if self.f_convention == "parity":
            return 1 - (-1) ** (self.f0 + self.f1)
        return (-1) ** self.f0 - (-1) ** self.f1

    @property
    def balanced(self):
        return self.f0 != self.f1

    @property
    def amplitude(self):
        """Coefficient ``a`` in ``H = -a[cos sx + sin sy]``."""
        return self.omega / 2 if self.convention == "superoperator" else self.omega

    @property
    def rotation_rate(self):
        """Bloch-vector rotation rate ``2a``."""
        return 2 * self.amplitude

    def phase(self, t):
        return np.pi * self.F * t / (2 * self.tau)


def deutsch_drive(p):
    a = p.amplitude
    nu = np.pi * p.F / (2 * p.tau)
    return PauliHamiltonian(cos=(-a, 0, 0), sin=(0, -a, 0), freq=(nu, nu, 0))


def deutsch_hamiltonian(p, t):
    return deutsch_drive(p)(t)


def deutsch_adiabatic_reference(p, s, variant="quoted", decay="s"):
    """Closed-form adiabatic state at normalized time ``s = t / tau``.

    ``variant="quoted"`` carries ``-sin(F pi s / 2)`` on ``sy`` as quoted;
    ``variant="dynamics"`` carries ``+sin``, the sign the master equation
    produces.  ``decay="s"`` uses ``e^{-2 g tau s}``, ``decay="final"``
    the s-independent ``e^{-2 g tau}``.  At ``s = 1`` all four agree.
    """
    if not 0 <= s <= 1 + 1e-12:
        raise InputError("s must lie in [0, 1]")
    sign = {"quoted": -1.0, "dynamics": 1.0}.get(variant)
    if sign is None:
        raise InputError("variant must be 'quoted' or 'dynamics'")
    if decay not in ("s", "final"):
        raise InputError("decay must be 's' or 'final'")
    d = np.exp(-2 * p.gamma * p.tau * (s if decay == "s" else 1.0))
    phi = p.F * np.pi * s / 2
    return 0.5 * (SIGMA_I + d * np.cos(phi) * SIGMA_X + sign * d * np.sin(phi) * SIGMA_Y)


def deutsch_target(f0, f1):
    """Pure output ``(1/2)(1 + (-1)^(f0+f1) sx)``."""
    if f0 not in (0, 1) or f1 not in (0, 1):
        raise InputError("f0 and f1 must be bits")
    return 0.5 * (SIGMA_I + (-1) ** (f0 + f1) * SIGMA_X)


def deutsch_analytic_eigenvalues(p):
    """``{0, -2g, -(g + Delta), -(g - Delta)}`` with ``Delta^2 = g^2 - W^2``.

    ``W`` is the Bloch rotation rate (``omega`` in the superoperator
    convention).  Time independent.
    """
    g = p.gamma
    delta = np.sqrt(complex(g**2 - p.rotation_rate**2))
    return np.array([0, -2 * g, -(g + delta), -(g - delta)])


def deutsch_analytic_d1(p, s, sign=-1):
    phi = p.F * np.pi * s / 2
    return np.array([0, np.cos(phi), sign * np.sin(phi), 0], dtype=complex)


def deutsch_printed_superop(p, t):
    """The published 4x4 Deutsch superoperator (balanced case) as typeset."""
    g, w = p.gamma, p.omega
    a = np.pi * t / p.tau
    return np.array([
        [0, 0, 0, 0],
        [0, -2 * g, 0, w * np.sin(a)],
        [0, 0, -2 * g, w * np.cos(a)],
        [0, -w * np.sin(a), -w * np.cos(a), 0],
    ], dtype=complex)


# -- model objects ------------------------------------------------------------


@dataclass(frozen=True)
class Model:
    """Common interface consumed by the adiabatic checks and the CLI.

    Attributes
    ----------
    name : str
    params : LZParams or DeutschParams
    hamiltonian : PauliHamiltonian
    rho0 : ndarray
        Initial density matrix.
    """

    name: str
    params: object
    hamiltonian: PauliHamiltonian
    rho0: np.ndarray
    _ref: object = field(repr=False, default=None)
    _eig: object = field(repr=False, default=None)

    @property
    def gamma(self):
        return self.params.gamma

    @property
    def channel(self):
        return NoiseChannel.dephasing(self.params.gamma)

    def superop(self):
        return build_superop(self.hamiltonian, self.channel)

    def adiabatic_reference(self, t):
        """Closed-form adiabatic state at physical time ``t``."""
        return self._ref(t)

    def reference_eigenvalues(self, t):
        """Eigenvalue guesses used to fix labels, or ``None``."""
        return None if self._eig is None else self._eig(t)


def lz_model(params=None, reference_variant="quoted", **kw):
    p = params if params is not None else LZParams(**kw)
    return Model("lz", p, lz_drive(p), np.diag([0.0, 1.0]).astype(complex),
                 lambda t: lz_adiabatic_reference(p, t, reference_variant), None)


def deutsch_model(params=None, reference_variant="quoted", **kw):
    p = params if params is not None else DeutschParams(**kw)
    plus = 0.5 * (SIGMA_I + SIGMA_X)
    return Model("deutsch", p, deutsch_drive(p), plus,
                 lambda t: deutsch_adiabatic_reference(p, min(t / p.tau, 1.0), reference_variant),
                 lambda t: deutsch_analytic_eigenvalues(p))


def make_model(name, **kw):
    """Build ``"lz"`` or ``"deutsch"`` from keyword parameters."""
    if name == "lz":
        return lz_model(**kw)
    if name == "deutsch":
        return deutsch_model(**kw)
    raise InputError(f"unknown model {name!r}")


# -- diagnostics --------------------------------------------------------------


def signed_permutation_between(A, B, tol=1e-9):
    """Find ``P`` (signed permutation fixing index 0) with ``P A P^T = B``.

    Returns ``None`` when no such map exists.
    """
    A = np.asarray(A)
    B = np.asarray(B)
    n = A.shape[0]
    scale = max(1.0, np.abs(A).max())
    for perm in itertools.permutations(range(1, n)):
        for signs in itertools.product((1, -1), repeat=n - 1):
            P = np.zeros((n, n))
            P[0, 0] = 1
            for i, (j, s) in enumerate(zip(perm, signs), start=1):
                P[i, j] = s
            if np.abs(P @ A @ P.T - B).max() <= tol * scale:
                return P
    return None


@dataclass(frozen=True)
class EigenDeviation:
    """Numeric versus quoted Landau-Zener eigen-data on a time grid.

    ``eig_deviation[k]`` is the largest distance from a quoted eigenvalue
    to the nearest numeric one at ``times[k]``; ``charpoly_residual[k]`` is
    ``|det(L_printed + 2 g I)| / |L|^4``, zero iff ``-2g`` is an exact
    eigenvalue of the printed matrix.
    """

    times: np.ndarray
    numeric: np.ndarray
    analytic: np.ndarray
    eig_deviation: np.ndarray
    d1_angle: np.ndarray
    charpoly_residual: np.ndarray

    def summary(self):
        return {
            "max_eigenvalue_deviation": float(self.eig_deviation.max()),
            "max_d1_angle": float(self.d1_angle.max()),
            "max_charpoly_residual": float(self.charpoly_residual.max()),
        }


def lz_eigen_deviation(p, times):
    """Quantify how far the quoted eigen-data sit from the numerics."""
    times = np.asarray(times, dtype=float)
    L = build_superop(lz_drive(p), NoiseChannel.dephasing(p.gamma))
    num, ana, dev, ang, res = [], [], [], [], []
    for t in times:
        M = L(t)
        w, V = np.linalg.eig(M)
        a = lz_analytic_eigenvalues(p, t)
        num.append(np.sort_complex(w))
        ana.append(a)
        dev.append(max(np.abs(w - x).min() for x in a))
        # angle between the quoted D_1 and the numeric eigenvector closest to it
        d1 = lz_analytic_d1(p, t)
        P = signed_permutation_between(lz_printed_superop(p, t), M, tol=1e-6)
        d1n = d1 if P is None else P @ d1
        Vn = V / np.linalg.norm(V, axis=0)
        cos = np.abs(Vn.conj().T @ d1n).max() / np.linalg.norm(d1n)
        ang.append(float(np.arccos(min(1.0, cos))))
        Mp = lz_printed_superop(p, t)
        nrm = max(1.0, np.abs(Mp).max())
        res.append(abs(np.linalg.det(Mp + 2 * p.gamma * np.eye(4))) / nrm**4)
    return EigenDeviation(times, np.array(num), np.array(ana), np.array(dev), np.array(ang),
                          np.array(res))


__all__ = [
    "LZParams", "DeutschParams", "Model", "lz_drive", "lz_hamiltonian", "lz_rotating_frame",
    "lz_adiabatic_reference", "lz_printed_superop", "lz_analytic_eigenvalues", "lz_model",
    "deutsch_drive", "deutsch_hamiltonian", "deutsch_adiabatic_reference", "deutsch_target",
    "deutsch_analytic_eigenvalues", "deutsch_printed_superop", "deutsch_model", "make_model",
    "signed_permutation_between", "lz_eigen_deviation", "angular",
]
