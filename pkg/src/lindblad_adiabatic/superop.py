"""Operator bases, coherence vectors and the Lindblad superoperator matrix.

A density matrix ``rho`` of a ``D``-level system is represented by its
coherence vector ``v_n = Tr[rho sigma_n^dagger]`` over an operator basis with
``Tr[sigma_n sigma_m^dagger] = D delta_nm`` and ``sigma_0 = 1``.  In that
representation the master equation becomes the linear ODE ``dv/dt = L(t) v``
with ``L_mn = (1/D) Tr[sigma_m^dagger Lindbladian(sigma_n)]``.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InputError, NonHermitianHamiltonian, NotAState

STATE_TOL = 1e-10
STATE_EIG_TOL = 1e-9

SIGMA_I = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)


@dataclass(frozen=True)
class OperatorBasis:
    """Orthogonal operator basis ``sigma_0 = 1, sigma_1, ..., sigma_{D^2-1}``."""

    elements: np.ndarray
    labels: tuple = ()
    dim: int = field(init=False)

    def __post_init__(self):
        E = np.asarray(self.elements, dtype=complex)
        if E.ndim != 3 or E.shape[1] != E.shape[2] or E.shape[0] != E.shape[1] ** 2:
            raise InputError(f"basis must have shape (D^2, D, D), got {E.shape}")
        D = E.shape[1]
        gram = np.einsum("nij,mij->nm", E, E.conj())
        if not np.allclose(gram, D * np.eye(D * D), atol=1e-12):
            raise InputError("basis violates Tr[s_n s_m^dagger] = D delta_nm")
        traces = np.einsum("nii->n", E)
        if not np.allclose(traces, D * np.eye(D * D)[0], atol=1e-12):
            raise InputError("basis violates Tr[s_n] = D delta_n0")
        E.setflags(write=False)
        object.__setattr__(self, "elements", E)
        object.__setattr__(self, "dim", D)
        if not self.labels:
            object.__setattr__(self, "labels", tuple(f"s{n}" for n in range(D * D)))

    @property
    def size(self):
        return self.dim * self.dim

    def __len__(self):
        return self.size


def pauli_basis():
    """The qubit basis ``{1, sigma_x, sigma_y, sigma_z}``."""
    return OperatorBasis(np.stack([SIGMA_I, SIGMA_X, SIGMA_Y, SIGMA_Z]), ("I", "X", "Y", "Z"))


_PAULI = pauli_basis()


def check_state(rho, tol=STATE_TOL, eig_tol=STATE_EIG_TOL):
    """Raise :class:`NotAState` unless ``rho`` is Hermitian, unit-trace and PSD."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise NotAState(f"density matrix must be square, got shape {rho.shape}")
    herm = np.abs(rho - rho.conj().T).max()
    if herm > tol:
        raise NotAState(f"density matrix not Hermitian (deviation {herm:.2e})")
    tr = np.trace(rho)
    if abs(tr - 1) > tol:
        raise NotAState(f"density matrix trace {tr.real:.12g} != 1")
    wmin = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min()
    if wmin < -eig_tol:
        raise NotAState(f"density matrix has negative eigenvalue {wmin:.2e}")
    return rho


def vectorize(rho, basis=_PAULI):
    """Coherence vector ``v_n = Tr[rho sigma_n^dagger]``."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (basis.dim, basis.dim):
        raise DimensionMismatch(f"state shape {rho.shape} vs basis dimension {basis.dim}")
    return np.einsum("ij,nij->n", rho, basis.elements.conj())


def devectorize(v, basis=_PAULI, on_invalid="raise"):
    """Density matrix ``(1/D) sum_n v_n sigma_n``.

    ``on_invalid`` is one of ``"raise"``, ``"warn"`` or ``"ignore"`` and
    controls what happens when the result is not a valid state.
    """
    v = np.asarray(v, dtype=complex)
    if v.shape != (basis.size,):
        raise DimensionMismatch(f"vector length {v.shape} vs basis size {basis.size}")
    rho = np.einsum("n,nij->ij", v, basis.elements) / basis.dim
    if on_invalid != "ignore":
        try:
            if abs(v[0] - 1) > STATE_EIG_TOL:
                raise NotAState(f"component 0 is {v[0]:.12g}, expected 1")
            check_state(rho)
        except NotAState as exc:
            if on_invalid == "raise":
                raise
            warnings.warn(str(exc), stacklevel=2)
    return rho


def inner(a, b):
    """``<<a|b>> = D Tr[b a^dagger] = sum_n conj(a_n) b_n``."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise DimensionMismatch(f"vector shapes differ: {a.shape} vs {b.shape}")
    return complex(np.vdot(a, b))


@dataclass(frozen=True)
class NoiseChannel:
    """Jump operators ``L_k`` with rates; dissipator ``sum g(L r L+ - {L+L, r}/2)``."""

    jumps: tuple = ()

    def __post_init__(self):
        jumps = []
        for op, rate in self.jumps:
            rate = float(rate)
            if not rate >= 0:
                raise InputError(f"channel rates must be >= 0, got {rate}")
            jumps.append((np.asarray(op, dtype=complex), rate))
        object.__setattr__(self, "jumps", tuple(jumps))

    @classmethod
    def dephasing(cls, gamma):
        """``gamma (sigma_z rho sigma_z - rho)``."""
        return cls(((SIGMA_Z, gamma),))

    def apply(self, rho):
        out = np.zeros_like(rho, dtype=complex)
        for op, rate in self.jumps:
            if rate == 0:
                continue
            opd = op.conj().T
            odo = opd @ op
            out += rate * (op @ rho @ opd - 0.5 * (odo @ rho + rho @ odo))
        return out


def lindbladian(H, channel, rho):
    """Right-hand side ``-i[H, rho] + dissipator(rho)`` of the master equation."""
    return -1j * (H @ rho - rho @ H) + channel.apply(rho)


class SuperoperatorFn:
    """Time-dependent superoperator ``t -> L(t)``.

    Parameters
    ----------
    evaluator : callable
        ``t -> (n, n)`` complex array.
    derivative : callable, optional
        ``t -> dL/dt``.  Without it a fourth-order central difference with
        step ``fd_step`` is used.
    """

    def __init__(self, evaluator, dim, derivative=None, fd_step=1e-9, basis=None):
        self._evaluator = evaluator
        self._derivative = derivative
        self.dim = dim
        self.fd_step = fd_step
        self.basis = basis
        self.hamiltonian = None
        self.channel = None
        self.generators = None

    @classmethod
    def constant(cls, matrix):
        M = np.array(matrix, dtype=complex)
        Z = np.zeros_like(M)
        return cls(lambda t: M.copy(), M.shape[0], derivative=lambda t: Z.copy())

    def __call__(self, t):
        return self._evaluator(t)

    @property
    def has_analytic_derivative(self):
        return self._derivative is not None

    def derivative(self, t):
        if self._derivative is not None:
            return self._derivative(t)
        h = self.fd_step
        f = self._evaluator
        return (f(t - 2 * h) - 8 * f(t - h) + 8 * f(t + h) - f(t + 2 * h)) / (12 * h)


@dataclass(frozen=True)
class PauliHamiltonian:
    """Qubit Hamiltonian ``H(t) = sum_k h_k(t) sigma_k`` over ``k = x, y, z``.

    Each coefficient is a single harmonic,
    ``h_k(t) = const_k + sin_k sin(freq_k t) + cos_k cos(freq_k t)``.
    This covers every drive used in the package and lets compiled kernels
    evaluate ``H`` without calling back into Python.
    """

    const: tuple = (0.0, 0.0, 0.0)
    sin: tuple = (0.0, 0.0, 0.0)
    cos: tuple = (0.0, 0.0, 0.0)
    freq: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        for name in ("const", "sin", "cos", "freq"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (3,) or not np.all(np.isfinite(v)):
                raise InputError(f"{name} must be three finite reals")
            object.__setattr__(self, name, tuple(float(x) for x in v))

    @property
    def packed(self):
        """``(4, 3)`` array ``[const, sin, cos, freq]`` for compiled kernels."""
        return np.array([self.const, self.sin, self.cos, self.freq])

    def coefficients(self, t):
        a, b, c, w = self.packed
        return a + b * np.sin(w * t) + c * np.cos(w * t)

    def coefficient_rates(self, t):
        _, b, c, w = self.packed
        return w * (b * np.cos(w * t) - c * np.sin(w * t))

    def __call__(self, t):
        h = self.coefficients(t)
        return h[0] * SIGMA_X + h[1] * SIGMA_Y + h[2] * SIGMA_Z

    def derivative(self, t):
        h = self.coefficient_rates(t)
        return h[0] * SIGMA_X + h[1] * SIGMA_Y + h[2] * SIGMA_Z


def _structure_tensors(basis, channel):
    """Commutator tensor ``G[k] = superop of -i[sigma_k, .]`` and the dissipator."""
    D = basis.dim
    S = basis.elements
    n = basis.size
    G = np.empty((n, n, n), dtype=complex)
    Ld = np.empty((n, n), dtype=complex)
    for m in range(n):
        Ld[:, m] = vectorize(channel.apply(S[m]), basis) / D
        for k in range(n):
            comm = -1j * (S[k] @ S[m] - S[m] @ S[k])
            G[k, :, m] = vectorize(comm, basis) / D
    # H = (1/D) sum_k h_k sigma_k
    return G / D, Ld


def build_superop(H, channel=None, basis=_PAULI, dH=None, check_hermitian=True):
    """Superoperator matrix function of ``-i[H(t), .] + channel``.

    Parameters
    ----------
    H : callable
        ``t -> (D, D)`` Hamiltonian (angular-frequency units).
    channel : NoiseChannel, optional
    basis : OperatorBasis
    dH : callable, optional
        ``t -> dH/dt``; enables the analytic derivative ``dL/dt``.

    Returns
    -------
    SuperoperatorFn
    """
    channel = channel if channel is not None else NoiseChannel()
    G, Ld = _structure_tensors(basis, channel)
    conjS = basis.elements.conj()
    D = basis.dim

    def coefficients(Hm):
        Hm = np.asarray(Hm, dtype=complex)
        if Hm.shape != (D, D):
            raise DimensionMismatch(f"Hamiltonian shape {Hm.shape} vs basis dimension {D}")
        if check_hermitian:
            dev = np.abs(Hm - Hm.conj().T).max()
            if dev > 1e-10 * max(1.0, np.abs(Hm).max()):
                raise NonHermitianHamiltonian(f"H(t) not Hermitian (deviation {dev:.2e})")
        return np.einsum("ij,nij->n", Hm, conjS)

    def evaluator(t):
        return np.tensordot(coefficients(H(t)), G, axes=1) + Ld

    if dH is None and isinstance(H, PauliHamiltonian):
        dH = H.derivative
    derivative = None
    if dH is not None:

        def derivative(t):
            return np.tensordot(coefficients(dH(t)), G, axes=1)

    out = SuperoperatorFn(evaluator, basis.size, derivative=derivative, basis=basis)
    out.hamiltonian = H
    out.channel = channel
    out.generators = (G, Ld)
    return out
