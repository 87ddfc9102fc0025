"""Open-system adiabatic analysis.

Writing the state as ``|rho(t)>> = sum_a c_a(t) exp(int lambda_a) |D_a(t)>>``,
the master equation becomes the coupled system

    dc_b/dt = - sum_a kappa_ba c_a exp(int (lambda_a - lambda_b)),
    kappa_ba = <<E_b| dD_a/dt >>.

The adiabatic parameter of a pair measures how strongly block ``a`` feeds
block ``b``::

    xi_ba(t) = | eta_ba(t) kappa_ba(t) / (lambda_b - lambda_a) |,
    eta_ba(t) = exp(int_0^t Re[lambda_a - lambda_b]).

Dropping every ``b != a`` term gives the adiabatic solution
``c_a(t) = c_a(0) exp(-int kappa_aa)``.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import _kernels
from .dynamics import (
    IntegratorConfig, _resolve_grid, compiled_generators, dormand_prince, integrate_master,
    run_compiled,
)
from .errors import (
    AmbiguousMatching, GapTooSmall, InitialStateNotTwoBlock, InputError, NonConvergence,
)
from .linalg import eig_general
from .spectral import build_path, coupling_matrix, decompose
from .superop import devectorize, vectorize

AQC_THRESHOLD = 1e-2
COEFF_TOL = 1e-9


def _log_eta(path):
    """Cumulative trapezoid of ``Re lambda`` per label, shape ``(T, n)``."""
    re = path.values.real
    t = path.times
    out = np.zeros_like(re)
    if t.size > 1:
        out[1:] = np.cumsum(0.5 * (re[1:] + re[:-1]) * np.diff(t)[:, None], axis=0)
    return out


def all_pairs(n):
    return [(b, a) for b in range(n) for a in range(n) if a != b]


@dataclass(frozen=True)
class AdiabaticReport:
    """Adiabatic parameters on a time grid.

    Attributes
    ----------
    times : ndarray, shape (T,)
    pairs : tuple of (beta, alpha)
    xi : ndarray, shape (T, P)
    log_eta : ndarray, shape (T, P)
        ``log eta_ba`` per pair.
    maxima : dict
        Pair to ``max_t xi``.
    threshold : float
    verdict : bool
        True iff every pair maximum is below ``threshold``.
    """

    times: np.ndarray
    pairs: tuple
    xi: np.ndarray
    log_eta: np.ndarray
    maxima: dict
    threshold: float
    verdict: bool

    def column(self, pair):
        return self.xi[:, self.pairs.index(tuple(pair))]


def xi_series(path, pairs=None):
    """``xi_ba`` on every grid time of ``path``.

    Couplings come from the perturbation formula with ``dL/dt`` supplied by
    ``path.superop.derivative``.

    Returns
    -------
    xi : ndarray, shape (T, P)
    log_eta : ndarray, shape (T, P)

    Raises
    ------
    GapTooSmall
    """
    vals, leta, _ = xi_table(path, pairs, on_gap="raise")
    return vals, leta


def xi_table(path, pairs=None, on_gap="flag"):
    """Like :func:`xi_series` but optionally tolerant of vanishing gaps.

    With ``on_gap="flag"`` rows where a coupling cannot be formed get
    ``xi = 0`` and ``ok = False`` instead of raising.

    Returns
    -------
    xi, log_eta : ndarray, shape (T, P)
    ok : ndarray of bool, shape (T,)
    """
    if on_gap not in ("raise", "flag"):
        raise InputError("on_gap must be 'raise' or 'flag'")
    n = path[0].size
    pairs = all_pairs(n) if pairs is None else [tuple(p) for p in pairs]
    for b, a in pairs:
        if a == b or not (0 <= a < n and 0 <= b < n):
            raise InputError(f"invalid pair ({b}, {a})")
    if path.superop is None:
        raise InputError("path has no superoperator for dL/dt")
    LE = _log_eta(path)
    xi = np.zeros((len(path), len(pairs)))
    leta = np.zeros((len(path), len(pairs)))
    ok = np.ones(len(path), dtype=bool)
    for k, fr in enumerate(path.frames):
        for j, (b, a) in enumerate(pairs):
            leta[k, j] = LE[k, a] - LE[k, b]
        try:
            K = coupling_matrix(fr, path.superop.derivative(fr.t))
        except GapTooSmall:
            if on_gap == "raise":
                raise
            ok[k] = False
            continue
        for j, (b, a) in enumerate(pairs):
            if K[b, a] == 0:
                continue
            gap = abs(fr.values[b] - fr.values[a])
            xi[k, j] = np.exp(leta[k, j] + np.log(abs(K[b, a])) - np.log(gap))
    return xi, leta, ok


def xi(path, b, a, t):
    """``xi_ba(t)`` at a grid time ``t`` of ``path``."""
    k = path.index_of(t)
    sub = type(path)(superop=path.superop, frames=path.frames[:k + 1])
    vals, _ = xi_series(sub, [(b, a)])
    return float(vals[-1, 0])


def check_aqc(path, threshold=AQC_THRESHOLD, pairs=None, tau=None):
    """Evaluate the adiabatic condition ``max_t xi_ba < threshold``.

    Parameters
    ----------
    path : SpectralPath
        Must cover ``[0, tau]`` when ``tau`` is given.
    threshold : float
        Concrete bound standing in for "much less than one".
    pairs : list of (beta, alpha), optional
        Pairs that count for the verdict; default all ordered pairs.
    """
    times = path.times
    if tau is not None and (times[0] > 1e-15 or times[-1] < tau * (1 - 1e-12)):
        raise InputError("path does not cover [0, tau]")
    n = path[0].size
    pairs = all_pairs(n) if pairs is None else [tuple(p) for p in pairs]
    vals, leta = xi_series(path, pairs)
    maxima = {p: float(vals[:, j].max()) for j, p in enumerate(pairs)}
    verdict = all(m < threshold for m in maxima.values())
    return AdiabaticReport(times, tuple(pairs), vals, leta, maxima, threshold, verdict)


@dataclass(frozen=True)
class CoefficientState:
    """Expansion coefficients ``c_a`` and accumulated exponents ``Lambda_a``.

    The coherence vector is ``sum_a c_a exp(Lambda_a) |D_a>>``.
    """

    t: float
    c: np.ndarray
    Lambda: np.ndarray

    def populated(self, tol=COEFF_TOL):
        return tuple(int(a) for a in np.flatnonzero(np.abs(self.c) > tol))


def initial_coefficients(rho0, frame0):
    """``c_a(0) = <<E_a|rho0>>`` with ``c_0 = 1``.

    ``rho0`` may be a density matrix or a coherence vector.
    """
    v = np.asarray(rho0, dtype=complex)
    if v.ndim == 2:
        v = vectorize(v)
    if v.shape != (frame0.size,):
        raise InputError("state and frame sizes differ")
    c = frame0.left @ v
    if abs(c[0] - 1) > 1e-8:
        raise InputError(f"zero-block coefficient {c[0]:.6g} is not 1; state not normalized")
    c[0] = 1.0
    return CoefficientState(frame0.t, c, np.zeros(frame0.size, dtype=complex))


def adiabatic_series(coeffs, path):
    """Adiabatic coherence vectors on every grid time of ``path``.

    Each block is carried by
    ``c_a(0) exp(int lambda_a) exp(-int kappa_aa) |D_a>>``.  The diagonal
    term is transported discretely:
    ``exp(-int kappa_aa) ~ exp((log(E_a(k+1) D_a(k)) - log(E_a(k) D_a(k+1))) / 2)``,
    which is second order in the step and independent of the gauge of the
    path.
    """
    if abs(path[0].t - coeffs.t) > 1e-15 * max(1.0, abs(coeffs.t)):
        raise InputError("coefficients and path start at different times")
    n = path[0].size
    T = len(path)
    vals = path.values
    R = path.rights
    W = path.lefts
    logw = np.zeros((T, n), dtype=complex)
    if T > 1:
        dt = np.diff(path.times)[:, None]
        lam_int = 0.5 * (vals[1:] + vals[:-1]) * dt
        fwd = np.einsum("kan,kna->ka", W[1:], R[:-1])
        bwd = np.einsum("kan,kna->ka", W[:-1], R[1:])
        trans = 0.5 * (np.log(fwd) - np.log(bwd))
        logw[1:] = np.cumsum(lam_int + trans, axis=0)
    amp = coeffs.c[None, :] * np.exp(logw)
    return np.einsum("kna,ka->kn", R, amp)


def adiabatic_propagate(coeffs, path, t=None, threshold=AQC_THRESHOLD, check=False):
    """Adiabatic coherence vector at grid time ``t`` (default: path end).

    With ``check=True`` the adiabatic condition is evaluated first and a
    warning issued when it fails.
    """
    if check:
        rep = check_aqc(path, threshold)
        if not rep.verdict:
            warnings.warn("adiabatic condition violated on the path", stacklevel=2)
    k = len(path) - 1 if t is None else path.index_of(t)
    sub = type(path)(superop=path.superop, frames=path.frames[:k + 1])
    return adiabatic_series(coeffs, sub)[-1]


# -- exact coefficient dynamics ---------------------------------------------


@dataclass
class CoefficientTrajectory:
    """Exact coefficient evolution on an output grid.

    ``c`` and ``D`` refer to the gauge in force at each output time; the
    reconstructed coherence vectors ``vectors`` are gauge independent.
    """

    times: np.ndarray
    vectors: np.ndarray
    c: np.ndarray
    Lambda: np.ndarray
    values: np.ndarray
    D: np.ndarray
    n_steps: int = 0

    def states(self):
        return np.array([devectorize(v, on_invalid="ignore") for v in self.vectors])

    def amplitudes(self):
        """Gauge-fixed block weights ``|c_a exp(Lambda_a)| * ||D_a||``."""
        return np.abs(self.c * np.exp(self.Lambda)) * np.linalg.norm(self.D, axis=2)


class _CoefficientRHS:
    """Right-hand side of the coefficient system in an anchored gauge.

    Eigenvectors are scaled so that ``r_a . D_a = 1`` for fixed anchor rows
    ``r_a = conj(D_a(t_anchor)) / |D_a|^2``; then ``<<E_a|dD_a>>`` follows
    from the off-diagonal couplings alone.  Anchors are refreshed after an
    accepted step once a vector has turned by more than 60 degrees.
    """

    def __init__(self, superop, frame0, couple=True, gap_tol=None):
        self.L = superop
        self.n = frame0.size
        self.decoupled = frame0.decoupled_zero
        self.lab = np.arange(1, self.n) if self.decoupled else np.arange(self.n)
        D = frame0.right[:, self.lab] if not self.decoupled else frame0.right[1:, 1:]
        self.R = (D / np.sum(np.abs(D) ** 2, axis=0)).conj().T
        self.couple = couple
        self.gap_tol = frame0.gap_tol if gap_tol is None else gap_tol

    def frame(self, t):
        L = self.L(t)
        M = L[1:, 1:] if self.decoupled else L
        res = eig_general(M)
        dots = self.R @ res.right_vectors
        ov = np.abs(dots) / np.linalg.norm(self.R, axis=1)[:, None]
        rows, cols = linear_sum_assignment(-ov)
        if ov[rows, cols].min() < 0.1:
            raise AmbiguousMatching(f"eigenvector labels could not be followed at t={t:.6e}")
        Dl = res.right_vectors[:, cols] / dots[rows, cols]
        lam = res.values[cols]
        if self.decoupled:
            D = np.eye(self.n, dtype=complex)
            D[1:, 1:] = Dl
            lam = np.concatenate([[0], lam])
        else:
            D = Dl
        return lam, D, np.linalg.inv(D)

    def __call__(self, t, y):
        n = self.n
        c, Lam = y[:n], y[n:]
        lam, D, E = self.frame(t)
        X = E @ self.L.derivative(t) @ D
        scale = np.abs(X).max() + 1e-300
        K = np.zeros((n, n), dtype=complex)
        for a in range(n):
            for b in range(n):
                if a == b or abs(X[b, a]) <= 1e-14 * scale:
                    continue
                den = lam[a] - lam[b]
                if abs(den) <= self.gap_tol:
                    raise GapTooSmall(f"gap {abs(den):.3e} between {b}, {a} at t={t:.6e}")
                K[b, a] = X[b, a] / den
        off = self.lab
        Dk = D[1:, 1:] if self.decoupled else D
        Kk = K[np.ix_(off, off)]
        diag = -np.einsum("ba,ab->a", Kk - np.diag(np.diag(Kk)), self.R @ Dk)
        K[off, off] = diag
        if self.couple:
            ex = np.exp(Lam[None, :] - Lam[:, None])
            dc = -(K * ex) @ c
        else:
            dc = -np.diag(K) * c
        return np.concatenate([dc, lam])

    def reanchor(self, t, y):
        lam, D, _ = self.frame(t)
        Dk = D[1:, 1:] if self.decoupled else D
        dn = np.linalg.norm(Dk, axis=0)
        if np.all(1 / (dn * np.linalg.norm(self.R, axis=1)) >= 0.5):
            return None
        self.R = (Dk / dn).conj().T
        y = y.copy()
        y[self.lab] *= dn
        return y

    def emit(self, t, y):
        n = self.n
        lam, D, _ = self.frame(t)
        c, Lam = y[:n], y[n:]
        v = D @ (c * np.exp(Lam))
        return np.concatenate([v, c, Lam, lam, D.ravel()])


def integrate_coefficients(coeffs0, superop, tau, cfg=IntegratorConfig(), grid=None, couple=True,
                           frame0=None, compiled=None):
    """Exact evolution of the expansion coefficients on ``[t0, tau]``.

    Parameters
    ----------
    coeffs0 : CoefficientState
        From :func:`initial_coefficients` on ``frame0``.
    superop : SuperoperatorFn
        Needs ``derivative`` (analytic or finite-difference).
    tau : float
    cfg : IntegratorConfig
    couple : bool
        ``False`` drops all ``b != a`` couplings, reproducing the adiabatic
        approximation.
    frame0 : SpectralFrame, optional
        Frame that defines labels; decomposed at ``coeffs0.t`` if omitted.
    compiled : bool, optional
        Use the numba loop (qubit Pauli Hamiltonians with a decoupled zero
        block); default when eligible.

    Returns
    -------
    CoefficientTrajectory
    """
    if coeffs0.t != 0:
        raise InputError("coefficient integration starts at t = 0")
    frame0 = decompose(superop(0.0), 0.0) if frame0 is None else frame0
    grid = _resolve_grid(tau, cfg, grid)
    n = frame0.size
    y0 = np.concatenate([coeffs0.c, coeffs0.Lambda]).astype(complex)
    absolute = np.r_[np.zeros(n, bool), np.ones(n, bool)]
    w = compiled_generators(superop)
    eligible = w is not None and frame0.decoupled_zero and n == 4
    if compiled is None:
        compiled = eligible
    elif compiled and not eligible:
        raise InputError("compiled coefficient path needs a decoupled qubit superoperator")
    if compiled:
        D = frame0.right[1:, 1:]
        R = (D / np.sum(np.abs(D) ** 2, axis=0)).conj().T
        p = np.concatenate([superop.hamiltonian.packed.ravel(), [1.0 if couple else 0.0,
                                                                  frame0.gap_tol]])
        work = np.ascontiguousarray(np.concatenate([w, R.ravel()]), dtype=complex)
        res = run_compiled(_kernels.COEFF, y0, tau, grid, cfg, p, work, n_out=32,
                           absolute_mask=absolute)
    else:
        rhs = _CoefficientRHS(superop, frame0, couple)
        res = dormand_prince(rhs, 0.0, y0, tau, grid, cfg, on_accept=rhs.reanchor, emit=rhs.emit,
                             absolute_mask=absolute)
    rows = res.values
    if not np.all(np.isfinite(rows)):
        raise NonConvergence("coefficient reconstruction failed on the output grid")
    return CoefficientTrajectory(
        res.times, rows[:, :n], rows[:, n:2 * n], rows[:, 2 * n:3 * n], rows[:, 3 * n:4 * n],
        rows[:, 4 * n:].reshape(-1, n, n).transpose(0, 2, 1), n_steps=res.n_steps)


# -- asymptotic two-block behaviour ------------------------------------------


@dataclass(frozen=True)
class TwoBlockReport:
    """Fidelity between exact and adiabatic states on an increasing grid.

    ``grid`` is physical time for a single trajectory, or the total time
    ``tau`` when each point is a separate run (``per_tau``).
    """

    grid: np.ndarray
    fidelity: np.ndarray
    threshold: float
    per_tau: bool
    block: int

    @property
    def final(self):
        return float(self.fidelity[-1])

    @property
    def converged(self):
        return self.final >= self.threshold

    @property
    def tail_increasing(self):
        """Upper envelope rises over the second half of the grid."""
        h = self.fidelity[self.fidelity.size // 2:]
        return bool(np.max(h[h.size // 2:]) >= np.max(h[:h.size // 2]) - 1e-12)


def _two_block_label(model):
    L = model.superop()
    fr = decompose(L(0.0), 0.0, reference=model.reference_eigenvalues(0.0))
    c = initial_coefficients(model.rho0, fr)
    pop = [a for a in c.populated() if a != 0]
    if len(pop) != 1:
        raise InitialStateNotTwoBlock(f"initial state populates blocks {pop} besides the zero block")
    return pop[0]


def asymptotic_two_block_check(model, horizon, samples=101, threshold=0.99, reference="analytic",
                               cfg=IntegratorConfig(), spectral_samples=2001):
    """Track fidelity between exact and adiabatic evolution as time grows.

    Parameters
    ----------
    model : Model
        ``lz`` models are run once up to ``horizon``; ``deutsch`` models are
        rerun with total time ``tau`` on a grid up to ``horizon`` and
        compared at ``s = 1``.
    reference : {"analytic", "numeric"}
        Closed-form adiabatic state, or :func:`adiabatic_series` on a
        numeric spectral path.

    Raises
    ------
    InitialStateNotTwoBlock
    """
    from dataclasses import replace

    from .measurement import fidelity
    from .models import deutsch_model

    block = _two_block_label(model)
    if reference not in ("analytic", "numeric"):
        raise InputError("reference must be 'analytic' or 'numeric'")
    if model.name == "deutsch":
        taus = np.linspace(horizon / samples, horizon, samples)
        fids = []
        for tau in taus:
            m = deutsch_model(replace(model.params, tau=float(tau)))
            tr = integrate_master(m.hamiltonian, m.channel, m.rho0, tau, cfg, grid=[0.0, tau])
            ref = m.adiabatic_reference(tau) if reference == "analytic" else \
                devectorize(_numeric_adiabatic(m, tau, spectral_samples)[-1], on_invalid="ignore")
            fids.append(fidelity(tr.states[-1], ref))
        return TwoBlockReport(taus, np.array(fids), threshold, True, block)
    grid = np.linspace(0.0, horizon, samples)
    tr = integrate_master(model.hamiltonian, model.channel, model.rho0, horizon, cfg, grid=grid)
    if reference == "analytic":
        refs = [model.adiabatic_reference(t) for t in grid]
    else:
        vs = _numeric_adiabatic(model, horizon, spectral_samples, grid)
        refs = [devectorize(v, on_invalid="ignore") for v in vs]
    fids = np.array([fidelity(s, r) for s, r in zip(tr.states, refs)])
    return TwoBlockReport(grid, fids, threshold, False, block)


def _numeric_adiabatic(model, tau, samples, out_grid=None):
    times = np.linspace(0.0, tau, samples)
    if out_grid is not None:
        times = np.union1d(times, out_grid)
    L = model.superop()
    path = build_path(L, times, reference=model.reference_eigenvalues)
    c0 = initial_coefficients(model.rho0, path[0])
    vs = adiabatic_series(c0, path)
    if out_grid is None:
        return vs
    idx = np.searchsorted(times, out_grid)
    return vs[idx]


__all__ = [
    "AdiabaticReport", "CoefficientState", "CoefficientTrajectory", "TwoBlockReport",
    "xi", "xi_series", "xi_table", "check_aqc", "initial_coefficients", "adiabatic_series",
    "adiabatic_propagate", "integrate_coefficients", "asymptotic_two_block_check",
]
