"""Exact propagation of the master equation.

The workhorse is :func:`dormand_prince`, an adaptive embedded Runge-Kutta
5(4) integrator with the standard fourth-order free interpolant for dense
output.  On top of it sit :func:`integrate_master` (density-matrix picture)
and :func:`integrate_superop` (coherence-vector picture).  Neither applies any
renormalisation: trace and positivity drift are recorded, not hidden.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import (
    AmbiguousMatching, GapTooSmall, InputError, InvalidInitialState, NonConvergence, NotAState,
    StepUnderflow,
)
from .superop import _PAULI, PauliHamiltonian, check_state, devectorize, lindbladian, vectorize

# Dormand-Prince 5(4) tableau
_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
]
_B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
# difference between 5th and embedded 4th order weights (7 stages, FSAL)
_E = np.array([-71 / 57600, 0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
# free interpolant: y(t + x h) = y + h K^T P [x, x^2, x^3, x^4]
_P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0
_ERR_EXP = -1 / 5


@dataclass(frozen=True)
class IntegratorConfig:
    """Tolerances and step controls for :func:`dormand_prince`.

    ``grid`` is the dense-output grid; when empty, callers choose a default.
    """

    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    max_step: float = math.inf
    initial_step: float | None = None
    grid: tuple = ()
    max_steps: int = 50_000_000

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise InputError("tolerances must be positive")
        if not self.max_step > 0:
            raise InputError("max_step must be positive")
        g = np.asarray(self.grid, dtype=float)
        if g.size > 1 and np.any(np.diff(g) <= 0):
            raise InputError("output grid must be strictly increasing")
        object.__setattr__(self, "grid", tuple(float(x) for x in g))

    def with_grid(self, grid):
        return IntegratorConfig(self.rel_tol, self.abs_tol, self.max_step,
                                self.initial_step, tuple(grid), self.max_steps)


@dataclass
class OdeResult:
    times: np.ndarray
    values: np.ndarray
    n_steps: int
    n_rejected: int
    n_evals: int


def _error_norm(err, y, y_new, rtol, atol, absolute=None):
    mag = np.maximum(np.abs(y), np.abs(y_new))
    if absolute is not None:
        mag = np.where(absolute, 1.0, mag)
    scale = atol + rtol * mag
    return math.sqrt(np.mean(np.abs(err / scale) ** 2))


def _initial_step(fun, t0, y0, f0, direction_span, rtol, atol):
    # Hairer, Norsett & Wanner, Solving ODEs I, sec. II.4
    scale = atol + np.abs(y0) * rtol
    d0 = np.sqrt(np.mean(np.abs(y0 / scale) ** 2))
    d1 = np.sqrt(np.mean(np.abs(f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, direction_span)
    f1 = fun(t0 + h0, y0 + h0 * f0)
    d2 = np.sqrt(np.mean(np.abs((f1 - f0) / scale) ** 2)) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, direction_span)


def dormand_prince(fun, t0, y0, t_end, grid, cfg=IntegratorConfig(), on_accept=None,
                   emit=None, absolute_mask=None):
    """Integrate ``y' = fun(t, y)`` from ``t0`` to ``t_end``.

    Parameters
    ----------
    fun : callable
        ``fun(t, y) -> dy/dt``; ``y`` is a 1-D (real or complex) array.
    grid : array_like
        Output times inside ``[t0, t_end]``, strictly increasing.
    on_accept : callable, optional
        ``on_accept(t, y)`` after every accepted step.  It may return a
        replacement state (for example after a change of gauge), in which
        case the derivative is re-evaluated instead of reusing the last
        stage.
    emit : callable, optional
        ``emit(t, y) -> row`` maps the interpolated state to an output row,
        evaluated while the step that produced it is still current.
        If ``fun`` raises :class:`AmbiguousMatching` (a moving eigenframe
        that cannot be followed across the trial step) the step is
        rejected and retried with a quarter of the size.
    absolute_mask : array_like of bool, optional
        Components measured on an absolute scale (error weight
        ``abs_tol + rel_tol`` rather than relative to their magnitude), for
        accumulated phases that grow without bound.

    Returns
    -------
    OdeResult
        ``values[k]`` is the (emitted) solution at ``grid[k]``.
    """
    y = np.array(y0, dtype=complex if np.iscomplexobj(y0) else float)
    grid = np.asarray(grid, dtype=float)
    if t_end <= t0:
        raise InputError("t_end must exceed t0")
    if grid.size and (grid[0] < t0 or grid[-1] > t_end * (1 + 1e-14)):
        raise InputError("output grid must lie inside the integration interval")
    rtol, atol = cfg.rel_tol, cfg.abs_tol
    emit = emit or (lambda t, y: y)
    mask = None if absolute_mask is None else np.asarray(absolute_mask, dtype=bool)
    rows = [None] * grid.size
    gi = 0
    while gi < grid.size and grid[gi] <= t0:
        rows[gi] = emit(t0, y)
        gi += 1

    t = t0
    f = fun(t, y)
    n_evals = 1
    h = cfg.initial_step or _initial_step(fun, t, y, f, t_end - t0, rtol, atol)
    n_evals += 1
    h = min(h, cfg.max_step)
    K = np.empty((7, y.size), dtype=y.dtype)
    n_steps = n_rejected = 0
    while t < t_end:
        if n_steps >= cfg.max_steps:
            raise StepUnderflow(f"step budget of {cfg.max_steps} exhausted at t={t:.6e}")
        min_step = 16 * np.spacing(abs(t) or 1.0)
        h = min(h, t_end - t)
        if h < min_step:
            raise StepUnderflow(f"step size {h:.3e} underflowed at t={t:.6e}")
        K[0] = f
        while True:
            try:
                for s in range(1, 6):
                    K[s] = fun(t + _C[s] * h, y + h * (_A[s] @ K[:s]))
                y_new = y + h * (_B @ K[:6])
                K[6] = fun(t + h, y_new)
            except AmbiguousMatching:
                # frames turned too far within the trial step: shrink it
                if h < 4 * min_step:
                    raise
                n_rejected += 1
                h *= 0.25
                continue
            n_evals += 6
            err = _error_norm(h * (_E @ K), y, y_new, rtol, atol, mask)
            if err <= 1.0:
                break
            n_rejected += 1
            h *= max(_MIN_FACTOR, _SAFETY * err ** _ERR_EXP)
            if h < min_step:
                raise StepUnderflow(f"step size {h:.3e} underflowed at t={t:.6e}")
        t_new = t + h if t_end - (t + h) > min_step else t_end
        if gi < grid.size and grid[gi] <= t_new:
            Q = K.T @ _P
            while gi < grid.size and grid[gi] <= t_new:
                x = (grid[gi] - t) / h
                rows[gi] = emit(grid[gi], y + h * (Q @ np.array([x, x * x, x ** 3, x ** 4])))
                gi += 1
        n_steps += 1
        t, y, f = t_new, y_new, K[6].copy()
        if on_accept is not None:
            replaced = on_accept(t, y)
            if replaced is not None:
                y = np.array(replaced, dtype=y.dtype)
                f = fun(t, y)
                n_evals += 1
        factor = _MAX_FACTOR if err == 0 else min(_MAX_FACTOR, _SAFETY * err ** _ERR_EXP)
        h = min(h * factor, cfg.max_step)
    while gi < grid.size:
        rows[gi] = emit(t, y)
        gi += 1
    return OdeResult(grid, np.array(rows), n_steps, n_rejected, n_evals)


_RHS_ERRORS = {
    _kernels.ERR_GAP: (GapTooSmall, "eigenvalue gap closed with nonzero coupling"),
    _kernels.ERR_MATCH: (AmbiguousMatching, "eigenvector labels could not be followed"),
    _kernels.ERR_EIG: (NonConvergence, "eigendecomposition failed"),
}


def run_compiled(kind, y0, t_end, grid, cfg, p, w, n_out=None, absolute_mask=None):
    """Run the compiled Dormand-Prince loop of ``kind`` from ``t = 0``; raises on failure."""
    y0 = np.ascontiguousarray(y0, dtype=complex)
    grid = np.ascontiguousarray(grid, dtype=float)
    mask = np.zeros(y0.size, dtype=np.bool_) if absolute_mask is None \
        else np.asarray(absolute_mask, dtype=np.bool_)
    err = np.zeros(2, dtype=np.int64)
    out, n_steps, n_rej, n_evals, t_fail, status = _kernels.dp45(
        int(kind), 0.0, y0, float(t_end),
        grid, n_out or y0.size, cfg.rel_tol, cfg.abs_tol, mask, float(cfg.max_step),
        float(cfg.initial_step or 0.0), int(cfg.max_steps), np.ascontiguousarray(p, dtype=float),
        w, err)
    if status == _kernels.UNDERFLOW:
        raise StepUnderflow(f"step size underflowed at t={t_fail:.6e}")
    if status == _kernels.BUDGET:
        raise StepUnderflow(f"step budget of {cfg.max_steps} exhausted at t={t_fail:.6e}")
    if status == _kernels.RHS_ERROR:
        cls, msg = _RHS_ERRORS.get(int(err[0]), (NonConvergence, "right-hand side failed"))
        raise cls(f"{msg} at t={t_fail:.6e}")
    return OdeResult(grid, out, n_steps, n_rej, n_evals)


def _use_compiled(flag, eligible):
    if flag is None:
        return eligible
    if flag and not eligible:
        raise InputError("compiled path needs a PauliHamiltonian on a qubit")
    return bool(flag)


def default_grid(tau, samples=101):
    return np.linspace(0.0, tau, samples)


@dataclass
class Trajectory:
    """States on a time grid plus per-point diagnostics."""

    times: np.ndarray
    states: np.ndarray
    trace_error: np.ndarray = field(init=False)
    min_eigenvalue: np.ndarray = field(init=False)
    purity: np.ndarray = field(init=False)
    n_steps: int = 0

    def __post_init__(self):
        S = self.states
        self.trace_error = np.abs(np.einsum("kii->k", S) - 1)
        herm = 0.5 * (S + np.conj(np.swapaxes(S, 1, 2)))
        self.min_eigenvalue = np.linalg.eigvalsh(herm).min(axis=1)
        self.purity = np.einsum("kij,kji->k", S, S).real

    def __len__(self):
        return len(self.times)

    def bloch(self):
        """``(x, y, z)`` for every qubit state, shape ``(T, 3)``."""
        return np.array([vectorize(r)[1:].real for r in self.states])

    def to_rows(self):
        b = self.bloch()
        for k, t in enumerate(self.times):
            yield [t, self.trace_error[k], self.min_eigenvalue[k], self.purity[k], *b[k]]

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "trace_err", "min_eig", "purity", "bloch_x", "bloch_y", "bloch_z"])
            for row in self.to_rows():
                w.writerow([f"{x:.17g}" for x in row])


@dataclass
class CoherenceTrajectory:
    times: np.ndarray
    vectors: np.ndarray
    n_steps: int = 0

    def states(self, basis=_PAULI):
        return np.array([devectorize(v, basis, on_invalid="ignore") for v in self.vectors])

    def to_trajectory(self, basis=_PAULI):
        return Trajectory(self.times, self.states(basis), n_steps=self.n_steps)


def _checked_initial_state(rho0):
    try:
        return check_state(rho0).copy()
    except NotAState as exc:
        raise InvalidInitialState(str(exc)) from exc


def integrate_master(H, channel, rho0, tau, cfg=IntegratorConfig(), grid=None, compiled=None):
    """Solve ``rho' = -i[H(t), rho] + channel(rho)`` on ``[0, tau]``.

    Parameters
    ----------
    H : callable
        ``t -> (D, D)`` Hermitian array.
    channel : NoiseChannel
    rho0 : array_like
        Valid initial density matrix.
    tau : float
        Final time (s).
    cfg : IntegratorConfig
        ``cfg.grid`` (or ``grid``) selects output times; default 101 points.
    compiled : bool, optional
        Force or forbid the numba loop.  By default it is used whenever
        ``H`` is a :class:`PauliHamiltonian`.

    Returns
    -------
    Trajectory
    """
    rho0 = _checked_initial_state(rho0)
    if not tau > 0:
        raise InputError("tau must be positive")
    D = rho0.shape[0]
    grid = _resolve_grid(tau, cfg, grid)
    jumps = [(op, op.conj().T, 0.5 * (op.conj().T @ op), rate)
             for op, rate in channel.jumps if rate > 0]
    if _use_compiled(compiled, isinstance(H, PauliHamiltonian) and D == 2):
        p = np.concatenate([H.packed.ravel(), [len(jumps)], [j[3] for j in jumps]])
        w = np.concatenate([np.zeros(0, complex)] + [j[0].ravel() for j in jumps])
        res = run_compiled(_kernels.MASTER, rho0.ravel(), tau, grid, cfg, p,
                           np.ascontiguousarray(w, dtype=complex))
        return Trajectory(res.times, res.values.reshape(-1, D, D), n_steps=res.n_steps)

    def rhs(t, y):
        rho = y.reshape(D, D)
        Ht = H(t)
        d = -1j * (Ht @ rho - rho @ Ht)
        for op, opd, half, rate in jumps:
            d += rate * (op @ rho @ opd - half @ rho - rho @ half)
        return d.ravel()

    res = dormand_prince(rhs, 0.0, rho0.ravel(), tau, grid, cfg)
    return Trajectory(res.times, res.values.reshape(-1, D, D), n_steps=res.n_steps)


def compiled_generators(L):
    """Flattened generator data for the compiled superoperator kernels.

    Returns ``None`` unless ``L`` came from :func:`build_superop` with a
    :class:`PauliHamiltonian` in the Pauli basis.
    """
    H = getattr(L, "hamiltonian", None)
    if not isinstance(H, PauliHamiltonian) or L.generators is None or L.dim != 4:
        return None
    G, Ld = L.generators
    # evaluator uses h'_k = Tr[H sigma_k] = 2 h_k
    return np.ascontiguousarray(np.concatenate([(2 * G[1:4]).ravel(), Ld.ravel()]), dtype=complex)


def integrate_superop(L, v0, tau, cfg=IntegratorConfig(), grid=None, compiled=None):
    """Solve ``v' = L(t) v`` on ``[0, tau]`` in the coherence-vector picture.

    Parameters
    ----------
    L : SuperoperatorFn
    v0 : array_like
        Initial coherence vector; component 0 must be 1.
    tau : float
    cfg : IntegratorConfig
    compiled : bool, optional
        As in :func:`integrate_master`.

    Returns
    -------
    CoherenceTrajectory
    """
    v0 = np.asarray(v0, dtype=complex)
    if abs(v0[0] - 1) > 1e-9:
        raise InvalidInitialState("coherence vector component 0 must be 1")
    if not tau > 0:
        raise InputError("tau must be positive")
    grid = _resolve_grid(tau, cfg, grid)
    w = compiled_generators(L)
    if _use_compiled(compiled, w is not None):
        res = run_compiled(_kernels.SUPEROP, v0, tau, grid, cfg, L.hamiltonian.packed.ravel(), w)
        return CoherenceTrajectory(res.times, res.values, n_steps=res.n_steps)
    res = dormand_prince(lambda t, v: L(t) @ v, 0.0, v0, tau, grid, cfg)
    return CoherenceTrajectory(res.times, res.values, n_steps=res.n_steps)


def _resolve_grid(tau, cfg, grid):
    if grid is None:
        grid = cfg.grid if cfg.grid else default_grid(tau)
    grid = np.asarray(grid, dtype=float)
    if grid.size and (grid[0] < 0 or grid[-1] > tau * (1 + 1e-12) or np.any(np.diff(grid) <= 0)):
        raise InputError("grid must be strictly increasing within [0, tau]")
    return grid


__all__ = [
    "IntegratorConfig", "OdeResult", "Trajectory", "CoherenceTrajectory",
    "dormand_prince", "integrate_master", "integrate_superop", "lindbladian", "run_compiled",
    "compiled_generators",
]
