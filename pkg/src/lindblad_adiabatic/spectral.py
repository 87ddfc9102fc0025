"""Biorthogonal spectral analysis of a superoperator along time.

A :class:`SpectralFrame` holds eigenvalues ``lambda_a``, right eigenvectors
``|D_a>>`` (columns) and left co-vectors ``<<E_a|`` (rows, already
conjugated, so that ``left @ right = 1``).  :func:`track` strings frames into
a :class:`SpectralPath` with consistent labels and a continuous gauge, and
:func:`frame_derivative` differentiates eigenvectors along it.

Label 0 is always the zero eigenvalue (the steady-state block).  When the
superoperator has a vanishing first row *and* column, as for any unital
channel, that block is decoupled exactly: ``D_0 = E_0 = e_0`` and the other
labels come from the trailing block alone.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import (
    AmbiguousMatching, CrossingDetected, Defective, GapTooSmall, InputError, NoZeroEigenvalue,
    StepTooLarge,
)
from .linalg import as_matrix, condition_estimate, eig_general

GAP_TOL_REL = 1e-6
COND_MAX = 1e8
ZERO_TOL = 1e-10
BIORTH_TOL = 1e-9
RICHARDSON_TOL = 1e-6
#: matched eigenvectors overlapping less than this trigger sub-stepping in track
OVERLAP_MIN = 0.8
MAX_SUBSTEPS = 4096
#: ... as do eigenvalue jumps beyond this fraction of the smallest gap
JUMP_MAX = 0.25


def _first_row_col(L):
    scale = max(1.0, np.abs(L).max())
    row = np.abs(L[0]).max() <= 1e-14 * scale
    col = np.abs(L[1:, 0]).max(initial=0.0) <= 1e-14 * scale
    return row, col


def _canonical_order(values):
    """Descending real part, then ascending |Im|, then Im; quantized for ties."""
    scale = max(1.0, np.abs(values).max(initial=0.0))
    q = lambda x: np.round(x / (1e-9 * scale))
    return np.lexsort((q(values.imag), q(np.abs(values.imag)), -q(values.real)))


def _phase_fix(v):
    k = np.argmax(np.abs(v) - 1e-12 * np.arange(v.size))
    return np.abs(v[k]) / v[k]


@dataclass(frozen=True)
class SpectralFrame:
    """Eigen-structure of ``L`` at one time.

    Attributes
    ----------
    t : float
    values : ndarray, shape (n,)
        ``values[0]`` is the zero eigenvalue.
    right : ndarray, shape (n, n)
        Column ``a`` is ``|D_a>>``.
    left : ndarray, shape (n, n)
        Row ``a`` is ``<<E_a|``; ``left @ right`` is the identity.
    condition : float
    degenerate_pairs : tuple of (int, int)
        Label pairs whose eigenvalues coincide within the gap tolerance.
    decoupled_zero : bool
        True when the zero block is structurally decoupled.
    """

    t: float
    values: np.ndarray
    right: np.ndarray
    left: np.ndarray
    condition: float
    degenerate_pairs: tuple = ()
    decoupled_zero: bool = False
    gap_tol: float = 0.0

    def __post_init__(self):
        for name in ("values", "right", "left"):
            a = np.array(getattr(self, name), dtype=complex)
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def size(self):
        return self.values.size

    @property
    def zero_count(self):
        """Number of eigenvalues equal to zero within ``ZERO_TOL``."""
        scale = max(1.0, np.abs(self.values).max())
        return int(np.sum(np.abs(self.values) <= ZERO_TOL * scale))

    def D(self, a):
        return self.right[:, a]

    def E(self, a):
        return self.left[a]

    def biorthogonality_error(self):
        return float(np.abs(self.left @ self.right - np.eye(self.size)).max())

    def completeness_error(self):
        return float(np.abs(self.right @ self.left - np.eye(self.size)).max())

    def pair_gaps(self, skip_zero_block=None):
        """``{(a, b): |lambda_a - lambda_b|}`` for ``a < b``.

        Pairs with label 0 are skipped when the zero block is decoupled
        (no coupling can pass through it), unless ``skip_zero_block`` says
        otherwise.
        """
        skip = self.decoupled_zero if skip_zero_block is None else skip_zero_block
        out = {}
        for a, b in itertools.combinations(range(self.size), 2):
            if skip and a == 0:
                continue
            out[(a, b)] = float(abs(self.values[a] - self.values[b]))
        return out

    def relabel(self, perm, phases=None):
        """Frame with label ``a`` taken from old label ``perm[a]``."""
        perm = np.asarray(perm)
        R = self.right[:, perm]
        Lf = self.left[perm]
        if phases is not None:
            R = R * phases
            Lf = Lf / phases[:, None]
        pairs = _degenerate_pairs(self.values[perm], self.gap_tol)
        return SpectralFrame(self.t, self.values[perm], R, Lf, self.condition, pairs,
                             self.decoupled_zero, self.gap_tol)


def _degenerate_pairs(values, tol):
    return tuple((a, b) for a, b in itertools.combinations(range(values.size), 2)
                 if abs(values[a] - values[b]) <= tol)


def decompose(L, t=0.0, reference=None, gap_tol_rel=GAP_TOL_REL, cond_max=COND_MAX):
    """Biorthogonal eigendecomposition of a superoperator matrix.

    Parameters
    ----------
    L : array_like, shape (n, n)
        Trace-preserving superoperator (first row zero).
    t : float
        Time stamp stored in the frame.
    reference : array_like, shape (n,), optional
        Expected eigenvalues; labels are assigned to minimise the total
        distance to them (``reference[0]`` must be the zero eigenvalue).
        Without it labels follow :func:`_canonical_order`.
    gap_tol_rel : float
        Degeneracy threshold relative to ``max |lambda|``.
    cond_max : float
        Largest acceptable eigenvector condition number.

    Returns
    -------
    SpectralFrame

    Raises
    ------
    NoZeroEigenvalue
        If ``L`` is not trace preserving or has no zero eigenvalue.
    Defective
        If the eigenvector matrix is too ill-conditioned.
    """
    L = as_matrix(L, "superoperator")
    n = L.shape[0]
    if L.shape != (n, n):
        raise InputError(f"superoperator must be square, got {L.shape}")
    row_zero, col_zero = _first_row_col(L)
    if not row_zero:
        raise NoZeroEigenvalue("first row of the superoperator is not zero")
    if col_zero:
        if n == 1:
            values, V = np.zeros(1, complex), np.eye(1, dtype=complex)
        else:
            res = eig_general(L[1:, 1:])
            values = np.concatenate([[0.0], res.values])
            V = np.zeros((n, n), dtype=complex)
            V[0, 0] = 1.0
            V[1:, 1:] = res.right_vectors
    else:
        res = eig_general(L)
        scale = max(1.0, np.linalg.norm(L, ord=np.inf))
        k0 = int(np.argmin(np.abs(res.values)))
        if abs(res.values[k0]) > ZERO_TOL * scale:
            raise NoZeroEigenvalue(f"smallest eigenvalue magnitude {abs(res.values[k0]):.3e}")
        order = [k0] + [k for k in range(n) if k != k0]
        values = res.values[order].copy()
        values[0] = 0.0
        V = res.right_vectors[:, order]
    if n > 1:
        rest = values[1:]
        if reference is not None:
            ref = np.asarray(reference, dtype=complex)
            if ref.shape != (n,):
                raise InputError(f"reference must have {n} eigenvalues")
            _, cols = linear_sum_assignment(np.abs(ref[1:, None] - rest[None, :]))
            order = np.asarray(cols)
        else:
            order = _canonical_order(rest)
        perm = np.concatenate([[0], 1 + order])
        values = values[perm]
        V = V[:, perm]
    cond = condition_estimate(V)
    if not cond <= cond_max:
        raise Defective(f"eigenvector condition {cond:.3e} exceeds {cond_max:.1e} at t={t}")
    if col_zero:
        V[:, 0] = 0
        V[0, 0] = 1
    else:
        V[:, 0] /= V[0, 0]
    for a in range(1, n):
        V[:, a] *= _phase_fix(V[:, a])
    W = np.linalg.inv(V)
    if col_zero:
        W[0] = 0
        W[0, 0] = 1
    gap_tol = gap_tol_rel * np.abs(values).max()
    return SpectralFrame(float(t), values, V, W, cond, _degenerate_pairs(values, gap_tol),
                         bool(col_zero), gap_tol)


@dataclass
class SpectralPath:
    """Label-consistent sequence of frames on an increasing time grid.

    ``superop`` (a :class:`SuperoperatorFn`) is kept so derivatives can be
    taken between grid points.  ``min_gap`` and ``min_gap_at`` record the
    smallest eigenvalue separation seen (decoupled zero-block pairs excluded).
    """

    superop: object = None
    frames: list = field(default_factory=list)
    min_gap: float = np.inf
    min_gap_at: tuple = (np.nan, (-1, -1))
    gap_tol_rel: float = GAP_TOL_REL

    def __len__(self):
        return len(self.frames)

    def __getitem__(self, k):
        return self.frames[k]

    @property
    def times(self):
        return np.array([f.t for f in self.frames])

    @property
    def values(self):
        return np.array([f.values for f in self.frames])

    @property
    def rights(self):
        return np.array([f.right for f in self.frames])

    @property
    def lefts(self):
        return np.array([f.left for f in self.frames])

    def index_of(self, t, tol=1e-12):
        times = self.times
        k = int(np.argmin(np.abs(times - t)))
        if abs(times[k] - t) > tol * max(1.0, abs(t)):
            raise InputError(f"t={t} is not a grid time of the path")
        return k


def _align(prev, frame, ambiguity_tol=1e-9):
    """Relabel and re-phase ``frame`` to continue ``prev``.

    Cost combines eigenvalue distance (relative to the spectral scale) and
    one minus the eigenvector overlap.  Label 0 stays fixed.
    """
    n = frame.size
    if n == 1:
        return frame
    scale = max(1.0, np.abs(prev.values).max(), np.abs(frame.values).max())
    Pn = prev.right / np.linalg.norm(prev.right, axis=0)
    Fn = frame.right / np.linalg.norm(frame.right, axis=0)
    overlap = np.abs(Pn[:, 1:].conj().T @ Fn[:, 1:])
    dist = np.abs(prev.values[1:, None] - frame.values[None, 1:]) / scale
    cost = dist + (1 - overlap)
    rows, cols = linear_sum_assignment(cost)
    best = cost[rows, cols].sum()
    # a single transposition of the optimum that costs the same is a tie
    for i, j in itertools.combinations(range(n - 1), 2):
        swapped = best - cost[i, cols[i]] - cost[j, cols[j]] + cost[i, cols[j]] + cost[j, cols[i]]
        if abs(swapped - best) <= ambiguity_tol and cols[i] != cols[j] and \
                abs(frame.values[1 + cols[i]] - frame.values[1 + cols[j]]) > frame.gap_tol:
            raise AmbiguousMatching(f"labels {i + 1} and {j + 1} tie at t={frame.t}")
    perm = np.concatenate([[0], 1 + cols])
    moved = frame.relabel(perm)
    ph = np.ones(n, dtype=complex)
    for a in range(1, n):
        ov = np.vdot(prev.right[:, a], moved.right[:, a])
        if abs(ov) > 0:
            ph[a] = abs(ov) / ov
    return moved.relabel(np.arange(n), ph)


def _check_gaps(path, frame):
    tol = path.gap_tol_rel * np.abs(frame.values).max()
    gaps = frame.pair_gaps()
    if not gaps:
        return
    labels, gap = min(gaps.items(), key=lambda kv: kv[1])
    if gap < path.min_gap:
        path.min_gap = gap
        path.min_gap_at = (frame.t, labels)
    if gap < tol:
        raise CrossingDetected(
            f"eigenvalues {labels[0]} and {labels[1]} within {gap:.3e} at t={frame.t:.6e}",
            time=frame.t, labels=labels, gap=gap)


def _matched_overlap(prev, frame):
    """Smallest ``|<D_a(prev), D_a(frame)>|`` over labels outside degenerate pairs."""
    skip = {x for p in frame.degenerate_pairs + prev.degenerate_pairs for x in p}
    labels = [a for a in range(1, frame.size) if a not in skip]
    if not labels:
        return 1.0
    P = prev.right[:, labels] / np.linalg.norm(prev.right[:, labels], axis=0)
    F = frame.right[:, labels] / np.linalg.norm(frame.right[:, labels], axis=0)
    return float(np.abs(np.einsum("ia,ia->a", P.conj(), F)).min())


def _smooth(prev, moved):
    """Matched eigenvectors overlap well and no eigenvalue jumps by more
    than a quarter of the smallest gap of ``prev``."""
    if _matched_overlap(prev, moved) < OVERLAP_MIN:
        return False
    v = prev.values
    gaps = [abs(v[a] - v[b]) for a, b in itertools.combinations(range(1, v.size), 2)
            if abs(v[a] - v[b]) > prev.gap_tol]
    if not gaps:
        return True
    return bool(np.abs(moved.values[1:] - v[1:]).max() <= JUMP_MAX * min(gaps))


def _continue(path, prev, frame, budget):
    """Align ``frame`` to ``prev``, sub-stepping through intermediate frames
    of ``path.superop`` while the match is not smooth."""
    try:
        moved = _align(prev, frame)
        if path.superop is None or budget[0] <= 0 or _smooth(prev, moved):
            return moved
    except AmbiguousMatching:
        if path.superop is None or budget[0] <= 0:
            raise
    budget[0] -= 1
    tm = 0.5 * (prev.t + frame.t)
    mid = decompose(path.superop(tm), tm, gap_tol_rel=path.gap_tol_rel)
    mid = _continue(path, prev, mid, budget)
    return _continue(path, mid, frame, budget)


def track(path, frame, check_crossing=True):
    """Append ``frame`` to ``path`` with consistent labels and gauge.

    The path is extended in place and returned.  When matched eigenvectors
    overlap poorly between neighbouring frames (coarse grids), labels are
    carried through bisected intermediate frames of ``path.superop``.

    Raises
    ------
    CrossingDetected
        If two eigenvalues (outside a decoupled zero block) come closer
        than ``path.gap_tol_rel * max |lambda|``.
    AmbiguousMatching
        If two label assignments are equally good.
    """
    if path.frames:
        prev = path.frames[-1]
        if not frame.t > prev.t:
            raise InputError("frames must be added in increasing time order")
        frame = _continue(path, prev, frame, [MAX_SUBSTEPS])
    if check_crossing:
        _check_gaps(path, frame)
    path.frames.append(frame)
    return path


def build_path(superop, times, reference=None, check_crossing=True, gap_tol_rel=GAP_TOL_REL):
    """Decompose ``superop`` on ``times`` and track the frames.

    ``reference`` is an optional ``t -> eigenvalues`` callable used to label
    the first frame.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0 or np.any(np.diff(times) <= 0):
        raise InputError("times must be a non-empty strictly increasing 1-D grid")
    path = SpectralPath(superop=superop, gap_tol_rel=gap_tol_rel)
    for k, t in enumerate(times):
        ref = reference(t) if (reference is not None and k == 0) else None
        track(path, decompose(superop(t), t, reference=ref, gap_tol_rel=gap_tol_rel),
              check_crossing=check_crossing)
    return path


def _local_frames(path, t, offsets):
    """Frames at ``t + offsets`` aligned to the frame at ``t``.

    Every stencil frame is phase-aligned directly to the centre, which is
    the parallel-transport gauge to first order.
    """
    if path.superop is None:
        raise InputError("path has no superoperator to evaluate off-grid")
    try:
        centre = path.frames[path.index_of(t)]
    except InputError:
        centre = _align(path.frames[int(np.argmin(np.abs(path.times - t)))],
                        decompose(path.superop(t), t))
    out = []
    for d in offsets:
        out.append(_align(centre, decompose(path.superop(t + d), t + d)))
    return centre, out


def _default_step(centre, path):
    lam = np.abs(centre.values).max()
    times = path.times
    span = times[-1] - times[0] if times.size > 1 else 1.0
    if lam == 0:
        return 1e-4 * span
    return min(1e-4 / lam, 1e-3 * span) if span > 0 else 1e-4 / lam


def _central(frames, h, attr, a):
    fm2, fm1, fp1, fp2 = (getattr(f, attr) for f in frames)
    if attr == "right":
        g = lambda M: M[:, a]
    else:
        g = lambda M: M[a]
    return (g(fm2) - 8 * g(fm1) + 8 * g(fp1) - g(fp2)) / (12 * h)


def frame_derivative(path, a, t, h=None, which="right", check=True):
    """Time derivative of ``|D_a>>`` (or ``<<E_a|``) at ``t``.

    Fourth-order central differences on locally gauge-aligned eigenvectors,
    verified by comparing with step ``2h`` (Richardson).

    Parameters
    ----------
    path : SpectralPath
    a : int
        Label.
    t : float
    h : float, optional
        Step; defaults to ``1e-4 / max |lambda(t)|``.
    which : {"right", "left"}
    check : bool
        Raise :class:`StepTooLarge` when the truncation estimate exceeds
        ``1e-6`` relative.

    Returns
    -------
    ndarray
    """
    if which not in ("right", "left"):
        raise InputError("which must be 'right' or 'left'")
    centre, _ = _local_frames(path, t, ())
    h = _default_step(centre, path) if h is None else float(h)
    if not h > 0:
        raise InputError("derivative step must be positive")
    _, fr = _local_frames(path, t, (-2 * h, -h, h, 2 * h))
    d1 = _central(fr, h, which, a)
    if check:
        _, fr2 = _local_frames(path, t, (-4 * h, -2 * h, 2 * h, 4 * h))
        d2 = _central(fr2, 2 * h, which, a)
        est = np.linalg.norm(d1 - d2) / 15
        vec = centre.right[:, a] if which == "right" else centre.left[a]
        # roundoff floor: eigenvector noise ~1e-13 divided by the step
        floor = 1e-13 * np.linalg.norm(vec) / h
        if est > RICHARDSON_TOL * np.linalg.norm(d1) + floor:
            raise StepTooLarge(f"truncation estimate {est:.3e} at t={t:.6e} with h={h:.3e}")
    return d1


def coupling_matrix(frame, Ldot, gap_tol=None, numerator_tol=1e-14):
    """Off-diagonal couplings ``<<E_b|dD_a/dt>>`` from the perturbation formula.

    ``kappa[b, a] = <<E_b| dL/dt |D_a>> / (lambda_a - lambda_b)`` for ``b != a``;
    the diagonal (gauge dependent) is left at zero.  Couplings whose
    numerator vanishes relative to the largest one are exactly zero, so a
    degenerate but decoupled pair is harmless.

    Raises
    ------
    GapTooSmall
        If a nonzero numerator meets a gap below ``gap_tol``.
    """
    X = frame.left @ np.asarray(Ldot, dtype=complex) @ frame.right
    n = frame.size
    tol = frame.gap_tol if gap_tol is None else gap_tol
    scale = np.abs(X).max()
    K = np.zeros((n, n), dtype=complex)
    for a in range(n):
        for b in range(n):
            if a == b or abs(X[b, a]) <= numerator_tol * scale:
                continue
            den = frame.values[a] - frame.values[b]
            if abs(den) <= tol:
                raise GapTooSmall(f"gap {abs(den):.3e} between labels {b}, {a} at t={frame.t:.6e}")
            K[b, a] = X[b, a] / den
    return K


__all__ = [
    "SpectralFrame", "SpectralPath", "decompose", "track", "build_path", "frame_derivative",
    "coupling_matrix",
]
