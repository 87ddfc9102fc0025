"""Figures of merit and virtual state tomography for a qubit.

Tomography follows the usual trapped-ion recipe: measure each Pauli axis
``shots`` times, repeat the whole set ``repeats`` times, invert the sample
means linearly and project the estimate back onto the physical states.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .linalg import sqrtm_psd
from .superop import SIGMA_I, SIGMA_X, SIGMA_Y, SIGMA_Z, check_state

AXES = ("x", "y", "z")
_PAULIS = {"x": SIGMA_X, "y": SIGMA_Y, "z": SIGMA_Z}
_RANK_FLOOR = np.finfo(float).eps


def fidelity(rho1, rho2, check=True):
    """Root fidelity ``Tr sqrt(sqrt(rho1) rho2 sqrt(rho1))``, in ``[0, 1]``.

    Evaluated as the trace norm ``|| sqrt(rho1) sqrt(rho2) ||_1``, which is
    the same quantity.  Eigenvalues below ``n * eps`` of the largest are
    treated as exact zeros, so pure inputs keep full precision.
    """
    if check:
        rho1 = check_state(rho1)
        rho2 = check_state(rho2)
    floor = _RANK_FLOOR * np.asarray(rho1).shape[0]
    s1 = sqrtm_psd(rho1, rank_floor=floor)
    s2 = sqrtm_psd(rho2, rank_floor=floor)
    return float(min(1.0, np.linalg.svd(s1 @ s2, compute_uv=False).sum()))


def fidelity_qubit(rho1, rho2):
    """Closed form ``sqrt(Tr(rho1 rho2) + 2 sqrt(det rho1 det rho2))`` for qubits."""
    a = np.asarray(rho1, dtype=complex)
    b = np.asarray(rho2, dtype=complex)
    if a.shape != (2, 2) or b.shape != (2, 2):
        raise InputError("closed-form fidelity is for 2x2 states")
    dets = max(0.0, np.linalg.det(a).real) * max(0.0, np.linalg.det(b).real)
    val = np.trace(a @ b).real + 2 * np.sqrt(dets)
    return float(min(1.0, np.sqrt(max(0.0, val))))


def trace_distance(rho1, rho2):
    """``(1/2) || rho1 - rho2 ||_1``."""
    d = np.asarray(rho1, dtype=complex) - np.asarray(rho2, dtype=complex)
    return float(0.5 * np.abs(np.linalg.eigvalsh(0.5 * (d + d.conj().T))).sum())


def bloch(rho):
    """``(Tr rho sx, Tr rho sy, Tr rho sz)``."""
    r = np.asarray(rho, dtype=complex)
    return np.array([np.trace(r @ _PAULIS[a]).real for a in AXES])


def from_bloch(r):
    r = np.asarray(r, dtype=float)
    return 0.5 * (SIGMA_I + r[0] * SIGMA_X + r[1] * SIGMA_Y + r[2] * SIGMA_Z)


def project_physical(rho):
    """Clip negative eigenvalues and renormalize the trace."""
    r = np.asarray(rho, dtype=complex)
    w, U = np.linalg.eigh(0.5 * (r + r.conj().T))
    w = np.clip(w, 0, None)
    if w.sum() <= 0:
        raise InputError("state has no positive part")
    w /= w.sum()
    return (U * w) @ U.conj().T


@dataclass(frozen=True)
class TomographyProtocol:
    """Shots per axis, repeats, master seed and symmetric readout flip probability."""

    shots: int = 2000
    repeats: int = 10
    seed: int = 0
    readout_error: float = 0.0

    def __post_init__(self):
        if int(self.shots) < 1 or int(self.repeats) < 1:
            raise InputError("shots and repeats must be >= 1")
        if not 0 <= self.readout_error < 0.5:
            raise InputError("readout_error must lie in [0, 0.5)")
        if int(self.seed) < 0:
            raise InputError("seed must be non-negative")

    def rng(self, repeat, axis, point=0):
        """Independent stream for ``(seed, point, repeat, axis)``.

        ``point`` indexes the state being measured (e.g. a time sample), so
        successive states along a trajectory get unrelated noise.
        """
        return np.random.default_rng([int(self.seed), int(point), int(repeat), AXES.index(axis)])


def up_probability(rho, axis, readout_error=0.0):
    if axis not in AXES:
        raise InputError(f"axis must be one of {AXES}")
    p = 0.5 * (1 + np.trace(np.asarray(rho) @ _PAULIS[axis]).real)
    p = min(1.0, max(0.0, p))
    return p * (1 - readout_error) + (1 - p) * readout_error


def sample_counts(rho, axis, protocol=TomographyProtocol(), point=0):
    """Number of ``+1`` outcomes per repeat, shape ``(repeats,)``."""
    check_state(rho)
    p = up_probability(rho, axis, protocol.readout_error)
    return np.array([protocol.rng(k, axis, point).binomial(protocol.shots, p)
                     for k in range(protocol.repeats)], dtype=np.int64)


def expected_counts(rho, axis, protocol=TomographyProtocol()):
    """Infinite-statistics counts ``shots * p`` (floats), one per repeat."""
    p = up_probability(rho, axis, protocol.readout_error)
    return np.full(protocol.repeats, protocol.shots * p)


@dataclass(frozen=True)
class TomographyResult:
    """Reconstructed states and their spread over repeats.

    Attributes
    ----------
    states : ndarray, shape (R, 2, 2)
        Physical estimate per repeat.
    raw_bloch : ndarray, shape (R, 3)
        Linear-inversion Bloch vectors before projection.
    mean_state : ndarray
    bloch_std : ndarray, shape (3,)
        Standard deviation of each Pauli expectation across repeats.
    fidelities : ndarray or None
        Fidelity of each repeat to ``truth`` when supplied.
    """

    states: np.ndarray
    raw_bloch: np.ndarray
    mean_state: np.ndarray
    bloch_std: np.ndarray
    fidelities: np.ndarray = None

    @property
    def fidelity_mean(self):
        return float(np.mean(self.fidelities)) if self.fidelities is not None else np.nan

    @property
    def fidelity_std(self):
        return float(np.std(self.fidelities)) if self.fidelities is not None else np.nan


def reconstruct(counts_x, counts_y, counts_z, shots, truth=None, readout_error=0.0):
    """Linear-inversion tomography with physical projection.

    Parameters
    ----------
    counts_x, counts_y, counts_z : array_like, shape (R,)
        ``+1`` counts per repeat (floats allowed for expected counts).
    shots : int
    truth : ndarray, optional
        Reference state for per-repeat fidelities.
    readout_error : float
        Known flip probability to undo (``r -> r / (1 - 2 eps)``).
    """
    C = np.array([counts_x, counts_y, counts_z], dtype=float).T
    if C.ndim != 2 or C.shape[1] != 3:
        raise InputError("counts must be three equal-length sequences")
    if np.any(C < 0) or np.any(C > shots):
        raise InputError("counts must lie in [0, shots]")
    r = (2 * C / shots - 1) / (1 - 2 * readout_error)
    states = np.array([project_physical(from_bloch(v)) for v in r])
    fids = None
    if truth is not None:
        fids = np.array([fidelity(truth, s) for s in states])
    return TomographyResult(states, r, states.mean(axis=0), r.std(axis=0), fids)


def tomography(rho, protocol=TomographyProtocol(), truth=None, point=0):
    """Sample all three axes of ``rho`` and reconstruct."""
    counts = {a: sample_counts(rho, a, protocol, point) for a in AXES}
    res = reconstruct(counts["x"], counts["y"], counts["z"], protocol.shots,
                      truth=truth, readout_error=protocol.readout_error)
    return counts, res


def write_counts_csv(path, counts, shots, comment=None):
    """Rows ``repeat,axis,shots,up,down`` from ``{axis: counts}``."""
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["repeat", "axis", "shots", "up", "down"])
        reps = len(next(iter(counts.values())))
        for k in range(reps):
            for a in AXES:
                up = int(counts[a][k])
                w.writerow([k, a, shots, up, shots - up])


__all__ = [
    "fidelity", "fidelity_qubit", "trace_distance", "bloch", "from_bloch", "project_physical",
    "TomographyProtocol", "TomographyResult", "sample_counts", "expected_counts", "reconstruct",
    "tomography", "write_counts_csv", "up_probability",
]
