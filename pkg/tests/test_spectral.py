import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lindblad_adiabatic.errors import (
    AmbiguousMatching, CrossingDetected, Defective, GapTooSmall, InputError, NoZeroEigenvalue,
    StepTooLarge,
)
from lindblad_adiabatic.models import DeutschParams, LZParams, deutsch_model, lz_model
from lindblad_adiabatic.spectral import (
    SpectralFrame, SpectralPath, build_path, coupling_matrix, decompose, frame_derivative, track,
)
from lindblad_adiabatic.superop import (
    SIGMA_X, SIGMA_Y, SIGMA_Z, NoiseChannel, SuperoperatorFn, build_superop,
)


def deutsch_53(**kw):
    # omega = 3 rotation rate and gamma = 5 give the real spectrum {0, -1, -9, -10}
    return deutsch_model(DeutschParams(omega=3.0, gamma=5.0, tau=1.0, **kw))


def test_deutsch_fixture_eigenvalues():
    m = deutsch_53()
    fr = decompose(m.superop()(0.0), 0.0)
    assert np.allclose(fr.values, [0, -1, -9, -10], atol=1e-12)
    fr = decompose(m.superop()(0.0), 0.0, reference=m.reference_eigenvalues(0.0))
    assert np.allclose(fr.values, [0, -10, -9, -1], atol=1e-12)
    assert fr.decoupled_zero
    assert np.allclose(fr.D(0), [1, 0, 0, 0]) and np.allclose(fr.E(0), [1, 0, 0, 0])


def test_deutsch_d1_direction():
    m = deutsch_53()
    L = m.superop()
    for s in (0.0, 0.3, 0.8):
        fr = decompose(L(s), s, reference=m.reference_eigenvalues(s))
        phi = np.pi * s / 2 * m.params.F
        d = fr.D(1) / np.linalg.norm(fr.D(1))
        assert abs(abs(np.vdot(d, [0, np.cos(phi), np.sin(phi), 0])) - 1) < 1e-12


def random_lindbladian(seed):
    rng = np.random.default_rng(seed)
    h = rng.normal(size=3)
    H = h[0] * SIGMA_X + h[1] * SIGMA_Y + h[2] * SIGMA_Z
    lower = np.array([[0, 1], [0, 0]], dtype=complex)
    ch = NoiseChannel(((SIGMA_Z, rng.uniform(0.1, 2)), (lower, rng.uniform(0, 2))))
    return build_superop(lambda t: H, ch)(0.0)


@settings(max_examples=200)
@given(st.integers(0, 2**32 - 1))
def test_biorthogonality_property(seed):
    L = random_lindbladian(seed)
    fr = decompose(L)
    assert fr.biorthogonality_error() < 1e-9
    assert fr.completeness_error() < 1e-9
    assert abs(fr.values[0]) == 0
    R = L @ fr.right - fr.right * fr.values
    assert np.abs(R).max() < 1e-9 * max(1, np.abs(L).max())
    # canonical order: real parts non-increasing after the zero label
    re = fr.values[1:].real
    assert np.all(np.diff(re) <= 1e-9 * max(1, np.abs(fr.values).max()))


def test_amplitude_damping_zero_block_not_decoupled():
    lower = np.array([[0, 1], [0, 0]], dtype=complex)
    L = build_superop(lambda t: 0.5 * SIGMA_Z, NoiseChannel(((lower, 1.0),)))(0.0)
    fr = decompose(L)
    assert not fr.decoupled_zero
    assert fr.D(0)[0] == 1
    assert np.allclose(L @ fr.D(0), 0, atol=1e-12)
    assert fr.biorthogonality_error() < 1e-12


def test_no_zero_eigenvalue():
    with pytest.raises(NoZeroEigenvalue):
        decompose(np.diag([1.0, -1, -2, -3]) + np.eye(4)[0][:, None] * 0 + np.outer([1, 0, 0, 0],
                                                                                 [0, 1, 0, 0]))


def test_exceptional_point_is_defective():
    # gamma equal to the rotation rate merges two eigenvectors
    m = deutsch_model(DeutschParams(omega=3.0, gamma=3.0, tau=1.0))
    with pytest.raises(Defective):
        decompose(m.superop()(0.0))


def test_lz_eigenvalues_against_characteristic_polynomial():
    p = LZParams(gamma=1256.0)
    L = lz_model(p).superop()
    for t in (1e-7, 2.3013e-4, 1.70071e-3):
        fr = decompose(L(t), t)
        block = L(t)[1:, 1:]
        roots = np.roots(np.poly(block))
        for lam in fr.values[1:]:
            assert np.abs(roots - lam).min() < 1e-6 * np.abs(roots).max()
    fr = decompose(L(1e-7), 1e-7)
    # frozen: slow population mode and the fast coherence pair
    assert abs(fr.values[1].real + 0.3473) < 1e-3
    assert abs(fr.values[2].imag) > 6.28e6


def test_deutsch_closed_system_degenerate_zero_pair_flagged():
    m = deutsch_model(DeutschParams(omega=3.0, gamma=0.0, tau=1.0))
    fr = decompose(m.superop()(0.0))
    assert fr.zero_count == 2
    assert (0, 1) in fr.degenerate_pairs
    assert (0, 1) not in fr.pair_gaps()
    assert (0, 1) in fr.pair_gaps(skip_zero_block=False)


def test_coarse_grid_tracking_keeps_labels():
    m = deutsch_53()
    path = build_path(m.superop(), [0.0, 0.5, 1.0], reference=m.reference_eigenvalues)
    assert np.allclose(path.values, [[0, -10, -9, -1]] * 3, atol=1e-9)
    fine = build_path(m.superop(), np.linspace(0, 1, 201), reference=m.reference_eigenvalues)
    # the gauge is continuous: neighbouring eigenvectors nearly parallel
    R = fine.rights
    ov = np.abs(np.einsum("kna,kna->ka", R[1:].conj(), R[:-1]))
    nr = np.linalg.norm(R[1:], axis=1) * np.linalg.norm(R[:-1], axis=1)
    assert (ov / nr).min() > 0.999


def crossing_superop():
    return SuperoperatorFn(lambda t: np.diag([0, -1.0, -2 + 2 * t, -3.0]).astype(complex), 4,
                           derivative=lambda t: np.diag([0, 0, 2.0, 0]).astype(complex))


def test_crossing_detected():
    with pytest.raises(CrossingDetected) as info:
        build_path(crossing_superop(), np.linspace(0, 1, 11))
    assert info.value.labels == (1, 2)
    assert np.isclose(info.value.time, 0.5)
    path = build_path(crossing_superop(), np.linspace(0, 0.4, 5))
    assert np.isclose(path.min_gap, 0.2) and path.min_gap_at[1] == (1, 2)


def test_ambiguous_matching():
    prev = decompose(np.diag([0, -1.0, -3.0]))
    # complex pair -2 +- i, eigenvectors (1, +-i)/sqrt(2): every assignment costs the same
    nxt = decompose(np.array([[0, 0, 0], [0, -2, 1], [0, -1, -2]], dtype=complex), t=1.0)
    path = SpectralPath()
    track(path, prev)
    with pytest.raises(AmbiguousMatching):
        track(path, nxt)


def test_track_rejects_time_reversal():
    path = SpectralPath()
    track(path, decompose(np.diag([0, -1.0]), t=1.0))
    with pytest.raises(InputError):
        track(path, decompose(np.diag([0, -1.0]), t=0.5))


def test_frame_derivative_matches_couplings():
    m = deutsch_53()
    L = m.superop()
    path = build_path(L, np.linspace(0, 1, 11), reference=m.reference_eigenvalues)
    t = 0.4
    fr = path[path.index_of(t)]
    K = coupling_matrix(fr, L.derivative(t))
    for a in range(1, 4):
        dD = frame_derivative(path, a, t)
        proj = fr.left @ dD
        for b in range(4):
            if b != a:
                assert abs(proj[b] - K[b, a]) < 1e-7 * max(1, np.abs(K).max())


def test_frame_derivative_step_check():
    m = deutsch_53()
    path = build_path(m.superop(), np.linspace(0, 1, 11), reference=m.reference_eigenvalues)
    with pytest.raises(StepTooLarge):
        frame_derivative(path, 1, 0.5, h=0.2)
    with pytest.raises(InputError):
        frame_derivative(path, 1, 0.5, which="up")


def test_gap_too_small():
    fr = decompose(np.diag([0, -1.0, -1.0, -2.0]))
    Ld = np.zeros((4, 4))
    Ld[1, 2] = 1.0
    with pytest.raises(GapTooSmall):
        coupling_matrix(fr, Ld)
    # a degenerate but uncoupled pair is harmless
    Ld = np.zeros((4, 4))
    Ld[1, 3] = 1.0
    K = coupling_matrix(fr, Ld)
    assert K[1, 3] == pytest.approx(1.0 / (-2.0 + 1.0))


def test_relabel_preserves_biorthogonality():
    fr = decompose(random_lindbladian(7))
    ph = np.exp(1j * np.array([0, 0.3, -1.2, 2.0]))
    moved = fr.relabel([0, 3, 1, 2], ph)
    assert isinstance(moved, SpectralFrame)
    assert moved.biorthogonality_error() < 1e-12
    assert np.allclose(moved.values, fr.values[[0, 3, 1, 2]])
