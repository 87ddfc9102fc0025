import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lindblad_adiabatic.errors import InputError, NegativeSpectrum, NonConvergence, NotHermitian
from lindblad_adiabatic.linalg import eig_general, is_hermitian, sqrtm_psd

# entries are either exactly zero or well above the subnormal range
finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False).map(
    lambda x: x if abs(x) > 1e-6 else 0.0)


def complex_matrix(n):
    return st.tuples(arrays(float, (n, n), elements=finite),
                     arrays(float, (n, n), elements=finite)).map(lambda ab: ab[0] + 1j * ab[1])


def test_eig_known_spectrum():
    # trailing block has trace -10 and determinant 18
    M = np.array([[0, 0, 0, 0], [0, -10, 0, 0], [0, 0, -1, 3], [0, 0, -3, -9]], dtype=complex)
    res = eig_general(M)
    assert np.allclose(np.sort_complex(res.values),
                       np.sort_complex([0, -10, -5 + np.sqrt(7), -5 - np.sqrt(7)]))
    assert np.allclose(np.linalg.norm(res.right_vectors, axis=0), 1)
    assert np.isfinite(res.condition_estimate)


@settings(max_examples=200)
@given(complex_matrix(4))
def test_eig_residual_and_agreement_with_scipy(M):
    res = eig_general(M)
    scale = max(1.0, np.linalg.norm(M, ord=np.inf))
    resid = np.linalg.norm(M @ res.right_vectors - res.right_vectors * res.values, axis=0)
    assert resid.max() <= 1e-10 * scale
    ref = scipy.linalg.eigvals(M)
    # every eigenvalue has a partner in the independent solver
    for lam in res.values:
        assert np.abs(ref - lam).min() <= 1e-6 * scale


def test_eig_rejects_bad_input():
    with pytest.raises(InputError):
        eig_general(np.ones((2, 3)))
    with pytest.raises(InputError):
        eig_general([[np.nan, 0], [0, 1]])


def test_residual_guard_raises(monkeypatch):
    import lindblad_adiabatic.linalg as la

    monkeypatch.setattr(la.np.linalg, "eig", lambda A: (np.ones(A.shape[0]), np.eye(A.shape[0])))
    with pytest.raises(NonConvergence):
        la.eig_general(np.diag([1.0, 2.0]))


def test_defective_matrix_reports_large_condition():
    J = np.array([[1.0, 1.0], [0.0, 1.0]])
    assert eig_general(J).condition_estimate > 1e7


@settings(max_examples=1000)
@given(complex_matrix(3))
def test_sqrtm_matches_scipy(G):
    P = G @ G.conj().T
    S = sqrtm_psd(P)
    assert np.allclose(S @ S, P, atol=1e-8 * max(1, np.abs(P).max()))
    assert is_hermitian(S)
    assert np.linalg.eigvalsh(S).min() >= -1e-10
    assert np.allclose(S, scipy.linalg.sqrtm(P), atol=1e-6 * max(1, np.abs(P).max()))


def test_sqrtm_clips_roundoff_negatives():
    P = np.diag([1.0, -5e-13])
    S = sqrtm_psd(P)
    assert S[1, 1] == 0 and np.isclose(S[0, 0], 1)


def test_sqrtm_errors():
    with pytest.raises(NegativeSpectrum):
        sqrtm_psd(np.diag([1.0, -1e-6]))
    with pytest.raises(NotHermitian):
        sqrtm_psd(np.array([[1, 1], [0, 1]], dtype=complex))


def test_sqrtm_rank_floor():
    v = np.array([0.6, 0.8j])
    P = np.outer(v, v.conj())
    S = sqrtm_psd(P, rank_floor=4 * np.finfo(float).eps)
    assert np.abs(S - P).max() < 1e-15
    assert np.allclose(sqrtm_psd(np.diag([1.0, 1e-12]), rank_floor=1e-15), np.diag([1, 1e-6]))
