import warnings
from dataclasses import replace

import numpy as np
import pytest

from lindblad_adiabatic.adiabatic import (
    adiabatic_propagate, adiabatic_series, asymptotic_two_block_check, check_aqc,
    initial_coefficients, integrate_coefficients, xi, xi_series, xi_table,
)
from lindblad_adiabatic.dynamics import IntegratorConfig, integrate_master
from lindblad_adiabatic.errors import GapTooSmall, InitialStateNotTwoBlock, InputError
from lindblad_adiabatic.measurement import from_bloch
from lindblad_adiabatic.models import DeutschParams, LZParams, deutsch_model, lz_model
from lindblad_adiabatic.spectral import SpectralPath, build_path, decompose, track
from lindblad_adiabatic.superop import SuperoperatorFn, devectorize, vectorize

TIGHT = IntegratorConfig(1e-10, 1e-13)


@pytest.fixture(scope="module")
def deutsch():
    m = deutsch_model(DeutschParams(gamma=1256.0, tau=1e-3), reference_variant="dynamics")
    path = build_path(m.superop(), np.linspace(0, 1e-3, 201), reference=m.reference_eigenvalues)
    return m, path


def test_initial_coefficients(deutsch):
    m, path = deutsch
    c = initial_coefficients(m.rho0, path[0])
    assert c.c[0] == 1
    assert c.populated() == (0, 1)
    # coherence vector input is accepted too
    c2 = initial_coefficients(vectorize(m.rho0), path[0])
    assert np.allclose(c.c, c2.c)
    with pytest.raises(InputError):
        initial_coefficients(2 * m.rho0, path[0])


def test_zero_block_pairs_vanish(deutsch):
    _, path = deutsch
    rep = check_aqc(path)
    for a in range(1, 4):
        assert rep.maxima[(a, 0)] == 0 and rep.maxima[(0, a)] == 0
    assert rep.verdict == all(v < rep.threshold for v in rep.maxima.values())
    assert check_aqc(path, threshold=0.5).verdict
    assert np.allclose(rep.column((2, 1)), xi_series(path, [(2, 1)])[0][:, 0])


def test_point_xi_matches_series(deutsch):
    _, path = deutsch
    t = path.times[57]
    vals, _ = xi_series(path, [(1, 2)])
    assert xi(path, 1, 2, t) == pytest.approx(vals[57, 0], rel=1e-12)


def test_constant_superoperator_has_zero_xi():
    m = lz_model(LZParams(gamma=1256.0, omegax=0.0))
    path = build_path(m.superop(), np.linspace(0, 1e-4, 21))
    vals, leta = xi_series(path)
    assert np.all(vals == 0)
    assert check_aqc(path, tau=1e-4).verdict


def test_check_aqc_coverage(deutsch):
    _, path = deutsch
    with pytest.raises(InputError):
        check_aqc(path, tau=2e-3)
    with pytest.raises(InputError):
        xi_series(path, [(1, 1)])


def test_xi_table_flag_mode():
    # degenerate pair (1, 2) with a nonzero rate of change between them
    diag = np.diag([0, -1.0, -1.0, -2.0]).astype(complex)
    bump = np.zeros((4, 4), complex)
    bump[1, 2] = 1.0
    L = SuperoperatorFn(lambda t: diag, 4, derivative=lambda t: bump)
    path = SpectralPath(superop=L)
    for t in (0.0, 1.0):
        track(path, decompose(diag, t), check_crossing=False)
    x, leta, ok = xi_table(path, on_gap="flag")
    assert not ok.any() and np.all(x == 0)
    with pytest.raises(GapTooSmall):
        xi_table(path, on_gap="raise")
    with pytest.raises(InputError):
        xi_table(path, on_gap="ignore")


@pytest.mark.parametrize("compiled", [False, True])
def test_coefficient_route_matches_master(deutsch, compiled):
    m, path = deutsch
    grid = np.linspace(0, 1e-3, 21)
    c0 = initial_coefficients(m.rho0, path[0])
    ct = integrate_coefficients(c0, m.superop(), 1e-3, TIGHT, grid, frame0=path[0],
                                compiled=compiled)
    tr = integrate_master(m.hamiltonian, m.channel, m.rho0, 1e-3, TIGHT, grid)
    assert np.abs(ct.states() - tr.states).max() < 1e-7


def test_uncoupled_coefficients_reproduce_adiabatic_series(deutsch):
    m, path = deutsch
    c0 = initial_coefficients(m.rho0, path[0])
    series = adiabatic_series(c0, path)
    ct = integrate_coefficients(c0, m.superop(), 1e-3, TIGHT, path.times, couple=False,
                                frame0=path[0])
    assert np.abs(ct.vectors - series).max() < 1e-4
    assert np.allclose(adiabatic_propagate(c0, path), series[-1])


def test_adiabatic_series_closed_form_endpoint(deutsch):
    m, path = deutsch
    c0 = initial_coefficients(m.rho0, path[0])
    end = devectorize(adiabatic_series(c0, path)[-1], on_invalid="ignore")
    assert np.abs(end - m.adiabatic_reference(1e-3)).max() < 1e-12


def test_adiabatic_propagate_warns():
    m = deutsch_model(DeutschParams(gamma=1256.0, tau=1e-4), reference_variant="dynamics")
    path = build_path(m.superop(), np.linspace(0, 1e-4, 21), reference=m.reference_eigenvalues)
    c0 = initial_coefficients(m.rho0, path[0])
    with pytest.warns(UserWarning):
        adiabatic_propagate(c0, path, check=True)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        adiabatic_propagate(c0, path, check=False)


def test_two_block_requirement():
    m = deutsch_model(DeutschParams(gamma=1256.0, tau=1e-3))
    mixed = replace(m, rho0=from_bloch([0.5, 0.0, 0.5]))
    with pytest.raises(InitialStateNotTwoBlock):
        asymptotic_two_block_check(mixed, 2e-3, samples=3)


def test_two_block_deutsch_converges():
    m = deutsch_model(DeutschParams(gamma=3141.0), reference_variant="dynamics")
    rep = asymptotic_two_block_check(m, 2e-3, samples=8, cfg=TIGHT)
    assert rep.per_tau and rep.block == 1
    assert rep.converged and rep.tail_increasing
    assert rep.final > 0.999
