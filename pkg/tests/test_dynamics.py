import numpy as np
import pytest
from scipy.integrate import solve_ivp
from hypothesis import given, settings
from hypothesis import strategies as st

from lindblad_adiabatic.dynamics import (
    IntegratorConfig, dormand_prince, integrate_master, integrate_superop,
)
from lindblad_adiabatic.errors import InputError, InvalidInitialState, StepUnderflow
from lindblad_adiabatic.models import DeutschParams, LZParams, deutsch_model, lz_model
from lindblad_adiabatic.superop import NoiseChannel, PauliHamiltonian, vectorize

from conftest import random_state

TIGHT = IntegratorConfig(1e-10, 1e-13)


def test_harmonic_oscillator_exact():
    grid = np.linspace(0, 10, 21)
    res = dormand_prince(lambda t, y: np.array([y[1], -y[0]]), 0.0, np.array([1.0, 0.0]), 10.0,
                         grid, IntegratorConfig(1e-11, 1e-13))
    assert np.abs(res.values[:, 0] - np.cos(grid)).max() < 1e-9
    assert np.abs(res.values[:, 1] + np.sin(grid)).max() < 1e-9


def test_matches_scipy_rk45_steps():
    # identical tableau and controller: the accepted-step count agrees with scipy
    f = lambda t, y: np.array([y[1], -y[0] + 0.3 * np.sin(2 * t)])
    cfg = IntegratorConfig(1e-8, 1e-10)
    ours = dormand_prince(f, 0.0, np.array([1.0, 0.0]), 20.0, [20.0], cfg)
    ref = solve_ivp(f, (0, 20), [1.0, 0.0], method="RK45", rtol=1e-8, atol=1e-10)
    assert abs(ours.n_steps - (ref.t.size - 1)) <= max(2, 0.05 * ref.t.size)
    assert np.abs(ours.values[-1] - ref.y[:, -1]).max() < 1e-6


def test_complex_state_and_dense_grid():
    grid = np.linspace(0, 3, 301)
    res = dormand_prince(lambda t, y: 1j * y, 0.0, np.array([1 + 0j]), 3.0, grid,
                         IntegratorConfig(1e-11, 1e-13))
    assert np.abs(res.values[:, 0] - np.exp(1j * grid)).max() < 1e-9


def scipy_master(H, gamma, rho0, tau, grid):
    sz = np.diag([1.0, -1.0])

    def rhs(t, y):
        r = y.reshape(2, 2)
        h = H(t)
        return (-1j * (h @ r - r @ h) + gamma * (sz @ r @ sz - r)).ravel()

    sol = solve_ivp(rhs, (0, tau), rho0.ravel().astype(complex), method="DOP853", t_eval=grid,
                    rtol=1e-12, atol=1e-14)
    return sol.y.T.reshape(-1, 2, 2)


@pytest.mark.parametrize("gamma", [0.0, 3141.0])
def test_master_against_scipy_deutsch(gamma):
    m = deutsch_model(DeutschParams(gamma=gamma, tau=3e-4))
    grid = np.linspace(0, 3e-4, 31)
    ref = scipy_master(m.hamiltonian, gamma, m.rho0, 3e-4, grid)
    for compiled in (False, True):
        tr = integrate_master(m.hamiltonian, m.channel, m.rho0, 3e-4, TIGHT, grid, compiled)
        assert np.abs(tr.states - ref).max() < 1e-7


def test_master_against_scipy_lz_short():
    m = lz_model(LZParams(gamma=1256.0))
    tau = 2e-5
    grid = np.linspace(0, tau, 11)
    ref = scipy_master(m.hamiltonian, 1256.0, m.rho0, tau, grid)
    tr = integrate_master(m.hamiltonian, m.channel, m.rho0, tau, TIGHT, grid)
    assert np.abs(tr.states - ref).max() < 1e-7


def test_superop_paths_agree_and_preserve_trace():
    m = deutsch_model(DeutschParams(gamma=1256.0, tau=1e-3))
    L = m.superop()
    grid = np.linspace(0, 1e-3, 51)
    v0 = vectorize(m.rho0)
    a = integrate_superop(L, v0, 1e-3, TIGHT, grid, compiled=True)
    b = integrate_superop(L, v0, 1e-3, TIGHT, grid, compiled=False)
    assert np.abs(a.vectors - b.vectors).max() < 1e-8
    tr = a.to_trajectory()
    assert tr.trace_error.max() < 1e-12
    assert tr.min_eigenvalue.min() > -1e-9
    assert np.all(np.diff(tr.purity) <= 1e-9)


@settings(max_examples=30)
@given(st.integers(0, 2**31 - 1), st.floats(0, 5), st.booleans())
def test_physicality_property(seed, gamma, pure):
    rng = np.random.default_rng(seed)
    rho0 = random_state(rng, pure=pure)
    c, s, f = rng.normal(size=3), rng.normal(size=3), rng.uniform(0, 3, size=3)
    H = PauliHamiltonian(cos=c, sin=s, freq=f)
    tr = integrate_master(H, NoiseChannel.dephasing(gamma), rho0, 2.0, IntegratorConfig(1e-9, 1e-12),
                          np.linspace(0, 2, 11))
    assert tr.trace_error.max() < 1e-9
    assert tr.min_eigenvalue.min() > -1e-8
    assert tr.purity.max() <= 1 + 1e-8


def test_invalid_initial_state():
    m = deutsch_model()
    with pytest.raises(InvalidInitialState):
        integrate_master(m.hamiltonian, m.channel, np.diag([1.2, -0.2]), 1e-3)
    with pytest.raises(InvalidInitialState):
        integrate_superop(m.superop(), [0.5, 0, 0, 0], 1e-3)
    with pytest.raises(InputError):
        integrate_master(m.hamiltonian, m.channel, m.rho0, 0.0)
    with pytest.raises(InputError):
        integrate_master(m.hamiltonian, m.channel, m.rho0, 1e-3, grid=[0, 2e-3])


def test_config_validation():
    with pytest.raises(InputError):
        IntegratorConfig(rel_tol=0)
    with pytest.raises(InputError):
        IntegratorConfig(grid=(0, 1, 1))
    with pytest.raises(InputError):
        IntegratorConfig(max_step=0)


def test_step_underflow_and_budget():
    with pytest.raises(StepUnderflow):
        dormand_prince(lambda t, y: y**2, 0.0, np.array([1.0]), 2.0, [2.0])
    m = deutsch_model()
    with pytest.raises(StepUnderflow):
        integrate_master(m.hamiltonian, m.channel, m.rho0, 1e-3,
                         IntegratorConfig(max_steps=5), compiled=True)
    with pytest.raises(StepUnderflow):
        integrate_master(m.hamiltonian, m.channel, m.rho0, 1e-3,
                         IntegratorConfig(max_steps=5), compiled=False)


def test_csv_schema(tmp_path):
    m = deutsch_model()
    tr = integrate_master(m.hamiltonian, m.channel, m.rho0, 1e-3, grid=np.linspace(0, 1e-3, 5))
    path = tmp_path / "traj.csv"
    tr.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,trace_err,min_eig,purity,bloch_x,bloch_y,bloch_z"
    assert len(lines) == 6
    first = [float(x) for x in lines[1].split(",")]
    assert first[0] == 0 and first[4] == pytest.approx(1.0)
