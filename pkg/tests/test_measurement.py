import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lindblad_adiabatic.errors import InputError
from lindblad_adiabatic.measurement import (
    TomographyProtocol, bloch, expected_counts, fidelity, fidelity_qubit, from_bloch,
    project_physical, reconstruct, sample_counts, tomography, trace_distance, write_counts_csv,
)

from conftest import random_state

PLUS = from_bloch([1, 0, 0])
MIXED = from_bloch([0, 0, 0])
ZERO = from_bloch([0, 0, 1])


def test_fidelity_examples():
    assert fidelity(MIXED, PLUS) == pytest.approx(1 / np.sqrt(2), abs=1e-12)
    assert fidelity(PLUS, PLUS) == pytest.approx(1.0, abs=1e-12)
    assert fidelity(ZERO, from_bloch([0, 0, -1])) == pytest.approx(0.0, abs=1e-7)
    assert trace_distance(ZERO, from_bloch([0, 0, -1])) == pytest.approx(1.0)


def test_fidelity_closed_form_on_many_pairs(rng):
    worst = 0.0
    for _ in range(10_000):
        a, b = random_state(rng), random_state(rng)
        f = fidelity(a, b, check=False)
        worst = max(worst, abs(f - fidelity_qubit(a, b)))
        assert 0 <= f <= 1
    assert worst < 1e-10


def test_fidelity_pure_states_full_precision(rng):
    # |<a|b>| for pure pairs and 1/sqrt(2) against the maximally mixed state
    for _ in range(1000):
        a, b = random_state(rng, pure=True), random_state(rng, pure=True)
        assert fidelity(a, b) == pytest.approx(np.sqrt(abs(np.trace(a @ b))), abs=1e-12)
        assert fidelity(MIXED, a) == pytest.approx(1 / np.sqrt(2), abs=1e-12)
        c = random_state(rng)
        assert fidelity(a, c) == pytest.approx(np.sqrt(np.trace(a @ c).real), abs=1e-12)


@settings(max_examples=200)
@given(st.integers(0, 2**32 - 1))
def test_fidelity_symmetric_and_bounded_by_trace_distance(seed):
    rng = np.random.default_rng(seed)
    a, b = random_state(rng), random_state(rng)
    f = fidelity(a, b)
    assert f == pytest.approx(fidelity(b, a), abs=1e-9)
    d = trace_distance(a, b)
    # Fuchs-van de Graaf
    assert 1 - f <= d + 1e-9 and d <= np.sqrt(max(0.0, 1 - f * f)) + 1e-7


def test_fidelity_rejects_non_states():
    with pytest.raises(InputError):
        fidelity(np.eye(2), PLUS)
    with pytest.raises(InputError):
        fidelity_qubit(np.eye(3) / 3, np.eye(3) / 3)


def test_bloch_round_trip(rng):
    for _ in range(50):
        r = rng.normal(size=3)
        r *= rng.random() / np.linalg.norm(r)
        assert np.allclose(bloch(from_bloch(r)), r)


def test_projection():
    rho = from_bloch([1.2, 0, 0])
    p = project_physical(rho)
    assert np.linalg.eigvalsh(p).min() >= 0
    assert np.trace(p).real == pytest.approx(1)
    assert np.allclose(p, PLUS)
    with pytest.raises(InputError):
        project_physical(-np.eye(2))


def test_protocol_validation():
    with pytest.raises(InputError):
        TomographyProtocol(shots=0)
    with pytest.raises(InputError):
        TomographyProtocol(readout_error=0.5)
    with pytest.raises(InputError):
        TomographyProtocol(seed=-1)


def test_counts_examples():
    proto = TomographyProtocol(shots=2000, repeats=10, seed=0)
    assert np.all(sample_counts(ZERO, "z", proto) == 2000)
    assert np.all(sample_counts(ZERO, "x", proto) > 0)
    c = np.concatenate([sample_counts(MIXED, "x", TomographyProtocol(seed=s)) for s in range(20)])
    assert abs(c.mean() - 1000) < 3 * np.sqrt(500 / c.size)
    assert abs(c.std() - np.sqrt(500)) < 5
    with pytest.raises(InputError):
        sample_counts(ZERO, "w", proto)


def test_counts_deterministic_and_independent():
    proto = TomographyProtocol(seed=42)
    a = sample_counts(MIXED, "x", proto)
    assert np.array_equal(a, sample_counts(MIXED, "x", proto))
    assert not np.array_equal(a, sample_counts(MIXED, "y", proto))
    assert not np.array_equal(a, sample_counts(MIXED, "x", proto, point=1))


def test_infinite_shot_limit_is_exact(rng):
    proto = TomographyProtocol(readout_error=0.006)
    for _ in range(20):
        rho = random_state(rng)
        c = {a: expected_counts(rho, a, proto) for a in "xyz"}
        res = reconstruct(c["x"], c["y"], c["z"], proto.shots, truth=rho, readout_error=0.006)
        assert np.abs(res.mean_state - rho).max() < 1e-12
        assert res.fidelity_mean == pytest.approx(1.0, abs=1e-9)
        assert np.all(res.bloch_std < 1e-12)


def test_plus_state_tomography():
    _, res = tomography(PLUS, TomographyProtocol(), truth=PLUS)
    assert res.fidelity_mean > 0.999
    assert res.fidelities.shape == (10,)
    assert np.isnan(reconstruct([1], [1], [1], 2).fidelity_mean)
    with pytest.raises(InputError):
        reconstruct([3], [1], [1], 2)


def test_readout_error_is_undone():
    proto = TomographyProtocol(shots=200_000, repeats=4, seed=3, readout_error=0.05)
    _, res = tomography(ZERO, proto, truth=ZERO)
    assert res.fidelity_mean > 0.999
    biased = reconstruct(*(sample_counts(ZERO, a, proto) for a in "xyz"), proto.shots)
    assert bloch(biased.mean_state)[2] == pytest.approx(0.9, abs=0.01)


def test_shot_noise_scaling():
    rho = from_bloch([0.3, 0.2, 0.1])
    shots = [100, 400, 1600, 6400, 25600]
    errs = []
    for n in shots:
        e = []
        for seed in range(40):
            _, res = tomography(rho, TomographyProtocol(shots=n, repeats=10, seed=seed))
            e.append(np.sqrt(np.mean(np.sum((res.raw_bloch - [0.3, 0.2, 0.1]) ** 2, axis=1))))
        errs.append(np.mean(e))
    slope = np.polyfit(np.log(shots), np.log(errs), 1)[0]
    assert abs(slope + 0.5) < 0.05


def test_counts_csv(tmp_path):
    proto = TomographyProtocol(repeats=2)
    counts, _ = tomography(PLUS, proto)
    path = tmp_path / "c.csv"
    write_counts_csv(path, counts, proto.shots, comment="plus state")
    lines = path.read_text().splitlines()
    assert lines[0] == "# plus state"
    assert lines[1] == "repeat,axis,shots,up,down"
    assert len(lines) == 2 + 6
    assert lines[2].startswith("0,x,2000,2000,0")
