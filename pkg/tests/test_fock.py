import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import poisson

from bosonic_avc.fock import (
    Constellation,
    DensityMatrix,
    InvalidState,
    JammerSpec,
    TruncationError,
    check_subgaussian,
    choose_cutoff,
    coherent_amplitudes,
    energy,
    make_coherent,
    make_diagonal,
    make_dphav,
    make_fock,
    make_phav,
    make_thermal,
    make_vacuum,
    min_subgaussian_K1,
    mix,
    phase_rotate,
    trace_distance,
    trace_norm_distance,
)

# 2 sqrt(1 - exp(-0.01)), mpmath at 30 digits
TRACE_NORM_0_01 = 0.199501040105879612690654642443


def test_coherent_diagonal_is_poisson():
    rho = make_coherent(1.0, 30)
    assert np.allclose(rho.diagonal(), poisson.pmf(np.arange(30), 1.0), atol=1e-12, rtol=0)


def test_coherent_is_pure():
    rho = make_coherent(0.7 - 0.3j, 30)
    assert np.allclose(rho.entries @ rho.entries, rho.entries, atol=1e-12)


def test_coherent_large_amplitude_does_not_overflow():
    c = coherent_amplitudes(20.0, 600)
    assert np.all(np.isfinite(c))
    assert abs(np.sum(np.abs(c) ** 2) - 1) < 1e-10


def test_thermal_energy_and_spectrum():
    rho = make_thermal(0.5, 60)
    assert abs(energy(rho) - 0.5) < 1e-9
    n = np.arange(60)
    assert np.allclose(rho.diagonal(), (1 / 1.5) * (0.5 / 1.5) ** n, atol=1e-14)


def test_phav_is_poisson_diagonal():
    rho = make_phav(math.sqrt(2), 50)
    assert rho.is_diagonal()
    assert np.allclose(rho.diagonal(), poisson.pmf(np.arange(50), 2.0), atol=1e-13)
    assert abs(energy(rho) - 2.0) < 1e-8


def test_dphav_zero_displacement_is_phav():
    D = 30
    a = make_dphav(0.0, 1.2, D)
    b = make_phav(1.2, D)
    assert np.abs(a.entries - b.entries).max() < 1e-10


def test_dphav_energy_is_additive():
    rho = make_dphav(1.0, 1.0, 40)
    assert abs(energy(rho) - 2.0) < 1e-8


def test_dphav_requires_enough_phase_points():
    with pytest.raises(ValueError):
        make_dphav(1.0, 1.0, 20, M=10)


def test_truncation_error_when_cutoff_too_small():
    with pytest.raises(TruncationError):
        make_thermal(5.0, 10)
    with pytest.raises(TruncationError):
        make_coherent(3.0, 5)


def test_truncation_deficit_is_recorded():
    rho = make_thermal(5.0, 10, tol=1.0)
    assert rho.trace_deficit == pytest.approx((5 / 6) ** 10, rel=1e-12)
    assert abs(rho.trace - 1) < 1e-12


def test_fock_and_vacuum():
    assert make_vacuum(4).diagonal().tolist() == [1, 0, 0, 0]
    assert energy(make_fock(3, 6)) == pytest.approx(3.0)
    with pytest.raises(ValueError):
        make_fock(6, 6)


def test_density_matrix_validation():
    with pytest.raises(InvalidState):
        DensityMatrix(np.array([[0.5, 0.6], [0.6, 0.5]])).validate()
    with pytest.raises(InvalidState):
        DensityMatrix(np.array([[0.5, 0.1j], [0.2j, 0.5]])).validate()
    DensityMatrix(np.diag([0.5, 0.5])).validate()


def test_trace_distance_coherent_pair():
    a, b = make_coherent(0.0, 20), make_coherent(0.1, 20)
    v = trace_norm_distance(a, b)
    assert 0 < v < 2
    assert v == pytest.approx(TRACE_NORM_0_01, abs=1e-10)
    assert trace_distance(a, make_coherent(0.2, 20)) > trace_distance(a, b)


def test_energy_of_coherent_and_thermal():
    assert energy(make_coherent(1.5j, 40)) == pytest.approx(2.25, abs=1e-9)
    assert energy(make_thermal(2.0, 80)) == pytest.approx(2.0, abs=1e-8)


def test_subgaussian_examples():
    ok, _ = check_subgaussian([1, 1, 1, 1], K=10)
    assert ok
    ok, worst = check_subgaussian([10.0], K=1)
    assert not ok
    assert worst == pytest.approx(10.0, rel=1e-6)


def test_min_subgaussian_constant_is_tight():
    r, w = np.array([0.5, 1.0, 2.0]), np.array([0.5, 0.3, 0.2])
    K1 = min_subgaussian_K1(r, w)
    assert check_subgaussian(r, w, math.sqrt(K1) * (1 + 1e-9))[0]
    assert not check_subgaussian(r, w, math.sqrt(K1) * (1 - 1e-6))[0]


def test_jammer_tail_constants():
    assert JammerSpec.thermal(1.5).subgaussian_K == 1.5
    assert JammerSpec.phav(1.0).subgaussian_K == pytest.approx(1 / math.log(2))
    assert JammerSpec.phav(1.0).admissible(2.0)
    assert not JammerSpec.phav(1.0).admissible(1.0)  # energy ok but tail constant 1.44 > 1


def test_jammer_roundtrip():
    for j in (JammerSpec.thermal(0.3), JammerSpec.phav(0.4), JammerSpec.dphav(0.1 + 0.2j, 0.5),
              JammerSpec.phav_mixture([(0.1, 1), (0.9, 3)])):
        assert JammerSpec.from_dict(j.to_dict()) == j


def test_mixture_weights_normalized():
    j = JammerSpec.phav_mixture([(1.0, 1.0), (0.0, 3.0)])
    assert j.mean_energy == pytest.approx(0.25)


def test_attenuated_jammer_families():
    assert JammerSpec.thermal(2.0).attenuated(0.25) == JammerSpec.thermal(0.5)
    assert JammerSpec.phav(2.0).attenuated(0.25).params[0] == pytest.approx(1.0)


def test_constellation_budget_enforced():
    with pytest.raises(ValueError):
        Constellation(np.array([2.0, 0.0]), np.array([0.5, 0.5]), budget=1.0)
    c = Constellation(np.array([1.0, -1.0]), np.array([0.5, 0.5]), budget=1.0)
    assert c.mean_energy == pytest.approx(1.0)


def test_choose_cutoff_tail():
    D = choose_cutoff(1.0, 1e-10, "thermal")
    assert 0.5**D <= 1e-10 < 0.5 ** (D - 1)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 2 * math.pi), st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))
def test_phase_rotation_of_coherent(theta, x, y):
    a = complex(x, y)
    rot = phase_rotate(make_coherent(a, 40), theta)
    target = make_coherent(a * np.exp(1j * theta), 40)
    assert np.abs(rot.entries - target.entries).max() < 1e-10


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.01, 1.0), min_size=2, max_size=12))
def test_make_diagonal_normalizes(ws):
    rho = make_diagonal(ws)
    assert abs(rho.trace - 1) < 1e-12
    assert rho.is_diagonal()


def test_mix_is_convex_combination():
    a, b = make_thermal(0.5, 40), make_phav(0.5, 40)
    m = mix([a, b], [0.25, 0.75])
    assert np.allclose(m.entries, 0.25 * a.entries + 0.75 * b.entries)
