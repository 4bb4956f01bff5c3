import math

import numpy as np
import pytest

from bosonic_avc.beamsplitter import ChannelConfig
from bosonic_avc.capacity import (
    ChiEvaluator,
    EmptyFamily,
    GridSpec,
    build_grid_constellation,
    calibrate_variance,
    closed_form_capacity,
    continuity_bound,
    continuity_check,
    gaussian_constellation,
    golden_section,
    inner_min_jammer,
    outer_max_input,
)
from bosonic_avc.entropy import DomainError, holevo_chi
from bosonic_avc.fock import (
    Constellation,
    JammerSpec,
    make_coherent,
    make_diagonal,
    make_thermal,
    mix,
    trace_distance,
)

# g(1) - g(1/2), mpmath at 30 digits
CF_HALF_1_1 = 0.622556248918265728


def test_closed_form_values():
    assert closed_form_capacity(0.5, 1.0, 1.0) == pytest.approx(CF_HALF_1_1, abs=1e-15)
    assert closed_form_capacity(1.0, 1.0, 0.0) == pytest.approx(2.0, abs=1e-15)
    for tau in (0.1, 0.7):
        assert closed_form_capacity(tau, 0.0, 2.0) == 0.0
    with pytest.raises(DomainError):
        closed_form_capacity(1.5, 1.0, 1.0)


def test_closed_form_monotone():
    es = np.linspace(0, 3, 13)
    vals = [closed_form_capacity(0.5, e, 1.0) for e in es]
    assert np.all(np.diff(vals) > 0)
    ps = np.linspace(0, 3, 13)
    vals = [closed_form_capacity(0.5, 1.0, p) for p in ps]
    assert np.all(np.diff(vals) < 0)


def test_single_box_is_point_mass():
    c = build_grid_constellation(1.0, GridSpec(10.0, radius2=1.0))
    assert len(c) == 1 and c.points[0] == 0


def test_weights_sum_to_one():
    c = build_grid_constellation(1.0, GridSpec(0.25))
    assert math.fsum(c.weights) == pytest.approx(1.0, abs=1e-15)
    assert "kappa" in c.meta and 0 < c.meta["kappa"] <= 1


def _avg_state(c, D):
    return mix([make_coherent(a, D) for a in c.points], c.weights)


def test_constellation_approaches_thermal():
    dists = []
    for eps in (1.0, 0.5, 0.25, 0.125):
        c = build_grid_constellation(1.0, GridSpec(eps, radius2=12.0))
        dists.append(trace_distance(_avg_state(c, 60), make_thermal(1.0, 60)))
    # second order in the spacing once the grid resolves the Gaussian
    for a, b in zip(dists[1:], dists[2:]):
        assert 3.5 < a / b < 4.5
    assert dists[-1] < 1e-3


@pytest.mark.parametrize("E", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("spacing", [1.0, 0.25, 0.125])
def test_calibrated_energy_within_budget(E, spacing):
    c = gaussian_constellation(E, spacing)
    # the grid disk has radius^2 = 1 / spacing, which caps the reachable energy
    if 1.0 / spacing < 2 * E:
        assert c.mean_energy <= 1.0 / spacing
        return
    assert c.mean_energy <= E * (1 + 1e-12)
    assert c.mean_energy > 0.5 * E


def test_calibrate_variance_monotone():
    g = GridSpec(0.25)
    assert calibrate_variance(0.5, g) < calibrate_variance(1.0, g)


def test_golden_section_quadratic():
    x, fx, trace = golden_section(lambda t: (t - 0.3) ** 2, 0.0, 1.0, tol=1e-9)
    assert x == pytest.approx(0.3, abs=1e-8)
    assert all(a >= b for a, b in zip(trace, trace[1:]))


def test_golden_section_monotone_uses_endpoint():
    x, fx, _ = golden_section(lambda t: -t, 0.0, 2.0)
    assert x == 2.0 and fx == -2.0


def test_vacuum_family_is_pure_loss():
    c = gaussian_constellation(1.0, 0.5)
    res = inner_min_jammer(c, ["vacuum"], P=1.0, tau=0.5)
    direct = holevo_chi(c, JammerSpec.vacuum(), ChannelConfig(0.5))
    assert res.value == pytest.approx(direct, abs=1e-10)
    assert res.jammer == JammerSpec.vacuum()


def test_thermal_minimizer_is_full_power():
    c = gaussian_constellation(1.0, 0.5)
    res = inner_min_jammer(c, ["thermal"], P=1.0, tau=0.5)
    assert res.jammer.params[0] == pytest.approx(1.0, abs=1e-9)
    assert all(a >= b for a, b in zip(res.trace, res.trace[1:]))


def test_golden_matches_exhaustive_grid():
    c = Constellation(np.array([0.8, -0.8]), np.array([0.5, 0.5]))
    chi = ChiEvaluator(c, 0.5, 1.0)
    grid = min(chi(JammerSpec.thermal(n)) for n in np.linspace(0, 1.0, 20))
    res = inner_min_jammer(chi, ["thermal"], P=1.0)
    assert res.value == pytest.approx(grid, abs=1e-6)
    assert res.value <= grid + 1e-12


def test_empty_family():
    c = gaussian_constellation(1.0, 1.0)
    with pytest.raises(EmptyFamily):
        inner_min_jammer(c, [], P=1.0, tau=0.5)
    with pytest.raises(EmptyFamily):
        inner_min_jammer(c, ["laser"], P=1.0, tau=0.5)


def test_inner_minimum_non_increasing_in_P():
    c = gaussian_constellation(1.0, 0.5)
    vals = [inner_min_jammer(c, ["thermal", "phav"], P=p, tau=0.5).value for p in (0.5, 1.0, 2.0)]
    assert vals[0] >= vals[1] >= vals[2]


def test_admissible_jammers_only():
    c = gaussian_constellation(1.0, 0.5)
    res = inner_min_jammer(c, ["phav", "phav_mixture"], P=1.0, tau=0.5)
    for v, j in res.per_family.values():
        assert j.admissible(1.0)
        assert j.mean_energy <= 1.0 + 1e-12


def test_outer_zero_energy():
    assert outer_max_input(["thermal"], 0.0, 1.0, 0.5).value_bits == 0.0


def test_outer_thermal_family_near_closed_form():
    res = outer_max_input(["thermal"], 1.0, 1.0, 0.5, schedule=(1.0, 0.5, 0.25))
    assert res.value_bits <= CF_HALF_1_1 + 1e-6
    assert res.value_bits >= 0.98 * CF_HALF_1_1
    assert res.constellation.mean_energy <= 1.0 + 1e-12
    assert res.meta["restriction"]
    assert all(a <= b for a, b in zip(res.outer_trace, res.outer_trace[1:]))


def test_continuity_identical_states():
    rho = make_thermal(1.0, 60)
    rep = continuity_check(rho, rho, 2.0)
    assert rep.holds and rep.lhs == 0.0


def test_continuity_thermal_pair():
    rep = continuity_check(make_thermal(1.0, 80), make_thermal(1.01, 80), 2.0)
    assert rep.holds
    assert 0 < rep.lhs < rep.rhs


def test_continuity_random_diagonal_trials():
    rng = np.random.default_rng(0)
    n = np.arange(12)
    for _ in range(1000):
        p = rng.dirichlet(np.ones(12))
        q = np.abs(p + rng.normal(scale=1e-3, size=12))
        a, b = make_diagonal(p), make_diagonal(q)
        E = max(float(a.diagonal() @ n), float(b.diagonal() @ n))
        assert continuity_check(a, b, E).holds


def test_continuity_bound_edges():
    assert continuity_bound(0.0, 1.0) == 0.0
    assert continuity_bound(1.0, 1.0) == math.inf
