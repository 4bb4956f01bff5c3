import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bosonic_avc.fock import make_coherent
from bosonic_avc.lemmas import (
    TypeClass,
    all_types,
    concentration_bound,
    gentle_operator_check,
    gentle_random_trials,
    lemma1_check,
    lemma1_random_trials,
    lemma3_bounds,
    lemma3_tail_check,
    lemma4_concentration_check,
    lemma5_type_bound_check,
    log_poisson_tail,
    partial_marginal,
    poisson_tail_reference,
    random_projector,
    run_suite,
    symmetrize_marginal_check,
    thermal_tail_check,
    trace_norm,
    type_size_bounds_check,
)

# mpmath at 40 digits
LOG2_POISSON2_TAIL_44 = -139.61447493899525976
POISSON1_TAIL_6 = 0.00059418481758169300


# types


def test_type_cardinality_is_multinomial():
    for d in (1, 2, 3):
        for k in range(0, 6):
            for t in all_types(d, k):
                assert t.cardinality == sum(1 for _ in t.members())


def test_all_types_count():
    assert sum(1 for _ in all_types(3, 6)) == math.comb(8, 2)
    assert sum(t.cardinality for t in all_types(3, 6)) == 3**6


def test_size_bounds_up_to_k12_d4():
    for d in range(1, 5):
        for k in range(1, 13):
            assert all(type_size_bounds_check(t) for t in all_types(d, k))


def test_lemma5_hand_case():
    r = lemma5_type_bound_check(TypeClass((1, 1)))
    assert r.passed and r.trials == 2
    assert r.worst_margin == pytest.approx(16 * 0.25 - 0.5)


def test_lemma5_point_mass():
    r = lemma5_type_bound_check(TypeClass((4, 0, 0)))
    assert r.passed and r.worst_margin == (2 * 4) ** 3 - 1


def test_lemma5_exhaustive_small():
    for k in range(1, 7):
        for d in range(1, 4):
            assert all(lemma5_type_bound_check(t).passed for t in all_types(d, k))


def test_lemma5_exact_arithmetic():
    t = TypeClass((2, 1))
    assert t.empirical == (Fraction(2, 3), Fraction(1, 3))
    assert t.sequence_prob((0, 0, 1)) == Fraction(4, 27)


def test_type_validation():
    with pytest.raises(ValueError):
        TypeClass((1, -1))


# local-to-global


def test_lemma1_product_of_exact_marginals():
    Q = np.diag([1.0, 1.0, 0.0])
    rho0 = np.diag([0.5, 0.5, 0.0])
    rho = np.kron(np.kron(rho0, rho0), rho0)
    r = lemma1_check(rho, Q, 3)
    assert r.passed
    assert r.details["eps"] == pytest.approx(0.0)
    assert r.details["chain_margins"] == pytest.approx([0.0, 0.0, 0.0])


def test_partial_marginal_of_product():
    rng = np.random.default_rng(2)
    a = np.diag(rng.dirichlet(np.ones(2)))
    b = np.diag(rng.dirichlet(np.ones(2)))
    assert np.allclose(partial_marginal(np.kron(a, b), 2, 2, 1), b)


def test_lemma1_random_states():
    r = lemma1_random_trials(500, 4, 3, seed=0)
    assert r.passed and r.trials == 500


def test_random_projector_is_projector():
    P = random_projector(5, 2, np.random.default_rng(0))
    assert np.allclose(P @ P, P) and np.trace(P).real == pytest.approx(2)


# permutation averaging


def test_symmetrize_equal_factors():
    p = [0.2, 0.5, 0.3]
    r = symmetrize_marginal_check([p, p, p])
    assert r.passed and r.details["marginal_energy"] == pytest.approx(1.1)


def test_symmetrize_phav_product():
    from scipy.stats import poisson

    D = 12
    ps = [poisson.pmf(np.arange(D), e) for e in (1.0, 0.0, 1.0)]
    ps = [p / p.sum() for p in ps]
    r = symmetrize_marginal_check(ps, P=2.0 / 3.0 * 1.0001)
    assert r.passed
    n = np.arange(D)
    assert r.details["marginal_energy"] == pytest.approx(sum(p @ n for p in ps) / 3, abs=1e-12)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 1000))
def test_symmetrize_random_k4(seed):
    rng = np.random.default_rng(seed)
    ps = [rng.dirichlet(np.ones(5)) for _ in range(4)]
    assert symmetrize_marginal_check(ps).passed


def test_symmetrize_energy_budget_violation():
    with pytest.raises(ValueError):
        symmetrize_marginal_check([[0, 1], [0, 1]], P=0.5)


# photon tails


def test_log_tail_frozen_value():
    assert log_poisson_tail(2.0, 44) / math.log(2) == pytest.approx(LOG2_POISSON2_TAIL_44, abs=1e-10)
    assert math.exp(log_poisson_tail(1.0, 6)) == pytest.approx(POISSON1_TAIL_6, rel=1e-12)


@pytest.mark.parametrize("mean", [0.5, 2.0, 7.0])
@pytest.mark.parametrize("N", [1, 5, 20])
def test_log_tail_matches_incomplete_gamma(mean, N):
    assert math.exp(log_poisson_tail(mean, N)) == pytest.approx(poisson_tail_reference(mean, N),
                                                                rel=1e-10)


def test_zero_radius_tail():
    r = lemma3_tail_check([0.0], [1.0], 44)
    assert r.passed and r.details["log2_tail"] == -math.inf


def test_b2_2_N44_below_quarter_power():
    r = lemma3_tail_check([math.sqrt(2.0)], [1.0], 44)
    assert r.details["ring_bound_applies"]
    assert r.details["log2_tail"] <= -88
    assert r.passed


@pytest.mark.parametrize("b2", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("N", [44, 60, 88])
def test_tail_grid(b2, N):
    assert lemma3_tail_check([math.sqrt(b2)], [1.0], N).passed


def test_mixture_with_unit_tail_constant():
    from bosonic_avc.fock import min_subgaussian_K1

    radii, w = np.array([0.2, 0.5, 0.8]), np.array([0.5, 0.3, 0.2])
    assert min_subgaussian_K1(radii, w) <= 1.0
    r = lemma3_tail_check(radii, w, 60, K1=1.0)
    assert r.passed


def test_bounds_formula():
    ring, mixed = lemma3_bounds(44, 1.0)
    assert ring == -88
    assert mixed == pytest.approx(2 - 44 * math.log2(math.e) / 22)


def test_thermal_tail():
    assert thermal_tail_check(1.0, 60).passed


# concentration


def test_concentration_fair_coin():
    from scipy.stats import binom

    r = lemma4_concentration_check(np.tile([0.5, 0.5], (1000, 1)), 0.1, 100_000, seed=1)
    assert r.passed
    # exact law: the type leaves the ball iff |heads - 500| > 50
    exact = binom.cdf(449, 1000, 0.5) + binom.sf(550, 1000, 0.5)
    se = math.sqrt(exact * (1 - exact) / 100_000)
    assert abs(r.details["empirical"] - exact) < 4 * se


def test_concentration_heterogeneous():
    rng = np.random.default_rng(0)
    ps = rng.dirichlet(np.ones(3), size=2000)
    r = lemma4_concentration_check(ps, 0.1, 20_000, seed=2)
    assert r.passed


def test_concentration_equal_wide_eps():
    r = lemma4_concentration_check(np.tile([0.3, 0.7], (500, 1)), 1.0, 10_000)
    assert r.details["empirical"] == 0.0


def test_concentration_bound_formula():
    assert concentration_bound(10, 2, 0.5, 2.0) == pytest.approx(2 * 400 * math.exp(-2.5))


# gentle operator


def test_gentle_fixed_state():
    rho = np.diag([0.3, 0.7, 0.0])
    P = np.diag([1.0, 1.0, 0.0])
    r = gentle_operator_check(rho, P)
    assert r.passed and r.details["distance"] == 0.0


def test_gentle_coherent_truncation():
    rho = make_coherent(1.0, 40).entries
    P = np.diag((np.arange(40) <= 5).astype(float))
    r = gentle_operator_check(rho, P)
    assert r.passed
    assert r.details["bound"] == pytest.approx(2 * math.sqrt(POISSON1_TAIL_6), rel=1e-9)
    # direct eigenvalue oracle for the one-norm
    diff = P @ rho @ P - rho
    assert r.details["distance"] == pytest.approx(np.abs(np.linalg.eigvalsh(diff)).sum(), rel=1e-12)


def test_gentle_random_trials():
    r = gentle_random_trials(500, 16, seed=0)
    assert r.passed and r.trials == 500


def test_trace_norm_of_difference_of_pure_states():
    a, b = np.array([1.0, 0.0]), np.array([1.0, 1.0]) / math.sqrt(2)
    A = np.outer(a, a) - np.outer(b, b)
    assert trace_norm(A) == pytest.approx(2 * math.sqrt(1 - 0.5))


def test_suite_all_pass():
    res = run_suite(trials_lemma1=50, trials_gentle=50, trials_concentration=10_000)
    assert all(r.passed for r in res)
    assert {r.name for r in res} >= {"type_flattening_exhaustive", "local_to_global",
                                    "photon_tail", "type_concentration", "gentle_operator"}
