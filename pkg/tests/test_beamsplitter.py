import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm
from scipy.stats import poisson

from bosonic_avc import beamsplitter as bs
from bosonic_avc.beamsplitter import (
    ChannelConfig,
    EnsembleChannel,
    apply_bs,
    apply_bs_semiclassical,
    block_element,
    build_block_unitary,
    channel_N,
    displacement_columns,
    idle_output,
    prune,
)
from bosonic_avc.entropy import entropy_bits
from bosonic_avc.fock import (
    Constellation,
    DensityMatrix,
    DimensionMismatch,
    JammerSpec,
    energy,
    make_coherent,
    make_diagonal,
    make_dphav,
    make_phav,
    make_thermal,
    make_vacuum,
    trace_distance,
)


def test_block_n1_half_transmissivity():
    U = build_block_unitary(0.5, 2).blocks[1]
    r = math.sqrt(0.5)
    # rows: <1,0|, <0,1| ; columns: |0,1>, |1,0>
    assert np.allclose(U, [[r, -r], [r, r]], atol=1e-15)


@pytest.mark.parametrize("D", [5, 20, 40])
@pytest.mark.parametrize("tau", [0.1, 0.5, 0.83])
def test_blocks_are_orthogonal(D, tau):
    for b in build_block_unitary(tau, D).blocks:
        assert np.abs(b @ b.T - np.eye(len(b))).max() < 1e-12


def test_blocks_match_binomial_formula_at_small_photon_number():
    tau = 0.3
    bu = build_block_unitary(tau, 6)
    worst = 0.0
    for n, blk in enumerate(bu.blocks):
        for n1 in range(n + 1):
            for m1 in range(n + 1):
                worst = max(worst, abs(blk[m1, n1] - block_element(tau, n1, n - n1, m1)))
    assert worst < 1e-13


def test_sign_flip_conjugates_blocks():
    a = build_block_unitary(0.4, 5, 1).blocks[3]
    b = build_block_unitary(0.4, 5, -1).blocks[3]
    assert np.allclose(a, b.T, atol=1e-14)


def test_dense_assembly_is_unitary():
    U = build_block_unitary(0.7, 4).dense(3)
    # only the span n1 + n2 <= 3 is populated
    mask = np.abs(U).sum(axis=0) > 0
    sub = U[np.ix_(mask, mask)]
    assert np.abs(sub.T @ sub - np.eye(sub.shape[0])).max() < 1e-13


@settings(max_examples=15, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(-1.2, 1.2), st.floats(-1.2, 1.2), st.floats(-1.0, 1.0))
def test_coherent_in_coherent_out(tau, ar, ai, br):
    a, b = complex(ar, ai), complex(br, 0.3)
    D = 30
    out = apply_bs(make_coherent(a, D), make_coherent(b, D), ChannelConfig(tau))
    target = make_coherent(math.sqrt(tau) * a + math.sqrt(1 - tau) * b, out.dim)
    assert trace_distance(out, target) < 1e-8


def test_sign_convention_flips_jammer_phase():
    D = 25
    out = apply_bs(make_coherent(0.5, D), make_coherent(0.7, D), ChannelConfig(0.6, sign=-1))
    target = make_coherent(math.sqrt(0.6) * 0.5 - math.sqrt(0.4) * 0.7, out.dim)
    assert trace_distance(out, target) < 1e-8


def test_dphav_mixing_identity():
    D, tau, a, b = 25, 0.6, 0.8 + 0.2j, 0.9
    out = apply_bs(make_coherent(a, D), make_phav(b, D), ChannelConfig(tau))
    target = make_dphav(math.sqrt(tau) * a, math.sqrt(1 - tau) * b, out.dim)
    assert trace_distance(out, target) < 1e-8


def test_thermal_through_loss_stays_thermal():
    D = 60
    out = apply_bs(make_thermal(1.0, D), make_vacuum(D), ChannelConfig(0.3))
    target = make_thermal(0.3, out.dim)
    assert trace_distance(out, target) < 1e-9


def test_output_deficit_accounts_for_truncation():
    D = 30
    out = apply_bs(make_coherent(2.0, D), make_vacuum(D), ChannelConfig(0.5, output_cutoff=4))
    assert out.dim == 4
    assert out.trace_deficit == pytest.approx(poisson.sf(3, 2.0), rel=1e-6)


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        apply_bs(make_vacuum(3), make_vacuum(4), ChannelConfig(0.5))


@pytest.mark.parametrize("jammer", [JammerSpec.thermal(0.7), JammerSpec.phav(0.9),
                                    JammerSpec.phav_mixture([(0.3, 0.4), (1.1, 0.6)]),
                                    JammerSpec.dphav(0.4j, 0.6)])
def test_semiclassical_path_matches_general(jammer):
    D, tau, alpha = 30, 0.55, 0.6 - 0.4j
    cfg = ChannelConfig(tau)
    ref = apply_bs(make_coherent(alpha, D), jammer.state(D), cfg)
    assert ref.trace_deficit < 1e-10
    fast = apply_bs_semiclassical(alpha, jammer, cfg, D_out=ref.dim)
    assert trace_distance(ref, fast) < 1e-8


def test_idle_output_matches_beam_splitter():
    D = 30
    for j in (JammerSpec.thermal(0.8), JammerSpec.phav(1.0), JammerSpec.dphav(0.5, 0.5)):
        direct = apply_bs(make_vacuum(D), j.state(D), ChannelConfig(0.35, output_cutoff=D))
        fast = idle_output(j, ChannelConfig(0.35), D)
        assert trace_distance(direct, fast) < 1e-8


def test_phav_jammer_vacuum_signal():
    out = apply_bs_semiclassical(0.0, JammerSpec.phav(1.2), ChannelConfig(0.4), D_out=30)
    assert np.allclose(out.diagonal(), poisson.pmf(np.arange(30), 0.6 * 1.44), atol=1e-12)


def test_thermal_jammer_output_entropy_independent_of_signal():
    cfg = ChannelConfig(0.5)
    base = entropy_bits(apply_bs_semiclassical(0.0, JammerSpec.thermal(1.0), cfg, D_out=60))
    for a in (0.5, 1.0j, -1.2 + 0.3j):
        s = entropy_bits(apply_bs_semiclassical(a, JammerSpec.thermal(1.0), cfg, D_out=60))
        assert s == pytest.approx(base, abs=1e-8)


def test_channel_energy_bound():
    cfg = ChannelConfig(0.7)
    j = JammerSpec.phav(0.8)
    out = channel_N(0.9, j, 6, cfg, D_out=40)
    assert energy(out) <= 0.7 * 0.81 + 0.3 * 0.64 + 1e-9


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=3, max_size=10), st.integers(0, 8))
def test_prune_preserves_trace_and_lowers_energy(ws, d):
    if sum(ws) == 0:
        ws = [1.0] + ws[1:]
    rho = make_diagonal(ws)
    out = prune(rho, d)
    assert out.trace == pytest.approx(1.0)
    assert energy(out) <= energy(rho) + 1e-12
    assert out.dim == min(d + 1, rho.dim)


def test_displacement_columns_match_expm():
    D, rows = 8, 40
    a = np.diag(np.sqrt(np.arange(1, rows)), 1)
    g = 0.7 - 0.3j
    Dg = expm(g * a.conj().T - np.conj(g) * a)
    cols = displacement_columns([g], rows, D)[0]
    assert np.abs(cols[:20] - Dg[:20, :D]).max() < 1e-12


def test_ensemble_average_matches_direct_sum():
    pts = np.array([0.3, -0.2 + 0.5j, 0.6j])
    c = Constellation(pts, np.array([0.2, 0.5, 0.3]))
    tau, D = 0.6, 30
    ens = EnsembleChannel(c, tau, D)
    for j in (JammerSpec.thermal(0.4), JammerSpec.dphav(0.3, 0.2)):
        omega = ens.idle(j)
        avg = ens.average_output(omega).entries
        direct = sum(w * apply_bs_semiclassical(a, j, ChannelConfig(tau), D_out=D).entries
                     for a, w in zip(pts, c.weights))
        assert np.abs(avg - direct).max() < 1e-8


def test_disk_cache_roundtrip(tmp_path, monkeypatch):
    monkeypatch.setenv(bs.CACHE_ENV, str(tmp_path))
    bs.clear_block_cache()
    a = build_block_unitary(0.321, 6)
    files = list(tmp_path.iterdir())
    assert len(files) == 1
    raw = files[0].read_bytes()
    assert raw[:8] == b"BAVCBLK1"
    bs.clear_block_cache()
    b = build_block_unitary(0.321, 6)
    assert all(np.array_equal(x, y) for x, y in zip(a.blocks, b.blocks))
    # a corrupted file is ignored and rebuilt
    files[0].write_bytes(b"garbage")
    bs.clear_block_cache()
    c = build_block_unitary(0.321, 6)
    assert all(np.array_equal(x, y) for x, y in zip(a.blocks, c.blocks))
    bs.clear_block_cache()


def test_blocks_shared_across_threads():
    from concurrent.futures import ThreadPoolExecutor

    bs.clear_block_cache()
    with ThreadPoolExecutor(4) as ex:
        got = list(ex.map(lambda _: build_block_unitary(0.77, 10), range(8)))
    assert all(g is got[0] for g in got)


def test_general_state_through_splitter_is_state():
    rng = np.random.default_rng(1)
    z = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    rho = DensityMatrix(z @ z.conj().T / np.trace(z @ z.conj().T).real)
    out = apply_bs(rho, make_thermal(0.2, 6, tol=1e-3), ChannelConfig(0.5))
    out.validate()
