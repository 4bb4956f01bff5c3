"""Two-mode beam splitter, the pruning channel and the jammed channel.

Port convention (``sign=+1``): a coherent pair |alpha>|beta> leaves output
port 1 in |sqrt(tau) alpha + sqrt(1 - tau) beta>. Only port 1 is observed.
Creation operators map as

    a1^+ -> sqrt(tau) a1^+ - sign sqrt(1-tau) a2^+
    a2^+ -> sign sqrt(1-tau) a1^+ + sqrt(tau) a2^+
"""

from __future__ import annotations

import math
import os
import struct
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import roots_laguerre

from .fock import (
    Constellation,
    DensityMatrix,
    DimensionMismatch,
    JammerSpec,
    coherent_amplitudes,
    make_vacuum,
)

CACHE_ENV = "BOSONIC_AVC_CACHE_DIR"
_CACHE_MAGIC = b"BAVCBLK1"
_CACHE_VERSION = 1


@dataclass(frozen=True)
class ChannelConfig:
    tau: float
    cutoff: int | None = None          # input cutoff D (defaults to the states' dim)
    output_cutoff: int | None = None   # defaults to 2D - 1
    quadrature: int | None = None      # phase points, defaults to 4 * output cutoff
    laguerre_nodes: int | None = None  # radial nodes for thermal P-functions
    sign: int = 1

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau must lie in [0, 1], got {self.tau}")
        if self.output_cutoff is not None and self.output_cutoff < 1:
            raise ValueError("output cutoff must be at least 1")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")

    @property
    def tau_c(self) -> float:
        return 1.0 - self.tau

    def out_dim(self, D: int) -> int:
        return 2 * D - 1 if self.output_cutoff is None else self.output_cutoff

    def with_tau(self, tau: float) -> "ChannelConfig":
        return ChannelConfig(tau, self.cutoff, self.output_cutoff, self.quadrature,
                             self.laguerre_nodes, self.sign)


# ---------------------------------------------------------------------------
# block unitaries


@dataclass(frozen=True, eq=False)
class BlockUnitary:
    """Per total-photon-number blocks of the two-mode unitary.

    ``blocks[n][m1, n1]`` is <m1, n - m1| U |n1, n - n1> for n = 0 .. 2(D-1).
    """

    tau: float
    D: int
    sign: int
    blocks: tuple

    def dense(self, nmax: int | None = None) -> np.ndarray:
        """Assemble U on span{|n1, n2>: n1 + n2 <= nmax}, basis ordered by (n1, n2) with n1, n2 <= nmax."""
        nmax = len(self.blocks) - 1 if nmax is None else nmax
        d = nmax + 1
        U = np.zeros((d * d, d * d))
        for n in range(nmax + 1):
            idx = [m1 * d + (n - m1) for m1 in range(n + 1)]
            U[np.ix_(idx, idx)] = self.blocks[n]
        return U


_block_cache: dict = {}
_block_lock = threading.Lock()


def _cache_key(tau: float, D: int, sign: int):
    return (round(float(tau), 15), int(D), int(sign))


def _block(n: int, theta: float) -> np.ndarray:
    """exp(theta K) on span{|m1, n - m1>} with K = a1^+ a2 - a2^+ a1.

    -iK is similar (via diag(i^m)) to the real symmetric tridiagonal matrix
    with off-diagonal -sqrt((m+1)(n-m)) and spectrum {-n, -n+2, ..., n}.
    Diagonalizing it keeps the block orthogonal to machine precision.
    """
    if n == 0:
        return np.ones((1, 1))
    m = np.arange(n)
    off = -np.sqrt((m + 1.0) * (n - m))
    _, W = eigh_tridiagonal(np.zeros(n + 1), off)
    lam = np.arange(-n, n + 1, 2, dtype=float)
    phase = np.exp(1j * theta * lam)
    core = (W * phase) @ W.T
    k = np.arange(n + 1)
    # i^(a-b) factor, then the result is real
    rot = (1j) ** ((k[:, None] - k[None, :]) % 4)
    return (rot * core).real


def _build_blocks(tau: float, D: int, sign: int) -> tuple:
    theta = sign * math.atan2(math.sqrt(1.0 - tau), math.sqrt(tau))
    return tuple(_block(n, theta) for n in range(2 * D - 1))


def block_element(tau: float, n1: int, n2: int, m1: int, sign: int = 1) -> float:
    """<m1, n1 + n2 - m1| U |n1, n2> from the binomial expansion of the mode map.

    Log-factorial evaluation of each term; intended for moderate photon
    numbers (alternating terms cancel at large n).
    """
    n = n1 + n2
    m2 = n - m1
    if not 0 <= m1 <= n:
        return 0.0
    st, sc = math.sqrt(tau), math.sqrt(1.0 - tau)
    lf = math.lgamma
    total = 0.0
    # (st a1 - s sc a2)^n1 (s sc a1 + st a2)^n2: j photons of a1 from the first factor
    for j in range(max(0, m1 - n2), min(n1, m1) + 1):
        l = m1 - j
        e_st = j + (n2 - l)
        e_sc = (n1 - j) + l
        if (e_st and st == 0.0) or (e_sc and sc == 0.0):
            continue
        logmag = (lf(n1 + 1) - lf(j + 1) - lf(n1 - j + 1)
                  + lf(n2 + 1) - lf(l + 1) - lf(n2 - l + 1)
                  + 0.5 * (lf(m1 + 1) + lf(m2 + 1) - lf(n1 + 1) - lf(n2 + 1)))
        if e_st:
            logmag += e_st * math.log(st)
        if e_sc:
            logmag += e_sc * math.log(sc)
        sgn = (-sign) ** (n1 - j) * sign ** l
        total += sgn * math.exp(logmag)
    return total


def _cache_path(key) -> Path | None:
    root = os.environ.get(CACHE_ENV)
    if not root:
        return None
    tau, D, sign = key
    return Path(root) / f"bs_tau{tau:.15f}_D{D}_s{sign:+d}.bin"


def _load_blocks(path: Path, key):
    try:
        raw = path.read_bytes()
    except OSError:
        return None
    head = struct.calcsize("<8sIdii")
    if len(raw) < head:
        return None
    magic, version, tau, D, sign = struct.unpack_from("<8sIdii", raw)
    if magic != _CACHE_MAGIC or version != _CACHE_VERSION or (round(tau, 15), D, sign) != key:
        return None
    flat = np.frombuffer(raw, dtype="<f8", offset=head)
    if flat.size != sum((n + 1) ** 2 for n in range(2 * D - 1)):
        return None
    blocks, pos = [], 0
    for n in range(2 * D - 1):
        size = (n + 1) ** 2
        blocks.append(flat[pos:pos + size].reshape(n + 1, n + 1).copy())
        pos += size
    return tuple(blocks)


def _store_blocks(path: Path, key, blocks):
    tau, D, sign = key
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(f".tmp{os.getpid()}")
    with open(tmp, "wb") as fh:
        fh.write(struct.pack("<8sIdii", _CACHE_MAGIC, _CACHE_VERSION, tau, D, sign))
        for b in blocks:
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())
    os.replace(tmp, path)


def build_block_unitary(tau: float, D: int, sign: int = 1) -> BlockUnitary:
    """Blocks of the beam-splitter unitary for input cutoff ``D``.

    Each block is obtained by diagonalizing the number-conserving generator,
    which neither overflows nor suffers the cancellation of the alternating
    binomial sum (:func:`block_element`) at large photon numbers. Results are
    cached per (tau, D, sign) and, if ``BOSONIC_AVC_CACHE_DIR`` is set,
    persisted to disk.
    """
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    if D < 1:
        raise ValueError("cutoff must be at least 1")
    key = _cache_key(tau, D, sign)
    hit = _block_cache.get(key)
    if hit is not None:
        return hit
    with _block_lock:
        hit = _block_cache.get(key)
        if hit is not None:
            return hit
        path = _cache_path(key)
        blocks = _load_blocks(path, key) if path is not None else None
        if blocks is None:
            blocks = _build_blocks(key[0], D, sign)
            if path is not None:
                _store_blocks(path, key, blocks)
        for b in blocks:
            b.setflags(write=False)
        bu = BlockUnitary(key[0], D, sign, blocks)
        _block_cache[key] = bu
        return bu


def clear_block_cache():
    with _block_lock:
        _block_cache.clear()


# ---------------------------------------------------------------------------
# general two-mode channel


def _amplitude_factors(rho: DensityMatrix, rel: float = 1e-16) -> np.ndarray:
    """Columns a_p with rho = sum_p a_p a_p^+ (eigenvectors scaled by sqrt(eigenvalue))."""
    w, v = np.linalg.eigh(rho.entries)
    keep = w > rel * max(w[-1], 1e-300)
    return v[:, keep] * np.sqrt(w[keep])


def _output_diagonal(x: np.ndarray, y: np.ndarray, bu: BlockUnitary) -> np.ndarray:
    D = len(x)
    out = np.zeros(2 * D - 1)
    for n in range(2 * D - 1):
        lo, hi = max(0, n - D + 1), min(n, D - 1)
        n1 = np.arange(lo, hi + 1)
        prob = x[n1] * y[n - n1]
        if not prob.any():
            continue
        out[: n + 1] += (bu.blocks[n][:, lo:hi + 1] ** 2) @ prob
    return out


def _output_general(A: np.ndarray, B: np.ndarray, bu: BlockUnitary, chunk: int = 256) -> np.ndarray:
    D = A.shape[0]
    nb = 2 * D - 1
    r1, r2 = A.shape[1], B.shape[1]
    out = np.zeros((nb, nb), dtype=complex)
    pairs = [(p, q) for p in range(r1) for q in range(r2)]
    m_idx = np.arange(nb)
    for start in range(0, len(pairs), chunk):
        sel = pairs[start:start + chunk]
        P = np.array([p for p, _ in sel])
        Q = np.array([q for _, q in sel])
        Ap, Bq = A[:, P], B[:, Q]                  # (D, c)
        Y = np.zeros((nb, nb, len(sel)), dtype=complex)   # Y[n, m1, pair]
        for n in range(nb):
            lo, hi = max(0, n - D + 1), min(n, D - 1)
            n1 = np.arange(lo, hi + 1)
            V = Ap[n1] * Bq[n - n1]
            Y[n, : n + 1] = bu.blocks[n][:, lo:hi + 1] @ V
        for m2 in range(nb):
            rows = m_idx[: nb - m2]
            Z = Y[rows + m2, rows]                  # (nb - m2, c): <m1, m2| out>
            out[: nb - m2, : nb - m2] += Z @ Z.conj().T
    return out


def apply_bs(rho: DensityMatrix, sigma: DensityMatrix, cfg: ChannelConfig,
             renormalize: bool = True) -> DensityMatrix:
    """Port-1 marginal of U (rho x sigma) U^+.

    ``rho`` enters port 1 (transmitted with amplitude sqrt(tau)), ``sigma``
    port 2. The untruncated output lives on 2D - 1 levels and is exact; it is
    then cut to ``cfg.output_cutoff`` with the lost weight added to the
    deficit (together with both input deficits).
    """
    if rho.dim != sigma.dim:
        raise DimensionMismatch(f"input cutoffs differ: {rho.dim} vs {sigma.dim}")
    if cfg.cutoff is not None and cfg.cutoff != rho.dim:
        raise DimensionMismatch(f"states have cutoff {rho.dim}, config expects {cfg.cutoff}")
    D = rho.dim
    bu = build_block_unitary(cfg.tau, D, cfg.sign)
    if rho.is_diagonal() and sigma.is_diagonal():
        out = np.diag(_output_diagonal(rho.diagonal(), sigma.diagonal(), bu)).astype(complex)
    else:
        out = _output_general(_amplitude_factors(rho), _amplitude_factors(sigma), bu)
        out = 0.5 * (out + out.conj().T)
    full = DensityMatrix(out, rho.trace_deficit + sigma.trace_deficit)
    return full.truncated(cfg.out_dim(D), renormalize=renormalize)


# ---------------------------------------------------------------------------
# semi-classical fast path


def p_representation(jammer: JammerSpec, M: int, Q: int, tau_c: float = 0.0):
    """Coherent amplitudes and weights discretizing the jammer's P-function.

    Rings use an ``M``-point uniform phase grid. The thermal Gaussian is
    written as a PHAV mixture over b^2 = N x with x ~ Exp(1); radial nodes are
    Gauss-Laguerre for the weight exp(-(1 + tau_c N) x), which integrates the
    attenuated Poisson factor exp(-tau_c N x) exactly.
    """
    phis = 2 * np.pi * np.arange(M) / M
    ring = np.exp(1j * phis)
    if jammer.kind == "thermal":
        N = jammer.params[0]
        if N == 0:
            return np.zeros(1, dtype=complex), np.ones(1)
        s = 1.0 + tau_c * N
        x, w = roots_laguerre(Q)
        x = x / s
        # int e^{-x} f dx = int e^{-s x} [e^{(s-1) x} f] dx
        w = w / s * np.exp((s - 1.0) * x)
        radii = np.sqrt(N * x)
        betas = (radii[:, None] * ring[None, :]).ravel()
        weights = np.repeat(w / M, M)
        return betas, weights / weights.sum()
    if jammer.kind == "phav":
        b = jammer.params[0]
        if b == 0:
            return np.zeros(1, dtype=complex), np.ones(1)
        return b * ring, np.full(M, 1.0 / M)
    if jammer.kind == "phav_mixture":
        betas = np.concatenate([b * ring for b, _ in jammer.params])
        weights = np.concatenate([np.full(M, w / M) for _, w in jammer.params])
        return betas, weights
    a, b = jammer.params
    if b == 0:
        return np.array([a], dtype=complex), np.ones(1)
    return a + b * ring, np.full(M, 1.0 / M)


def apply_bs_semiclassical(alpha: complex, jammer: JammerSpec, cfg: ChannelConfig,
                           D_out: int | None = None) -> DensityMatrix:
    """Output for a coherent signal as a mixture of coherent states.

    Each P-function sample beta_j of the jammer contributes
    |sqrt(tau) alpha + sqrt(1-tau) beta_j>.
    """
    if D_out is None:
        if cfg.output_cutoff is not None:
            D_out = cfg.output_cutoff
        elif cfg.cutoff is not None:
            D_out = 2 * cfg.cutoff - 1
        else:
            raise ValueError("need an output cutoff")
    M = cfg.quadrature or 4 * D_out
    Q = cfg.laguerre_nodes or max(64, D_out)
    betas, w = p_representation(jammer, M, Q, cfg.tau_c)
    gammas = math.sqrt(cfg.tau) * alpha + cfg.sign * math.sqrt(cfg.tau_c) * betas
    c = coherent_amplitudes(gammas, D_out)
    out = (c.T * w) @ c.conj()
    out = 0.5 * (out + out.conj().T)
    tr = float(np.trace(out).real)
    return DensityMatrix(out / tr, max(1.0 - tr, 0.0))


def prune(rho: DensityMatrix, d: int) -> DensityMatrix:
    """Pruning channel: keep levels 0..d, move the remaining weight to |0>.

    Returns a state of dimension min(d + 1, dim); the trace is preserved.
    """
    if d < 0:
        raise ValueError("d must be non-negative")
    keep = min(d + 1, rho.dim)
    if keep == rho.dim:
        return rho
    sub = np.array(rho.entries[:keep, :keep])
    outside = rho.trace - float(np.trace(sub).real)
    sub[0, 0] += outside
    return DensityMatrix(sub, rho.trace_deficit)


def channel_N(alpha: complex, jammer: JammerSpec, d: int | None, cfg: ChannelConfig,
              D_out: int | None = None) -> DensityMatrix:
    """Pruned jammed channel: prune_d(BS_tau(|alpha><alpha| x sigma))."""
    out = apply_bs_semiclassical(alpha, jammer, cfg, D_out)
    return out if d is None else prune(out, d)


def idle_output(jammer: JammerSpec, cfg: ChannelConfig, D: int) -> DensityMatrix:
    """|0><0| through the channel: the jammer state attenuated by 1 - tau.

    Built directly from the rescaled P-function, so the jammer itself never
    has to fit into the output cutoff ``D``.
    """
    return jammer.attenuated(cfg.tau_c, cfg.sign).state(D)


# ---------------------------------------------------------------------------
# displacement machinery for ensembles of coherent inputs


def displacement_columns(gammas, rows: int, cols: int) -> np.ndarray:
    """<m|D(gamma)|n> for m < rows, n < cols; shape (P, rows, cols).

    Uses D(gamma)|n> = (a^+ - conj(gamma))^n |gamma> / sqrt(n!). Row m of
    column n only needs rows < m of column n - 1, so every returned entry is
    exact despite the finite row count.
    """
    g = np.atleast_1d(np.asarray(gammas, dtype=complex))
    out = np.empty((len(g), rows, cols), dtype=complex)
    col = coherent_amplitudes(g, rows)
    out[:, :, 0] = col
    sq = np.sqrt(np.arange(rows))
    for n in range(1, cols):
        nxt = -g.conj()[:, None] * col
        nxt[:, 1:] += sq[1:] * col[:, :-1]
        col = nxt / math.sqrt(n)
        out[:, :, n] = col
    return out


class EnsembleChannel:
    """Channel outputs for a fixed constellation, reused across jammers.

    By displacement covariance the output for input |alpha> equals
    D(sqrt(tau) alpha) omega D(sqrt(tau) alpha)^+, where omega is the output
    for vacuum input. The displacement matrices depend only on the
    constellation, so they are computed once; for Fock-diagonal omega the
    average output is a fixed linear combination of precomputed matrices.
    """

    def __init__(self, constellation: Constellation, tau: float, D: int, sign: int = 1):
        self.constellation = constellation
        self.cfg = ChannelConfig(tau, sign=sign)
        self.D = D
        gam = math.sqrt(tau) * constellation.points
        self._disp = displacement_columns(gam, D, D)
        self._basis = None

    @property
    def basis(self) -> np.ndarray:
        # basis[k] = sum_i w_i D_i |k><k| D_i^+
        if self._basis is None:
            w = self.constellation.weights
            basis = np.empty((self.D, self.D, self.D), dtype=complex)
            for k in range(self.D):
                A = self._disp[:, :, k]
                basis[k] = (A.T * w) @ A.conj()
            self._basis = basis
        return self._basis

    def idle(self, jammer: JammerSpec) -> DensityMatrix:
        return idle_output(jammer, self.cfg, self.D)

    def average_output(self, omega: DensityMatrix) -> DensityMatrix:
        if omega.dim != self.D:
            raise DimensionMismatch("idle output cutoff differs from ensemble cutoff")
        if omega.is_diagonal():
            out = np.tensordot(omega.diagonal(), self.basis, axes=1)
        else:
            w = self.constellation.weights
            tmp = self._disp @ omega.entries
            out = np.einsum("i,imk,ink->mn", w, tmp, self._disp.conj(), optimize=True)
        out = 0.5 * (out + out.conj().T)
        tr = float(np.trace(out).real)
        return DensityMatrix(out / tr, omega.trace_deficit + max(1.0 - tr, 0.0))

    def point_outputs(self, omega: DensityMatrix):
        """Per-point outputs D_i omega D_i^+ (unnormalized traces recorded as deficits)."""
        for Dm in self._disp:
            out = Dm @ omega.entries @ Dm.conj().T
            out = 0.5 * (out + out.conj().T)
            tr = float(np.trace(out).real)
            yield DensityMatrix(out / tr, omega.trace_deficit + max(1.0 - tr, 0.0))
