"""Small-blocklength codes over the jammed channel: codebooks, pretty-good
measurement decoding, worst-case jammer search and common-randomness averaging."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .beamsplitter import ChannelConfig, apply_bs_semiclassical
from .capacity import gaussian_constellation, golden_section
from .fock import Constellation, DimensionMismatch, JammerSpec, coherent_amplitudes, min_subgaussian_K1

POVM_POS_TOL = 1e-10
POVM_SUM_TOL = 1e-8


class RejectionBudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class CodingConfig:
    tau: float
    D: int = 8                   # per-mode cutoff
    quadrature: int | None = None
    sign: int = 1

    def channel(self) -> ChannelConfig:
        return ChannelConfig(self.tau, output_cutoff=self.D, quadrature=self.quadrature,
                             sign=self.sign)


# ---------------------------------------------------------------------------
# jammer strategies


@dataclass(frozen=True)
class JammerStrategy:
    """Product jamming strategy, one JammerSpec per channel use."""

    specs: tuple

    @classmethod
    def iid(cls, spec: JammerSpec, k: int) -> "JammerStrategy":
        return cls(tuple([spec] * k))

    @property
    def k(self) -> int:
        return len(self.specs)

    @property
    def total_energy(self) -> float:
        return float(sum(s.mean_energy for s in self.specs))

    @property
    def is_coherent_product(self) -> bool:
        return all(s.kind == "dphav" and s.params[1] == 0 for s in self.specs)

    def tail_constant(self) -> float:
        """K1 of the empirical mixing measure.

        For coherent products this is the exact value for the empirical
        distribution of the amplitudes; otherwise the largest per-use
        constant, which bounds the tail of the uniform mixture.
        """
        if self.is_coherent_product:
            return min_subgaussian_K1([abs(s.params[0]) for s in self.specs], np.ones(self.k))
        return max(s.subgaussian_K for s in self.specs)

    def admissible(self, P: float) -> bool:
        slack = P * (1 + 1e-12) + 1e-15
        return self.total_energy <= self.k * slack and self.tail_constant() <= slack

    def permuted(self, perm) -> "JammerStrategy":
        return JammerStrategy(tuple(self.specs[p] for p in perm))

    def to_dict(self) -> dict:
        return {"specs": [s.to_dict() for s in self.specs]}


# ---------------------------------------------------------------------------
# codebooks


@dataclass(frozen=True, eq=False)
class Codebook:
    codewords: np.ndarray          # (M, k) complex
    E: float
    decoder: tuple                 # M + 1 POVM elements on the k-fold space, last = fail
    cfg: CodingConfig
    meta: dict = field(default_factory=dict)

    @property
    def M(self) -> int:
        return self.codewords.shape[0]

    @property
    def k(self) -> int:
        return self.codewords.shape[1]

    def validate(self):
        for x in self.codewords:
            if np.mean(np.abs(x) ** 2) > self.E * (1 + 1e-12):
                raise ValueError("codeword violates the per-symbol energy budget")
        total = sum(self.decoder)
        dim = total.shape[0]
        if np.abs(total - np.eye(dim)).max() > POVM_SUM_TOL:
            raise ValueError("decoder elements do not sum to the identity")
        for el in self.decoder:
            if np.linalg.eigvalsh(el).min() < -POVM_POS_TOL:
                raise ValueError("decoder element is not positive")
        return self


def mode_output(alpha: complex, spec: JammerSpec, cfg: CodingConfig) -> np.ndarray:
    return apply_bs_semiclassical(alpha, spec, cfg.channel(), D_out=cfg.D).entries


def kron_all(mats) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for m in mats:
        out = np.kron(out, m)
    return out


def codeword_outputs(codewords, strategy: JammerStrategy, cfg: CodingConfig, cache=None):
    """k-fold output state for every codeword under a product strategy."""
    cw = np.atleast_2d(codewords)
    if cw.shape[1] != strategy.k:
        raise DimensionMismatch(f"blocklength {cw.shape[1]} vs strategy length {strategy.k}")
    cache = {} if cache is None else cache

    def single(a, s):
        key = (complex(a), s)
        if key not in cache:
            cache[key] = mode_output(a, s, cfg)
        return cache[key]

    return [kron_all(single(a, s) for a, s in zip(x, strategy.specs)) for x in cw]


def _factor(rho: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    keep = w > 0
    return v[:, keep] * np.sqrt(w[keep])


def pgm_decoder(states, rel_tol: float = 1e-9) -> tuple:
    """Pretty-good measurement S^{-1/2} rho_m S^{-1/2} plus a fail element.

    With rho_m = A_m A_m^+ and the stacked A = U s V^+, the element for m is
    B_m B_m^+ with B_m = U V_m^+, which is S^{-1/2} rho_m S^{-1/2} on the
    support of S = sum_m rho_m and positive by construction. The fail
    element is the projector I - U U^+ onto the kernel. Singular values below
    sqrt(rel_tol) times the largest count as kernel.
    """
    factors = [_factor(np.asarray(r)) for r in states]
    A = np.hstack(factors)
    U, sv, Vh = np.linalg.svd(A, full_matrices=False)
    keep = sv > math.sqrt(rel_tol) * max(sv[0], 1e-300)
    U, Vh = U[:, keep], Vh[keep]
    elems, col = [], 0
    for F in factors:
        B = U @ Vh[:, col:col + F.shape[1]]
        col += F.shape[1]
        elems.append(B @ B.conj().T)
    fail = np.eye(A.shape[0]) - U @ U.conj().T
    fail = 0.5 * (fail + fail.conj().T)
    return tuple(elems) + (fail,)


def _code_decoder(cw: np.ndarray, design: JammerSpec, cfg: CodingConfig) -> tuple:
    """PGM for the design outputs; a single message is always decoded."""
    if cw.shape[0] == 1:
        dim = cfg.D ** cw.shape[1]
        return (np.eye(dim, dtype=complex), np.zeros((dim, dim), dtype=complex))
    return pgm_decoder(codeword_outputs(cw, JammerStrategy.iid(design, cw.shape[1]), cfg))


def draw_codebook(k: int, M: int, E: float, cfg: CodingConfig,
                  base: Constellation | None = None, delta: float = math.inf,
                  seed: int = 0, design_jammer: JammerSpec | None = None,
                  max_draws: int = 100_000, spacing: float = 0.5) -> Codebook:
    """Random codebook with i.i.d. symbols from ``base`` and a PGM decoder.

    ``base`` defaults to the binned Gaussian of mean energy E. A drawn
    codeword is kept only if its per-symbol average energy is at most E and
    its empirical symbol distribution is within ``delta`` (l1) of the base
    weights. The decoder is the PGM for the outputs under ``design_jammer``
    (vacuum by default).
    """
    if cfg.D ** k > 4096:
        raise ValueError(f"k-fold space of dimension {cfg.D ** k} too large")
    if M < 1 or k < 1:
        raise ValueError("need k >= 1 and M >= 1")
    base = base or gaussian_constellation(E, spacing)
    rng = np.random.default_rng(seed)
    pts, w = base.points, base.weights
    cw, draws = [], 0
    while len(cw) < M:
        if draws >= max_draws:
            raise RejectionBudgetExceeded(f"only {len(cw)} of {M} codewords after {draws} draws")
        draws += 1
        idx = rng.choice(len(pts), size=k, p=w)
        x = pts[idx]
        if np.mean(np.abs(x) ** 2) > E * (1 + 1e-12):
            continue
        if math.isfinite(delta):
            emp = np.bincount(idx, minlength=len(pts)) / k
            if np.abs(emp - w).sum() > delta:
                continue
        cw.append(x)
    cw = np.array(cw)
    design = design_jammer or JammerSpec.vacuum()
    dec = _code_decoder(cw, design, cfg)
    return Codebook(cw, E, dec, cfg, {"draws": draws, "delta": delta, "design_jammer": design.label(),
                                      "energy_constraint": "per-symbol average"})


def codebook_from_words(codewords, E: float, cfg: CodingConfig,
                        design_jammer: JammerSpec | None = None) -> Codebook:
    cw = np.atleast_2d(np.asarray(codewords, dtype=complex))
    design = design_jammer or JammerSpec.vacuum()
    dec = _code_decoder(cw, design, cfg)
    return Codebook(cw, E, dec, cfg, {"design_jammer": design.label()})


# ---------------------------------------------------------------------------
# success probabilities


def _success(decoder, states) -> float:
    return float(np.mean([np.real(np.vdot(D, rho)) for D, rho in zip(decoder, states)]))


def success_probability(code: Codebook, strategy: JammerStrategy) -> float:
    """(1 / M) sum_m tr(D_m N^{(x) k}(x_m, sigma)) for one product strategy."""
    return _success(code.decoder, codeword_outputs(code.codewords, strategy, code.cfg))


def helstrom_success(rho0: np.ndarray, rho1: np.ndarray) -> float:
    """Optimal equal-prior discrimination: (1 + ||rho0 - rho1||_1 / 2) / 2."""
    diff = 0.5 * (rho0 - rho1 + (rho0 - rho1).conj().T)
    return 0.5 * (1.0 + 0.5 * float(np.abs(np.linalg.eigvalsh(diff)).sum()))


def helstrom_pure(overlap_sq: float) -> float:
    return 0.5 * (1.0 + math.sqrt(max(1.0 - overlap_sq, 0.0)))


@dataclass
class WorstCase:
    value: float
    strategy: JammerStrategy
    per_family: dict


def worst_case_jammer(code: Codebook, families, P: float, coherent_phases: int = 8) -> WorstCase:
    """Smallest success probability over i.i.d. admissible strategies from ``families``.

    Families: vacuum, thermal (N in [0, P]), phav (b^2 up to P ln 2) and
    coherent (the same amplitude in every use, |beta|^2 up to P ln 2, on a
    phase grid). Inadmissible strategies are discarded before evaluation.
    The result upper-bounds the true worst case.
    """
    k = code.k
    cache: dict = {}

    def ps(spec):
        strat = JammerStrategy.iid(spec, k)
        if not strat.admissible(P):
            return math.inf
        return _success(code.decoder, codeword_outputs(code.codewords, strat, code.cfg, cache))

    per = {}
    for fam in families:
        if fam == "vacuum":
            s = JammerSpec.vacuum()
            per[fam] = (ps(s), s)
        elif fam == "thermal":
            x, v, _ = golden_section(lambda n: ps(JammerSpec.thermal(n)), 0.0, P, tol=1e-4)
            per[fam] = (v, JammerSpec.thermal(x))
        elif fam == "phav":
            top = P * math.log(2.0)
            x, v, _ = golden_section(lambda b2: ps(JammerSpec.phav(math.sqrt(b2))), 0.0, top, tol=1e-4)
            per[fam] = (v, JammerSpec.phav(math.sqrt(x)))
        elif fam == "coherent":
            top = P * math.log(2.0)
            best = (math.inf, None)
            for j in range(coherent_phases):
                ph = np.exp(2j * np.pi * j / coherent_phases)
                x, v, _ = golden_section(
                    lambda b2: ps(JammerSpec.dphav(math.sqrt(b2) * ph, 0.0)), 0.0, top, tol=1e-4)
                best = min(best, (v, JammerSpec.dphav(math.sqrt(x) * ph, 0.0)), key=lambda t: t[0])
            per[fam] = best
        else:
            raise ValueError(f"unknown jammer family {fam!r}")
    name = min(per, key=lambda f: per[f][0])
    v, spec = per[name]
    return WorstCase(v, JammerStrategy.iid(spec, k), {f: (p[0], p[1].label()) for f, p in per.items()})


# ---------------------------------------------------------------------------
# common randomness


def rotation(thetas, D: int) -> np.ndarray:
    n = np.arange(D)
    return kron_all(np.diag(np.exp(1j * t * n)) for t in thetas)


def permutation_operator(perm, D: int) -> np.ndarray:
    """U_pi sending system i to position perm[i] on the k-fold space."""
    k = len(perm)
    dim = D**k
    idx = np.arange(dim).reshape((D,) * k)
    # output tensor axis perm[i] carries input axis i
    inv = np.argsort(perm)
    moved = np.transpose(idx, inv).ravel()
    U = np.zeros((dim, dim))
    U[np.arange(dim), moved] = 1.0
    return U


@dataclass
class CRResult:
    mean: float
    stderr: float
    samples: int
    symmetrized: float

    @property
    def z(self) -> float:
        diff = self.mean - self.symmetrized
        # constant samples: the spread is pure rounding
        if abs(diff) <= 1e-12:
            return 0.0
        return diff / self.stderr if self.stderr > 0 else math.copysign(math.inf, diff)


def _rotated(spec: JammerSpec, phi: float) -> JammerSpec:
    if spec.kind == "dphav":
        a, b = spec.params
        return JammerSpec.dphav(a * np.exp(1j * phi), b)
    return spec


def symmetrized_success(code: Codebook, strategy: JammerStrategy, phases: int = 64) -> float:
    """Success against the phase-averaged, permutation-averaged jammer.

    Success is multilinear in the per-use jammer states, so the average over
    permutations of products of phase-averaged outputs is exact; phase
    averages use a uniform grid (exact for phase-symmetric components).
    """
    cfg = code.cfg
    k = code.k

    def avg_out(a, spec):
        if spec.is_phase_symmetric:
            return mode_output(a, spec, cfg)
        phis = 2 * np.pi * np.arange(phases) / phases
        return sum(mode_output(a, _rotated(spec, p), cfg) for p in phis) / phases

    cache = {}
    total = 0.0
    perms = list(itertools.permutations(range(k)))
    for perm in perms:
        specs = [strategy.specs[p] for p in perm]
        states = []
        for x in code.codewords:
            mats = []
            for a, s in zip(x, specs):
                key = (complex(a), s)
                if key not in cache:
                    cache[key] = avg_out(a, s)
                mats.append(cache[key])
            states.append(kron_all(mats))
        total += _success(code.decoder, states)
    return total / len(perms)


def cr_sample_success(code: Codebook, strategy: JammerStrategy, thetas, perm) -> float:
    """Success of the code randomized by phases ``thetas`` and permutation ``perm``."""
    D = code.cfg.D
    perm = np.asarray(perm)
    # encoder: rotate symbol i by theta_i, then move it to position perm[i]
    sent = np.empty_like(code.codewords)
    sent[:, perm] = code.codewords * np.exp(1j * np.asarray(thetas))
    W = permutation_operator(perm, D) @ rotation(thetas, D)
    dec = [W @ el @ W.conj().T for el in code.decoder[:-1]]
    return _success(dec, codeword_outputs(sent, strategy, code.cfg))


def cr_average(code: Codebook, strategy: JammerStrategy, samples: int, seed: int = 0,
               symmetrized_phases: int = 64) -> CRResult:
    """Monte Carlo success of the randomized code against a fixed strategy.

    Each sample draws phases theta^k and a permutation pi; the codeword
    symbols are rotated and permuted before transmission and the decoder is
    conjugated by the same operations. The jammer is left untouched. The
    mean is compared with :func:`symmetrized_success`.
    """
    if samples < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    vals = np.empty(samples)
    for s in range(samples):
        thetas = rng.uniform(0, 2 * np.pi, size=code.k)
        perm = rng.permutation(code.k)
        vals[s] = cr_sample_success(code, strategy, thetas, perm)
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
    return CRResult(mean, se, samples, symmetrized_success(code, strategy, symmetrized_phases))
