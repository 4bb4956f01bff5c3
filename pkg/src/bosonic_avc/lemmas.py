"""Desk-scale numerical checks of the type-counting, tail and gentle-measurement bounds
used in the coding argument for the jammed channel."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.special import gammainc, gammaln

from .fock import DimensionMismatch

LOG2E = math.log2(math.e)


@dataclass
class CheckResult:
    name: str
    passed: bool
    trials: int = 1
    worst_margin: float = math.inf     # min over trials of (bound side - measured side)
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "trials": self.trials,
                "worst_margin": self.worst_margin, **self.details}


# ---------------------------------------------------------------------------
# types


@dataclass(frozen=True)
class TypeClass:
    """Sequences in [d]^k with symbol counts ``counts``."""

    counts: tuple

    def __post_init__(self):
        if any(c < 0 for c in self.counts) or not self.counts:
            raise ValueError("counts must be non-negative and non-empty")
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))

    @property
    def d(self) -> int:
        return len(self.counts)

    @property
    def k(self) -> int:
        return sum(self.counts)

    @property
    def empirical(self) -> tuple:
        return tuple(Fraction(c, self.k) for c in self.counts)

    @property
    def cardinality(self) -> int:
        out, rest = 1, self.k
        for c in self.counts:
            out *= math.comb(rest, c)
            rest -= c
        return out

    def sequence_prob(self, seq) -> Fraction:
        """m^{(x) k}(x^k) in exact arithmetic."""
        p = Fraction(1)
        for s in seq:
            p *= Fraction(self.counts[s], self.k)
        return p

    def members(self):
        """Enumerate T_m (lexicographic)."""
        for seq in itertools.product(range(self.d), repeat=self.k):
            if all(seq.count(i) == c for i, c in enumerate(self.counts)):
                yield seq

    def entropy_power(self) -> Fraction:
        """2^{k H(m)} = k^k / prod m_i^{m_i}, exactly."""
        den = 1
        for c in self.counts:
            den *= c ** c
        return Fraction(self.k ** self.k, den)


def all_types(d: int, k: int):
    """All TypeClass with alphabet size d and blocklength k."""
    for cut in itertools.combinations(range(k + d - 1), d - 1):
        prev, counts = -1, []
        for c in cut:
            counts.append(c - prev - 1)
            prev = c
        counts.append(k + d - 2 - prev)
        yield TypeClass(tuple(counts))


def type_size_bounds_check(t: TypeClass) -> bool:
    """(1+k)^{-d} 2^{kH} <= |T| <= 2^{kH}, in integers."""
    card, ep = t.cardinality, t.entropy_power()
    return card <= ep and card * (1 + t.k) ** t.d >= ep


def lemma5_type_bound_check(t: TypeClass, exponent: int | None = None,
                            enumerate_members: bool = True) -> CheckResult:
    """1 / |T_m| <= (2k)^e m^{(x) k}(x^k) for every x^k in T_m (e defaults to d).

    Exact rational arithmetic. With ``enumerate_members`` each sequence is
    checked separately, otherwise the common value is used.
    """
    e = t.d if exponent is None else exponent
    lhs = Fraction(1, t.cardinality)
    scale = (2 * t.k) ** e
    seqs = t.members() if enumerate_members else [
        tuple(i for i, c in enumerate(t.counts) for _ in range(c))]
    ok, worst, n = True, math.inf, 0
    for seq in seqs:
        n += 1
        rhs = scale * t.sequence_prob(seq)
        ok &= lhs <= rhs
        worst = min(worst, float(rhs - lhs))
    if enumerate_members and n != t.cardinality:
        raise AssertionError("enumeration does not match multinomial count")
    return CheckResult("type_flattening", ok, n, worst, {"counts": list(t.counts), "exponent": e})


# ---------------------------------------------------------------------------
# local-to-global trace bound


def partial_marginal(rho: np.ndarray, d: int, k: int, i: int) -> np.ndarray:
    """Reduced state of system ``i`` of a k-partite state on (C^d)^{(x) k}."""
    if rho.shape != (d**k, d**k):
        raise DimensionMismatch(f"expected shape {(d**k, d**k)}, got {rho.shape}")
    t = rho.reshape((d,) * (2 * k))
    keep = [i, k + i]
    rest = [j for j in range(k) if j != i]
    t = np.moveaxis(t, keep, [0, 1])
    # trace out the remaining bra/ket pairs, which now sit after the first two axes
    r = t.reshape(d, d, d ** (k - 1), d ** (k - 1)) if rest else t.reshape(d, d, 1, 1)
    return np.einsum("abcc->ab", r)


def _tensor_power_prefix(Q: np.ndarray, k: int, i: int) -> np.ndarray:
    d = Q.shape[0]
    out = np.ones((1, 1))
    for j in range(k):
        out = np.kron(out, Q if j < i else np.eye(d))
    return out


def lemma1_check(rho: np.ndarray, Q: np.ndarray, k: int) -> CheckResult:
    """tr(Q^{(x) k} rho) >= 1 - k eps with eps = 1 - min_i tr(Q rho_i).

    Also checks every prefix Q^{(x) i} (x) 1: tr >= 1 - i eps.
    """
    d = Q.shape[0]
    if d**k > 4096:
        raise ValueError("state too large for a dense check")
    eps = 1.0 - min(float(np.real(np.trace(Q @ partial_marginal(rho, d, k, i)))) for i in range(k))
    chain = []
    for i in range(1, k + 1):
        val = float(np.real(np.trace(_tensor_power_prefix(Q, k, i) @ rho)))
        chain.append(val - (1.0 - i * eps))
    ok = all(c >= -1e-12 for c in chain)
    return CheckResult("local_to_global", ok, 1, min(chain), {"eps": eps, "chain_margins": chain})


def random_projector(d: int, rank: int, rng) -> np.ndarray:
    z = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    q, _ = np.linalg.qr(z)
    v = q[:, :rank]
    return v @ v.conj().T


def random_concentrated_state(Q: np.ndarray, k: int, rng, leak: float = 0.2,
                              rank: int = 3) -> np.ndarray:
    """Correlated k-partite mixed state mostly supported on the range of Q^{(x) k}."""
    d = Q.shape[0]
    Qk = _tensor_power_prefix(Q, k, k)
    rho = np.zeros((d**k, d**k), dtype=complex)
    for _ in range(rank):
        z = rng.normal(size=d**k) + 1j * rng.normal(size=d**k)
        inside = Qk @ z
        v = inside / np.linalg.norm(inside) + rng.uniform(0, leak) * z / np.linalg.norm(z)
        v /= np.linalg.norm(v)
        rho += rng.uniform(0.1, 1.0) * np.outer(v, v.conj())
    return rho / np.trace(rho).real


def lemma1_random_trials(trials: int = 500, d: int = 4, k: int = 3, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst, ok = math.inf, True
    for _ in range(trials):
        Q = random_projector(d, int(rng.integers(1, d)), rng)
        rho = random_concentrated_state(Q, k, rng)
        r = lemma1_check(rho, Q, k)
        ok &= r.passed
        worst = min(worst, r.worst_margin)
    return CheckResult("local_to_global", ok, trials, worst, {"d": d, "k": k})


# ---------------------------------------------------------------------------
# permutation averaging of product jammer states


def symmetrize_marginal_check(diagonals, P: float | None = None, tol: float = 1e-12) -> CheckResult:
    """Permutation average of a product of k Fock-diagonal states.

    Builds the joint distribution on [D]^k, averages it over all k!
    permutations of the systems and compares the single-system marginals with
    the arithmetic mean of the factors. Also checks that total energy is
    unchanged and, given ``P`` with total energy <= kP, that the marginal
    energy is at most P.
    """
    ps = [np.asarray(p, dtype=float) for p in diagonals]
    k, D = len(ps), len(ps[0])
    if k > 6 or D**k > 10**6:
        raise ValueError("too large for the dense permutation average")
    joint = ps[0]
    for p in ps[1:]:
        joint = np.multiply.outer(joint, p)
    perms = list(itertools.permutations(range(k)))
    avg = sum(np.transpose(joint, perm) for perm in perms) / len(perms)
    n = np.arange(D)
    mean = sum(ps) / k
    marg_err, energies = 0.0, []
    for i in range(k):
        axes = tuple(j for j in range(k) if j != i)
        m = avg.sum(axis=axes)
        marg_err = max(marg_err, float(np.abs(m - mean).max()))
        energies.append(float(m @ n))
    total_before = sum(float(p @ n) for p in ps)
    total_after = sum(energies)
    ok = marg_err <= tol and abs(total_before - total_after) <= tol * max(1.0, total_before)
    details = {"k": k, "marginal_error": marg_err, "energy_total": total_before,
               "energy_total_symmetrized": total_after, "marginal_energy": energies[0]}
    margin = tol - marg_err
    if P is not None:
        if total_before > k * P * (1 + 1e-12):
            raise ValueError("product state exceeds the total energy budget kP")
        ok &= max(energies) <= P * (1 + 1e-12)
        margin = min(margin, P - max(energies))
    return CheckResult("permutation_marginal", bool(ok), 1, margin, details)


# ---------------------------------------------------------------------------
# photon-number tails


def log_poisson_tail(mean: float, N: int) -> float:
    """ln P(X >= N) for X ~ Poisson(mean), summed in log space.

    Terms are scaled by the largest one and added with math.fsum, so tails
    far below the double-precision range keep full relative accuracy.
    """
    if N <= 0:
        return 0.0
    if mean == 0:
        return -math.inf
    # terms decay at least geometrically once n > mean; sum until negligible
    n_hi = int(max(N, mean) + 50 + 20 * math.sqrt(mean + 1))
    n = np.arange(N, n_hi + 1, dtype=float)
    logs = n * math.log(mean) - mean - gammaln(n + 1)
    top = float(logs.max())
    return top + math.log(math.fsum(np.exp(logs - top)))


def poisson_tail_reference(mean: float, N: int) -> float:
    """Same tail through the regularized incomplete gamma (linear scale)."""
    if N <= 0:
        return 1.0
    return float(gammainc(N, mean))


def lemma3_bounds(N: int, K1: float) -> tuple[float, float]:
    """log2 of the single-ring bound 4^-N and of the mixed bound 2^{2 - N min(2, log2(e) / (22 K1))}."""
    rate = 2.0 if K1 == 0 else min(2.0, LOG2E / (22.0 * K1))
    return -2.0 * N, 2.0 - N * rate


def lemma3_tail_check(radii, weights, N: int, K1: float | None = None) -> CheckResult:
    """Photon-number tail of a phase-averaged coherent mixture beyond N - 1.

    ``radii``/``weights`` describe the mixing measure on |beta|. The tail
    1 - tr P_N rho with P_N = sum_{n < N} |n><n| is compared (in log2) with
    4^{-N}, which applies to rings of |beta|^2 <= N / 22, and with the mixed
    bound for tail constant ``K1`` (defaults to the smallest valid one).
    """
    from .fock import min_subgaussian_K1

    r = np.atleast_1d(np.asarray(radii, dtype=float))
    w = np.atleast_1d(np.asarray(weights, dtype=float))
    w = w / w.sum()
    if K1 is None:
        K1 = min_subgaussian_K1(r, w)
    logs = [log_poisson_tail(b * b, N) + math.log(wi) for b, wi in zip(r, w) if wi > 0]
    finite = [x for x in logs if x > -math.inf]
    if finite:
        top = max(finite)
        log2_tail = (top + math.log(math.fsum(math.exp(x - top) for x in finite))) / math.log(2)
    else:
        log2_tail = -math.inf
    ref = float(np.dot(w, [poisson_tail_reference(b * b, N) for b in r]))
    ring_b, mixed_b = lemma3_bounds(N, K1)
    in_range = N >= 44 and bool(np.all(r**2 <= N / 22.0 * (1 + 1e-12)))
    ok_mixed = log2_tail <= mixed_b
    ok_ring = log2_tail <= ring_b if in_range else True
    details = {"N": N, "K1": K1, "log2_tail": log2_tail, "log2_ring_bound": ring_b,
               "log2_mixed_bound": mixed_b, "ring_bound_applies": in_range,
               "tail_reference": ref}
    margin = min(mixed_b - log2_tail, (ring_b - log2_tail) if in_range else math.inf)
    return CheckResult("photon_tail", bool(ok_mixed and ok_ring), 1, margin, details)


def thermal_tail_check(N_th: float, N: int) -> CheckResult:
    """Tail of a thermal state (Gaussian mixing measure, tail constant N_th) beyond N - 1."""
    log2_tail = N * math.log2(N_th / (N_th + 1.0)) if N_th > 0 else -math.inf
    ring_b, mixed_b = lemma3_bounds(N, N_th)
    return CheckResult("photon_tail_thermal", log2_tail <= mixed_b, 1, mixed_b - log2_tail,
                       {"N": N, "K1": N_th, "log2_tail": log2_tail, "log2_mixed_bound": mixed_b})


# ---------------------------------------------------------------------------
# concentration of types under a permutation-averaged product


def concentration_bound(k: int, d: int, eps: float, C: float) -> float:
    """C (2k)^d exp(-eps^2 k)."""
    return C * math.exp(d * math.log(2 * k) - eps * eps * k)


def lemma4_concentration_check(ps, eps: float, trials: int, seed: int = 0) -> CheckResult:
    """Monte Carlo estimate of P(||type - pbar||_1 > eps) against the bound.

    ``ps`` is a (k, d) array of per-position distributions. The type of a
    sample from the permutation-averaged product has the same law as under
    the product itself, so positions are grouped by distribution and each
    group is drawn as one multinomial. Reported against C = 2 and C = 2d.
    """
    ps = np.asarray(ps, dtype=float)
    k, d = ps.shape
    pbar = ps.mean(axis=0)
    rng = np.random.default_rng(seed)
    uniq, counts = np.unique(ps, axis=0, return_counts=True)
    tot = np.zeros((trials, d), dtype=np.int64)
    for p, c in zip(uniq, counts):
        tot += rng.multinomial(int(c), p / p.sum(), size=trials)
    dev = np.abs(tot / k - pbar).sum(axis=1)
    # types exactly at distance eps are inside; guard against rounding at the boundary
    emp = float(np.mean(dev > eps * (1 + 1e-12)))
    b2, b2d = concentration_bound(k, d, eps, 2.0), concentration_bound(k, d, eps, 2.0 * d)
    # Monte Carlo slack of three binomial standard errors
    se = 3.0 * math.sqrt(max(emp * (1 - emp), 1.0 / trials) / trials)
    ok = emp <= b2 + se
    return CheckResult("type_concentration", ok, trials, b2 - emp,
                       {"k": k, "d": d, "eps": eps, "empirical": emp, "bound_C2": b2,
                        "bound_C2d": b2d, "holds_C2": emp <= b2 + se, "holds_C2d": emp <= b2d + se})


# ---------------------------------------------------------------------------
# gentle measurement


def trace_norm(A: np.ndarray) -> float:
    return float(np.abs(np.linalg.eigvalsh(0.5 * (A + A.conj().T))).sum())


def gentle_operator_check(rho: np.ndarray, P: np.ndarray) -> CheckResult:
    """||P rho P - rho||_1 <= 2 sqrt(tr((1 - P) rho))."""
    lhs = trace_norm(P @ rho @ P - rho)
    miss = max(float(np.real(np.trace(rho) - np.trace(P @ rho))), 0.0)
    rhs = 2.0 * math.sqrt(miss)
    return CheckResult("gentle_operator", lhs <= rhs + 1e-12, 1, rhs - lhs,
                       {"distance": lhs, "bound": rhs})


def random_density(D: int, rng, rank: int | None = None) -> np.ndarray:
    r = D if rank is None else rank
    z = rng.normal(size=(D, r)) + 1j * rng.normal(size=(D, r))
    rho = z @ z.conj().T
    return rho / np.trace(rho).real


def gentle_random_trials(trials: int = 500, max_dim: int = 16, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    ok, worst = True, math.inf
    for _ in range(trials):
        D = int(rng.integers(2, max_dim + 1))
        rho = random_density(D, rng, int(rng.integers(1, D + 1)))
        P = random_projector(D, int(rng.integers(1, D + 1)), rng)
        r = gentle_operator_check(rho, P)
        ok &= r.passed
        worst = min(worst, r.worst_margin)
    return CheckResult("gentle_operator", ok, trials, worst, {"max_dim": max_dim})


# ---------------------------------------------------------------------------
# suite


def run_suite(seed: int = 0, trials_lemma1: int = 500, trials_gentle: int = 500,
              trials_concentration: int = 100_000) -> list[CheckResult]:
    """All checks at their default desk-scale budgets."""
    out = []
    types_ok, n_types = True, 0
    for k in range(1, 7):
        for d in range(1, 4):
            for t in all_types(d, k):
                n_types += 1
                types_ok &= lemma5_type_bound_check(t).passed and type_size_bounds_check(t)
    out.append(CheckResult("type_flattening_exhaustive", types_ok, n_types))
    out.append(lemma1_random_trials(trials_lemma1, 4, 3, seed))
    rng = np.random.default_rng(seed)
    sym_ok = True
    for k in (2, 3, 4):
        ps = [rng.dirichlet(np.ones(4)) for _ in range(k)]
        sym_ok &= symmetrize_marginal_check(ps).passed
    out.append(CheckResult("permutation_marginal", sym_ok, 3))
    tail_ok, worst = True, math.inf
    for b2 in (0.5, 1.0, 2.0):
        for N in (44, 60, 88):
            r = lemma3_tail_check([math.sqrt(b2)], [1.0], N)
            tail_ok &= r.passed
            worst = min(worst, r.worst_margin)
    out.append(CheckResult("photon_tail", tail_ok, 9, worst))
    out.append(lemma4_concentration_check(np.tile([0.5, 0.5], (1000, 1)), 0.1,
                                          trials_concentration, seed))
    out.append(gentle_random_trials(trials_gentle, 16, seed))
    return out
