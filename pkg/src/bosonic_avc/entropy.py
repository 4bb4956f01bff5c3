"""Entropic functionals, in bits."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .beamsplitter import ChannelConfig, EnsembleChannel, apply_bs, channel_N
from .fock import Constellation, DensityMatrix, JammerSpec, choose_cutoff, make_vacuum

NEG_EIG_TOL = 1e-10
SUPPORT_TOL = 1e-13


class NegativeEigenvalue(ValueError):
    pass


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class EntropyReport:
    value_bits: float
    eigenvalue_floor: float
    clipped_mass: float

    def __float__(self):
        return self.value_bits


def spectrum(rho: DensityMatrix) -> np.ndarray:
    if rho.is_diagonal():
        return np.sort(rho.diagonal())
    return np.linalg.eigvalsh(rho.entries)


def _xlogx_sum(lam: np.ndarray) -> float:
    pos = lam[lam > 0]
    return float(-np.sum(pos * np.log2(pos)))


def von_neumann_entropy(rho: DensityMatrix) -> EntropyReport:
    lam = spectrum(rho)
    floor = float(lam.min())
    if floor < -NEG_EIG_TOL:
        raise NegativeEigenvalue(f"eigenvalue {floor:.3e} below -{NEG_EIG_TOL:g}")
    neg = lam < 0
    clipped = float(-lam[neg].sum())
    lam = np.where(neg, 0.0, lam)
    return EntropyReport(max(_xlogx_sum(lam), 0.0), floor, clipped)


def entropy_bits(rho: DensityMatrix) -> float:
    return von_neumann_entropy(rho).value_bits


def relative_entropy(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """D(rho || sigma) in bits; ``math.inf`` if supp(rho) is not inside supp(sigma)."""
    if rho.dim != sigma.dim:
        from .fock import DimensionMismatch

        raise DimensionMismatch(f"dims differ: {rho.dim} vs {sigma.dim}")
    ls, vs = np.linalg.eigh(sigma.entries)
    outside = ls < SUPPORT_TOL
    # weight of rho on the kernel of sigma
    ker = vs[:, outside]
    leak = float(np.real(np.trace(ker.conj().T @ rho.entries @ ker))) if ker.size else 0.0
    if leak > SUPPORT_TOL:
        return math.inf
    lr = np.clip(np.linalg.eigvalsh(rho.entries), 0.0, None)
    neg_s = -_xlogx_sum(lr)  # tr rho log rho
    logs = np.where(outside, 0.0, np.log2(np.where(outside, 1.0, ls)))
    cross = float(np.dot(np.real(np.einsum("ij,jk,ki->i", vs.conj().T, rho.entries, vs)), logs))
    return max(neg_s - cross, 0.0)


def binary_entropy(p: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"binary entropy needs p in [0, 1], got {p}")
    if p in (0.0, 1.0):
        return 0.0
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def gordon_g(x: float) -> float:
    """Entropy (bits) of the thermal state with mean photon number ``x``."""
    if x < 0:
        raise DomainError(f"g is defined for x >= 0, got {x}")
    if x == 0:
        return 0.0
    return (x + 1) * math.log2(x + 1) - x * math.log2(x)


def gordon_g_inv(y: float, tol: float = 1e-13) -> float:
    """Inverse of :func:`gordon_g` by bracketed bisection and one Newton polish."""
    if y < 0:
        raise DomainError(f"g^-1 is defined for y >= 0, got {y}")
    if y == 0:
        return 0.0
    lo, hi = 0.0, 2.0**y
    while gordon_g(hi) < y:
        hi *= 2.0
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if gordon_g(mid) < y:
            lo = mid
        else:
            hi = mid
    x = 0.5 * (lo + hi)
    if x > 0:
        slope = math.log2((x + 1) / x)
        cand = x - (gordon_g(x) - y) / slope
        if cand > 0 and abs(gordon_g(cand) - y) < abs(gordon_g(x) - y):
            x = cand
    return x


def L_lambda(X: DensityMatrix, lam: float, sign: int = 1) -> float:
    """g^-1 of the entropy of X sent through port 1 with transmissivity lam, vacuum in port 2."""
    out = apply_bs(X, make_vacuum(X.dim), ChannelConfig(lam, sign=sign))
    return gordon_g_inv(entropy_bits(out))


def R_lambda(X: DensityMatrix, lam: float, sign: int = 1) -> float:
    """g^-1 of the entropy of X sent through port 2 (transmissivity 1 - lam), vacuum in port 1."""
    out = apply_bs(make_vacuum(X.dim), X, ChannelConfig(lam, sign=sign))
    return gordon_g_inv(entropy_bits(out))


def default_cutoff(c: Constellation, jammer: JammerSpec, tau: float, tol: float = 1e-11) -> int:
    """Cutoff covering the average output (thermal tail) and the largest displaced point (Poisson tail)."""
    peak = float(np.max(np.abs(c.points)) ** 2) if len(c) else 0.0
    mean_out = tau * c.mean_energy + (1 - tau) * jammer.mean_energy
    return max(choose_cutoff(mean_out, tol, "thermal"),
               choose_cutoff(tau * peak + (1 - tau) * jammer.mean_energy, tol, "poisson"), 2)


def holevo_chi(c: Constellation, jammer: JammerSpec, cfg: ChannelConfig,
               method: str = "displacement", D: int | None = None,
               prune_d: int | None = None) -> float:
    """Holevo quantity S(sum_i w_i N(alpha_i)) - sum_i w_i S(N(alpha_i)), in bits.

    ``method="displacement"`` uses displacement covariance: each output is a
    displaced copy of the vacuum-input output omega, so the conditional term
    is S(omega) and only the average output needs assembling.
    ``method="semiclassical"`` evaluates every output through the coherent
    P-function path and optionally prunes it to levels 0..``prune_d``.
    """
    D = cfg.cutoff or D or default_cutoff(c, jammer, cfg.tau)
    if method == "displacement":
        if prune_d is not None:
            raise ValueError("pruning requires method='semiclassical'")
        ens = EnsembleChannel(c, cfg.tau, D, cfg.sign)
        omega = ens.idle(jammer)
        avg = ens.average_output(omega)
        return max(entropy_bits(avg) - entropy_bits(omega), 0.0)
    if method == "semiclassical":
        outs = [channel_N(a, jammer, prune_d, cfg, D_out=D) for a in c.points]
        dim = outs[0].dim
        avg = sum(w * o.entries for w, o in zip(c.weights, outs))
        cond = sum(w * entropy_bits(o) for w, o in zip(c.weights, outs))
        avg_state = DensityMatrix(avg / np.trace(avg).real)
        assert avg_state.dim == dim
        return max(entropy_bits(avg_state) - cond, 0.0)
    raise ValueError(f"unknown method {method!r}")
