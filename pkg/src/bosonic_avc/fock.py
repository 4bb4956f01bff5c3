"""Single-mode states in a truncated Fock basis.

All constructors return a :class:`DensityMatrix` renormalized to unit trace,
with the probability weight lost to truncation stored in ``trace_deficit``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import gammaln

TRUNCATION_TOL = 1e-8
HERMITIAN_TOL = 1e-12
PSD_TOL = 1e-10
TRACE_TOL = 1e-9


class TruncationError(ValueError):
    """Probability weight outside the cutoff exceeds the configured tolerance."""


class DimensionMismatch(ValueError):
    pass


class InvalidState(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    entries: np.ndarray
    trace_deficit: float = 0.0

    def __post_init__(self):
        a = np.array(self.entries, dtype=complex)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise InvalidState(f"entries must be a non-empty square matrix, got shape {a.shape}")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)
        object.__setattr__(self, "trace_deficit", float(self.trace_deficit))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def trace(self) -> float:
        return float(np.trace(self.entries).real)

    def diagonal(self) -> np.ndarray:
        return np.diagonal(self.entries).real.copy()

    def is_diagonal(self, atol: float = 0.0) -> bool:
        off = self.entries - np.diag(np.diagonal(self.entries))
        return bool(np.all(np.abs(off) <= atol))

    def validate(self) -> "DensityMatrix":
        """Raise :class:`InvalidState` unless all state invariants hold.

        Renormalized states have unit trace and carry their truncation loss
        in ``trace_deficit``; unnormalized ones satisfy trace + deficit = 1.
        Either is accepted.
        """
        a = self.entries
        herm = np.max(np.abs(a - a.conj().T))
        if herm > HERMITIAN_TOL:
            raise InvalidState(f"not Hermitian (max deviation {herm:.3e})")
        lo = np.linalg.eigvalsh(a)[0]
        if lo < -PSD_TOL:
            raise InvalidState(f"not positive semidefinite (min eigenvalue {lo:.3e})")
        if self.trace_deficit < 0:
            raise InvalidState("negative trace deficit")
        tr = self.trace
        if not (1 - self.trace_deficit - TRACE_TOL <= tr <= 1 + TRACE_TOL):
            raise InvalidState(f"trace {tr!r} inconsistent with deficit {self.trace_deficit!r}")
        return self

    def padded(self, dim: int) -> "DensityMatrix":
        """Embed into a larger cutoff by zero padding."""
        if dim < self.dim:
            raise DimensionMismatch(f"cannot pad dim {self.dim} down to {dim}")
        out = np.zeros((dim, dim), dtype=complex)
        out[: self.dim, : self.dim] = self.entries
        return DensityMatrix(out, self.trace_deficit)

    def truncated(self, dim: int, renormalize: bool = True) -> "DensityMatrix":
        """Keep the first ``dim`` basis states, adding the lost weight to the deficit."""
        if dim >= self.dim:
            return self
        sub = self.entries[:dim, :dim]
        lost = max(self.trace - float(np.trace(sub).real), 0.0)
        if renormalize:
            sub = sub / np.trace(sub).real
        return DensityMatrix(sub, self.trace_deficit + lost)


@dataclass(frozen=True, eq=False)
class Constellation:
    """Finite input measure: weighted coherent-state amplitudes."""

    points: np.ndarray
    weights: np.ndarray
    budget: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = np.atleast_1d(np.asarray(self.points, dtype=complex))
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if pts.shape != w.shape:
            raise ValueError("points and weights must have the same length")
        if np.any(w < 0):
            raise ValueError("weights must be non-negative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {w.sum()!r}, expected 1")
        if self.budget is not None and self.mean_energy_of(pts, w) > self.budget * (1 + 1e-12):
            raise ValueError(
                f"mean energy {self.mean_energy_of(pts, w):.6g} exceeds budget {self.budget:.6g}"
            )
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @staticmethod
    def mean_energy_of(points, weights) -> float:
        return float(np.dot(weights, np.abs(points) ** 2))

    @property
    def mean_energy(self) -> float:
        return self.mean_energy_of(self.points, self.weights)

    def __len__(self):
        return len(self.points)

    @classmethod
    def single(cls, alpha: complex) -> "Constellation":
        return cls(np.array([alpha]), np.array([1.0]))

    def density(self, D: int) -> DensityMatrix:
        """Average input state rho(mu) = sum_i w_i |alpha_i><alpha_i|."""
        c = coherent_amplitudes(self.points, D)
        rho = (c.T * self.weights) @ c.conj()
        tr = float(np.trace(rho).real)
        return DensityMatrix(rho / tr, 1.0 - tr)


# ---------------------------------------------------------------------------
# amplitudes and cutoffs


def coherent_amplitudes(alpha, D: int) -> np.ndarray:
    """Truncated coherent-state amplitudes e^{-|a|^2/2} a^n / sqrt(n!).

    ``alpha`` may be a scalar (returns shape ``(D,)``) or an array of shape
    ``(P,)`` (returns ``(P, D)``). Computed in log space so large ``n`` and
    ``|alpha|`` do not overflow.
    """
    a = np.asarray(alpha, dtype=complex)
    scalar = a.ndim == 0
    a = np.atleast_1d(a)
    n = np.arange(D)
    r = np.abs(a)[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        logr = np.log(r)
        logmag = n * logr - 0.5 * gammaln(n + 1) - 0.5 * r**2
    # n * log(0) with n = 0 must give log(1)
    logmag = np.where((r == 0) & (n == 0), 0.0, logmag)
    amp = np.exp(logmag) * np.exp(1j * n * np.angle(a)[:, None])
    return amp[0] if scalar else amp


def poisson_pmf(mean: float, D: int) -> np.ndarray:
    n = np.arange(D)
    if mean == 0:
        out = np.zeros(D)
        out[0] = 1.0
        return out
    return np.exp(n * math.log(mean) - mean - gammaln(n + 1))


def thermal_spectrum(N: float, D: int) -> np.ndarray:
    n = np.arange(D)
    if N == 0:
        out = np.zeros(D)
        out[0] = 1.0
        return out
    q = N / (N + 1.0)
    return (1.0 - q) * q**n


def poisson_tail(mean: float, D: int) -> float:
    """P(X >= D) for X ~ Poisson(mean)."""
    from scipy.special import gammainc

    if D <= 0:
        return 1.0
    if mean == 0:
        return 0.0
    return float(gammainc(D, mean))


def choose_cutoff(E_max: float, tol: float = 1e-10, kind: str = "thermal") -> int:
    """Smallest cutoff D whose tail weight beyond D is below ``tol``.

    ``kind="thermal"`` uses the geometric tail (N/(N+1))^D, which dominates
    every state of mean photon number ``E_max`` that is a mixture of
    thermal/Poisson laws of that mean; ``kind="poisson"`` uses the Poisson tail.
    """
    if E_max < 0:
        raise ValueError("E_max must be non-negative")
    if E_max == 0:
        return 1
    if kind == "thermal":
        q = E_max / (E_max + 1.0)
        return max(1, int(math.ceil(math.log(tol) / math.log(q))))
    if kind == "poisson":
        D = max(1, int(E_max))
        while poisson_tail(E_max, D) >= tol:
            D += 1
        return D
    raise ValueError(f"unknown tail kind {kind!r}")


def _check_deficit(deficit: float, tol: float | None) -> float:
    deficit = max(float(deficit), 0.0)
    limit = TRUNCATION_TOL if tol is None else tol
    if deficit > limit:
        raise TruncationError(f"truncation loses weight {deficit:.3e} > tolerance {limit:.1e}")
    return deficit


def _from_weights(diag: np.ndarray, tol: float | None) -> DensityMatrix:
    total = float(diag.sum())
    deficit = _check_deficit(1.0 - total, tol)
    return DensityMatrix(np.diag(diag / total), deficit)


# ---------------------------------------------------------------------------
# constructors


def make_vacuum(D: int) -> DensityMatrix:
    return make_fock(0, D)


def make_fock(n: int, D: int) -> DensityMatrix:
    if D < 1:
        raise ValueError("cutoff must be at least 1")
    if not 0 <= n < D:
        raise ValueError(f"Fock index {n} outside cutoff {D}")
    rho = np.zeros((D, D), dtype=complex)
    rho[n, n] = 1.0
    return DensityMatrix(rho)


def make_diagonal(probs: Sequence[float], D: int | None = None) -> DensityMatrix:
    p = np.asarray(probs, dtype=float)
    if np.any(p < 0):
        raise ValueError("probabilities must be non-negative")
    if D is not None:
        if len(p) > D:
            raise DimensionMismatch("more probabilities than the cutoff")
        p = np.pad(p, (0, D - len(p)))
    return DensityMatrix(np.diag(p / p.sum()))


def maximally_mixed(d: int, D: int | None = None) -> DensityMatrix:
    return make_diagonal(np.ones(d), D)


def make_coherent(alpha: complex, D: int, tol: float | None = None) -> DensityMatrix:
    if D < 1:
        raise ValueError("cutoff must be at least 1")
    c = coherent_amplitudes(alpha, D)
    norm = float(np.vdot(c, c).real)
    deficit = _check_deficit(1.0 - norm, tol)
    c = c / math.sqrt(norm)
    return DensityMatrix(np.outer(c, c.conj()), deficit)


def make_thermal(N: float, D: int, tol: float | None = None) -> DensityMatrix:
    if N < 0:
        raise ValueError("mean photon number must be non-negative")
    if D < 1:
        raise ValueError("cutoff must be at least 1")
    return _from_weights(thermal_spectrum(N, D), tol)


def make_phav(b: float, D: int, tol: float | None = None) -> DensityMatrix:
    """Phase-averaged coherent state of radius ``b``: Poisson(b^2) diagonal."""
    if b < 0:
        raise ValueError("PHAV radius must be non-negative")
    if D < 1:
        raise ValueError("cutoff must be at least 1")
    return _from_weights(poisson_pmf(b * b, D), tol)


def make_dphav(alpha: complex, b: float, D: int, M: int | None = None,
               tol: float | None = None) -> DensityMatrix:
    """Displaced phase-averaged coherent state P_b(alpha).

    Uniform ``M``-point trapezoid over the phase of ``alpha + e^{i phi} b``;
    the default ``M = 4 D`` resolves every Fourier mode the cutoff can hold.
    """
    if D < 1:
        raise ValueError("cutoff must be at least 1")
    M = 4 * D if M is None else M
    if M < 2 * D:
        raise ValueError(f"need at least 2D = {2 * D} quadrature points, got {M}")
    if b == 0:
        return make_coherent(alpha, D, tol)
    phis = 2 * np.pi * np.arange(M) / M
    c = coherent_amplitudes(alpha + b * np.exp(1j * phis), D)
    rho = (c.T @ c.conj()) / M
    tr = float(np.trace(rho).real)
    deficit = _check_deficit(1.0 - tr, tol)
    rho = 0.5 * (rho + rho.conj().T) / tr
    return DensityMatrix(rho, deficit)


# ---------------------------------------------------------------------------
# functionals


def energy(rho: DensityMatrix) -> float:
    return float(np.dot(np.arange(rho.dim), rho.diagonal()))


def _require_same_dim(rho: DensityMatrix, sigma: DensityMatrix):
    if rho.dim != sigma.dim:
        raise DimensionMismatch(f"dims differ: {rho.dim} vs {sigma.dim}")


def trace_norm_distance(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """Raw one-norm ||rho - sigma||_1 (sum of absolute eigenvalues), in [0, 2]."""
    _require_same_dim(rho, sigma)
    diff = rho.entries - sigma.entries
    return float(np.abs(np.linalg.eigvalsh(0.5 * (diff + diff.conj().T))).sum())


def trace_distance(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """Half the one-norm distance, in [0, 1]."""
    return 0.5 * trace_norm_distance(rho, sigma)


def phase_rotate(rho: DensityMatrix, theta: float) -> DensityMatrix:
    """Conjugate by V_theta = exp(i theta H)."""
    ph = np.exp(1j * theta * np.arange(rho.dim))
    return DensityMatrix(ph[:, None] * rho.entries * ph.conj()[None, :], rho.trace_deficit)


def mix(states: Sequence[DensityMatrix], weights: Sequence[float]) -> DensityMatrix:
    w = np.asarray(weights, dtype=float)
    dims = {s.dim for s in states}
    if len(dims) != 1:
        raise DimensionMismatch(f"cannot mix states of dims {sorted(dims)}")
    ent = sum(wi * s.entries for wi, s in zip(w, states))
    deficit = float(sum(wi * s.trace_deficit for wi, s in zip(w, states)))
    return DensityMatrix(ent / w.sum(), deficit / w.sum())


def check_subgaussian(points, weights=None, K: float = 1.0, grid: int = 512):
    """Test the tail bound P(|X| >= t) <= 2 exp(-t^2 / K^2) on a scan grid.

    ``points`` are complex (or real) samples of the mixing measure with
    optional ``weights``. The empirical tail is a step function, so the
    support radii are always part of the scan. Returns ``(ok, worst_t)``
    where ``worst_t`` maximizes log(tail / bound) over points with positive
    tail.
    """
    if K <= 0:
        raise ValueError("K must be positive")
    r = np.abs(np.atleast_1d(np.asarray(points, dtype=complex)))
    w = np.full(r.shape, 1.0 / len(r)) if weights is None else np.asarray(weights, dtype=float)
    w = w / w.sum()
    order = np.argsort(r)
    r, w = r[order], w[order]
    rmax = float(r[-1])
    ts = np.unique(np.concatenate([r, np.linspace(0.0, 1.5 * rmax + 3 * K, grid)]))
    idx = np.searchsorted(r, ts, side="left")
    tail = np.concatenate([np.cumsum(w[::-1])[::-1], [0.0]])[idx]
    ok = bool(np.all(tail - 2.0 * np.exp(-(ts**2) / K**2) <= 1e-15))
    pos = tail > 0
    with np.errstate(divide="ignore"):
        score = np.where(pos, np.log(np.where(pos, tail, 1.0)) - math.log(2.0) + ts**2 / K**2, -np.inf)
    return ok, float(ts[int(np.argmax(score))])


def min_subgaussian_K1(radii, weights) -> float:
    """Smallest K1 = K^2 such that P(|X| >= t) <= 2 exp(-t^2 / K1) for all t."""
    r = np.asarray(radii, dtype=float)
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    order = np.argsort(r)
    r, w = r[order], w[order]
    tails = np.cumsum(w[::-1])[::-1]
    with np.errstate(divide="ignore"):
        k1 = np.where(r > 0, r**2 / np.log(2.0 / tails), 0.0)
    return float(k1.max())


# ---------------------------------------------------------------------------
# jammer states


@dataclass(frozen=True)
class JammerSpec:
    """Semi-classical jammer input.

    ``kind`` is one of ``thermal`` (params: N), ``phav`` (b),
    ``phav_mixture`` (tuple of (b, w) pairs) or ``dphav`` (alpha, b).
    ``subgaussian_K`` is the tail constant K1 of the mixing measure, with the
    tail form P(|X| >= t) <= 2 exp(-t^2 / K1).
    """

    kind: str
    params: tuple

    @classmethod
    def vacuum(cls) -> "JammerSpec":
        return cls("phav", (0.0,))

    @classmethod
    def thermal(cls, N: float) -> "JammerSpec":
        if N < 0:
            raise ValueError("N must be non-negative")
        return cls("thermal", (float(N),))

    @classmethod
    def phav(cls, b: float) -> "JammerSpec":
        if b < 0:
            raise ValueError("b must be non-negative")
        return cls("phav", (float(b),))

    @classmethod
    def phav_mixture(cls, components) -> "JammerSpec":
        comps = tuple((float(b), float(w)) for b, w in components)
        total = sum(w for _, w in comps)
        if total <= 0 or any(b < 0 or w < 0 for b, w in comps):
            raise ValueError("mixture needs non-negative radii and positive total weight")
        return cls("phav_mixture", tuple((b, w / total) for b, w in comps))

    @classmethod
    def dphav(cls, alpha: complex, b: float) -> "JammerSpec":
        return cls("dphav", (complex(alpha), float(b)))

    @classmethod
    def from_dict(cls, d: dict) -> "JammerSpec":
        kind = d["kind"]
        if kind == "vacuum":
            return cls.vacuum()
        if kind == "thermal":
            return cls.thermal(d["N"])
        if kind == "phav":
            return cls.phav(d["b"])
        if kind == "phav_mixture":
            return cls.phav_mixture([(c["b"], c["w"]) for c in d["components"]])
        if kind == "dphav":
            return cls.dphav(complex(d.get("alpha_re", 0.0), d.get("alpha_im", 0.0)), d["b"])
        raise ValueError(f"unknown jammer kind {kind!r}")

    def to_dict(self) -> dict:
        if self.kind == "thermal":
            return {"kind": "thermal", "N": self.params[0]}
        if self.kind == "phav":
            return {"kind": "phav", "b": self.params[0]}
        if self.kind == "phav_mixture":
            return {"kind": "phav_mixture",
                    "components": [{"b": b, "w": w} for b, w in self.params]}
        a, b = self.params
        return {"kind": "dphav", "alpha_re": a.real, "alpha_im": a.imag, "b": b}

    @property
    def is_phase_symmetric(self) -> bool:
        return self.kind != "dphav" or self.params[0] == 0

    @property
    def mean_energy(self) -> float:
        if self.kind == "thermal":
            return self.params[0]
        if self.kind == "phav":
            return self.params[0] ** 2
        if self.kind == "phav_mixture":
            return float(sum(w * b * b for b, w in self.params))
        a, b = self.params
        return abs(a) ** 2 + b * b

    @property
    def subgaussian_K(self) -> float:
        if self.kind == "thermal":
            # P(|beta| >= t) = exp(-t^2 / N) for the Gaussian P-function
            return self.params[0]
        if self.kind == "phav":
            return min_subgaussian_K1([self.params[0]], [1.0])
        if self.kind == "phav_mixture":
            return min_subgaussian_K1([b for b, _ in self.params], [w for _, w in self.params])
        a, b = self.params
        return min_subgaussian_K1([abs(a) + b], [1.0])

    def mixing_samples(self, n: int = 64):
        """Weighted radii of the mixing measure, for tail checks."""
        if self.kind == "thermal":
            N = self.params[0]
            if N == 0:
                return np.zeros(1), np.ones(1)
            x, w = _laguerre(n)
            return np.sqrt(N * x), w
        if self.kind == "phav":
            return np.array([self.params[0]]), np.ones(1)
        if self.kind == "phav_mixture":
            return (np.array([b for b, _ in self.params]), np.array([w for _, w in self.params]))
        a, b = self.params
        phis = 2 * np.pi * np.arange(n) / n
        return np.abs(a + b * np.exp(1j * phis)), np.full(n, 1.0 / n)

    def attenuated(self, eta: float, sign: int = 1) -> "JammerSpec":
        """Same family after a pure-loss channel of transmissivity ``eta``.

        The P-function is rescaled by sign * sqrt(eta), which is exact for
        every semi-classical state.
        """
        s = math.sqrt(eta)
        if self.kind == "thermal":
            return JammerSpec.thermal(eta * self.params[0])
        if self.kind == "phav":
            return JammerSpec.phav(s * self.params[0])
        if self.kind == "phav_mixture":
            return JammerSpec.phav_mixture([(s * b, w) for b, w in self.params])
        a, b = self.params
        return JammerSpec.dphav(sign * s * a, s * b)

    def admissible(self, P: float, rtol: float = 1e-12) -> bool:
        """Energy at most ``P`` and tail constant K1 at most ``P``."""
        slack = P * (1 + rtol) + 1e-15
        return self.mean_energy <= slack and self.subgaussian_K <= slack

    def state(self, D: int, M: int | None = None, tol: float | None = None) -> DensityMatrix:
        if self.kind == "thermal":
            return make_thermal(self.params[0], D, tol)
        if self.kind == "phav":
            return make_phav(self.params[0], D, tol)
        if self.kind == "phav_mixture":
            diag = sum(w * poisson_pmf(b * b, D) for b, w in self.params)
            return _from_weights(diag, tol)
        a, b = self.params
        return make_dphav(a, b, D, M, tol)

    def label(self) -> str:
        if self.kind == "phav_mixture":
            inner = ",".join(f"{b:.6g}:{w:.6g}" for b, w in self.params)
            return f"phav_mixture[{inner}]"
        return f"{self.kind}{tuple(self.params)!r}"


def _laguerre(n: int):
    from scipy.special import roots_laguerre

    x, w = roots_laguerre(n)
    return x, w
