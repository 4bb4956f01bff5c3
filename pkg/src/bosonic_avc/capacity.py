"""Capacity of the jammed beam-splitter channel by discretized min-max search."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import ndtr

from .beamsplitter import ChannelConfig, EnsembleChannel
from .entropy import binary_entropy, default_cutoff, entropy_bits, gordon_g, DomainError
from .fock import Constellation, DensityMatrix, JammerSpec, energy, trace_distance

log = logging.getLogger(__name__)

REFINEMENT_SCHEDULE = (1.0, 0.5, 0.25, 0.125)
JAMMER_FAMILIES = ("vacuum", "thermal", "phav", "phav_mixture", "dphav")


class EmptyFamily(ValueError):
    pass


def closed_form_capacity(tau: float, E: float, P: float) -> float:
    """g(tau E + (1 - tau) P) - g((1 - tau) P), in bits."""
    if not 0.0 <= tau <= 1.0:
        raise DomainError(f"tau must lie in [0, 1], got {tau}")
    if E < 0 or P < 0:
        raise DomainError("energies must be non-negative")
    tc = 1.0 - tau
    return gordon_g(tau * E + tc * P) - gordon_g(tc * P)


# ---------------------------------------------------------------------------
# input discretization


@dataclass(frozen=True)
class GridSpec:
    """Square grid of spacing ``spacing`` covering the disk |alpha|^2 <= radius2.

    ``radius2`` defaults to 1 / spacing, coupling the covered energy to the
    resolution.
    """

    spacing: float
    radius2: float | None = None

    @property
    def r2(self) -> float:
        return 1.0 / self.spacing if self.radius2 is None else self.radius2

    def points(self) -> np.ndarray:
        n = int(math.floor(math.sqrt(self.r2) / self.spacing + 1e-12))
        k = np.arange(-n, n + 1) * self.spacing
        re, im = np.meshgrid(k, k, indexing="ij")
        pts = (re + 1j * im).ravel()
        return pts[np.abs(pts) ** 2 <= self.r2 * (1 + 1e-12)]

    @property
    def size(self) -> int:
        return len(self.points())


def _box_masses(pts: np.ndarray, spacing: float, variance: float) -> np.ndarray:
    if variance == 0:
        return (np.abs(pts) < 0.5 * spacing).astype(float)
    s = math.sqrt(variance / 2.0)
    h = 0.5 * spacing

    def strip(x):
        return ndtr((x + h) / s) - ndtr((x - h) / s)

    return strip(pts.real) * strip(pts.imag)


def build_grid_constellation(variance: float, grid: GridSpec, budget: float | None = None) -> Constellation:
    """Circularly symmetric Gaussian of mean energy ``variance`` binned onto ``grid``.

    Each point gets the Gaussian mass of its surrounding box, renormalized by
    the total covered mass kappa (stored in ``meta``).
    """
    pts = grid.points()
    mass = _box_masses(pts, grid.spacing, variance)
    kappa = float(mass.sum())
    if kappa <= 0:
        raise ValueError("grid carries no Gaussian mass")
    keep = mass > 0
    return Constellation(pts[keep], mass[keep] / kappa, budget,
                         {"variance": variance, "kappa": kappa, "spacing": grid.spacing,
                          "radius2": grid.r2})


def calibrate_variance(E: float, grid: GridSpec, iters: int = 80) -> float:
    """Largest Gaussian variance whose binned constellation has mean energy <= E."""
    if E <= 0:
        return 0.0
    pts = grid.points()
    e2 = np.abs(pts) ** 2

    def mean_energy(v):
        m = _box_masses(pts, grid.spacing, v)
        return float(np.dot(m, e2) / m.sum())

    if mean_energy(1e-300) > E:
        return 0.0
    lo, hi = 0.0, E
    while mean_energy(hi) <= E:
        lo, hi = hi, 2 * hi
        if hi > 1e6:
            return lo
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mean_energy(mid) <= E:
            lo = mid
        else:
            hi = mid
    return lo


def gaussian_constellation(E: float, spacing: float, fraction: float = 1.0) -> Constellation:
    """Binned Gaussian input whose mean energy is ``fraction * E`` (at most E)."""
    grid = GridSpec(spacing)
    v = calibrate_variance(fraction * E, grid)
    return build_grid_constellation(v, grid, budget=E)


# ---------------------------------------------------------------------------
# Holevo evaluation for a fixed constellation


class ChiEvaluator:
    """chi(mu; N_sigma) for one constellation against many jammers."""

    def __init__(self, constellation: Constellation, tau: float, P: float, D: int | None = None,
                 sign: int = 1):
        self.constellation = constellation
        self.tau = tau
        if D is None:
            D = default_cutoff(constellation, JammerSpec.thermal(P), tau)
        self.D = D
        self.ens = EnsembleChannel(constellation, tau, D, sign)
        self.evaluations = 0
        self.max_deficit = 0.0

    def __call__(self, jammer: JammerSpec) -> float:
        self.evaluations += 1
        omega = self.ens.idle(jammer)
        avg = self.ens.average_output(omega)
        self.max_deficit = max(self.max_deficit, avg.trace_deficit)
        return max(entropy_bits(avg) - entropy_bits(omega), 0.0)


# ---------------------------------------------------------------------------
# inner minimization over jammers


def golden_section(f, a: float, b: float, tol: float = 1e-6, max_iter: int = 200):
    """Minimize a unimodal ``f`` on [a, b]; endpoints are always evaluated.

    Returns ``(x, f(x), trace)`` with ``trace`` the running best values.
    """
    invphi = (math.sqrt(5) - 1) / 2
    fa, fb = f(a), f(b)
    best = min((fa, a), (fb, b))
    trace = [best[0]]
    if b - a <= tol:
        return best[1], best[0], trace
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        best = min(best, (fc, c), (fd, d))
        trace.append(best[0])
        if b - a <= tol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    best = min(best, (fc, c), (fd, d))
    trace.append(best[0])
    return best[1], best[0], trace


@dataclass
class InnerResult:
    value: float
    jammer: JammerSpec
    trace: list = field(default_factory=list)
    per_family: dict = field(default_factory=dict)


def _family_search(name: str, chi, P: float, mixture_points: int = 2, seed: int = 0):
    """Best (value, jammer, trace) within one family of admissible jammers."""
    if name == "vacuum":
        j = JammerSpec.vacuum()
        v = chi(j)
        return v, j, [v]
    if name == "thermal":
        x, v, tr = golden_section(lambda n: chi(JammerSpec.thermal(n)), 0.0, P)
        return v, JammerSpec.thermal(x), tr
    if name == "phav":
        # the point mass at b has tail constant b^2 / ln 2, which must stay <= P
        bmax2 = P * math.log(2.0)
        x, v, tr = golden_section(lambda b2: chi(JammerSpec.phav(math.sqrt(b2))), 0.0, bmax2)
        return v, JammerSpec.phav(math.sqrt(x)), tr
    if name == "phav_mixture":
        return _mixture_search(chi, P, mixture_points, seed)
    if name == "dphav":
        return _dphav_search(chi, P)
    raise EmptyFamily(f"unknown jammer family {name!r}")


def _mixture_from(z: np.ndarray, P: float, K: int) -> JammerSpec:
    # unconstrained z -> radii^2 in [0, P / w_min-ish] scaled onto the energy budget
    logits = np.concatenate([[0.0], z[:K - 1]])
    w = np.exp(logits - logits.max())
    w /= w.sum()
    shares = 1.0 / (1.0 + np.exp(-z[K - 1:]))          # each in (0, 1)
    b2 = shares * P / np.maximum(w, 1e-12) / K
    return JammerSpec.phav_mixture(list(zip(np.sqrt(b2), w)))


def _mixture_search(chi, P: float, K: int, seed: int):
    trace = []
    best = [math.inf, None]

    def f(z):
        j = _mixture_from(z, P, K)
        if not j.admissible(P):
            return 1e3 + j.subgaussian_K
        v = chi(j)
        if v < best[0]:
            best[:] = [v, j]
        trace.append(best[0])
        return v

    rng = np.random.default_rng(seed)
    starts = [np.zeros(2 * K - 1)] + [rng.normal(size=2 * K - 1) for _ in range(2)]
    for z0 in starts:
        minimize(f, z0, method="Nelder-Mead", options={"xatol": 1e-4, "fatol": 1e-7, "maxfev": 150})
    if best[1] is None:
        raise EmptyFamily("no admissible PHAV mixture found")
    return best[0], best[1], trace


def _dphav_search(chi, P: float):
    # displacement d and ring radius b with d^2 + b^2 <= P; both enter the tail constant
    trace = []
    best = [math.inf, None]
    for share in np.linspace(0.0, 1.0, 5):
        def f(e):
            d = math.sqrt(max(e * share, 0.0))
            b = math.sqrt(max(e * (1 - share), 0.0))
            j = JammerSpec.dphav(d, b)
            if not j.admissible(P):
                return math.inf
            v = chi(j)
            if v < best[0]:
                best[:] = [v, j]
            trace.append(best[0])
            return v

        golden_section(f, 0.0, P, tol=1e-4)
    if best[1] is None:
        raise EmptyFamily("no admissible DPHAV jammer found")
    return best[0], best[1], trace


def inner_min_jammer(c: Constellation | ChiEvaluator, families, P: float, tau: float | None = None,
                     mixture_points: int = 2, seed: int = 0, tie_tol: float = 1e-12) -> InnerResult:
    """Minimize chi over admissible jammers drawn from ``families``.

    Families are searched with golden-section (thermal, PHAV, DPHAV) or
    Nelder-Mead (PHAV mixtures). Among values within ``tie_tol`` the jammer of
    lowest mean energy is reported. ``trace`` is the running minimum.
    """
    families = list(families)
    if not families:
        raise EmptyFamily("no jammer families given")
    chi = c if isinstance(c, ChiEvaluator) else ChiEvaluator(c, tau, P)
    best: tuple | None = None
    trace: list = []
    per_family = {}
    for name in families:
        v, j, tr = _family_search(name, chi, P, mixture_points, seed)
        per_family[name] = (v, j)
        for t in tr:
            trace.append(min(t, trace[-1]) if trace else t)
        if best is None or v < best[0] - tie_tol or (
            abs(v - best[0]) <= tie_tol and j.mean_energy < best[1].mean_energy
        ):
            best = (v, j)
    return InnerResult(best[0], best[1], trace, per_family)


# ---------------------------------------------------------------------------
# outer maximization


@dataclass
class MinimaxResult:
    value_bits: float
    constellation: Constellation
    worst_jammer: JammerSpec
    outer_trace: list
    inner_trace: list
    closed_form_bits: float
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        c = self.constellation
        return {
            "value_bits": self.value_bits,
            "closed_form_bits": self.closed_form_bits,
            "worst_jammer": self.worst_jammer.to_dict(),
            "constellation": {
                "size": len(c),
                "mean_energy": c.mean_energy,
                **{k: v for k, v in c.meta.items()},
            },
            "outer_trace": list(self.outer_trace),
            "inner_trace": list(self.inner_trace),
            "meta": self.meta,
        }


def outer_max_input(families, E: float, P: float, tau: float,
                    schedule=REFINEMENT_SCHEDULE, fractions=(1.0,),
                    stop_tol: float = 1e-4, mixture_points: int = 2, seed: int = 0,
                    D: int | None = None) -> MinimaxResult:
    """Maximize the inner minimum over binned Gaussian inputs.

    Candidates are indexed by grid spacing (refined along ``schedule``) and
    the energy fraction of E they use. Refinement stops once the best value
    moves by less than ``stop_tol`` bits.
    """
    cf = closed_form_capacity(tau, E, P)
    meta = {"jammer_families": list(families), "input_family": "binned_gaussian",
            "restriction": "jammer search limited to the listed parametric families",
            "energy_constraint": "per-symbol average <= E"}
    if E == 0:
        c = Constellation.single(0.0)
        return MinimaxResult(0.0, c, JammerSpec.vacuum(), [0.0], [0.0], cf, [], meta)
    best = None
    outer_trace, inner_trace, rows = [], [], []
    prev = None
    for spacing in schedule:
        level_best = -math.inf
        for frac in fractions:
            c = gaussian_constellation(E, spacing, frac)
            chi = ChiEvaluator(c, tau, P, D)
            inner = inner_min_jammer(chi, families, P, mixture_points=mixture_points, seed=seed)
            rows.append({"spacing": spacing, "fraction": frac, "points": len(c),
                         "mean_energy": c.mean_energy, "cutoff": chi.D,
                         "inner_value": inner.value, "jammer": inner.jammer.label(),
                         "evaluations": chi.evaluations, "deficit": chi.max_deficit})
            log.info("spacing=%g fraction=%g inner=%.8f (%s)", spacing, frac, inner.value,
                     inner.jammer.label())
            inner_trace.extend(inner.trace)
            level_best = max(level_best, inner.value)
            if best is None or inner.value > best[0]:
                best = (inner.value, c, inner.jammer)
            outer_trace.append(best[0])
        if prev is not None and abs(level_best - prev) < stop_tol:
            break
        prev = level_best
    meta["cutoff_deficit_max"] = max(r["deficit"] for r in rows)
    return MinimaxResult(best[0], best[1], best[2], outer_trace, inner_trace, cf, rows, meta)


# ---------------------------------------------------------------------------
# continuity


@dataclass(frozen=True)
class ContinuityReport:
    holds: bool
    lhs: float
    rhs: float
    distance: float


def continuity_bound(eps: float, E: float) -> float:
    """2 eps g(E / eps) + h(eps): entropy continuity bound under energy E at trace distance eps."""
    if eps <= 0:
        return 0.0
    if eps >= 1:
        return math.inf
    return 2.0 * eps * gordon_g(E / eps) + binary_entropy(eps)


def continuity_check(rho: DensityMatrix, sigma: DensityMatrix, E: float) -> ContinuityReport:
    """|S(rho) - S(sigma)| against the energy-constrained continuity bound.

    ``eps`` is the trace distance (half the one-norm). Both energies must be
    at most ``E``.
    """
    if max(energy(rho), energy(sigma)) > E * (1 + 1e-12):
        raise ValueError("state energy exceeds E")
    eps = trace_distance(rho, sigma)
    lhs = abs(entropy_bits(rho) - entropy_bits(sigma))
    rhs = continuity_bound(eps, E)
    return ContinuityReport(lhs <= rhs + 1e-12, lhs, rhs, eps)
