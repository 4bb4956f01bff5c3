"""Entropy power inequalities on truncated one-mode states: gaps and scans.

The main quantity is the gap of

    S(X [+]_lam Y) >= g(L_lam(X) + R_lam(Y))

where [+]_lam is the port-1 output of a beam splitter of transmissivity lam
and L, R are the photon-number equivalents of the single-input outputs.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .beamsplitter import ChannelConfig, apply_bs
from .entropy import L_lambda, R_lambda, entropy_bits, gordon_g, gordon_g_inv
from .fock import (
    DensityMatrix,
    DimensionMismatch,
    choose_cutoff,
    make_diagonal,
    make_dphav,
    make_fock,
    make_phav,
    make_thermal,
    make_vacuum,
)

VIOLATION_THRESHOLD = 1e-6
EXTRA_INEQUALITIES = ("epni_quoted", "epni_port", "qepi_quoted", "qepi_port")
DEFICIT_BUDGET = 1e-8


@dataclass(frozen=True)
class GapRecord:
    x_label: str
    y_label: str
    lam: float
    lhs_bits: float
    rhs_bits: float
    gap: float
    cutoff: int
    deficit: float
    kind: str = "conjecture"

    CSV_FIELDS = ("kind", "x_label", "y_label", "lam", "lhs_bits", "rhs_bits", "gap",
                  "cutoff", "deficit")

    def row(self) -> dict:
        return {k: getattr(self, k) for k in self.CSV_FIELDS}


def _shared_dim(X: DensityMatrix, Y: DensityMatrix):
    if X.dim != Y.dim:
        raise DimensionMismatch(f"states need a shared cutoff: {X.dim} vs {Y.dim}")


def _output_entropy(X, Y, lam, sign=1) -> float:
    return entropy_bits(apply_bs(X, Y, ChannelConfig(lam, sign=sign)))


def conjecture_gap(X: DensityMatrix, Y: DensityMatrix, lam: float, sign: int = 1,
                   x_label: str = "X", y_label: str = "Y",
                   L: float | None = None, R: float | None = None) -> GapRecord:
    """Gap S(X [+]_lam Y) - g(L_lam(X) + R_lam(Y)) in bits.

    ``L`` and ``R`` may be passed in when already known (scans reuse them).
    """
    _shared_dim(X, Y)
    lhs = _output_entropy(X, Y, lam, sign)
    L = L_lambda(X, lam, sign) if L is None else L
    R = R_lambda(Y, lam, sign) if R is None else R
    rhs = gordon_g(L + R)
    return GapRecord(x_label, y_label, float(lam), lhs, rhs, lhs - rhs, X.dim,
                     X.trace_deficit + Y.trace_deficit)


def photon_number(rho: DensityMatrix) -> float:
    """Entropy photon number g^-1(S(rho))."""
    return gordon_g_inv(entropy_bits(rho))


def epni_gap(X: DensityMatrix, Y: DensityMatrix, tau: float, orientation: str = "quoted",
             sign: int = 1, x_label: str = "X", y_label: str = "Y") -> GapRecord:
    """Gap of the entropy photon-number inequality.

    ``orientation="quoted"``: N(X [+]_tau Y) - tau N(Y) - (1 - tau) N(X).
    ``orientation="port"``: weights follow the ports, tau N(X) + (1 - tau) N(Y),
    which is tight for thermal pairs.
    """
    _shared_dim(X, Y)
    lhs = gordon_g_inv(_output_entropy(X, Y, tau, sign))
    nx, ny = photon_number(X), photon_number(Y)
    if orientation == "quoted":
        rhs = tau * ny + (1 - tau) * nx
    elif orientation == "port":
        rhs = tau * nx + (1 - tau) * ny
    else:
        raise ValueError(f"unknown orientation {orientation!r}")
    return GapRecord(x_label, y_label, float(tau), lhs, rhs, lhs - rhs, X.dim,
                     X.trace_deficit + Y.trace_deficit, f"epni_{orientation}")


def qepi_gap(X: DensityMatrix, Y: DensityMatrix, tau: float, base: float = 2.0,
             orientation: str = "quoted", sign: int = 1,
             x_label: str = "X", y_label: str = "Y") -> GapRecord:
    """Gap of the entropy power inequality base^(2 S) with S in bits.

    With ``base=2`` this is the same as e^(2 S) for S in nats. ``base=math.e``
    applies e to entropies measured in bits.
    """
    _shared_dim(X, Y)

    def power(s):
        return base ** (2.0 * s)

    lhs = power(_output_entropy(X, Y, tau, sign))
    px, py = power(entropy_bits(X)), power(entropy_bits(Y))
    if orientation == "quoted":
        rhs = tau * py + (1 - tau) * px
    elif orientation == "port":
        rhs = tau * px + (1 - tau) * py
    else:
        raise ValueError(f"unknown orientation {orientation!r}")
    return GapRecord(x_label, y_label, float(tau), lhs, rhs, lhs - rhs, X.dim,
                     X.trace_deficit + Y.trace_deficit, f"qepi_{orientation}_b{base:.6g}")


# ---------------------------------------------------------------------------
# state families for scans


@dataclass(frozen=True)
class StateSpec:
    """A family member that can be rebuilt at any cutoff.

    ``kind``: vacuum, thermal (N), fock (n), phav (b), dphav (alpha, b),
    diagonal (probs).
    """

    kind: str
    params: tuple = ()
    tag: str = ""

    def label(self) -> str:
        if self.kind == "diagonal":
            return f"diagonal[{len(self.params)}]#{self.tag}"
        return f"{self.kind}{self.params!r}" if self.params else self.kind

    def min_cutoff(self, tol: float) -> int:
        k = self.kind
        if k == "vacuum":
            return 1
        if k == "thermal":
            return choose_cutoff(self.params[0], tol, "thermal")
        if k == "fock":
            return self.params[0] + 1
        if k == "phav":
            return choose_cutoff(self.params[0] ** 2, tol, "poisson")
        if k == "dphav":
            a, b = self.params
            return choose_cutoff((abs(a) + b) ** 2, tol, "poisson")
        if k == "diagonal":
            return len(self.params)
        raise ValueError(f"unknown state kind {k!r}")

    def build(self, D: int, tol: float = DEFICIT_BUDGET, M: int | None = None) -> DensityMatrix:
        k = self.kind
        if k == "vacuum":
            return make_vacuum(D)
        if k == "thermal":
            return make_thermal(self.params[0], D, tol)
        if k == "fock":
            return make_fock(self.params[0], D)
        if k == "phav":
            return make_phav(self.params[0], D, tol)
        if k == "dphav":
            a, b = self.params
            return make_dphav(a, b, D, M, tol)
        if k == "diagonal":
            return make_diagonal(np.asarray(self.params), D)
        raise ValueError(f"unknown state kind {k!r}")


_PARAM_KEYS = {"vacuum": (), "thermal": ("N",), "fock": ("n",), "phav": ("b",),
               "dphav": ("alpha", "b")}


def expand_family(spec: dict) -> list[StateSpec]:
    """``{"kind": "thermal", "N": [0.1, 1]}`` -> one StateSpec per grid value."""
    kind = spec["kind"]
    if kind not in _PARAM_KEYS:
        raise ValueError(f"unknown state family {kind!r}")
    keys = _PARAM_KEYS[kind]
    grids = []
    for key in keys:
        if key not in spec:
            raise ValueError(f"family {kind!r} needs field {key!r}")
        v = spec[key]
        grids.append(v if isinstance(v, list) else [v])
    out = []
    for combo in itertools.product(*grids):
        if kind == "fock":
            combo = (int(combo[0]),)
        elif kind == "dphav":
            combo = (complex(combo[0]), float(combo[1]))
        else:
            combo = tuple(float(c) for c in combo)
        out.append(StateSpec(kind, combo))
    return out


def random_diagonal_pairs(draws: int, D: int, rng: np.random.Generator,
                          concentration: float = 1.0) -> list[tuple[StateSpec, StateSpec]]:
    """Pairs of photon-number distributions drawn from a symmetric Dirichlet on D levels."""
    pairs = []
    for i in range(draws):
        p = rng.dirichlet(np.full(D, concentration))
        q = rng.dirichlet(np.full(D, concentration))
        pairs.append((StateSpec("diagonal", tuple(p.tolist()), f"{i}x"),
                      StateSpec("diagonal", tuple(q.tolist()), f"{i}y")))
    return pairs


# ---------------------------------------------------------------------------
# scans


@dataclass
class ScanReport:
    records: list
    min_gap: float | None
    argmin: GapRecord | None
    candidates: list = field(default_factory=list)       # (record, confirmation record)
    confirmed: list = field(default_factory=list)
    numerical: list = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "n_records": len(self.records),
            "min_gap": self.min_gap,
            "argmin": asdict(self.argmin) if self.argmin else None,
            "n_candidates": len(self.candidates),
            "confirmed_violations": [
                {"original": asdict(a), "confirmation": asdict(b)} for a, b in self.confirmed],
            "numerical_artifacts": [
                {"original": asdict(a), "confirmation": asdict(b)} for a, b in self.numerical],
        }


def _pair_cutoff(x: StateSpec, y: StateSpec, tol: float, override: int | None) -> int:
    if override is not None:
        # Fock and explicit distributions cannot be cut below their support
        exact = [s.min_cutoff(tol) for s in (x, y) if s.kind in ("fock", "diagonal")]
        return max([int(override)] + exact)
    return max(x.min_cutoff(tol), y.min_cutoff(tol), 2)


def _evaluate_pair(x: StateSpec, y: StateSpec, lams, D: int, sign: int, tol: float,
                   M: int | None = None, extras=(), qepi_base: float = 2.0) -> list[GapRecord]:
    X, Y = x.build(D, tol, M), y.build(D, tol, M)
    xl, yl = x.label(), y.label()
    out = [conjecture_gap(X, Y, lam, sign, xl, yl) for lam in lams]
    for name in extras:
        kind, orientation = name.split("_")
        for lam in lams:
            if kind == "epni":
                out.append(epni_gap(X, Y, lam, orientation, sign, xl, yl))
            else:
                out.append(qepi_gap(X, Y, lam, qepi_base, orientation, sign, xl, yl))
    return out


def confirm(x: StateSpec, y: StateSpec, lam: float, D: int, sign: int = 1,
            tol: float = DEFICIT_BUDGET) -> GapRecord:
    """Recompute one gap with doubled cutoff and doubled phase quadrature."""
    M2 = 8 * (2 * D)
    return _evaluate_pair(x, y, [lam], 2 * D, sign, tol, M2)[0]


def _parse_pairs(config: dict, rng) -> list[tuple[StateSpec, StateSpec]]:
    pairs = []
    for fam in config.get("families", []):
        if fam.get("kind") == "random_diagonal":
            pairs += random_diagonal_pairs(int(fam.get("draws", 1000)), int(fam.get("D", 20)), rng,
                                           float(fam.get("concentration", 1.0)))
            continue
        xs, ys = expand_family(fam["x"]), expand_family(fam["y"])
        pairs += list(itertools.product(xs, ys))
    return pairs


def scan_families(config: dict, seed: int = 0, threads: int = 1) -> ScanReport:
    """Evaluate the conjecture gap on every configured pair and every lambda.

    ``config`` keys: ``families`` (list of ``{"x": family, "y": family}`` or
    ``{"kind": "random_diagonal", "draws", "D", "concentration"}``),
    ``lambdas``, optional ``cutoff`` (override), ``cutoff_tol``,
    ``violation_threshold``, ``sign``, ``extra_inequalities`` (any of
    epni_quoted, epni_port, qepi_quoted, qepi_port) and ``qepi_base``. The
    certificate covers the conjecture records only. Any gap below minus the threshold
    is recomputed at doubled cutoff and quadrature; it is a confirmed
    violation only if it stays below the threshold there.
    """
    rng = np.random.default_rng(seed)
    lams = [float(l) for l in config.get("lambdas", [i / 10 for i in range(1, 10)])]
    tol = float(config.get("cutoff_tol", 1e-12))
    thr = float(config.get("violation_threshold", VIOLATION_THRESHOLD))
    sign = int(config.get("sign", 1))
    override = config.get("cutoff")
    extras = tuple(config.get("extra_inequalities", ()))
    for e in extras:
        if e not in EXTRA_INEQUALITIES:
            raise ValueError(f"unknown inequality {e!r}")
    qbase = float(config.get("qepi_base", 2.0))
    pairs = _parse_pairs(config, rng)
    cutoffs = [_pair_cutoff(x, y, tol, override) for x, y in pairs]

    def work(i):
        x, y = pairs[i]
        return _evaluate_pair(x, y, lams, cutoffs[i], sign, DEFICIT_BUDGET,
                              extras=extras, qepi_base=qbase)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            chunks = list(ex.map(work, range(len(pairs))))
    else:
        chunks = [work(i) for i in range(len(pairs))]

    records = [r for c in chunks for r in c]
    main = [r for r in records if r.kind == "conjecture"]
    if not main:
        return ScanReport(records, None, None)
    best = min(main, key=lambda r: r.gap)
    report = ScanReport(records, best.gap, best)
    for i, chunk in enumerate(chunks):
        for rec in chunk:
            if rec.kind == "conjecture" and rec.gap < -thr:
                x, y = pairs[i]
                again = confirm(x, y, rec.lam, cutoffs[i], sign)
                report.candidates.append((rec, again))
                (report.confirmed if again.gap < -thr else report.numerical).append((rec, again))
    return report


def acceptance_scan_config(draws: int = 1000) -> dict:
    """Thermal x thermal, thermal x Fock(n <= 5), PHAV x PHAV and random diagonal pairs."""
    energies = [0.1, 0.5, 1.0, 2.0]
    radii = [math.sqrt(e) for e in energies]
    return {
        "lambdas": [i / 10 for i in range(1, 10)],
        "families": [
            {"x": {"kind": "thermal", "N": energies}, "y": {"kind": "thermal", "N": energies}},
            {"x": {"kind": "thermal", "N": energies}, "y": {"kind": "fock", "n": list(range(6))}},
            {"x": {"kind": "fock", "n": list(range(6))}, "y": {"kind": "thermal", "N": energies}},
            {"x": {"kind": "phav", "b": radii}, "y": {"kind": "phav", "b": radii}},
            {"kind": "random_diagonal", "draws": draws, "D": 20},
        ],
    }
