"""Command-line entry point: ``bosonic-avc <subcommand> --config cfg.json --out-dir out``.

Exit codes: 0 success, 2 configuration error, 3 numerical budget exceeded,
4 invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .entropy import NegativeEigenvalue
from .fock import InvalidState, JammerSpec, TruncationError

log = logging.getLogger("bosonic_avc")

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET, EXIT_INVARIANT = 0, 2, 3, 4


class ConfigParseError(ValueError):
    pass


class InvariantViolation(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# config and output helpers


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigParseError(f"cannot read config {path}: {exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigParseError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(cfg, dict):
        raise ConfigParseError(f"{path}: top level must be a JSON object")
    return cfg


def require(cfg: dict, key: str, kind=float, where: str = "config"):
    if key not in cfg:
        raise ConfigParseError(f"{where}: missing field {key!r}")
    try:
        return kind(cfg[key])
    except (TypeError, ValueError) as exc:
        raise ConfigParseError(f"{where}: field {key!r} has invalid value {cfg[key]!r}") from exc


def config_digest(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


def make_manifest(sub: str, cfg: dict, args, **extra) -> dict:
    return {"subcommand": sub, "config_digest": config_digest(cfg),
            "seed_schedule": {"base_seed": args.seed}, "tool_version": __version__,
            "threads": args.threads, **extra}


def shown(bits, args) -> str:
    """Console display of an entropy-valued quantity; files always hold bits."""
    if bits is None:
        return "None"
    return fmt(bits * math.log(2.0) if args.units == "nats" else bits) + f" {args.units}"


def fmt(v) -> str:
    if isinstance(v, bool):
        return str(v)
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if isinstance(v, (complex, np.complexfloating)):
        return f"{format(v.real, '.17g')}{'+' if v.imag >= 0 else '-'}{format(abs(v.imag), '.17g')}j"
    return str(v)


def write_csv(path: Path, fields, rows, manifest: dict):
    """CSV with a leading ``# manifest`` comment line and full-precision numbers."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write("# manifest " + json.dumps(manifest, sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for r in rows:
            w.writerow([fmt(r[f]) for f in fields])


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, (complex, np.complexfloating)):
        return {"re": float(o.real), "im": float(o.imag)}
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, (float, np.floating)):
        f = float(o)
        return f if math.isfinite(f) else str(f)
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    return o


def write_json(path: Path, obj: dict):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# subcommands


def cmd_epi_scan(args, cfg: dict) -> int:
    from .epi import GapRecord, scan_families

    if args.cutoff_override is not None:
        cfg = {**cfg, "cutoff": args.cutoff_override}
    if args.tolerance is not None:
        cfg = {**cfg, "violation_threshold": args.tolerance}
    if not isinstance(cfg.get("families", []), list):
        raise ConfigParseError("config: field 'families' must be a list")
    try:
        report = scan_families(cfg, seed=args.seed, threads=args.threads)
    except (KeyError, ValueError) as exc:
        if isinstance(exc, TruncationError):
            raise
        raise ConfigParseError(f"config: {exc}") from exc
    cutoffs = sorted({r.cutoff for r in report.records})
    manifest = make_manifest("epi-scan", cfg, args, cutoffs=cutoffs,
                             deficit_budget=max((r.deficit for r in report.records), default=0.0))
    out = Path(args.out_dir)
    write_csv(out / "epi_scan.csv", GapRecord.CSV_FIELDS, [r.row() for r in report.records], manifest)
    write_json(out / "epi_summary.json", {"manifest": manifest, **report.summary()})
    print(f"records={len(report.records)} min_gap={shown(report.min_gap, args)} "
          f"confirmed_violations={len(report.confirmed)}")
    return EXIT_OK


def cmd_capacity(args, cfg: dict) -> int:
    from .capacity import REFINEMENT_SCHEDULE, outer_max_input

    tau = require(cfg, "tau")
    E = require(cfg, "E")
    P = require(cfg, "P")
    families = cfg.get("families", ["thermal", "phav", "phav_mixture"])
    schedule = cfg.get("schedule", list(REFINEMENT_SCHEDULE))
    stop = args.tolerance if args.tolerance is not None else float(cfg.get("stop_tol", 1e-4))
    try:
        res = outer_max_input(families, E, P, tau, schedule=schedule,
                              fractions=cfg.get("fractions", [1.0]), stop_tol=stop,
                              mixture_points=int(cfg.get("mixture_points", 2)), seed=args.seed,
                              D=args.cutoff_override or cfg.get("cutoff"))
    except ValueError as exc:
        if isinstance(exc, TruncationError):
            raise
        raise ConfigParseError(f"config: {exc}") from exc
    manifest = make_manifest("capacity", cfg, args, cutoffs=[r["cutoff"] for r in res.rows],
                             deficit_budget=res.meta.get("cutoff_deficit_max", 0.0))
    out = Path(args.out_dir)
    fields = ("spacing", "fraction", "points", "mean_energy", "cutoff", "inner_value", "jammer",
              "evaluations", "deficit")
    write_csv(out / "capacity_convergence.csv", fields, res.rows, manifest)
    rel = (res.value_bits - res.closed_form_bits) / res.closed_form_bits if res.closed_form_bits else 0.0
    write_json(out / "capacity.json", {"manifest": manifest, **res.to_dict(),
                                       "relative_difference": rel})
    print(f"minimax={shown(res.value_bits, args)} closed_form={shown(res.closed_form_bits, args)} "
          f"rel={fmt(rel)}")
    return EXIT_OK


LEMMAS = ("1", "2", "3", "4", "5", "gentle", "all")


def cmd_lemma_check(args, cfg: dict) -> int:
    from . import lemmas as L

    which = args.lemma
    quick = args.budget == "quick"
    seed = args.seed
    results = []
    if which in ("5", "all"):
        kmax = args.k or 6
        dmax = args.d or 3
        ok, n = True, 0
        for k in range(1, kmax + 1):
            for d in range(1, dmax + 1):
                for t in L.all_types(d, k):
                    n += 1
                    ok &= L.lemma5_type_bound_check(t).passed and L.type_size_bounds_check(t)
        results.append(L.CheckResult("type_flattening", ok, n, details={"k_max": kmax, "d_max": dmax}))
    if which in ("1", "all"):
        results.append(L.lemma1_random_trials(args.trials or (50 if quick else 500),
                                              args.d or 4, args.k or 3, seed))
    if which in ("2", "all"):
        rng = np.random.default_rng(seed)
        k = min(args.k or 4, 6)
        D = 4
        ps = [rng.dirichlet(np.ones(D)) for _ in range(k)]
        results.append(L.symmetrize_marginal_check(ps))
    if which in ("3", "all"):
        for b2 in (0.5, 1.0, 2.0):
            for N in (44, 60, 88):
                r = L.lemma3_tail_check([math.sqrt(b2)], [1.0], N)
                r.name = f"photon_tail_b2={b2:g}_N={N}"
                results.append(r)
    if which in ("4", "all"):
        k = args.k if args.k and which == "4" else 1000
        d = args.d if args.d and which == "4" else 2
        ps = np.tile(np.full(d, 1.0 / d), (k, 1))
        results.append(L.lemma4_concentration_check(ps, 0.1, args.trials or (10_000 if quick else 100_000), seed))
    if which in ("gentle", "all"):
        results.append(L.gentle_random_trials(args.trials or (50 if quick else 500), 16, seed))
    rows = [{"name": r.name, "passed": r.passed, "trials": r.trials,
             "worst_margin": float(r.worst_margin)} for r in results]
    manifest = make_manifest("lemma-check", {"lemma": which, "k": args.k, "d": args.d,
                                             "trials": args.trials, "budget": args.budget}, args)
    out = Path(args.out_dir)
    write_csv(out / "lemma_check.csv", ("name", "passed", "trials", "worst_margin"), rows, manifest)
    write_json(out / "lemma_check.json", {"manifest": manifest, "results": [r.to_dict() for r in results]})
    for r in rows:
        print(f"{r['name']:<32} {'PASS' if r['passed'] else 'FAIL'}  trials={r['trials']}")
    return EXIT_OK if all(r["passed"] for r in rows) else EXIT_INVARIANT


def cmd_code_sim(args, cfg: dict) -> int:
    from .coding import (CodingConfig, JammerStrategy, RejectionBudgetExceeded, codebook_from_words,
                         cr_average, draw_codebook, success_probability, worst_case_jammer)

    k = require(cfg, "k", int)
    M = require(cfg, "M", int)
    E = require(cfg, "E")
    P = require(cfg, "P")
    tau = require(cfg, "tau")
    D = int(args.cutoff_override or cfg.get("cutoff", 8))
    ccfg = CodingConfig(tau, D)
    design = JammerSpec.from_dict(cfg["design_jammer"]) if "design_jammer" in cfg else None
    try:
        if "codewords" in cfg:
            words = [[complex(a) if not isinstance(a, dict) else complex(a["re"], a["im"]) for a in w]
                     for w in cfg["codewords"]]
            code = codebook_from_words(words, E, ccfg, design)
        else:
            delta = float(cfg.get("delta", math.inf))
            code = draw_codebook(k, M, E, ccfg, delta=delta, seed=args.seed, design_jammer=design)
    except RejectionBudgetExceeded:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, TruncationError):
            raise
        raise ConfigParseError(f"config: {exc}") from exc
    try:
        code.validate()
    except ValueError as exc:
        raise InvariantViolation(str(exc)) from exc
    families = cfg.get("families", ["vacuum", "thermal", "phav"])
    wc = worst_case_jammer(code, families, P)
    rows = [{"family": f, "success": v, "strategy": lab} for f, (v, lab) in sorted(wc.per_family.items())]
    summary = {"worst_case": wc.value, "worst_strategy": wc.strategy.to_dict(),
               "codewords": code.codewords, "energy_constraint": "per-symbol average",
               "decoder": "pretty-good measurement"}
    if "cr_strategy" in cfg:
        strat = JammerStrategy(tuple(JammerSpec.from_dict(s) for s in cfg["cr_strategy"]))
        cr = cr_average(code, strat, int(cfg.get("cr_samples", 1000)), seed=args.seed)
        summary["cr"] = {"mean": cr.mean, "stderr": cr.stderr, "samples": cr.samples,
                         "symmetrized": cr.symmetrized, "z": cr.z,
                         "plain": success_probability(code, strat)}
    manifest = make_manifest("code-sim", cfg, args, cutoffs=[D])
    out = Path(args.out_dir)
    write_csv(out / "code_sim.csv", ("family", "success", "strategy"), rows, manifest)
    write_json(out / "code_sim.json", {"manifest": manifest, **summary})
    print(f"worst_case_success={fmt(wc.value)}")
    return EXIT_OK


def cmd_state_info(args, cfg: dict) -> int:
    from .entropy import entropy_bits, spectrum
    from .fock import choose_cutoff, energy

    if "kind" not in cfg:
        raise ConfigParseError("config: missing field 'kind'")
    try:
        spec = JammerSpec.from_dict(cfg)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigParseError(f"config: {exc}") from exc
    D = args.cutoff_override or cfg.get("cutoff") or choose_cutoff(
        max(spec.mean_energy, 1e-3), 1e-10, "thermal")
    rho = spec.state(int(D))
    lam = spectrum(rho)[::-1]
    info = {"label": spec.label(), "cutoff": rho.dim, "trace_deficit": rho.trace_deficit,
            "energy": energy(rho), "entropy_bits": entropy_bits(rho),
            "subgaussian_K1": spec.subgaussian_K, "spectrum": lam}
    manifest = make_manifest("state-info", cfg, args, cutoffs=[rho.dim])
    out = Path(args.out_dir)
    write_csv(out / "state_spectrum.csv", ("index", "eigenvalue"),
              [{"index": i, "eigenvalue": float(v)} for i, v in enumerate(lam)], manifest)
    write_json(out / "state_info.json", {"manifest": manifest, **info})
    brief = {k: v for k, v in info.items() if k != "spectrum"}
    if args.units == "nats":
        brief["entropy_nats"] = brief.pop("entropy_bits") * math.log(2.0)
    print(json.dumps(_jsonable(brief), sort_keys=True))
    return EXIT_OK


COMMANDS = {"epi-scan": cmd_epi_scan, "capacity": cmd_capacity, "lemma-check": cmd_lemma_check,
            "code-sim": cmd_code_sim, "state-info": cmd_state_info}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON scenario file")
    common.add_argument("--out-dir", default=".", help="directory for CSV/JSON outputs")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--cutoff-override", type=int, default=None)
    common.add_argument("--tolerance", type=float, default=None)
    common.add_argument("--units", choices=("bits", "nats"), default="bits",
                        help="units for entropies printed to the console")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="bosonic-avc", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("epi-scan", parents=[common], help="scan entropy inequality gaps")
    sub.add_parser("capacity", parents=[common], help="min-max capacity search")
    lc = sub.add_parser("lemma-check", parents=[common], help="run the bound checks")
    lc.add_argument("--lemma", choices=LEMMAS, default="all")
    lc.add_argument("--k", type=int, default=None)
    lc.add_argument("--d", type=int, default=None)
    lc.add_argument("--trials", type=int, default=None)
    lc.add_argument("--budget", choices=("quick", "full"), default="full")
    sub.add_parser("code-sim", parents=[common], help="simulate small codes")
    sub.add_parser("state-info", parents=[common], help="spectrum and energy of a state")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.command in ("epi-scan", "capacity", "code-sim", "state-info") and args.config is None:
            raise ConfigParseError(f"{args.command} needs --config")
        return COMMANDS[args.command](args, cfg)
    except ConfigParseError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TruncationError, ArithmeticError) as exc:
        print(f"numerical budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except RuntimeError as exc:
        from .coding import RejectionBudgetExceeded

        if isinstance(exc, RejectionBudgetExceeded):
            print(f"numerical budget exceeded: {exc}", file=sys.stderr)
            return EXIT_BUDGET
        if isinstance(exc, InvariantViolation):
            print(f"invariant violation: {exc}", file=sys.stderr)
            return EXIT_INVARIANT
        raise
    except (InvalidState, NegativeEigenvalue) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
