"""Batch entry point: ``qfubqc <subcommand> [flags]``.

Every run writes one JSON report (schema 1). Trials are cut into fixed
chunks of ``CHUNK`` and chunk ``k`` always draws from stream ``(seed, cmd, k)``,
so ``--jobs`` changes wall time but not a single reported number.

Exit codes: 0 success, 2 a checked property failed, 1 usage error.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import math
import sys
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from functools import partial

import numpy as np

from . import __version__, harness, qfactory as qf, trapdoor as td, ubqc
from .rng import default_seed, stream

SCHEMA = 1
CHUNK = 1000

COMMANDS = ("qfactory4", "qfactory8", "ubqc", "qf-ubqc", "blindness", "hybrids",
            "basis-blindness", "describe", "cloning-bound", "signaling", "verify-lemmas")
CMD_ID = {c: i for i, c in enumerate(COMMANDS)}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# chunked execution ----------------------------------------------------------

def _chunks(trials: int) -> list[tuple[int, int]]:
    return [(k, min(CHUNK, trials - k * CHUNK)) for k in range(math.ceil(trials / CHUNK))]


def _run_chunked(worker, cmd: str, seed: int, trials: int, jobs: int) -> list:
    """``worker(count, rng) -> partial``; partials come back in chunk order."""
    plan = _chunks(trials)
    calls = [(count, stream(seed, CMD_ID[cmd], k)) for k, count in plan]
    if jobs <= 1 or len(calls) <= 1:
        return [worker(c, g) for c, g in calls]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(worker, *zip(*calls)))


def _merge_reports(parts: list[harness.GameReport]) -> harness.GameReport:
    wins = sum(p.wins for p in parts)
    trials = sum(p.trials for p in parts)
    rows, off = [], 0
    for p in parts:
        rows += [(r[0] + off, *r[1:]) for r in p.rows]
        off += p.trials
    return harness.GameReport.from_counts(parts[0].game_id, trials, wins, parts[0].notes,
                                          parts[0].baseline, rows)


# workers (module level so they pickle) ------------------------------------------

def _keys(family: str, n: int, rng):
    if family == "toy":
        return td.toy_gen(n, rng)
    return td.lwe_gen(td.LWEParams(n=n, m=n), rng)


def _w_qf4(count, rng, family, n, basis, engine):
    rows = []
    for g in rng.spawn(count):
        gk, gs = g.spawn(2)
        out = qf.run_4states(_keys(family, n, gk), qf.HONEST, basis, gs, engine)
        fid = out.fidelity() if out.inverted else None
        rows.append((out.B1, out.B2, int(out.inverted), fid))
    return rows


def _w_qf8(count, rng, family, n, engine):
    rows = []
    for g in rng.spawn(count):
        gk, gs = g.spawn(2)
        k1, k2 = _keys(family, n, gk), _keys(family, n, gk)
        out = qf.run_8states(k1, k2, qf.HONEST, gs, engine)
        fid = out.fidelity() if out.inverted else None
        rows.append((int(out.theta), "".join(map(str, out.L)), int(out.inverted), fid))
    return rows


def _w_ubqc(count, rng, pattern_json, source):
    pattern = ubqc.MeasurementPattern.from_json(pattern_json)
    src = ubqc.QuantumChannel if source == "QuantumChannel" else ubqc.QFactory8Source()
    return [ubqc.run_ubqc(pattern, src, qf.HONEST, g)[1].output_string() for g in rng.spawn(count)]


_ADVERSARIES = {"random": harness.RandomGuessAdversary, "honest": harness.HonestPlayAdversary,
                "leak": harness.LeakAdversary}
_HYBRID_ADV = {"random": harness.HybridAdversary, "delta": harness.DeltaGuessAdversary}
_GUESSERS = {"blind": harness.blind_guesser, "bruteforce": harness.bruteforce_guesser}
_STRATEGIES = {"constant": harness.constant_strategy, "random": harness.random_strategy,
               "leak": harness.leaky_strategy}


def _w_blind(count, rng, adversary, graph, leak):
    return harness.blindness_game(_ADVERSARIES[adversary](), graph, count, rng, leak=leak)


def _w_hybrid(count, rng, game, adversary):
    return harness.run_hybrid(game, _HYBRID_ADV[adversary](), count, rng)


def _w_basis(count, rng, kind, guesser, family, n):
    return harness.basis_blindness_estimate(kind, _GUESSERS[guesser], count, rng, family, n)


def _w_describe(count, rng, target, describer, family, n):
    return harness.describability_attack(target, describer, count, rng, family, n).overlaps


def _w_signal(count, rng, strategy, leak):
    return harness.signaling_game(_STRATEGIES[strategy], count, rng, leak)


# subcommands -------------------------------------------------------------------

def _pattern_from_args(args) -> ubqc.MeasurementPattern:
    if args.pattern:
        try:
            with open(args.pattern) as fh:
                d = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read pattern file: {exc}") from None
        if args.graph and (d["n"], d["m"]) != tuple(args.graph):
            raise UsageError(f"--graph {args.graph} disagrees with pattern {d['n']}x{d['m']}")
        return ubqc.pattern_from_dict(d)
    n, m = args.graph or (1, 1)
    return ubqc.build_brickwork(n, m)


def _fidelity_summary(rows, fid_col=3, inv_col=2):
    fids = [r[fid_col] for r in rows if r[inv_col]]
    bad = sum(f < 1 - 1e-9 for f in fids)
    return {"sessions": len(rows), "inversion_failures": len(rows) - len(fids),
            "correct": len(fids) - bad, "min_fidelity": min(fids) if fids else None}, bad == 0


def cmd_qfactory4(args):
    n = args.n or (6 if args.family == "toy" else 12)
    parts = _run_chunked(partial(_w_qf4, family=args.family, n=n, basis=args.basis,
                                 engine=args.engine), "qfactory4", args.seed, args.trials, args.jobs)
    rows = [r for p in parts for r in p]
    summary, ok = _fidelity_summary(rows)
    summary["B1_counts"] = dict(sorted(Counter(str(r[0]) for r in rows).items()))
    summary["B2_counts"] = dict(sorted(Counter(str(r[1]) for r in rows).items()))
    return summary, ok, [("trial", "B1", "B2", "inverted", "fidelity")] + \
        [(i, *r) for i, r in enumerate(rows)]


def cmd_qfactory8(args):
    n = args.n or (4 if args.family == "toy" else 12)
    parts = _run_chunked(partial(_w_qf8, family=args.family, n=n, engine=args.engine),
                         "qfactory8", args.seed, args.trials, args.jobs)
    rows = [r for p in parts for r in p]
    summary, ok = _fidelity_summary(rows)
    summary["theta_counts"] = dict(sorted(Counter(str(r[0]) for r in rows).items()))
    return summary, ok, [("trial", "theta", "L", "inverted", "fidelity")] + \
        [(i, *r) for i, r in enumerate(rows)]


def _cmd_ubqc(args, source):
    pattern = _pattern_from_args(args)
    cmd = "ubqc" if source == "QuantumChannel" else "qf-ubqc"
    parts = _run_chunked(partial(_w_ubqc, pattern_json=pattern.to_json(), source=source),
                         cmd, args.seed, args.trials, args.jobs)
    outs = [o for p in parts for o in p]
    freq = ubqc.empirical(outs)
    ref = ubqc.reference_mbqc(pattern, samples=args.trials, rng=stream(args.seed, CMD_ID[cmd], 10 ** 6))
    tv = ubqc.total_variation(freq, ref)
    summary = {"graph": [pattern.n, pattern.m], "source": source, "samples": len(outs),
               "frequencies": freq, "reference": ref, "tv_distance": tv}
    return summary, True, [("trial", "output")] + list(enumerate(outs))


def cmd_ubqc(args):
    return _cmd_ubqc(args, "QuantumChannel")


def cmd_qf_ubqc(args):
    return _cmd_ubqc(args, "QFactory8")


def _report_result(rep: harness.GameReport, target: float | None):
    d = rep.to_dict()
    ok = True
    if target is not None:
        d["within_3sigma"] = rep.within(target)
        ok = d["within_3sigma"]
    return d, ok, [("trial", "truth", "guess")] + [tuple(r) for r in rep.rows]


def cmd_blindness(args):
    graph = tuple(args.graph or (1, 1))
    rep = _merge_reports(_run_chunked(
        partial(_w_blind, adversary=args.adversary, graph=graph, leak=args.leak),
        "blindness", args.seed, args.trials, args.jobs))
    return _report_result(rep, None)


def cmd_hybrids(args):
    rep = _merge_reports(_run_chunked(
        partial(_w_hybrid, game=args.game, adversary=args.adversary),
        "hybrids", args.seed, args.trials, args.jobs))
    d, _, rows = _report_result(rep, None)
    ci99 = rep.ci(0.99)
    d["ci99"] = list(ci99)
    checks = harness.check_exact_rewrites()
    d["exact_rewrites"] = [{"transition": c.transition, "cases": c.cases,
                            "discrepancies": c.discrepancies} for c in checks]
    ok = all(c.ok for c in checks)
    if args.game == 7:
        d["contains_half"] = ci99[0] <= 0.5 <= ci99[1]
        ok = ok and d["contains_half"]
    return d, ok, rows


def cmd_basis(args):
    n = args.n or 6
    rep = _merge_reports(_run_chunked(
        partial(_w_basis, kind=args.kind, guesser=args.guesser, family=args.family, n=n),
        "basis-blindness", args.seed, args.trials, args.jobs))
    return _report_result(rep, None)


def cmd_describe(args):
    n = args.n or 6
    if args.describer == "BruteForceDescriber" and args.family != "toy":
        raise UsageError("BruteForceDescriber needs --family toy")
    parts = _run_chunked(partial(_w_describe, target=args.target, describer=args.describer,
                                 family=args.family, n=n),
                         "describe", args.seed, args.trials, args.jobs)
    ov = [o for p in parts for o in p]
    return ({"target": args.target, "method_tag": args.describer, "trials": len(ov),
             "mean_overlap": float(np.mean(ov)), "min_overlap": float(np.min(ov))},
            True, [("trial", "overlap")] + list(enumerate(ov)))


def cmd_cloning(args):
    best = harness.cloning_bound_search(harness.ZPI2, args.resolution)
    return ({"grid_resolution": args.resolution, "best_mean_overlap": best,
             "frozen_constant": harness.CLONING_BOUND,
             "copy_strategy": harness.strategy_overlap("copy"),
             "mixed_strategy": harness.strategy_overlap("mixed")}, best < 0.99, [])


def cmd_signaling(args):
    rep = _merge_reports(_run_chunked(
        partial(_w_signal, strategy=args.strategy, leak=args.strategy == "leak"),
        "signaling", args.seed, args.trials, args.jobs))
    return _report_result(rep, None)


def cmd_verify(args):
    suite = harness.verify_lemmas(stream(args.seed, CMD_ID["verify-lemmas"]), args.samples)
    d = suite.to_dict()
    return d, suite.ok, []


HANDLERS = {"qfactory4": cmd_qfactory4, "qfactory8": cmd_qfactory8, "ubqc": cmd_ubqc,
            "qf-ubqc": cmd_qf_ubqc, "blindness": cmd_blindness, "hybrids": cmd_hybrids,
            "basis-blindness": cmd_basis, "describe": cmd_describe,
            "cloning-bound": cmd_cloning, "signaling": cmd_signaling,
            "verify-lemmas": cmd_verify}


# argument parsing ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="root seed (default: $QFUBQC_SEED, else 0)")
    common.add_argument("--trials", type=int, default=1000)
    common.add_argument("--family", choices=("toy", "lwe"), default="toy")
    common.add_argument("--n", type=int, default=None, help="key size / security knob")
    common.add_argument("--graph", type=int, nargs=2, metavar=("N", "M"))
    common.add_argument("--pattern", help="pattern JSON file")
    common.add_argument("--output", "-o", help="report path (default stdout)")
    common.add_argument("--csv", help="write per-trial rows here")
    common.add_argument("--jobs", type=int, default=1)

    p = _Parser(prog="qfubqc", description="QFactory / UBQC simulator and test harness")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name == "qfactory4":
            sp.add_argument("--basis", choices=("standard", "rotated"), default="standard")
        if name in ("qfactory4", "qfactory8"):
            sp.add_argument("--engine", choices=("auto", "dense", "sparse"), default="auto")
        if name == "blindness":
            sp.add_argument("--adversary", choices=sorted(_ADVERSARIES), default="random")
            sp.add_argument("--leak", action="store_true")
        if name == "hybrids":
            sp.add_argument("--game", type=int, required=True)
            sp.add_argument("--adversary", choices=sorted(_HYBRID_ADV), default="random")
        if name == "basis-blindness":
            sp.add_argument("--kind", choices=("fourState", "eightState"), default="fourState")
            sp.add_argument("--guesser", choices=sorted(_GUESSERS), default="blind")
        if name == "describe":
            sp.add_argument("--target", choices=("QFactory4", "QFactory8"), default="QFactory4")
            sp.add_argument("--describer", default="BruteForceDescriber",
                            choices=("TrapdoorDescriber", "BruteForceDescriber", "MeasureAndPrepare"))
        if name == "cloning-bound":
            sp.add_argument("--resolution", type=int, default=1000)
        if name == "signaling":
            sp.add_argument("--strategy", choices=sorted(_STRATEGIES), default="constant")
        if name == "verify-lemmas":
            sp.add_argument("--samples", type=int, default=1000)
    return p


def _validate(args) -> None:
    if args.command is None:
        raise UsageError("missing subcommand")
    if args.seed is None:
        args.seed = default_seed(0)
    if args.seed < 0:
        raise UsageError("--seed must be non-negative")
    if args.trials < 1:
        raise UsageError("--trials must be positive")
    if args.jobs < 1:
        raise UsageError("--jobs must be positive")
    if args.graph and min(args.graph) < 1:
        raise UsageError("--graph needs positive sizes")
    if args.command == "hybrids" and args.game not in range(1, 8):
        raise UsageError("--game must be 1..7")
    if args.family == "lwe" and args.command in ("basis-blindness",) and args.guesser == "bruteforce":
        raise UsageError("brute-force guesser needs --family toy")


def _config(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items())
            if k not in ("output", "csv", "jobs") and v is not None}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _validate(args)
        result, ok, rows = HANDLERS[args.command](args)
    except UsageError as exc:
        print(f"qfubqc: error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except (ubqc.UBQCError, harness.NotSupported, qf.NotSupported) as exc:
        print(f"qfubqc: error: {exc}", file=sys.stderr)
        return 1
    report = {"schema": SCHEMA, "subcommand": args.command, "version": __version__,
              "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
              "config": _config(args), "passed": bool(ok), "result": result}
    text = json.dumps(report, sort_keys=True, indent=2, default=_json_default)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    if args.csv and rows:
        with open(args.csv, "w", newline="") as fh:
            csv.writer(fh).writerows(rows)
    return 0 if ok else 2


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not serialisable: {type(o).__name__}")


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
