"""Command-line interface.

Exit codes: 0 success, 1 runtime or numerical failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time

import numpy as np

from . import __version__
from .channel import generate_rayleigh, load_channel, save_channel, stream, trial_seed
from .errors import BudgetExceededError, TASError
from .harness import ExperimentConfig, emit_csv, emit_summary, run_sweep, write_trials
from .metrics import Measure, PowerModel, db_to_linear, linear_to_db
from .oracle import exhaustive_search, random_tas
from .precoders import PrecoderKind, PrecoderSpec
from .stepwise import AlgoConfig, CandidateEval, advance, initialize, run, scan_candidates, step_context


class UsageError(Exception):
    pass


def _gen_triplet(text: str):
    try:
        n, k, seed = (int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected N,K,SEED, got {text!r}") from None
    if n < 1 or k < 1 or seed < 0:
        raise argparse.ArgumentTypeError("N and K must be positive and SEED nonnegative")
    return n, k, seed


def _spec(args) -> PrecoderSpec:
    kind = PrecoderKind(args.precoder)
    lam = getattr(args, "lam", None)
    if kind is PrecoderKind.RZF:
        if lam is None or not lam > 0:
            raise UsageError("--precoder rzf requires --lambda > 0")
        return PrecoderSpec.rzf(lam)
    if lam is not None:
        raise UsageError("--lambda is only valid with --precoder rzf")
    return PrecoderSpec(kind)


def _measure(kind: str, k: int) -> Measure:
    if kind == "se":
        return Measure.spectral(k)
    return Measure.energy(k, PowerModel.reference())


def _add_precoder(p, required=True):
    p.add_argument("--precoder", choices=[k.value for k in PrecoderKind], required=required, default="mrt")
    p.add_argument("--lambda", dest="lam", type=float, default=None, help="RZF regularizer (> 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stepwise-tas", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate an i.i.d. Rayleigh channel file")
    g.add_argument("--gen", type=_gen_triplet, required=True, metavar="N,K,SEED")
    g.add_argument("--out", required=True)

    r = sub.add_parser("run", help="run the stepwise selection on one channel")
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--channel", metavar="FILE")
    src.add_argument("--gen", type=_gen_triplet, metavar="N,K,SEED")
    _add_precoder(r)
    r.add_argument("--measure", choices=["se", "ee"], required=True)
    r.add_argument("--l-max", type=int, required=True)
    r.add_argument("--p-max-db", type=float, required=True)
    r.add_argument("--force-full", action="store_true")
    r.add_argument("--out", metavar="JSONL", help="write the per-step trajectory")

    s = sub.add_parser("sweep", help="Monte-Carlo sweep over l_max")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True, metavar="CSV")
    s.add_argument("--workers", type=int, default=None, help="override the config worker count")
    s.add_argument("--dump-trials", metavar="JSONL")

    o = sub.add_parser("oracle-check", help="compare stepwise selection with exhaustive search")
    o.add_argument("--gen", type=_gen_triplet, required=True, metavar="N,K,SEED")
    o.add_argument("--l-max", type=int, required=True)
    _add_precoder(o)
    o.add_argument("--measure", choices=["se", "ee"], required=True)
    o.add_argument("--trials", type=int, default=1)
    o.add_argument("--p-max-db", type=float, default=0.0)

    b = sub.add_parser("bench", help="time the candidate scan paths")
    b.add_argument("--n", type=int, required=True)
    b.add_argument("--k", type=int, required=True)
    b.add_argument("--l-max", type=int, required=True)
    _add_precoder(b)
    b.add_argument("--measure", choices=["se", "ee"], default="ee")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--naive", action="store_true", help="also time the from-scratch path")
    return parser


def _cmd_gen(args):
    n, k, seed = args.gen
    save_channel(generate_rayleigh(n, k, seed), args.out)
    print(f"wrote {n}x{k} channel (seed {seed}) to {args.out}")


def _cmd_run(args):
    spec = _spec(args)
    channel = load_channel(args.channel) if args.channel else generate_rayleigh(*args.gen)
    p_max = db_to_linear(args.p_max_db)
    config = AlgoConfig(args.l_max, p_max, spec, _measure(args.measure, channel.n_users), force_full=args.force_full)
    res = run(channel, config)
    unit = "bits/J" if args.measure == "ee" else "bit/s/Hz"
    print(f"channel: {channel.n_antennas}x{channel.n_users} {channel.label} seed={channel.seed}")
    print(f"precoder: {spec}")
    print(f"measure: {args.measure}")
    print(f"p_max: {p_max!r} W ({args.p_max_db!r} dB)")
    print(f"l_star: {res.l_star}")
    print(f"p_star: {res.p_star!r} W ({linear_to_db(res.p_star):.6f} dB)")
    print("selected: " + " ".join(str(n) for n in sorted(res.selected)))
    print(f"measure_value: {res.measure_value!r} {unit}")
    print(f"stopped_by_rule: {str(res.stopped).lower()}")
    if args.out:
        res.write_trajectory(args.out)


def _cmd_sweep(args):
    config = ExperimentConfig.from_json(args.config)
    if args.workers is not None:
        config = ExperimentConfig(**{**config.__dict__, "workers": args.workers})
    result = run_sweep(config)
    emit_csv(result, args.out)
    if args.dump_trials:
        write_trials(result, args.dump_trials)
    print(f"p_max: {config.p_max!r} W ({linear_to_db(config.p_max):.6f} dB); precoder {config.precoder}; "
          f"{config.trials} trials; master seed {config.master_seed}")
    sys.stdout.write(emit_summary(result, config.measure.kind))


def _cmd_oracle(args):
    spec = _spec(args)
    n, k, seed = args.gen
    p_max = db_to_linear(args.p_max_db)
    config = AlgoConfig(args.l_max, p_max, spec, _measure(args.measure, k))
    ratios, rand_ratios, hits = [], [], 0
    print("trial  seed                  stepwise      optimum       ratio         random_ratio")
    for t in range(args.trials):
        s = seed if args.trials == 1 else trial_seed(seed, t)
        channel = generate_rayleigh(n, k, s)
        best = exhaustive_search(channel, config)
        mine = run(channel, config)
        rnd = random_tas(channel, mine.l_star, spec, config.measure, p_max, stream(seed, t, 1))
        ratio = mine.measure_value / best.value if best.value > 0 else 1.0
        rratio = rnd.value / best.value if best.value > 0 else 1.0
        ratios.append(ratio)
        rand_ratios.append(rratio)
        hits += ratio >= 1.0 - 1e-9
        print(f"{t:<6d} {s:<21d} {mine.measure_value:<13.6g} {best.value:<13.6g} {ratio:<13.9f} {rratio:.9f}")
    print(f"mean_ratio: {math.fsum(ratios) / len(ratios)!r}")
    print(f"mean_random_ratio: {math.fsum(rand_ratios) / len(rand_ratios)!r}")
    print(f"optimum_fraction: {hits / len(ratios)!r}")


def bench(n: int, k: int, l_max: int, spec: PrecoderSpec, measure_kind: str = "ee", seed: int = 0, path: str = "rank_one") -> dict:
    """Time one forced selection run to ``l_max`` and its candidate scans."""
    channel = generate_rayleigh(n, k, seed)
    config = AlgoConfig(l_max, 1.0, spec, _measure(measure_kind, k), force_full=True, scan=path)
    start = time.perf_counter()
    run(channel, config)
    total = time.perf_counter() - start

    # scan-only timing over the same trajectory length
    state = initialize(channel, config)
    ctx = step_context(state, config)
    scans = 0
    evaluated = 0
    scan_time = 0.0
    ranked = list(np.argsort(-np.sum(np.abs(channel.gains) ** 2, axis=1)) + 1)
    for level in range(1, l_max):
        t0 = time.perf_counter()
        res = scan_candidates(state, ctx, channel, config)
        scan_time += time.perf_counter() - t0
        scans += 1
        evaluated += len(res.antennas)
        if level == l_max - 1:
            break
        # grow along a fixed order so both paths time the same states
        nxt = next(a for a in ranked if a not in state.selected)
        state = advance(state, CandidateEval(int(nxt), None, None, None, None, 0.0), channel, config)
        ctx = step_context(state, config)
    return {
        "path": path,
        "n": n,
        "k": k,
        "l_max": l_max,
        "precoder": str(spec),
        "total_seconds": total,
        "scan_seconds": scan_time,
        "candidate_evaluations": evaluated,
        "per_candidate_ns": scan_time / max(evaluated, 1) * 1e9,
    }


def _cmd_bench(args):
    spec = _spec(args)
    paths = ["rank_one", "naive"] if args.naive else ["rank_one"]
    for path in paths:
        print(json.dumps(bench(args.n, args.k, args.l_max, spec, args.measure, args.seed, path)))


_COMMANDS = {
    "gen": _cmd_gen,
    "run": _cmd_run,
    "sweep": _cmd_sweep,
    "oracle-check": _cmd_oracle,
    "bench": _cmd_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return 2
    except BudgetExceededError as exc:
        print(f"error: {exc} (required subsets: {exc.required})", file=sys.stderr)
        return 1
    except (TASError, ArithmeticError, ValueError, OSError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
