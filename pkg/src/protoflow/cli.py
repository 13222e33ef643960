"""Command-line surface: ingest, run, temporal, sim, validate, gen.

Version literals are epoch:seq (e.g. `3:0`).  The PROTOFLOW_SEED environment
variable overrides --seed.  Exit codes: 0 success, 1 runtime failure (the
diagnostic names the failing engine error), 2 usage.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .engine import SimConfig, simulate
from .errors import EngineError
from .store import Version
from .streamio import read_lines, validate_stream
from .streamgen import KINDS, gen_stream

ALGORITHMS = ("pagerank", "sssp", "wcc", "wordcount")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--stream", required=True, help="mutation stream (JSON lines)")
    parser.add_argument("--machines", type=int, default=1)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--partitions", type=int, default=64)
    parser.add_argument("--metrics", help="write metrics JSON here")
    parser.add_argument("--trace", help="write the simulation trace here")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="protoflow")
    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", help="ingest a stream and export final state")
    _add_common(p_ingest)
    p_ingest.add_argument("--out", required=True)

    p_run = sub.add_parser("run", help="run an algorithm on a snapshot")
    _add_common(p_run)
    p_run.add_argument("--algo", required=True, choices=ALGORITHMS)
    p_run.add_argument("--at", required=True, help="snapshot version epoch:seq")
    p_run.add_argument("--source", help="source vertex (sssp)")
    p_run.add_argument("--iters", type=int, default=20)
    p_run.add_argument("--damping", type=float, default=0.85)
    p_run.add_argument("--scheduler", choices=("fifo", "priority"), default="priority")
    p_run.add_argument("--out", required=True)

    p_temporal = sub.add_parser("temporal", help="per-epoch digests over a version range")
    _add_common(p_temporal)
    p_temporal.add_argument("--algo", default="degree", choices=("degree",))
    p_temporal.add_argument("--from", dest="from_v", required=True)
    p_temporal.add_argument("--to", dest="to_v", required=True)
    p_temporal.add_argument("--stride", type=int, default=1)
    p_temporal.add_argument("--out", required=True)

    p_sim = sub.add_parser("sim", help="full simulation with metrics")
    _add_common(p_sim)
    p_sim.add_argument("--algo", choices=ALGORITHMS + ("identity", "none"), default="none")
    p_sim.add_argument("--at")
    p_sim.add_argument("--source")
    p_sim.add_argument("--iters", type=int, default=20)
    p_sim.add_argument("--damping", type=float, default=0.85)
    p_sim.add_argument("--scheduler", choices=("fifo", "priority"), default="priority")
    p_sim.add_argument("--out")

    p_validate = sub.add_parser("validate", help="schema and epoch-order check")
    p_validate.add_argument("--stream", required=True)

    p_gen = sub.add_parser("gen", help="generate a synthetic stream")
    p_gen.add_argument("--kind", required=True, choices=KINDS)
    p_gen.add_argument("--epochs", type=int, default=3)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--params", default="{}", help="extra generator params, JSON")
    p_gen.add_argument("--out", required=True)
    return parser


def _config(args) -> SimConfig:
    seed = args.seed
    env_seed = os.environ.get("PROTOFLOW_SEED")
    if env_seed is not None:
        seed = int(env_seed)
    return SimConfig(
        machines=args.machines,
        seed=seed,
        partitions=args.partitions,
    )


def _job_from_args(args) -> dict | None:
    algo = getattr(args, "algo", None)
    if algo in (None, "none"):
        return {"kind": "none"}
    if algo == "identity":
        return {"kind": "identity"}
    if algo == "temporal":
        return None
    job = {"kind": algo, "at": args.at}
    if algo == "pagerank":
        job.update(iterations=args.iters, damping=args.damping)
    elif algo == "sssp":
        if not args.source:
            raise UsageError("--source is required for sssp")
        job.update(source=args.source, scheduler=args.scheduler)
    return job


class UsageError(Exception):
    pass


def _write_lines(path: str, lines) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for line in lines:
            handle.write(line)
            handle.write("\n")


def _write_side_outputs(args, result) -> None:
    if getattr(args, "metrics", None):
        with open(args.metrics, "w", encoding="utf-8") as handle:
            json.dump(result.metrics, handle, indent=2, sort_keys=True, default=str)
            handle.write("\n")
    if getattr(args, "trace", None):
        _write_lines(args.trace, result.trace.lines())


def _cmd_ingest(args) -> int:
    result = simulate(_config(args), read_lines(args.stream), {"kind": "none"})
    engine = result.engine
    progress = engine.global_progress()
    lines = [json.dumps({"meta": {"global_progress": progress,
                                  "machines": args.machines,
                                  "trace_hash": result.trace_hash}})]
    if progress is not None:
        snapshot = engine.global_snapshot(Version.end_of_epoch(progress))
        lines.extend(snapshot.export_lines())
    _write_lines(args.out, lines)
    _write_side_outputs(args, result)
    print(f"ingested: global progress {progress}, state in {args.out}")
    return 0


def _cmd_run(args) -> int:
    Version.parse(args.at)
    job = _job_from_args(args)
    result = simulate(_config(args), read_lines(args.stream), job)
    _write_lines(args.out, (json.dumps(r, sort_keys=True) for r in result.outputs))
    _write_side_outputs(args, result)
    print(f"{args.algo}: {len(result.outputs)} results in {args.out}")
    return 0


def _cmd_temporal(args) -> int:
    job = {"kind": "temporal", "algo": args.algo, "from": args.from_v,
           "to": args.to_v, "stride": args.stride}
    Version.parse(args.from_v)
    Version.parse(args.to_v)
    result = simulate(_config(args), read_lines(args.stream), job)
    _write_lines(args.out, (json.dumps(r, sort_keys=True) for r in result.outputs))
    _write_side_outputs(args, result)
    print(f"temporal {args.algo}: {len(result.outputs)} samples in {args.out}")
    return 0


def _cmd_sim(args) -> int:
    job = _job_from_args(args)
    if job["kind"] not in ("none", "identity") and not args.at:
        raise UsageError("--at is required when sim runs an algorithm")
    result = simulate(_config(args), read_lines(args.stream), job)
    if args.out:
        _write_lines(args.out, (json.dumps(r, sort_keys=True) for r in result.outputs))
    _write_side_outputs(args, result)
    print(f"sim: {result.metrics['ticks']} ticks, trace {result.trace_hash[:16]}, "
          f"pipelined={result.pipelined}")
    return 0


def _cmd_validate(args) -> int:
    counts = validate_stream(read_lines(args.stream))
    print(f"valid: {counts['mutations']} mutations, {counts['epochs']} epochs, "
          f"{counts['declarations']} declarations")
    return 0


def _cmd_gen(args) -> int:
    params = json.loads(args.params)
    lines, manifest = gen_stream(args.kind, seed=args.seed, **params, epochs=args.epochs)
    _write_lines(args.out, lines)
    with open(args.out + ".manifest.json", "w", encoding="utf-8") as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
        handle.write("\n")
    print(f"generated {args.kind}: {len(lines)} lines in {args.out}")
    return 0


_COMMANDS = {
    "ingest": _cmd_ingest,
    "run": _cmd_run,
    "temporal": _cmd_temporal,
    "sim": _cmd_sim,
    "validate": _cmd_validate,
    "gen": _cmd_gen,
}


def cli_main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except EngineError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_main())
