"""Run, score and time heavy-hitter experiments on synthetic or recorded streams.

Exit codes: 0 on success, 2 for configuration errors, 3 when ``--assert``
finds an accuracy violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from .decay import DecaySpec
from .eval import streams
from .eval.metrics import MetricsRow, score
from .eval.oracle import ExactOracle
from .experiment import AXES, ExperimentError, ExperimentGrid, ExperimentResult, aggregate, measure_scaling, run_experiment, scaling_csv
from .harness import WorkerError, partition, run_parallel, serve_coordinator, submit_to_coordinator
from .sketch import ConfigError, Sketch, SketchConfig, dims_from_params

EXIT_CONFIG = 2
EXIT_ASSERT = 3

DEFAULT_DEPTH = 4
DEFAULT_WIDTH = 1340

log = logging.getLogger("fadinghh")


class CliError(Exception):
    pass


def _csv_floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _add_sketch_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("sketch")
    g.add_argument("--phi", type=float, default=0.01)
    width = g.add_mutually_exclusive_group()
    width.add_argument("--epsilon", type=float)
    width.add_argument("--width", type=int)
    depth = g.add_mutually_exclusive_group()
    depth.add_argument("--delta", type=float)
    depth.add_argument("--depth", type=int)
    g.add_argument("--seed", type=int, default=0, help="hash seed (grid runs add the repetition index)")
    g.add_argument("--decay", choices=["none", "exp", "poly"], default="exp")
    g.add_argument("--lambda", dest="lam", type=float, help="exponential rate (default 1/n)")
    g.add_argument("--beta", type=float, default=1.0, help="polynomial exponent")
    g.add_argument("--landmark", default="0", help="landmark time, or 'min' for the earliest timestamp")
    g.add_argument("--query-time", type=float)


def _add_stream_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("stream")
    g.add_argument("--input", type=Path, help="binary stream file or CSV of item,timestamp")
    g.add_argument("--n", type=int, default=1_000_000)
    g.add_argument("--m", type=int, default=100_000)
    g.add_argument("--rho", type=float, default=1.1)
    g.add_argument("--gen-seed", type=int, help="stream seed (defaults to --seed)")
    g.add_argument("--arrivals", choices=streams.ARRIVALS, default="index")


def _add_output_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--out", type=Path, help="write output here instead of stdout")
    p.add_argument("--no-timing", action="store_true", help="drop wall-clock columns")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fadinghh", description=__doc__.splitlines()[0])
    parser.add_argument("--config", type=Path, help="key = value file mirroring long flags")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a zipfian stream file")
    gen.add_argument("--gen", choices=["zipf"], default="zipf")
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--m", type=int, required=True)
    gen.add_argument("--rho", type=float, required=True)
    gen.add_argument("--gen-seed", type=int, default=0)
    gen.add_argument("--arrivals", choices=streams.ARRIVALS, default="index")
    gen.add_argument("--out", type=Path, required=True, help="output path (.csv for text)")

    run = sub.add_parser("run", help="single parallel run, scored against the exact oracle")
    _add_stream_flags(run)
    _add_sketch_flags(run)
    _add_output_flags(run)
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--transport", choices=["inproc", "tcp"])
    tcp = run.add_mutually_exclusive_group()
    tcp.add_argument("--listen", metavar="HOST:PORT", help="act as coordinator collecting remote sketches")
    tcp.add_argument("--connect", metavar="HOST:PORT", help="act as remote worker --worker-index")
    run.add_argument("--worker-index", type=int, default=0)
    run.add_argument("--assert", dest="check", action="store_true")

    grid = sub.add_parser("grid", help="experiment grid varying one axis")
    _add_stream_flags(grid)
    _add_sketch_flags(grid)
    _add_output_flags(grid)
    grid.add_argument("--workers", type=int, default=1)
    grid.add_argument("--transport", choices=["inproc", "tcp"])
    grid.add_argument("--vary", choices=AXES)
    grid.add_argument("--values", type=_csv_floats, default=[])
    grid.add_argument("--reps", type=int, default=1)
    grid.add_argument("--assert", dest="check", action="store_true")

    scale = sub.add_parser("scale", help="strong/weak scaling timings")
    _add_stream_flags(scale)
    _add_sketch_flags(scale)
    scale.add_argument("--ps", type=_csv_floats, default=[1, 2, 4, 8])
    scale.add_argument("--grain", type=int, help="records per worker for weak scaling")
    scale.add_argument("--transport", choices=["inproc", "tcp"])
    scale.add_argument("--out", type=Path)

    check = sub.add_parser("assert", help="accuracy acceptance grid; exit 3 on violation")
    _add_stream_flags(check)
    _add_sketch_flags(check)
    _add_output_flags(check)
    check.add_argument("--rhos", type=_csv_floats, default=[1.1, 1.4, 1.8, 2.2])
    check.add_argument("--ps", type=_csv_floats, default=[1, 2, 4, 8])
    check.add_argument("--reps", type=int, default=5)
    check.add_argument("--transport", choices=["inproc", "tcp"])
    check.set_defaults(n=2_000_000)
    return parser


def read_config(path: Path) -> dict[str, str]:
    values = {}
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise CliError(f"{path}:{lineno}: expected key = value")
        values[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return values


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if args.config is None:
        return args
    values = read_config(args.config)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, raw in values.items():
        key = {"lambda": "lam", "assert": "check"}.get(key, key)
        action = actions.get(key)
        if action is None:
            raise CliError(f"unknown config key {key!r} for {args.command}")
        if action.nargs == 0:
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
        else:
            defaults[key] = action.type(raw) if action.type else raw
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _load_stream(args) -> streams.Stream:
    if args.input is not None:
        return streams.load(args.input)
    seed = args.seed if args.gen_seed is None else args.gen_seed
    return streams.generate(streams.ZipfStreamSpec(args.n, args.m, args.rho, seed, args.arrivals))


def _decay(args, stream: streams.Stream | None, n: int) -> DecaySpec:
    if args.landmark == "min":
        landmark = float(stream.timestamps.min()) if stream is not None and len(stream) else 0.0
    else:
        landmark = float(args.landmark)
    if args.decay == "none":
        return DecaySpec.none(landmark)
    if args.decay == "poly":
        return DecaySpec.polynomial(args.beta, landmark)
    return DecaySpec.exponential(1.0 / max(n, 1) if args.lam is None else args.lam, landmark)


def _dims(args) -> tuple[int, int]:
    """(depth, width) from the flags; Table-1 sizes 4 x 1340 when neither form is given."""
    depth, width = args.depth, args.width
    if depth is None:
        depth = dims_from_params(0.5, args.delta)[0] if args.delta is not None else DEFAULT_DEPTH
    if width is None:
        width = dims_from_params(args.epsilon, 0.5)[1] if args.epsilon is not None else DEFAULT_WIDTH
    return depth, width


def _sketch_config(args, decay: DecaySpec) -> SketchConfig:
    kwargs = dict(phi=args.phi, seed=args.seed, decay=decay)
    if args.epsilon is not None:
        kwargs["epsilon"] = args.epsilon
    if args.delta is not None:
        kwargs["delta"] = args.delta
    depth, width = _dims(args)
    if args.epsilon is None:
        kwargs["width"] = width
    if args.delta is None:
        kwargs["depth"] = depth
    return SketchConfig(**kwargs)


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def _violations(rows: list[MetricsRow]) -> list[str]:
    bad = []
    for r in rows:
        if r.recall < 1.0:
            bad.append(f"p={r.p} rho={r.rho} seed={r.seed}: recall {r.recall:.4f}")
        if r.false_positive_violations:
            bad.append(f"p={r.p} rho={r.rho} seed={r.seed}: {r.false_positive_violations} false positives below (phi-eps)C")
    if rows:
        perfect = sum(r.precision == 1.0 for r in rows) / len(rows)
        mean = sum(r.precision for r in rows) / len(rows)
        if perfect < 0.95 or mean < 0.98:
            bad.append(f"precision 1.0 in {perfect:.1%} of runs, mean {mean:.4f}")
    return bad


def cmd_gen(args) -> int:
    stream = streams.generate(streams.ZipfStreamSpec(args.n, args.m, args.rho, args.gen_seed, args.arrivals))
    if args.out.suffix.lower() == ".csv":
        with open(args.out, "w") as fh:
            fh.write("item,timestamp\n")
            for item, t in zip(stream.items.tolist(), stream.timestamps.tolist()):
                fh.write(f"{item},{t!r}\n")
    else:
        streams.save(args.out, stream)
    log.info("wrote %d records to %s", len(stream), args.out)
    return 0


def cmd_run(args) -> int:
    stream = _load_stream(args)
    decay = _decay(args, stream, len(stream))
    config = _sketch_config(args, decay)
    d, w = config.dims

    if args.connect:
        part = partition(len(stream), args.workers)[args.worker_index]
        sketch = Sketch(config)
        sketch.process_many(stream.items[part.start:part.end], stream.timestamps[part.start:part.end])
        submit_to_coordinator(args.connect, args.worker_index, sketch)
        log.info("worker %d submitted %d records", args.worker_index, len(part))
        return 0

    if args.listen:
        merged, gcount = serve_coordinator(args.listen, args.workers)
        report = merged.query(t=args.query_time, gcount_raw=gcount)
        elapsed_ms = math.nan
    else:
        result = run_parallel(stream.items, stream.timestamps, config, args.workers, args.transport)
        report = result.query(t=args.query_time)
        elapsed_ms = result.ingest_seconds * 1e3

    oracle = ExactOracle(stream.items, stream.timestamps, decay)
    row = score(report, oracle, config.phi, epsilon=config.effective_epsilon,
                n=len(stream), m=args.m, rho=args.rho, w=w, d=d, p=args.workers, seed=args.seed)
    row.elapsed_ms = elapsed_ms
    row.updates_per_ms = len(stream) / elapsed_ms if elapsed_ms > 0 else math.nan
    result = ExperimentResult([row], aggregate([row], None))
    if args.format == "json":
        doc = json.loads(result.to_json(not args.no_timing))
        doc["report"] = {"query_time": report.query_time, "decayed_count": report.normalized_total,
                         "items": [{"item": i, "estimate": p} for i, p in sorted(report.entries.items())]}
        _emit(json.dumps(doc, indent=2) + "\n", args.out)
    else:
        _emit(result.to_csv(not args.no_timing), args.out)
    return _check(args, [row])


def _grid_from_args(args, **overrides) -> ExperimentGrid:
    stream = streams.load(args.input) if args.input is not None else None
    landmark = args.landmark
    if landmark == "min":
        landmark = float(stream.timestamps.min()) if stream is not None and len(stream) else 0.0
    depth, width = _dims(args)
    kwargs = dict(
        n=len(stream) if stream is not None else args.n, m=args.m, rho=args.rho, phi=args.phi,
        w=width, d=depth, p=getattr(args, "workers", 1), seed=args.seed, decay=args.decay,
        rate=args.lam if args.decay == "exp" else (args.beta if args.decay == "poly" else None),
        landmark=float(landmark), arrivals=args.arrivals, transport=args.transport, stream=stream,
    )
    kwargs.update(overrides)
    return ExperimentGrid(**kwargs)


def cmd_grid(args) -> int:
    grid = _grid_from_args(args, vary=args.vary, values=args.values, reps=args.reps)
    result = run_experiment(grid)
    timing = not args.no_timing
    _emit(result.to_json(timing) + "\n" if args.format == "json" else result.to_csv(timing), args.out)
    return _check(args, result.rows)


def cmd_scale(args) -> int:
    grid = _grid_from_args(args)
    rows = measure_scaling(grid, [int(p) for p in args.ps], args.grain)
    _emit(scaling_csv(rows), args.out)
    return 0


def cmd_assert(args) -> int:
    rows = []
    for rho in args.rhos:
        grid = _grid_from_args(args, rho=rho, vary="p", values=args.ps, reps=args.reps)
        rows += run_experiment(grid).rows
    result = ExperimentResult(rows, aggregate(rows, "p"))
    timing = not args.no_timing
    _emit(result.to_json(timing) + "\n" if args.format == "json" else result.to_csv(timing), args.out)
    args.check = True
    return _check(args, rows)


def _check(args, rows: list[MetricsRow]) -> int:
    if not getattr(args, "check", False):
        return 0
    bad = _violations(rows)
    for line in bad:
        print(f"ASSERT FAILED: {line}", file=sys.stderr)
    return EXIT_ASSERT if bad else 0


COMMANDS = {"gen": cmd_gen, "run": cmd_run, "grid": cmd_grid, "scale": cmd_scale, "assert": cmd_assert}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _apply_config(parser, argv)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ValueError, CliError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ExperimentError, WorkerError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG if _caused_by_input(exc) else 1


def _caused_by_input(exc: BaseException) -> bool:
    while exc is not None:
        if isinstance(exc, (ValueError, OSError)):
            return True
        exc = exc.__cause__
    return False


if __name__ == "__main__":
    sys.exit(main())
