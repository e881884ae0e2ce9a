"""``streamrev`` command line: run, cost, masks, decode, compare."""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from importlib import resources
from pathlib import Path

from . import config as cfgmod
from . import ctcdec, formats, harness, masks, scheduler
from .errors import DomainError, FormatError, InvalidArgument, StreamrevError, StreamrevIOError

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


class UsageError(Exception):
    pass


def fixture_config() -> Path:
    return Path(resources.files("streamrev") / "data" / "fixture.cfg")


def _session_values(args) -> dict:
    if args.fixture and args.config:
        raise UsageError("--fixture and --config are mutually exclusive")
    path = fixture_config() if args.fixture else args.config
    if path is None:
        raise UsageError("need --config FILE or --fixture")
    values = cfgmod.load(path)
    cfgmod.apply_env(values)
    for item in args.set or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        cfgmod.set_value(values, key.strip(), value.strip(), base_dir=Path.cwd(), where="--set")
    if args.mode:
        if len(args.mode) > 1:
            raise UsageError("only one --mode per run; use 'compare' for several")
        cfgmod.set_value(values, "session.mode", args.mode[0])
    if args.seed is not None:
        cfgmod.set_value(values, "session.seed", str(args.seed))
    return values


def _write(path: Path, text: str):
    try:
        path.write_text(text)
    except OSError as exc:
        raise StreamrevIOError(path, exc.strerror or str(exc)) from exc


def cmd_run(args) -> int:
    session, effective = cfgmod.to_session(_session_values(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = harness.run_session(session)
    _write(out / "transcript.txt", " ".join(map(str, result.transcript)) + "\n")
    _write(out / "metrics.jsonl", harness.metrics_jsonl(result.metrics))
    _write(out / "events.csv", result.log_csv())
    _write(out / "timing.jsonl", json.dumps({k: getattr(result.metrics, k) for k in result.metrics.WALL_CLOCK}) + "\n")
    window = effective["session.trace_window"]
    _write(out / "trace.csv", harness.trace_to_csv(harness.emit_blank_dominance_trace(result, window)))
    _write(out / "effective.cfg", cfgmod.dump(effective))
    print(" ".join(map(str, result.transcript)))
    return EXIT_OK


def cmd_compare(args) -> int:
    session, _ = cfgmod.to_session(_session_values(args))
    modes = args.modes or ["causal", "revision", "offline"]
    if len(modes) < 2:
        raise UsageError("compare needs at least two modes")

    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        rows = list(pool.map(lambda m: harness.mode_row(session, m), modes))
    text = harness.rows_to_csv(rows)
    if args.out:
        _write(Path(args.out), text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_cost(args) -> int:
    try:
        policy = scheduler.RevisionPolicy(sigma=args.sigma, nu=args.nu, eta=args.eta)
    except InvalidArgument as exc:
        raise UsageError(str(exc)) from exc
    report = scheduler.cost_report(args.T, policy)
    print(f"T={report.T} sigma={policy.sigma} nu={policy.nu} eta={policy.eta} mu={report.mu}")
    print(f"predicted_extra_frames={report.predicted}")
    print(f"measured_extra_frames={report.measured}")
    sys.stdout.write(scheduler.events_to_csv(scheduler.plan(args.T, policy)))
    return EXIT_OK


def cmd_masks(args) -> int:
    spec = masks.MaskSpec(masks.MaskKind(args.kind), args.T, chunk=args.chunk, sigma=args.sigma, nu=args.nu)
    mask = spec.build()
    if args.out:
        masks.export_mask(mask, args.out, args.format)
    print("e = [" + ",".join(str(int(e)) for e in mask.ends) + "]")
    return EXIT_OK


def cmd_decode(args) -> int:
    old = ctcdec.top_two_rows(formats.load_matrix(args.posteriors))
    hyp = ctcdec.psd_decode(old, args.theta)
    if args.new is None:
        print("transcript: " + " ".join(map(str, hyp.tokens)))
        return EXIT_OK
    new_rows = formats.load_matrix(args.new)
    new = ctcdec.top_two_rows(new_rows)
    if len(new) != len(old):
        raise FormatError(f"{args.new}: {len(new)} rows, {args.posteriors} has {len(old)}")
    al = ctcdec.spike_align_trace(old, new, args.theta)
    res = ctcdec.redecode_from(hyp, al.tau, new, args.theta, keep=al.i_stop, pairs=al.pairs)
    print(f"tau={al.tau} T_cal={len(old) + 1}")
    print("transcript: " + " ".join(map(str, res.hypothesis.tokens)))
    return EXIT_OK


def _session_args(p):
    p.add_argument("--config", help="session config file (section.key = value)")
    p.add_argument("--fixture", action="store_true", help="use the bundled 120-frame fixture")
    p.add_argument("--mode", action="append", choices=[m.value for m in harness.Mode])
    p.add_argument("--seed", type=int)
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="streamrev", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one streaming session")
    _session_args(p)
    p.add_argument("--out", default="streamrev-out", help="output directory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="run several modes on one input")
    _session_args(p)
    p.add_argument("--modes", nargs="+", choices=[m.value for m in harness.Mode])
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", help="write the CSV here as well")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("cost", help="predicted vs planned recompute frames")
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--sigma", type=int, required=True)
    p.add_argument("--nu", type=int, required=True)
    p.add_argument("--eta", type=int, default=0, choices=[0, 1])
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("masks", help="build and export an attention mask")
    p.add_argument("--kind", required=True, choices=[k.value for k in masks.MaskKind])
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--chunk", type=int)
    p.add_argument("--sigma", type=int)
    p.add_argument("--nu", type=int)
    p.add_argument("--format", default="bin", choices=["bin", "csv"])
    p.add_argument("--out")
    p.set_defaults(func=cmd_masks)

    p = sub.add_parser("decode", help="PSD decode a posterior file; align against a revised one")
    p.add_argument("--posteriors", required=True, help="SRF1 or CSV, rows = frames")
    p.add_argument("--new", help="revised posteriors with the same shape")
    p.add_argument("--theta", type=float, default=0.3)
    p.set_defaults(func=cmd_decode)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, cfgmod.ConfigError, FormatError, DomainError, InvalidArgument) as exc:
        print(f"streamrev {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StreamrevIOError as exc:
        print(f"streamrev {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG if not Path(exc.path).exists() else EXIT_RUNTIME
    except (StreamrevError, OSError, ArithmeticError) as exc:
        print(f"streamrev {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
