"""``envadapt`` command-line entry point.

Exit codes: 0 success, 1 I/O or runtime failure, 2 usage or configuration
error, 3 divergence, 4 acceptance regression.
"""
from __future__ import annotations

import argparse
import csv
import io
import sys
from dataclasses import replace
from pathlib import Path

from .adapt import ConfigurationError
from .config import ConfigError, RunConfig, dump_config, load_config
from .estimator import DegenerateWindow, WindowNotFull
from .experiment import (
    TRIAL_FIELDS,
    Method,
    TrialResult,
    estimate_from_record,
    run_all_comparisons,
    run_mrs,
    run_proposed,
    run_recording,
    summary_text,
    trials_csv,
)
from .plant import DivergenceError
from .signals import RecordError, RecordMode, SamplingConfig, read_record, write_record

EXIT_OK = 0
EXIT_IO = 1
EXIT_USAGE = 2
EXIT_DIVERGED = 3
EXIT_REGRESSION = 4

_MODES = {"position": RecordMode.POSITION_CONTROL, "force": RecordMode.FORCE_CONTROL}


class UsageError(Exception):
    pass


def _common(suppress: bool) -> argparse.ArgumentParser:
    d = argparse.SUPPRESS if suppress else None
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", metavar="PATH", default=d, help="sectioned key = value configuration file")
    p.add_argument("--seed", type=int, default=d, help="run seed (recorded in outputs)")
    p.add_argument("--out-dir", metavar="DIR", default=d, help="directory for output files")
    p.add_argument("--jobs", type=int, default=d, help="worker processes for compare")
    p.add_argument("--duration", type=float, default=d, help="trial length in seconds")
    p.add_argument("--dump-config", action="store_true", default=argparse.SUPPRESS if suppress else False,
                   help="print the effective configuration and exit")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="envadapt",
        description="Environment-adaptive motion reproduction: record, replay, adapt, estimate, compare.",
        parents=[_common(False)],
    )
    sub = parser.add_subparsers(dest="command")
    common = _common(True)

    def mode_arg(p):
        p.add_argument("--mode", choices=sorted(_MODES), default="position",
                       help="control mode of the recordings (default: position)")

    p = sub.add_parser("record", parents=[common], help="record a trajectory on one catalog sample")
    p.add_argument("--sample", type=int, required=True, help="catalog sample id")
    mode_arg(p)
    p.add_argument("-o", "--output", metavar="PATH", help="record file (default: OUT_DIR/record_MODE_ID.csv)")

    p = sub.add_parser("replay", parents=[common], help="MRS replay of a record on a test sample")
    p.add_argument("record", help="record CSV")
    p.add_argument("--sample", type=int, required=True, help="test sample id")
    mode_arg(p)

    p = sub.add_parser("adapt", parents=[common], help="adaptive blend of two records on a test sample")
    p.add_argument("record_a", help="record A CSV")
    p.add_argument("record_b", help="record B CSV")
    p.add_argument("--sample", type=int, required=True, help="test sample id")
    mode_arg(p)

    p = sub.add_parser("estimate", parents=[common], help="one-shot impedance estimate from a record")
    p.add_argument("record", help="record CSV")
    p.add_argument("--tick", type=int, default=None, help="window end tick (default: last)")
    mode_arg(p)

    sub.add_parser("compare", parents=[common], help="all patterns in both modes with statistics")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out_dir is not None:
        cfg.out_dir = args.out_dir
    if args.jobs is not None:
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        cfg.jobs = args.jobs
    if args.duration is not None:
        try:
            cfg.sampling = replace(cfg.sampling, duration=args.duration)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    return cfg


def _entry(cfg: RunConfig, mode: RecordMode, sample_id: int):
    try:
        return cfg.catalog().entry(mode, sample_id)
    except KeyError:
        raise UsageError(f"unknown {mode.value} sample id {sample_id}") from None


def _read(path: str, mode: RecordMode, cfg: RunConfig):
    rec = read_record(path, mode, sample_id=-1)
    if rec.dt != cfg.sampling.dt:
        raise ConfigurationError(f"{path}: dt {rec.dt} differs from configured dt {cfg.sampling.dt}")
    return rec


def _sampling_for(rec) -> SamplingConfig:
    return SamplingConfig(dt=rec.dt, duration=(len(rec) - 1) * rec.dt)


def _report_trial(trial: TrialResult, cfg: RunConfig, name: str, out) -> int:
    rmse = "" if trial.rmse is None else repr(trial.rmse)
    tag = "MRS" if trial.method is not Method.PROPOSED else trial.method.value
    print(f"method={tag} mode={trial.mode.value} sample={trial.sample} rmse={rmse} diverged={int(trial.diverged)}",
          file=out)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRIAL_FIELDS)
    w.writerow(("", trial.mode.value, tag, trial.sample, rmse, int(trial.diverged)))
    path = Path(cfg.out_dir) / name
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue())
    return EXIT_DIVERGED if trial.diverged else EXIT_OK


def cmd_record(args, cfg: RunConfig, out) -> int:
    mode = _MODES[args.mode]
    entry = _entry(cfg, mode, args.sample)
    rec = run_recording(entry, mode, cfg.sampling, cfg.loop)
    path = Path(args.output) if args.output else Path(cfg.out_dir) / f"record_{args.mode}_{args.sample}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    write_record(rec, path)
    print(f"wrote {path} ({len(rec)} samples)", file=out)
    return EXIT_OK


def cmd_replay(args, cfg: RunConfig, out) -> int:
    mode = _MODES[args.mode]
    entry = _entry(cfg, mode, args.sample)
    rec = _read(args.record, mode, cfg)
    trial = run_mrs(rec, entry, _sampling_for(rec), cfg.loop, Method.MRS_A)
    return _report_trial(trial, cfg, "replay.csv", out)


def cmd_adapt(args, cfg: RunConfig, out) -> int:
    mode = _MODES[args.mode]
    entry = _entry(cfg, mode, args.sample)
    rec_a = _read(args.record_a, mode, cfg)
    rec_b = _read(args.record_b, mode, cfg)
    if len(rec_a) != len(rec_b):
        raise ConfigurationError(f"record lengths differ: {len(rec_a)} vs {len(rec_b)}")
    trial = run_proposed(rec_a, rec_b, entry, _sampling_for(rec_a), cfg.loop)
    return _report_trial(trial, cfg, "adapt.csv", out)


def cmd_estimate(args, cfg: RunConfig, out) -> int:
    rec = _read(args.record, _MODES[args.mode], cfg)
    try:
        imp, cond = estimate_from_record(rec, args.tick, cfg.loop)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    print(f"M={imp.M!r} D={imp.D!r} K={imp.K!r} H={imp.H!r} cond={cond:.6g}", file=out)
    return EXIT_OK


def acceptance_failures(summary, cfg: RunConfig) -> list[str]:
    failures = []
    for mode in (RecordMode.POSITION_CONTROL, RecordMode.FORCE_CONTROL):
        ratio = summary.ratio(mode)
        if not ratio <= cfg.max_ratio:
            failures.append(f"{mode.value} ratio {ratio:.4g} exceeds {cfg.max_ratio}")
        p = summary.aggregate_welch(mode).p
        if not p < cfg.max_p:
            failures.append(f"{mode.value} aggregate p {p:.4g} not below {cfg.max_p}")
        for r in summary.for_mode(mode):
            mrs, prop = r.means()
            if not prop < mrs:
                failures.append(f"pattern {r.pattern} {mode.value}: Proposed mean {prop:.4g} >= MRS mean {mrs:.4g}")
    return failures


def cmd_compare(args, cfg: RunConfig, out) -> int:
    summary = run_all_comparisons(cfg.sampling, cfg.loop, cfg.catalog(), jobs=cfg.jobs)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "trials.csv").write_text(trials_csv(summary))
    text = summary_text(summary, cfg.seed)
    (out_dir / "summary.txt").write_text(text)
    out.write(text)
    if summary.diverged:
        print(f"{summary.diverged} trials diverged", file=sys.stderr)
        return EXIT_DIVERGED
    failures = acceptance_failures(summary, cfg)
    for f in failures:
        print(f"acceptance regression: {f}", file=sys.stderr)
    return EXIT_REGRESSION if failures else EXIT_OK


_COMMANDS = {
    "record": cmd_record,
    "replay": cmd_replay,
    "adapt": cmd_adapt,
    "estimate": cmd_estimate,
    "compare": cmd_compare,
}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"envadapt: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.dump_config:
        out.write(dump_config(cfg))
        return EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return _COMMANDS[args.command](args, cfg, out)
    except (UsageError, ConfigurationError, ConfigError) as exc:
        print(f"envadapt: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"envadapt: diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, RecordError, WindowNotFull, DegenerateWindow) as exc:
        print(f"envadapt: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
