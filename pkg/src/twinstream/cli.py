"""Command-line front end: run experiments, generate traces, validate inputs.

Configuration is a flat ``key = value`` text file; every key has a
default, and a handful of flags override the file.  Reports land in the
output directory as ``report.json`` and ``tables.csv``.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Sequence

from .abr import ControllerKind
from .errors import (
    ConfigError,
    InvalidInputError,
    TraceFormatError,
    TwinstreamError,
)
from .metrics import CohortReport, QoeParams, REPORT_METRICS, emit_report
from .prediction import QualityNet, TrainConfig, make_training_set, train_quality_net
from .seeding import derive_seed
from .simnet import SessionConfig, run_cohort
from .transcode import TranscodeConstraints, default_catalog, load_catalog
from .workload import (
    CohortSpec,
    TraceSpec,
    default_devices,
    gen_cohort,
    load_cohort,
    load_trace,
    write_cohort,
    write_trace,
)

#: Seed stream channel for quality-net training (keeps it independent of
#: cohort generation streams).
_NET_SEED_CHANNEL = 7001


@dataclass
class ExperimentConfig:
    """Effective experiment parameters after file parsing and overrides."""

    users: int = 20
    seed: int = 1
    arms: tuple[str, ...] = ("twin_driven", "throughput_rule")
    video_duration_s: float = 120.0
    segment_duration_s: float = 4.0
    max_buffer_s: float = 30.0
    startup_threshold_s: float = 8.0
    alpha: float = 0.2
    device_mix: str = "phone:0.4,tablet:0.2,desktop:0.2,tv:0.2"
    trace_duration_s: float = 0.0  # 0 means "match the video duration"
    budget_kbps: float = 12000.0
    ladder_size: int = 5
    floor_kbps: float = 900.0
    qoe_lambda: float = 1.0
    qoe_mu: float = 0.5
    use_quality_net: bool = False
    per_segment_feedback: bool = False
    threads: int = 0  # 0 means "serial unless TWINSTREAM_THREADS says otherwise"
    catalog: str = ""
    cohort_file: str = ""
    trace_dir: str = ""
    out_dir: str = "out"


def _parse_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in {"true", "1", "yes", "on"}:
        return True
    if lowered in {"false", "0", "no", "off"}:
        return False
    raise ValueError(f"expected a boolean, got {raw!r}")


def _parse_arms(raw: str) -> tuple[str, ...]:
    arms = tuple(a.strip() for a in raw.split(",") if a.strip())
    if not arms:
        raise ValueError("arms list is empty")
    return arms


_PARSERS = {
    "users": int,
    "seed": int,
    "arms": _parse_arms,
    "video_duration_s": float,
    "segment_duration_s": float,
    "max_buffer_s": float,
    "startup_threshold_s": float,
    "alpha": float,
    "device_mix": str,
    "trace_duration_s": float,
    "budget_kbps": float,
    "ladder_size": int,
    "floor_kbps": float,
    "qoe_lambda": float,
    "qoe_mu": float,
    "use_quality_net": _parse_bool,
    "per_segment_feedback": _parse_bool,
    "threads": int,
    "catalog": str,
    "cohort_file": str,
    "trace_dir": str,
    "out_dir": str,
}


def parse_config_file(path: str | Path) -> ExperimentConfig:
    """Parse a flat key-value config file into an :class:`ExperimentConfig`.

    Lines are ``key = value``; blank lines and lines starting with ``#``
    are ignored.  Unknown keys and malformed values raise
    :class:`ConfigError` naming the line.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    config = ExperimentConfig()
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}, line {lineno}: expected 'key = value'")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _PARSERS:
            raise ConfigError(f"{path}, line {lineno}: unknown key {key!r}")
        try:
            setattr(config, key, _PARSERS[key](raw.strip()))
        except ValueError as exc:
            raise ConfigError(f"{path}, line {lineno}: bad value for {key}: {exc}")
    return config


def _parse_device_mix(raw: str) -> dict[str, float]:
    mix: dict[str, float] = {}
    for part in raw.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" not in part:
            raise ConfigError(f"device_mix entry {part!r} is not 'class:weight'")
        cls, _, weight = part.partition(":")
        try:
            mix[cls.strip()] = float(weight)
        except ValueError:
            raise ConfigError(f"device_mix weight {weight!r} is not a number")
    if not mix:
        raise ConfigError("device_mix is empty")
    return mix


def _parse_controllers(arms: Sequence[str]) -> tuple[ControllerKind, ...]:
    kinds = []
    valid = {k.value: k for k in ControllerKind}
    for arm in arms:
        if arm not in valid:
            raise ConfigError(
                f"unknown arm {arm!r}; choose from {sorted(valid)}"
            )
        kinds.append(valid[arm])
    if len(set(kinds)) != len(kinds):
        raise ConfigError("arms must be distinct")
    return tuple(kinds)


def config_echo(config: ExperimentConfig) -> dict[str, object]:
    """Config as it lands in the report.

    Excludes the output location and the worker count: neither affects
    the results (sessions are schedule-independent), and keeping them out
    lets reports from different machines compare byte-for-byte.
    """
    echo: dict[str, object] = {}
    for f in fields(config):
        if f.name in ("out_dir", "threads"):
            continue
        value = getattr(config, f.name)
        echo[f.name] = list(value) if isinstance(value, tuple) else value
    return echo


def build_quality_net(config: ExperimentConfig) -> QualityNet:
    """Train the quality-target network for one experiment, seeded from it."""
    net_seed = derive_seed(config.seed, _NET_SEED_CHANNEL)
    dataset = make_training_set(default_devices(), seed=net_seed, n=256)
    return train_quality_net(
        dataset, TrainConfig(learning_rate=0.05, epochs=1500, seed=net_seed)
    )


def run_experiment(config: ExperimentConfig) -> tuple[CohortReport, Path, Path]:
    """Run the configured cohort experiment and write its report files."""
    try:
        session = SessionConfig(
            video_duration_s=config.video_duration_s,
            segment_duration_s=config.segment_duration_s,
            max_buffer_s=config.max_buffer_s,
            startup_threshold_s=config.startup_threshold_s,
            per_segment_feedback=config.per_segment_feedback,
        )
        constraints = TranscodeConstraints(
            total_bitrate_budget_kbps=config.budget_kbps,
            max_ladder_size=config.ladder_size,
            floor_bitrate_kbps=config.floor_kbps,
        )
        arms = _parse_controllers(config.arms)
        if config.cohort_file:
            if not config.trace_dir:
                raise ConfigError("cohort_file requires trace_dir")
            cohort = load_cohort(config.cohort_file, config.trace_dir)
        else:
            trace_duration = config.trace_duration_s or config.video_duration_s
            spec = CohortSpec(
                n_users=config.users,
                seed=config.seed,
                device_mix=_parse_device_mix(config.device_mix),
                trace=TraceSpec(duration_s=trace_duration),
                alpha=config.alpha,
            )
            cohort = gen_cohort(spec)
        catalog = (
            load_catalog(config.catalog) if config.catalog else default_catalog()
        )
    except (ConfigError, TraceFormatError):
        raise
    except InvalidInputError as exc:
        # Everything assembled above comes straight from the config file,
        # so a rejected value is a configuration problem, not a runtime one.
        raise ConfigError(str(exc)) from exc
    except TwinstreamError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    quality_net = build_quality_net(config) if config.use_quality_net else None
    report = run_cohort(
        cohort,
        arms,
        catalog,
        constraints,
        session,
        master_seed=config.seed,
        config_echo=config_echo(config),
        quality_net=quality_net,
        qoe_params=QoeParams(
            lambda_rebuffer=config.qoe_lambda, mu_switch=config.qoe_mu
        ),
        max_workers=config.threads or None,
    )
    json_path, csv_path = emit_report(report, config.out_dir)
    return report, json_path, csv_path


def print_summary(report: CohortReport, stream=None) -> None:
    """Three comparison tables (plus QoE), one block per metric."""
    stream = stream or sys.stdout
    width = max(len(a) for a in report.arms) + 2
    for metric in REPORT_METRICS:
        print(f"\n== {metric} ==", file=stream)
        print(f"{'arm':<{width}}{'mean':>10}{'sd':>10}", file=stream)
        for arm in report.arms:
            mean, sd = report.results[arm][metric]
            print(f"{arm:<{width}}{mean:>10.4f}{sd:>10.4f}", file=stream)


def _load_or_default_config(path: str | None) -> ExperimentConfig:
    return parse_config_file(path) if path else ExperimentConfig()


def _apply_overrides(config: ExperimentConfig, args: argparse.Namespace) -> None:
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    if getattr(args, "users", None) is not None:
        config.users = args.users
    if getattr(args, "out", None) is not None:
        config.out_dir = args.out
    if getattr(args, "arms", None) is not None:
        config.arms = _parse_arms(args.arms)


def _cmd_run(args: argparse.Namespace) -> int:
    config = _load_or_default_config(args.config)
    _apply_overrides(config, args)
    report, json_path, csv_path = run_experiment(config)
    if not args.quiet:
        print_summary(report)
        print(f"\nreport: {json_path}\ntables: {csv_path}")
    return 0


def _cmd_gen_traces(args: argparse.Namespace) -> int:
    config = _load_or_default_config(args.config)
    _apply_overrides(config, args)
    trace_duration = config.trace_duration_s or config.video_duration_s
    spec = CohortSpec(
        n_users=config.users,
        seed=config.seed,
        device_mix=_parse_device_mix(config.device_mix),
        trace=TraceSpec(duration_s=trace_duration),
        alpha=config.alpha,
    )
    cohort = gen_cohort(spec)
    out = Path(config.out_dir)
    traces_dir = out / "traces"
    traces_dir.mkdir(parents=True, exist_ok=True)
    write_cohort(cohort, out / "cohort.csv")
    for member in cohort:
        write_trace(member.trace, traces_dir / f"{member.profile.user_id}.csv")
    if not args.quiet:
        print(f"wrote {len(cohort)} users to {out / 'cohort.csv'}")
        print(f"wrote {len(cohort)} traces to {traces_dir}/")
    return 0


def _cmd_validate(args: argparse.Namespace) -> int:
    checked = False
    if args.config:
        config = parse_config_file(args.config)
        _parse_controllers(config.arms)
        _parse_device_mix(config.device_mix)
        SessionConfig(
            video_duration_s=config.video_duration_s,
            segment_duration_s=config.segment_duration_s,
            max_buffer_s=config.max_buffer_s,
            startup_threshold_s=config.startup_threshold_s,
        )
        TranscodeConstraints(
            total_bitrate_budget_kbps=config.budget_kbps,
            max_ladder_size=config.ladder_size,
            floor_bitrate_kbps=config.floor_kbps,
        )
        print(f"OK: config {args.config}")
        checked = True
    if args.trace:
        trace = load_trace(args.trace)
        print(f"OK: trace {args.trace} ({len(trace.points)} points)")
        checked = True
    if args.catalog:
        catalog = load_catalog(args.catalog)
        print(f"OK: catalog {args.catalog} ({len(catalog)} renditions)")
        checked = True
    if not checked:
        raise ConfigError("nothing to validate: pass --config, --trace, or --catalog")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="twinstream",
        description="Digital-twin adaptive streaming experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a cohort experiment")
    run_p.add_argument("--config", required=True, help="experiment config file")
    run_p.add_argument("--seed", type=int, help="override the master seed")
    run_p.add_argument("--out", help="override the output directory")
    run_p.add_argument("--arms", help="override arms (comma-separated)")
    run_p.add_argument("--users", type=int, help="override the cohort size")
    run_p.add_argument("--quiet", action="store_true", help="suppress stdout")
    run_p.set_defaults(func=_cmd_run)

    gen_p = sub.add_parser("gen-traces", help="write cohort and trace files")
    gen_p.add_argument("--config", help="experiment config file")
    gen_p.add_argument("--seed", type=int, help="override the master seed")
    gen_p.add_argument("--out", help="override the output directory")
    gen_p.add_argument("--users", type=int, help="override the cohort size")
    gen_p.add_argument("--quiet", action="store_true", help="suppress stdout")
    gen_p.set_defaults(func=_cmd_gen_traces)

    val_p = sub.add_parser("validate", help="validate input files")
    val_p.add_argument("--config", help="config file to check")
    val_p.add_argument("--trace", help="trace CSV to check")
    val_p.add_argument("--catalog", help="catalog CSV to check")
    val_p.set_defaults(func=_cmd_validate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, TraceFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (TwinstreamError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
