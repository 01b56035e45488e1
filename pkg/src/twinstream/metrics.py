"""Session-level quality metrics, cohort aggregation, and report emission."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Mapping, Sequence

from .errors import InvalidInputError

if TYPE_CHECKING:  # pragma: no cover - type-only imports
    from .simnet import SegmentRecord, SessionConfig

#: Metric columns reported per arm, in canonical order.
REPORT_METRICS = (
    "avg_quality_mbps",
    "rebuffer_events_per_hour",
    "avg_bandwidth_mbps",
    "qoe",
)

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class QoeParams:
    """Weights of the linear quality-of-experience proxy.

    qoe = sum(bitrate_mbps * segment_duration_s)
          - lambda_rebuffer * rebuffer_total_s
          - mu_switch * sum(|bitrate delta| over switches)
    """

    lambda_rebuffer: float = 1.0
    mu_switch: float = 0.5


@dataclass(frozen=True)
class SessionMetrics:
    """Summary statistics of one playback session.

    All fields are nonnegative except ``qoe``, which may go negative on
    heavily stalled sessions.
    """

    avg_quality_mbps: float
    rebuffer_events_per_hour: float
    rebuffer_total_s: float
    avg_bandwidth_mbps: float
    switch_count: int
    startup_delay_s: float
    qoe: float
    # Raw episode count; the hourly rate above is derived from it.
    rebuffer_event_count: int


def compute_session_metrics(
    records: Sequence["SegmentRecord"],
    config: "SessionConfig",
    wall_clock_s: float,
    startup_delay_s: float,
    qoe_params: QoeParams = QoeParams(),
) -> SessionMetrics:
    """Reduce a session's segment records to a :class:`SessionMetrics`.

    ``avg_quality_mbps`` is the duration-weighted mean of the chosen
    bitrates (segments are uniform, so a plain mean), bandwidth is total
    bits over the session wall clock, and the rebuffer rate is episodes
    per hour of content watched.
    """
    if not records:
        raise InvalidInputError("cannot compute metrics from an empty record list")
    if wall_clock_s <= 0:
        raise InvalidInputError(f"wall_clock_s must be positive, got {wall_clock_s}")

    seg_s = config.segment_duration_s
    bitrates_mbps = [rec.bits_downloaded / seg_s / 1e6 for rec in records]

    total_bits = sum(rec.bits_downloaded for rec in records)
    rebuffer_total = sum(rec.rebuffer_before_s for rec in records)
    events = sum(1 for rec in records if rec.rebuffer_before_s > 0)
    switches = sum(
        1
        for prev, cur in zip(records, records[1:])
        if prev.rendition_id != cur.rendition_id
    )
    switch_magnitude = sum(
        abs(b - a) for a, b in zip(bitrates_mbps, bitrates_mbps[1:])
    )

    hours_watched = config.video_duration_s / 3600.0
    qoe = (
        sum(b * seg_s for b in bitrates_mbps)
        - qoe_params.lambda_rebuffer * rebuffer_total
        - qoe_params.mu_switch * switch_magnitude
    )

    return SessionMetrics(
        avg_quality_mbps=sum(bitrates_mbps) / len(bitrates_mbps),
        rebuffer_events_per_hour=events / hours_watched,
        rebuffer_total_s=rebuffer_total,
        avg_bandwidth_mbps=total_bits / wall_clock_s / 1e6,
        switch_count=switches,
        startup_delay_s=startup_delay_s,
        qoe=qoe,
        rebuffer_event_count=events,
    )


def aggregate(values: Iterable[float]) -> tuple[float, float]:
    """Return (mean, sample standard deviation) of ``values``.

    Uses the n-1 denominator; a single value has standard deviation 0.
    """
    xs = list(values)
    if not xs:
        raise InvalidInputError("cannot aggregate an empty value list")
    mean = math.fsum(xs) / len(xs)
    if len(xs) == 1:
        return mean, 0.0
    var = math.fsum((x - mean) ** 2 for x in xs) / (len(xs) - 1)
    return mean, math.sqrt(var)


@dataclass(frozen=True)
class CohortReport:
    """Aggregated per-arm statistics for one cohort experiment."""

    master_seed: int
    n_sessions: int
    arms: tuple[str, ...]
    #: arm -> metric name -> (mean, sd)
    results: Mapping[str, Mapping[str, tuple[float, float]]]
    config_echo: Mapping[str, object] = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "master_seed": self.master_seed,
            "n_sessions": self.n_sessions,
            "arms": list(self.arms),
            "config": dict(self.config_echo),
            "metadata": {
                "sd_estimator": "sample_n_minus_1",
                "rebuffer_rate_basis": "per_session_rate_averaged_over_sessions",
            },
            "results": {
                arm: {
                    metric: {
                        "mean": round(stats[0], 4),
                        "sd": round(stats[1], 4),
                    }
                    for metric, stats in per_arm.items()
                }
                for arm, per_arm in self.results.items()
            },
        }


def build_report(
    arm_metrics: Mapping[str, Sequence[SessionMetrics]],
    master_seed: int,
    config_echo: Mapping[str, object] | None = None,
) -> CohortReport:
    """Aggregate per-session metrics of each arm into a :class:`CohortReport`."""
    if not arm_metrics:
        raise InvalidInputError("at least one arm is required")
    sizes = {len(ms) for ms in arm_metrics.values()}
    if len(sizes) != 1:
        raise InvalidInputError(f"arms have differing session counts: {sorted(sizes)}")

    results: dict[str, dict[str, tuple[float, float]]] = {}
    for arm, sessions in arm_metrics.items():
        results[arm] = {
            metric: aggregate([getattr(m, metric) for m in sessions])
            for metric in REPORT_METRICS
        }
    return CohortReport(
        master_seed=master_seed,
        n_sessions=sizes.pop(),
        arms=tuple(arm_metrics),
        results=results,
        config_echo=dict(config_echo or {}),
    )


def emit_report(report: CohortReport, out_dir: str | Path) -> tuple[Path, Path]:
    """Write ``report.json`` and ``tables.csv`` under ``out_dir``.

    Output is byte-deterministic: keys are sorted, floats are rounded to
    four decimal places, and line endings are always ``\\n``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    json_path = out / "report.json"
    json_text = json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    json_path.write_text(json_text, encoding="utf-8")

    lines = ["metric,arm,mean,sd"]
    for metric in REPORT_METRICS:
        for arm in report.arms:
            mean, sd = report.results[arm][metric]
            lines.append(f"{metric},{arm},{mean:.4f},{sd:.4f}")
    csv_path = out / "tables.csv"
    csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    return json_path, csv_path
