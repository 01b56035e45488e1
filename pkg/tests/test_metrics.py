"""Tests for per-session metric computation, cohort aggregation, and the
report/table emitters."""

from __future__ import annotations

import math
import random
from pathlib import Path

import pytest

from twinstream.errors import InvalidInputError
from twinstream.metrics import (
    QoeParams,
    SessionMetrics,
    aggregate,
    build_report,
    compute_session_metrics,
    emit_report,
)
from twinstream.simnet import SegmentRecord, SessionConfig


def make_record(
    index: int,
    bitrate_mbps: float,
    rebuffer_s: float = 0.0,
    segment_s: float = 4.0,
    rendition_id: str | None = None,
) -> SegmentRecord:
    start = index * (segment_s + rebuffer_s)
    return SegmentRecord(
        index=index,
        rendition_id=rendition_id or f"r{bitrate_mbps}",
        t_request_s=start,
        t_complete_s=start + segment_s,
        bits_downloaded=bitrate_mbps * 1e6 * segment_s,
        rebuffer_before_s=rebuffer_s,
    )


def fixed_metrics(
    quality: float = 2.0, qoe: float = 8.0, events: int = 0
) -> SessionMetrics:
    return SessionMetrics(
        avg_quality_mbps=quality,
        rebuffer_events_per_hour=0.0,
        rebuffer_total_s=0.0,
        avg_bandwidth_mbps=quality,
        switch_count=0,
        startup_delay_s=2.0,
        qoe=qoe,
        rebuffer_event_count=events,
    )


# ---------------------------------------------------------------------------
# compute_session_metrics


def test_single_segment_session() -> None:
    config = SessionConfig(video_duration_s=4.0, startup_threshold_s=4.0)
    metrics = compute_session_metrics(
        [make_record(0, 2.0)], config, wall_clock_s=4.0, startup_delay_s=0.0
    )
    assert metrics.avg_quality_mbps == pytest.approx(2.0)
    assert metrics.rebuffer_events_per_hour == 0.0
    assert metrics.avg_bandwidth_mbps == pytest.approx(2.0)
    assert metrics.switch_count == 0


def test_zero_rebuffer_rate_is_exact() -> None:
    config = SessionConfig(video_duration_s=8.0)
    metrics = compute_session_metrics(
        [make_record(0, 1.0), make_record(1, 1.0)],
        config,
        wall_clock_s=10.0,
        startup_delay_s=2.0,
    )
    assert metrics.rebuffer_events_per_hour == 0.0
    assert metrics.rebuffer_total_s == 0.0
    assert metrics.rebuffer_event_count == 0


def test_stalled_minute_rate_and_qoe() -> None:
    # Fifteen 1 Mbps segments, each preceded by 4 s of stalling, in a
    # 60 s video: 15 events over 1/60 h is 900/h, and the rebuffer
    # penalty exactly cancels the bitrate payoff.
    config = SessionConfig(video_duration_s=60.0)
    records = [make_record(i, 1.0, rebuffer_s=4.0) for i in range(15)]
    metrics = compute_session_metrics(
        records, config, wall_clock_s=128.0, startup_delay_s=8.0
    )
    assert metrics.rebuffer_event_count == 15
    assert metrics.rebuffer_events_per_hour == pytest.approx(900.0)
    assert metrics.rebuffer_total_s == pytest.approx(60.0)
    assert metrics.qoe == pytest.approx(0.0)


def test_switch_count_and_penalty() -> None:
    config = SessionConfig(video_duration_s=16.0)
    records = [
        make_record(0, 1.0, rendition_id="a"),
        make_record(1, 2.0, rendition_id="b"),
        make_record(2, 2.0, rendition_id="b"),
        make_record(3, 1.0, rendition_id="a"),
    ]
    metrics = compute_session_metrics(
        records, config, wall_clock_s=16.0, startup_delay_s=0.0
    )
    assert metrics.switch_count == 2
    # qoe = sum(bitrate * 4s) - 0.5 * (|2-1| + |2-2| + |1-2|) = 24 - 1.
    assert metrics.qoe == pytest.approx(23.0)


def test_qoe_strictly_decreases_with_rebuffering() -> None:
    config = SessionConfig(video_duration_s=40.0)
    last_qoe = math.inf
    for stall in (0.0, 1.0, 3.0, 9.0):
        records = [make_record(i, 2.0, rebuffer_s=stall) for i in range(10)]
        metrics = compute_session_metrics(
            records, config, wall_clock_s=100.0, startup_delay_s=0.0
        )
        assert metrics.qoe < last_qoe
        last_qoe = metrics.qoe


def test_custom_qoe_params_scale_penalties() -> None:
    config = SessionConfig(video_duration_s=8.0)
    records = [make_record(0, 1.0), make_record(1, 1.0, rebuffer_s=2.0)]
    harsh = compute_session_metrics(
        records,
        config,
        wall_clock_s=12.0,
        startup_delay_s=0.0,
        qoe_params=QoeParams(lambda_rebuffer=5.0, mu_switch=0.5),
    )
    mild = compute_session_metrics(
        records, config, wall_clock_s=12.0, startup_delay_s=0.0
    )
    assert harsh.qoe == pytest.approx(mild.qoe - 4.0 * 2.0)


def test_empty_records_rejected() -> None:
    config = SessionConfig(video_duration_s=4.0, startup_threshold_s=4.0)
    with pytest.raises(InvalidInputError):
        compute_session_metrics([], config, wall_clock_s=4.0, startup_delay_s=0.0)


# ---------------------------------------------------------------------------
# aggregate


def test_aggregate_constant_list() -> None:
    assert aggregate([3.0, 3.0, 3.0]) == (3.0, 0.0)


def test_aggregate_two_point_sample() -> None:
    mean, sd = aggregate([2.0, 4.0])
    assert mean == pytest.approx(3.0)
    assert sd == pytest.approx(1.41421, abs=1e-5)


def test_aggregate_singleton_sd_zero() -> None:
    assert aggregate([7.25]) == (7.25, 0.0)


def test_aggregate_empty_rejected() -> None:
    with pytest.raises(InvalidInputError):
        aggregate([])


def test_aggregate_matches_two_pass_reference() -> None:
    rng = random.Random(8)
    for n in (2, 100, 100_000):
        xs = [rng.uniform(-50.0, 50.0) for _ in range(n)]
        mean, sd = aggregate(xs)
        ref_mean = math.fsum(xs) / n
        ref_sd = math.sqrt(
            math.fsum((x - ref_mean) ** 2 for x in xs) / (n - 1)
        )
        assert abs(mean - ref_mean) < 1e-12
        assert abs(sd - ref_sd) < 1e-12


# ---------------------------------------------------------------------------
# build_report / emit_report


def test_build_report_requires_equal_session_counts() -> None:
    with pytest.raises(InvalidInputError):
        build_report(
            {"a": [fixed_metrics()], "b": [fixed_metrics(), fixed_metrics()]},
            master_seed=1,
        )


def test_build_report_requires_an_arm() -> None:
    with pytest.raises(InvalidInputError):
        build_report({}, master_seed=1)


def test_report_json_golden_bytes(tmp_path: Path) -> None:
    report = build_report(
        {"throughput_rule": [fixed_metrics()]},
        master_seed=7,
        config_echo={"video_duration_s": 4.0},
    )
    json_path, csv_path = emit_report(report, tmp_path)
    assert json_path.read_text(encoding="utf-8") == (
        "{\n"
        '  "arms": [\n'
        '    "throughput_rule"\n'
        "  ],\n"
        '  "config": {\n'
        '    "video_duration_s": 4.0\n'
        "  },\n"
        '  "master_seed": 7,\n'
        '  "metadata": {\n'
        '    "rebuffer_rate_basis": "per_session_rate_averaged_over_sessions",\n'
        '    "sd_estimator": "sample_n_minus_1"\n'
        "  },\n"
        '  "n_sessions": 1,\n'
        '  "results": {\n'
        '    "throughput_rule": {\n'
        '      "avg_bandwidth_mbps": {\n'
        '        "mean": 2.0,\n'
        '        "sd": 0.0\n'
        "      },\n"
        '      "avg_quality_mbps": {\n'
        '        "mean": 2.0,\n'
        '        "sd": 0.0\n'
        "      },\n"
        '      "qoe": {\n'
        '        "mean": 8.0,\n'
        '        "sd": 0.0\n'
        "      },\n"
        '      "rebuffer_events_per_hour": {\n'
        '        "mean": 0.0,\n'
        '        "sd": 0.0\n'
        "      }\n"
        "    }\n"
        "  },\n"
        '  "schema_version": 1\n'
        "}\n"
    )
    assert csv_path.read_text(encoding="utf-8") == (
        "metric,arm,mean,sd\n"
        "avg_quality_mbps,throughput_rule,2.0000,0.0000\n"
        "rebuffer_events_per_hour,throughput_rule,0.0000,0.0000\n"
        "avg_bandwidth_mbps,throughput_rule,2.0000,0.0000\n"
        "qoe,throughput_rule,8.0000,0.0000\n"
    )


def test_emit_report_is_byte_deterministic(tmp_path: Path) -> None:
    report = build_report(
        {
            "twin_driven": [fixed_metrics(3.1, 12.5), fixed_metrics(2.9, 11.5)],
            "buffer_rule": [fixed_metrics(2.2, 9.0), fixed_metrics(2.4, 9.5)],
        },
        master_seed=99,
        config_echo={"users": 2},
    )
    first_dir = tmp_path / "a"
    second_dir = tmp_path / "b"
    paths_a = emit_report(report, first_dir)
    paths_b = emit_report(report, second_dir)
    for pa, pb in zip(paths_a, paths_b):
        assert pa.read_bytes() == pb.read_bytes()


def test_tables_csv_row_count(tmp_path: Path) -> None:
    report = build_report(
        {
            "twin_driven": [fixed_metrics()],
            "throughput_rule": [fixed_metrics()],
            "buffer_rule": [fixed_metrics()],
        },
        master_seed=5,
    )
    _, csv_path = emit_report(report, tmp_path)
    lines = csv_path.read_text(encoding="utf-8").strip().split("\n")
    assert lines[0] == "metric,arm,mean,sd"
    assert len(lines) == 1 + 4 * 3


def test_report_round_half_even_formatting(tmp_path: Path) -> None:
    report = build_report(
        {"twin_driven": [fixed_metrics(quality=1.23456789)]}, master_seed=0
    )
    _, csv_path = emit_report(report, tmp_path)
    assert "1.2346" in csv_path.read_text(encoding="utf-8")
