"""Tests for the playback simulator: trace arithmetic, session event loop,
and cohort orchestration."""

from __future__ import annotations

import random

import pytest

from twinstream.abr import ControllerKind
from twinstream.errors import InvalidInputError
from twinstream.simnet import (
    CohortMember,
    NetworkTrace,
    SessionConfig,
    TracePoint,
    download_time,
    run_arm,
    run_cohort,
    run_session,
)
from twinstream.transcode import (
    BitrateLadder,
    DeviceCapabilities,
    Rendition,
    TranscodeConstraints,
    default_catalog,
)
from twinstream.twin import PreferenceVector, TwinProfile

DESKTOP = DeviceCapabilities(
    max_width=1920,
    max_height=1080,
    supported_codecs=frozenset({"h264", "h265", "vp9", "av1"}),
    max_decode_bitrate_kbps=50000,
    device_class="desktop",
)


def constant_trace(bandwidth_mbps: float, latency_ms: float = 0.0) -> NetworkTrace:
    return NetworkTrace((TracePoint(0.0, bandwidth_mbps, latency_ms),))


def single_rendition_ladder(bitrate_kbps: float) -> BitrateLadder:
    return BitrateLadder(
        (Rendition("only", bitrate_kbps, 640, 360, 30.0, "h264"),)
    )


def balanced_profile(user_id: str = "u") -> TwinProfile:
    return TwinProfile(user_id, PreferenceVector.balanced())


def random_trace(rng: random.Random, duration_s: float = 400.0) -> NetworkTrace:
    points = [TracePoint(0.0, rng.uniform(0.5, 5.0), rng.uniform(0.0, 100.0))]
    t = 0.0
    while t < duration_s:
        t += rng.uniform(0.5, 30.0)
        points.append(
            TracePoint(round(t, 3), rng.uniform(0.5, 5.0), points[0].latency_ms)
        )
    return NetworkTrace(tuple(points))


# ---------------------------------------------------------------------------
# Trace invariants


def test_trace_must_start_at_zero() -> None:
    with pytest.raises(InvalidInputError):
        NetworkTrace((TracePoint(1.0, 5.0, 0.0),))


def test_trace_times_strictly_increase() -> None:
    with pytest.raises(InvalidInputError):
        NetworkTrace((TracePoint(0.0, 5.0, 0.0), TracePoint(0.0, 4.0, 0.0)))


def test_trace_bandwidth_positive() -> None:
    with pytest.raises(InvalidInputError):
        NetworkTrace((TracePoint(0.0, 0.0, 0.0),))


def test_trace_latency_nonnegative() -> None:
    with pytest.raises(InvalidInputError):
        NetworkTrace((TracePoint(0.0, 5.0, -1.0),))


# ---------------------------------------------------------------------------
# download_time


def test_constant_bandwidth_download() -> None:
    trace = constant_trace(2.0)
    assert download_time(trace, 0.0, 4e6) == pytest.approx(2.0)


def test_piecewise_download_spans_boundary() -> None:
    trace = NetworkTrace((TracePoint(0.0, 8.0, 0.0), TracePoint(1.0, 4.0, 0.0)))
    # 8 Mbit lands in the first second, the remaining 4 Mbit at 4 Mbps.
    assert download_time(trace, 0.0, 12e6) == pytest.approx(2.0)


def test_download_started_mid_interval() -> None:
    trace = NetworkTrace((TracePoint(0.0, 8.0, 0.0), TracePoint(1.0, 4.0, 0.0)))
    assert download_time(trace, 0.5, 8e6) == pytest.approx(1.5)


def test_latency_added_from_request_time_point() -> None:
    trace = constant_trace(2.0, latency_ms=500.0)
    assert download_time(trace, 0.0, 4e6) == pytest.approx(2.5)


def test_last_sample_holds_forever() -> None:
    trace = NetworkTrace((TracePoint(0.0, 8.0, 0.0), TracePoint(1.0, 1.0, 0.0)))
    # 8 Mbit in the first second, then 16 more seconds at 1 Mbps.
    assert download_time(trace, 0.0, 24e6) == pytest.approx(17.0)


def test_download_time_validates_inputs() -> None:
    trace = constant_trace(2.0)
    with pytest.raises(InvalidInputError):
        download_time(trace, -0.5, 1e6)
    with pytest.raises(InvalidInputError):
        download_time(trace, 0.0, 0.0)


def riemann_download_time(
    trace: NetworkTrace, t0_s: float, bits: float, step_s: float = 0.001
) -> float:
    latency_s = 0.0
    for point in trace.points:
        if point.t_start_s <= t0_s:
            latency_s = point.latency_ms / 1000.0
    t = t0_s + latency_s
    remaining = bits

    def bandwidth_at(when: float) -> float:
        current = trace.points[0].bandwidth_mbps
        for point in trace.points:
            if point.t_start_s <= when:
                current = point.bandwidth_mbps
        return current

    while remaining > 0.0:
        remaining -= bandwidth_at(t) * 1e6 * step_s
        t += step_s
    return t - t0_s


def test_download_time_matches_riemann_oracle() -> None:
    rng = random.Random(99)
    for _ in range(30):
        trace = random_trace(rng, duration_s=120.0)
        t0 = rng.uniform(0.0, 100.0)
        bits = rng.uniform(5e6, 50e6)
        exact = download_time(trace, t0, bits)
        approx = riemann_download_time(trace, t0, bits)
        assert abs(exact - approx) / exact <= 1e-3


# ---------------------------------------------------------------------------
# SessionConfig


def test_session_config_orders_thresholds() -> None:
    with pytest.raises(InvalidInputError):
        SessionConfig(video_duration_s=60.0, segment_duration_s=10.0,
                      startup_threshold_s=8.0)
    with pytest.raises(InvalidInputError):
        SessionConfig(video_duration_s=60.0, startup_threshold_s=40.0,
                      max_buffer_s=30.0)


def test_session_config_video_must_be_segment_multiple() -> None:
    with pytest.raises(InvalidInputError):
        SessionConfig(video_duration_s=61.0)
    assert SessionConfig(video_duration_s=60.0).n_segments == 15


# ---------------------------------------------------------------------------
# run_session


def test_unconstrained_session_never_stalls() -> None:
    outcome, _ = run_session(
        balanced_profile(),
        DESKTOP,
        constant_trace(1000.0),
        single_rendition_ladder(1000),
        ControllerKind.THROUGHPUT_RULE,
        SessionConfig(video_duration_s=60.0),
    )
    assert outcome.metrics.rebuffer_event_count == 0
    assert outcome.metrics.rebuffer_total_s == 0.0
    assert outcome.startup_delay_s < 0.05
    assert len(outcome.records) == 15


def test_starved_single_rendition_session_golden() -> None:
    # 1 Mbps rendition over a constant 0.5 Mbps link, zero latency, 60 s
    # video in 4 s segments, default 8 s startup threshold.  Every
    # segment is 4 Mbit and takes 8 s.  Hand-stepping the loop: two
    # segments fill the startup buffer (playback starts at 16 s); the
    # third drains the 8 s buffer exactly with no stall; every later
    # segment finds a 4 s buffer against an 8 s download and stalls 4 s.
    outcome, _ = run_session(
        balanced_profile(),
        DESKTOP,
        constant_trace(0.5),
        single_rendition_ladder(1000),
        ControllerKind.THROUGHPUT_RULE,
        SessionConfig(video_duration_s=60.0),
    )
    assert outcome.startup_delay_s == 16.0
    assert outcome.wall_clock_s == 124.0
    assert outcome.idle_total_s == 0.0
    got = [
        (r.index, r.t_request_s, r.t_complete_s, r.bits_downloaded,
         r.rebuffer_before_s)
        for r in outcome.records
    ]
    want = [
        (i, 8.0 * i, 8.0 * i + 8.0, 4e6, 0.0 if i < 3 else 4.0)
        for i in range(15)
    ]
    assert got == want
    metrics = outcome.metrics
    assert metrics.rebuffer_event_count == 12
    assert metrics.rebuffer_total_s == 48.0
    assert metrics.rebuffer_events_per_hour == pytest.approx(720.0)
    assert metrics.avg_quality_mbps == pytest.approx(1.0)
    assert metrics.avg_bandwidth_mbps == pytest.approx(60.0 / 124.0)
    assert metrics.switch_count == 0
    assert metrics.qoe == pytest.approx(12.0)


def test_session_is_deterministic() -> None:
    rng = random.Random(4)
    trace = random_trace(rng)
    ladder = BitrateLadder(tuple(default_catalog()[:5]))
    args = (
        balanced_profile(),
        DESKTOP,
        trace,
        ladder,
        ControllerKind.TWIN_DRIVEN,
        SessionConfig(video_duration_s=120.0),
    )
    first, _ = run_session(*args)
    second, _ = run_session(*args)
    assert first.records == second.records
    assert first.metrics == second.metrics


def test_wall_clock_accounting_identity() -> None:
    rng = random.Random(11)
    for controller in (
        ControllerKind.TWIN_DRIVEN,
        ControllerKind.THROUGHPUT_RULE,
        ControllerKind.BUFFER_RULE,
    ):
        trace = random_trace(rng)
        ladder = BitrateLadder(tuple(default_catalog()[:5]))
        outcome, _ = run_session(
            balanced_profile(),
            DESKTOP,
            trace,
            ladder,
            controller,
            SessionConfig(video_duration_s=120.0),
        )
        assert outcome.wall_clock_s == pytest.approx(
            120.0
            + outcome.startup_delay_s
            + outcome.metrics.rebuffer_total_s
            + outcome.idle_total_s
        )
        for record in outcome.records:
            assert record.t_complete_s > record.t_request_s
            assert record.rebuffer_before_s >= 0.0
        for prev, cur in zip(outcome.records, outcome.records[1:]):
            assert cur.t_request_s >= prev.t_complete_s


def test_bits_downloaded_equal_bitrate_times_duration() -> None:
    rng = random.Random(21)
    trace = random_trace(rng)
    ladder = BitrateLadder(tuple(default_catalog()[:5]))
    outcome, _ = run_session(
        balanced_profile(),
        DESKTOP,
        trace,
        ladder,
        ControllerKind.TWIN_DRIVEN,
        SessionConfig(video_duration_s=80.0),
    )
    by_id = {r.id: r for r in ladder.renditions}
    for record in outcome.records:
        rendition = by_id[record.rendition_id]
        assert record.bits_downloaded == pytest.approx(
            rendition.bitrate_kbps * 1000.0 * 4.0
        )


def test_fast_link_accumulates_idle_time() -> None:
    outcome, _ = run_session(
        balanced_profile(),
        DESKTOP,
        constant_trace(1000.0),
        single_rendition_ladder(1000),
        ControllerKind.THROUGHPUT_RULE,
        SessionConfig(video_duration_s=120.0),
    )
    assert outcome.idle_total_s > 0.0
    assert outcome.wall_clock_s == pytest.approx(
        120.0 + outcome.startup_delay_s + outcome.idle_total_s
    )


def test_session_returns_updated_twin() -> None:
    profile = balanced_profile()
    _, updated = run_session(
        profile,
        DESKTOP,
        constant_trace(3.0),
        single_rendition_ladder(1000),
        ControllerKind.THROUGHPUT_RULE,
        SessionConfig(video_duration_s=60.0),
    )
    assert len(updated.history) == 1
    assert updated.user_id == profile.user_id
    assert updated.pref != profile.pref


# ---------------------------------------------------------------------------
# run_arm / run_cohort


def make_cohort(n: int, seed: int) -> list[CohortMember]:
    rng = random.Random(seed)
    members = []
    for i in range(n):
        profile = TwinProfile(
            user_id=f"user{i}",
            pref=PreferenceVector(*[rng.random() for _ in range(5)]),
        )
        members.append(
            CohortMember(
                profile=profile, device=DESKTOP, trace=random_trace(rng)
            )
        )
    return members


CONSTRAINTS = TranscodeConstraints(
    total_bitrate_budget_kbps=12000,
    max_ladder_size=5,
    floor_bitrate_kbps=900,
)


def test_run_arm_serial_equals_parallel() -> None:
    cohort = make_cohort(6, seed=3)
    config = SessionConfig(video_duration_s=120.0)
    serial = run_arm(
        cohort,
        ControllerKind.TWIN_DRIVEN,
        default_catalog(),
        CONSTRAINTS,
        config,
        max_workers=1,
    )
    parallel = run_arm(
        cohort,
        ControllerKind.TWIN_DRIVEN,
        default_catalog(),
        CONSTRAINTS,
        config,
        max_workers=4,
    )
    assert [o.records for o in serial] == [o.records for o in parallel]
    assert [o.metrics for o in serial] == [o.metrics for o in parallel]


def test_run_cohort_singleton_aggregate() -> None:
    cohort = make_cohort(1, seed=5)
    config = SessionConfig(video_duration_s=60.0)
    report = run_cohort(
        cohort,
        [ControllerKind.THROUGHPUT_RULE],
        default_catalog(),
        CONSTRAINTS,
        config,
        master_seed=1,
    )
    outcomes = run_arm(
        cohort,
        ControllerKind.THROUGHPUT_RULE,
        default_catalog(),
        CONSTRAINTS,
        config,
    )
    arm = report.to_dict()["results"]["throughput_rule"]
    metrics = outcomes[0].metrics
    assert arm["avg_quality_mbps"]["mean"] == pytest.approx(
        metrics.avg_quality_mbps, abs=1e-4
    )
    assert arm["avg_quality_mbps"]["sd"] == 0.0
    assert arm["qoe"]["sd"] == 0.0
    assert report.to_dict()["n_sessions"] == 1


def test_run_cohort_rejects_duplicate_arms() -> None:
    cohort = make_cohort(1, seed=6)
    with pytest.raises(InvalidInputError):
        run_cohort(
            cohort,
            [ControllerKind.BUFFER_RULE, ControllerKind.BUFFER_RULE],
            default_catalog(),
            CONSTRAINTS,
            SessionConfig(video_duration_s=60.0),
            master_seed=1,
        )


def test_run_cohort_rejects_empty_inputs() -> None:
    with pytest.raises(InvalidInputError):
        run_cohort(
            [],
            [ControllerKind.BUFFER_RULE],
            default_catalog(),
            CONSTRAINTS,
            SessionConfig(video_duration_s=60.0),
            master_seed=1,
        )
    with pytest.raises(InvalidInputError):
        run_cohort(
            make_cohort(1, seed=7),
            [],
            default_catalog(),
            CONSTRAINTS,
            SessionConfig(video_duration_s=60.0),
            master_seed=1,
        )


def test_run_cohort_deterministic_given_seed() -> None:
    cohort = make_cohort(4, seed=8)
    config = SessionConfig(video_duration_s=120.0)
    arms = [ControllerKind.TWIN_DRIVEN, ControllerKind.THROUGHPUT_RULE]
    a = run_cohort(
        cohort, arms, default_catalog(), CONSTRAINTS, config, master_seed=42
    )
    b = run_cohort(
        cohort, arms, default_catalog(), CONSTRAINTS, config, master_seed=42
    )
    assert a.to_dict() == b.to_dict()
