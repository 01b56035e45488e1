"""Deterministic trace-driven playback simulation.

A session replays one user against a piecewise-constant bandwidth trace:
segments download sequentially, the buffer drains in real time once
playback starts, stalls and idle periods are accounted exactly, and the
user's twin is updated from the finished session.  Cohort runs replay
every user under each experiment arm with identical traces, so arms are
directly comparable pairwise.
"""

from __future__ import annotations

import os
from bisect import bisect_right
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

from .abr import (
    BaselineParams,
    ControllerKind,
    DecisionContext,
    select_baseline,
    select_quality,
)
from .errors import InvalidInputError, NoFeasibleRenditionError
from .metrics import (
    QoeParams,
    SessionMetrics,
    build_report,
    compute_session_metrics,
    CohortReport,
)
from .prediction import (
    NetState,
    QualityNet,
    device_features,
    net_features,
    pref_features,
    predict_quality,
    quality_target,
)
from .transcode import (
    BitrateLadder,
    DeviceCapabilities,
    Rendition,
    TranscodeConstraints,
    cap_ladder,
    feasible_renditions,
    optimize_ladder,
    segment_bits,
)
from .twin import (
    ObservationParams,
    TwinProfile,
    derive_observation,
    ingest_feedback,
    update_profile,
)

#: Environment variable capping cohort worker threads.
THREADS_ENV_VAR = "TWINSTREAM_THREADS"

_STARTUP_EPS = 1e-9


@dataclass(frozen=True)
class TracePoint:
    t_start_s: float
    bandwidth_mbps: float
    latency_ms: float


@dataclass(frozen=True)
class NetworkTrace:
    """Piecewise-constant bandwidth over time; the last point holds forever."""

    points: tuple[TracePoint, ...]

    def __post_init__(self) -> None:
        if not self.points:
            raise InvalidInputError("a trace needs at least one point")
        if self.points[0].t_start_s != 0.0:
            raise InvalidInputError("the first trace point must start at t = 0")
        for prev, cur in zip(self.points, self.points[1:]):
            if cur.t_start_s <= prev.t_start_s:
                raise InvalidInputError("trace start times must strictly increase")
        for p in self.points:
            if p.bandwidth_mbps <= 0:
                raise InvalidInputError("trace bandwidth must be positive")
            if p.latency_ms < 0:
                raise InvalidInputError("trace latency must be nonnegative")
        object.__setattr__(
            self, "_t_starts", tuple(p.t_start_s for p in self.points)
        )

    def index_at(self, t: float) -> int:
        if t < 0:
            raise InvalidInputError("time must be nonnegative")
        return bisect_right(self._t_starts, t) - 1  # type: ignore[attr-defined]

    def point_at(self, t: float) -> TracePoint:
        return self.points[self.index_at(t)]


def download_time(trace: NetworkTrace, t_start_s: float, bits: float) -> float:
    """Seconds to fetch ``bits`` starting at ``t_start_s``.

    One latency period (taken from the trace point active at the request
    time) passes before any byte flows; after that the piecewise-constant
    bandwidth integral is solved exactly, span by span.
    """
    if bits <= 0:
        raise InvalidInputError("bits must be positive")
    latency_s = trace.point_at(t_start_s).latency_ms / 1000.0
    t = t_start_s + latency_s
    remaining = bits
    idx = trace.index_at(t)
    points = trace.points
    while True:
        rate = points[idx].bandwidth_mbps * 1e6  # bits per second
        if idx + 1 < len(points):
            span = points[idx + 1].t_start_s - t
            capacity = rate * span
            if capacity < remaining:
                remaining -= capacity
                t = points[idx + 1].t_start_s
                idx += 1
                continue
        return (t + remaining / rate) - t_start_s


@dataclass(frozen=True)
class SessionConfig:
    """Playback parameters of one simulated session."""

    video_duration_s: float
    segment_duration_s: float = 4.0
    max_buffer_s: float = 30.0
    startup_threshold_s: float = 8.0
    #: When set, a synthetic per-segment rating is fed to the twin during
    #: playback instead of updating it only at session end.
    per_segment_feedback: bool = False

    def __post_init__(self) -> None:
        if self.segment_duration_s <= 0:
            raise InvalidInputError("segment_duration_s must be positive")
        if not (
            self.segment_duration_s
            <= self.startup_threshold_s
            <= self.max_buffer_s
        ):
            raise InvalidInputError(
                "need segment_duration_s <= startup_threshold_s <= max_buffer_s"
            )
        n = self.video_duration_s / self.segment_duration_s
        if self.video_duration_s <= 0 or abs(n - round(n)) > 1e-9:
            raise InvalidInputError(
                "video_duration_s must be a positive multiple of segment_duration_s"
            )

    @property
    def n_segments(self) -> int:
        return round(self.video_duration_s / self.segment_duration_s)


@dataclass(frozen=True)
class SegmentRecord:
    index: int
    rendition_id: str
    t_request_s: float
    t_complete_s: float
    bits_downloaded: float
    rebuffer_before_s: float


@dataclass(frozen=True)
class SessionOutcome:
    records: tuple[SegmentRecord, ...]
    startup_delay_s: float
    wall_clock_s: float
    idle_total_s: float
    metrics: SessionMetrics


@dataclass(frozen=True)
class CohortMember:
    """One simulated user: twin profile, playback device, network trace."""

    profile: TwinProfile
    device: DeviceCapabilities
    trace: NetworkTrace


def _stall_rating(stall_s: float, segment_duration_s: float) -> int:
    """Star rating a viewer submits after a playback stall.

    Viewers rarely rate mid-session unless something annoys them, so the
    simulated audience only files feedback on rebuffer events: one star
    for a stall of half a segment or longer, two stars for a shorter
    blip.  Smooth segments produce no rating at all — a constant
    "satisfied" rating would slowly drag every profile toward the same
    point regardless of taste.
    """
    return 1 if stall_s >= 0.5 * segment_duration_s else 2


def run_session(
    profile: TwinProfile,
    device: DeviceCapabilities,
    trace: NetworkTrace,
    ladder: BitrateLadder,
    controller: ControllerKind,
    config: SessionConfig,
    quality_net: QualityNet | None = None,
    qoe_params: QoeParams = QoeParams(),
    baseline_params: BaselineParams = BaselineParams(),
    obs_params: ObservationParams = ObservationParams(),
    session_id: str = "",
) -> tuple[SessionOutcome, TwinProfile]:
    """Play one video end to end and fold the result into the twin.

    The event loop: download until the buffer reaches the startup
    threshold, then play while downloading.  The buffer drains at 1 s/s
    during playback; an empty buffer stalls playback until the in-flight
    segment lands (one rebuffer event).  When the buffer would overflow,
    downloading idles until there is room for one segment.  The wall
    clock follows the accounting identity

        wall_clock = startup_delay + video_duration + rebuffer + idle

    so idle time (network not in use) dilutes average bandwidth use.
    Returns the outcome and the updated twin profile.
    """
    feasible = feasible_renditions(ladder.renditions, device)
    if not feasible:
        raise NoFeasibleRenditionError(
            f"ladder holds nothing device class {device.device_class!r} can play"
        )
    effective_ladder = BitrateLadder(feasible)
    seg_s = config.segment_duration_s
    cap_threshold = config.max_buffer_s - seg_s
    if not session_id:
        session_id = f"{profile.user_id}:{controller.value}"

    t = 0.0
    buffer = 0.0
    playing = False
    startup_delay = 0.0
    rebuffer_total = 0.0
    idle_total = 0.0
    samples: list[float] = []
    records: list[SegmentRecord] = []
    prev: Rendition | None = None

    for idx in range(config.n_segments):
        if playing and buffer > cap_threshold:
            wait = buffer - cap_threshold
            t += wait
            buffer = cap_threshold
            idle_total += wait

        latency_ms = trace.point_at(t).latency_ms
        if samples:
            net_state = NetState.from_samples(samples, latency_ms)
        else:
            net_state = NetState(0.0, latency_ms, ())
        # Before playback starts no frame has been rendered, so there is
        # no previous rendition in the perceptual sense and startup
        # decisions carry no switch cost.
        ctx = DecisionContext(
            buffer_level_s=buffer,
            previous_rendition=prev if playing else None,
            net=net_state,
            segment_duration_s=seg_s,
            max_buffer_s=config.max_buffer_s,
        )

        if controller is ControllerKind.FIXED_PROFILE:
            rendition = select_baseline(
                controller, effective_ladder, device, ctx, baseline_params
            )
        elif not samples:
            # No throughput evidence yet: every adaptive controller opens
            # on the lowest rung.
            rendition = effective_ladder.bottom
        elif controller is ControllerKind.TWIN_DRIVEN:
            if quality_net is not None:
                q_target = predict_quality(
                    quality_net,
                    device_features(device),
                    pref_features(profile.pref),
                    net_features(net_state),
                )
            else:
                q_target = quality_target(device, profile.pref, net_state)
            rendition = select_quality(
                effective_ladder, profile, device, ctx, q_target
            )
        else:
            rendition = select_baseline(
                controller, effective_ladder, device, ctx, baseline_params
            )

        bits = segment_bits(rendition, seg_s)
        dt = download_time(trace, t, bits)
        t_complete = t + dt
        stall = 0.0
        if playing:
            stall = max(0.0, dt - buffer)
            buffer = max(0.0, buffer - dt) + seg_s
            rebuffer_total += stall
        else:
            buffer += seg_s
            if (
                buffer >= config.startup_threshold_s - _STARTUP_EPS
                or idx == config.n_segments - 1
            ):
                playing = True
                startup_delay = t_complete

        records.append(
            SegmentRecord(
                index=idx,
                rendition_id=rendition.id,
                t_request_s=t,
                t_complete_s=t_complete,
                bits_downloaded=bits,
                rebuffer_before_s=stall,
            )
        )
        samples.append(bits / dt / 1e6)
        t = t_complete
        prev = rendition

        if config.per_segment_feedback and stall > 0:
            rating = _stall_rating(stall, seg_s)
            profile = ingest_feedback(profile, rating, session_id=session_id)

    wall_clock = (
        startup_delay + config.video_duration_s + rebuffer_total + idle_total
    )
    session_metrics = compute_session_metrics(
        records, config, wall_clock, startup_delay, qoe_params
    )
    observation = derive_observation(
        session_metrics,
        effective_ladder,
        session_id=session_id,
        params=obs_params,
    )
    outcome = SessionOutcome(
        records=tuple(records),
        startup_delay_s=startup_delay,
        wall_clock_s=wall_clock,
        idle_total_s=idle_total,
        metrics=session_metrics,
    )
    return outcome, update_profile(profile, observation)


def _worker_count(requested: int | None) -> int:
    env = os.environ.get(THREADS_ENV_VAR)
    cap = None
    if env is not None and env.strip():
        try:
            cap = int(env)
        except ValueError as exc:
            raise InvalidInputError(
                f"{THREADS_ENV_VAR} must be an integer, got {env!r}"
            ) from exc
        if cap < 1:
            cap = 1
    if requested is None:
        return cap or 1
    workers = max(1, requested)
    return min(workers, cap) if cap else workers


def run_arm(
    cohort: Sequence[CohortMember],
    controller: ControllerKind,
    catalog: Sequence[Rendition],
    constraints: TranscodeConstraints,
    config: SessionConfig,
    quality_net: QualityNet | None = None,
    qoe_params: QoeParams = QoeParams(),
    baseline_params: BaselineParams = BaselineParams(),
    obs_params: ObservationParams = ObservationParams(),
    max_workers: int | None = None,
) -> list[SessionOutcome]:
    """Run every cohort member under one controller.

    The twin arm streams from a per-user optimized ladder; baseline arms
    stream from the device-feasible catalog thinned to the ladder-size
    cap.  Sessions are independent, so results are identical whether they
    run serially or on a thread pool; outcomes always return in cohort
    order.
    """
    if not cohort:
        raise InvalidInputError("cohort must not be empty")

    def one_session(member: CohortMember) -> SessionOutcome:
        if controller is ControllerKind.TWIN_DRIVEN:
            ladder = optimize_ladder(
                catalog, member.profile, constraints, member.device
            )
        else:
            feasible = feasible_renditions(catalog, member.device)
            ladder = cap_ladder(feasible, constraints.max_ladder_size)
        outcome, _ = run_session(
            member.profile,
            member.device,
            member.trace,
            ladder,
            controller,
            config,
            quality_net=quality_net,
            qoe_params=qoe_params,
            baseline_params=baseline_params,
            obs_params=obs_params,
        )
        return outcome

    workers = _worker_count(max_workers)
    if workers <= 1 or len(cohort) <= 1:
        return [one_session(m) for m in cohort]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one_session, cohort))


def run_cohort(
    cohort: Sequence[CohortMember],
    arms: Sequence[ControllerKind],
    catalog: Sequence[Rendition],
    constraints: TranscodeConstraints,
    config: SessionConfig,
    master_seed: int,
    config_echo: Mapping[str, object] | None = None,
    quality_net: QualityNet | None = None,
    qoe_params: QoeParams = QoeParams(),
    baseline_params: BaselineParams = BaselineParams(),
    obs_params: ObservationParams = ObservationParams(),
    max_workers: int | None = None,
) -> CohortReport:
    """Paired experiment: every arm replays the identical cohort."""
    if not arms:
        raise InvalidInputError("at least one arm is required")
    if len(set(arms)) != len(arms):
        raise InvalidInputError("arms must be distinct")
    arm_metrics: dict[str, list[SessionMetrics]] = {}
    for arm in arms:
        outcomes = run_arm(
            cohort,
            arm,
            catalog,
            constraints,
            config,
            quality_net=quality_net,
            qoe_params=qoe_params,
            baseline_params=baseline_params,
            obs_params=obs_params,
            max_workers=max_workers,
        )
        arm_metrics[arm.value] = [o.metrics for o in outcomes]
    return build_report(arm_metrics, master_seed, config_echo)
