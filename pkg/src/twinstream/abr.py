"""Segment-by-segment quality selection: the twin-driven controller and
three reference controllers used as experiment baselines."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

from .errors import InvalidInputError, NoFeasibleRenditionError
from .prediction import NetState
from .transcode import (
    BitrateLadder,
    DeviceCapabilities,
    Rendition,
    feasible_renditions,
    segment_bits,
)
from .twin import PreferenceVector, TwinProfile


class ControllerKind(str, enum.Enum):
    TWIN_DRIVEN = "twin_driven"
    THROUGHPUT_RULE = "throughput_rule"
    BUFFER_RULE = "buffer_rule"
    FIXED_PROFILE = "fixed_profile"


@dataclass(frozen=True)
class DecisionContext:
    """Everything a controller may look at when choosing the next segment."""

    buffer_level_s: float
    previous_rendition: Rendition | None
    net: NetState
    segment_duration_s: float
    max_buffer_s: float

    def __post_init__(self) -> None:
        if self.buffer_level_s < 0:
            raise InvalidInputError("buffer_level_s must be nonnegative")
        if self.segment_duration_s <= 0:
            raise InvalidInputError("segment_duration_s must be positive")
        if self.max_buffer_s <= 0:
            raise InvalidInputError("max_buffer_s must be positive")


@dataclass(frozen=True)
class ScoreWeights:
    """Per-term weights of the twin-driven score."""

    quality: float
    rebuffer: float
    switch: float
    data: float
    target: float = 0.5

    @staticmethod
    def from_profile(pref: PreferenceVector) -> "ScoreWeights":
        return ScoreWeights(
            quality=pref.quality_affinity,
            rebuffer=2.0 * (1.0 - pref.rebuffer_tolerance),
            switch=0.5 * (1.0 - pref.switch_tolerance),
            data=pref.data_sensitivity,
        )


@dataclass(frozen=True)
class BaselineParams:
    """Constants of the reference controllers."""

    throughput_safety: float = 0.9
    low_buffer_frac: float = 0.25
    high_buffer_frac: float = 0.75


#: Static tier per device class for the fixed_profile controller; classes
#: absent here ride the top rung.  All tiers clamp to the ladder size.
FIXED_PROFILE_TIERS = {"phone": 0, "tablet": 1, "desktop": 2}


def _feasible(ladder: BitrateLadder, device: DeviceCapabilities) -> list[Rendition]:
    feasible = list(feasible_renditions(ladder.renditions, device))
    if not feasible:
        raise NoFeasibleRenditionError(
            f"ladder holds nothing device class {device.device_class!r} can play"
        )
    return feasible


def score_renditions(
    renditions: Sequence[Rendition],
    weights: ScoreWeights,
    ctx: DecisionContext,
    q_target_mbps: float,
) -> list[float]:
    """Score every rendition under the twin-driven utility.

    score(r) = w_q * u(r) - w_rb * risk(r) - w_sw * sw(r)
               - w_d * d(r) - w_t * |bitrate(r) - q_target| / b_max

    where u and d are bitrate shares of the top rung, risk is the
    predicted buffer shortfall of the download in segment units, and sw
    is the normalized tier distance from the previous rendition.
    """
    if not renditions:
        raise InvalidInputError("cannot score an empty rendition list")
    thr = ctx.net.predicted_throughput_mbps
    if thr <= 0 or not math.isfinite(thr):
        raise InvalidInputError("predicted throughput must be positive and finite")
    if not math.isfinite(q_target_mbps) or q_target_mbps < 0:
        raise InvalidInputError("q_target must be finite and nonnegative")

    b_max = max(r.bitrate_mbps for r in renditions)
    n_tiers = len(renditions)
    prev_tier: int | None = None
    if ctx.previous_rendition is not None:
        for i, r in enumerate(renditions):
            if r.id == ctx.previous_rendition.id:
                prev_tier = i
                break

    scores: list[float] = []
    for tier, r in enumerate(renditions):
        share = r.bitrate_mbps / b_max
        est_dl = segment_bits(r, ctx.segment_duration_s) / (thr * 1e6) + (
            ctx.net.latency_ms / 1000.0
        )
        risk = max(0.0, est_dl - ctx.buffer_level_s) / ctx.segment_duration_s
        if prev_tier is None or n_tiers == 1:
            sw = 0.0
        else:
            sw = abs(tier - prev_tier) / (n_tiers - 1)
        target_miss = abs(r.bitrate_mbps - q_target_mbps) / b_max
        scores.append(
            weights.quality * share
            - weights.rebuffer * risk
            - weights.switch * sw
            - weights.data * share
            - weights.target * target_miss
        )
    return scores


def select_by_score(
    renditions: Sequence[Rendition],
    weights: ScoreWeights,
    ctx: DecisionContext,
    q_target_mbps: float,
) -> Rendition:
    """Argmax of :func:`score_renditions`; ties go to the lower bitrate."""
    ordered = sorted(renditions, key=lambda r: r.bitrate_kbps)
    scores = score_renditions(ordered, weights, ctx, q_target_mbps)
    best = 0
    for i in range(1, len(ordered)):
        if scores[i] > scores[best]:
            best = i
    return ordered[best]


def select_quality(
    ladder: BitrateLadder,
    profile: TwinProfile,
    device: DeviceCapabilities,
    ctx: DecisionContext,
    q_target_mbps: float,
) -> Rendition:
    """Twin-driven choice: device-filter the ladder, then scored argmax."""
    feasible = _feasible(ladder, device)
    return select_by_score(
        feasible, ScoreWeights.from_profile(profile.pref), ctx, q_target_mbps
    )


def select_baseline(
    kind: ControllerKind,
    ladder: BitrateLadder,
    device: DeviceCapabilities,
    ctx: DecisionContext,
    params: BaselineParams = BaselineParams(),
) -> Rendition:
    """One of the reference controllers; all are deterministic."""
    feasible = _feasible(ladder, device)
    n = len(feasible)

    if kind is ControllerKind.THROUGHPUT_RULE:
        cap = params.throughput_safety * ctx.net.predicted_throughput_mbps
        fitting = [r for r in feasible if r.bitrate_mbps <= cap]
        return fitting[-1] if fitting else feasible[0]

    if kind is ControllerKind.BUFFER_RULE:
        frac = ctx.buffer_level_s / ctx.max_buffer_s
        if frac < params.low_buffer_frac:
            return feasible[0]
        if frac > params.high_buffer_frac:
            return feasible[-1]
        span = params.high_buffer_frac - params.low_buffer_frac
        tier = math.floor((frac - params.low_buffer_frac) / span * (n - 1))
        return feasible[min(tier, n - 1)]

    if kind is ControllerKind.FIXED_PROFILE:
        tier = FIXED_PROFILE_TIERS.get(device.device_class, n - 1)
        return feasible[min(tier, n - 1)]

    if kind is ControllerKind.TWIN_DRIVEN:
        raise InvalidInputError("twin_driven is served by select_quality")
    raise InvalidInputError(f"unknown controller kind {kind!r}")
