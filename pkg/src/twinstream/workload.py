"""Synthetic cohorts and network traces, plus their file formats.

Generation is order-stable: member *i* of a cohort depends only on the
cohort seed and *i*, never on how many members are generated or in what
order, so cohorts can be regenerated or extended without disturbing
existing users.
"""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .errors import InvalidInputError, TraceFormatError
from .seeding import derive_seed
from .simnet import CohortMember, NetworkTrace, TracePoint
from .transcode import DeviceCapabilities
from .twin import DEFAULT_ALPHA, PreferenceVector, TwinProfile

#: Canonical device-class order used for mix sampling and reporting.
DEVICE_CLASSES = ("phone", "tablet", "desktop", "tv")

_ALL_CODECS = frozenset({"h264", "h265", "vp9", "av1"})

#: What each device class can display and decode.
DEVICE_CAPS: Mapping[str, DeviceCapabilities] = {
    "phone": DeviceCapabilities(
        max_width=1280,
        max_height=720,
        supported_codecs=frozenset({"h264", "h265"}),
        max_decode_bitrate_kbps=8000,
        device_class="phone",
    ),
    "tablet": DeviceCapabilities(
        max_width=1920,
        max_height=1080,
        supported_codecs=frozenset({"h264", "h265"}),
        max_decode_bitrate_kbps=15000,
        device_class="tablet",
    ),
    "desktop": DeviceCapabilities(
        max_width=1920,
        max_height=1080,
        supported_codecs=_ALL_CODECS,
        max_decode_bitrate_kbps=50000,
        device_class="desktop",
    ),
    "tv": DeviceCapabilities(
        max_width=3840,
        max_height=2160,
        supported_codecs=_ALL_CODECS,
        max_decode_bitrate_kbps=100000,
        device_class="tv",
    ),
}

DEFAULT_DEVICE_MIX: Mapping[str, float] = {
    "phone": 0.4,
    "tablet": 0.2,
    "desktop": 0.2,
    "tv": 0.2,
}

TRACE_HEADER = ("t_start_s", "bandwidth_mbps", "latency_ms")
COHORT_HEADER = (
    "user_id",
    "device_class",
    "alpha",
    "quality_affinity",
    "rebuffer_tolerance",
    "data_sensitivity",
    "switch_tolerance",
    "startup_tolerance",
)

#: Decimal places used for trace and cohort serialization; generators
#: round to the same precision so files round-trip exactly.
_FILE_DECIMALS = 6


def default_devices() -> tuple[DeviceCapabilities, ...]:
    return tuple(DEVICE_CAPS[c] for c in DEVICE_CLASSES)


@dataclass(frozen=True)
class TraceSpec:
    """Markov bandwidth model: four states with exponential dwell times."""

    state_bandwidths_mbps: tuple[float, ...] = (1.0, 3.0, 6.0, 10.0)
    mean_dwell_s: float = 10.0
    jitter_frac: float = 0.2
    bandwidth_floor_mbps: float = 0.3
    bandwidth_ceil_mbps: float = 15.0
    latency_low_ms: float = 20.0
    latency_high_ms: float = 80.0
    duration_s: float = 300.0

    def __post_init__(self) -> None:
        if len(self.state_bandwidths_mbps) < 2:
            raise InvalidInputError("need at least two bandwidth states")
        if any(b <= 0 for b in self.state_bandwidths_mbps):
            raise InvalidInputError("state bandwidths must be positive")
        if self.mean_dwell_s <= 0 or self.duration_s <= 0:
            raise InvalidInputError("dwell and duration must be positive")
        if not 0 <= self.jitter_frac < 1:
            raise InvalidInputError("jitter_frac must lie in [0, 1)")
        if not 0 < self.bandwidth_floor_mbps < self.bandwidth_ceil_mbps:
            raise InvalidInputError("need 0 < floor < ceiling bandwidth")
        if not 0 <= self.latency_low_ms <= self.latency_high_ms:
            raise InvalidInputError("need 0 <= latency_low <= latency_high")


def gen_trace(spec: TraceSpec, seed: int) -> NetworkTrace:
    """Sample one bandwidth trace from the Markov model.

    Latency is drawn once per trace.  At each dwell expiry the chain
    moves to a uniformly chosen *different* state, so the stationary
    distribution is uniform over states.  Values are rounded to the file
    precision, making disk round-trips exact.
    """
    rng = random.Random(seed)
    latency = round(rng.uniform(spec.latency_low_ms, spec.latency_high_ms), _FILE_DECIMALS)
    k = len(spec.state_bandwidths_mbps)
    state = rng.randrange(k)
    t = 0.0
    points: list[TracePoint] = []
    while t < spec.duration_s:
        jitter = rng.uniform(1.0 - spec.jitter_frac, 1.0 + spec.jitter_frac)
        bw = spec.state_bandwidths_mbps[state] * jitter
        bw = min(max(bw, spec.bandwidth_floor_mbps), spec.bandwidth_ceil_mbps)
        points.append(
            TracePoint(round(t, _FILE_DECIMALS), round(bw, _FILE_DECIMALS), latency)
        )
        dwell = max(rng.expovariate(1.0 / spec.mean_dwell_s), 1e-3)
        t += dwell
        state = (state + 1 + rng.randrange(k - 1)) % k
    return NetworkTrace(tuple(points))


@dataclass(frozen=True)
class CohortSpec:
    """Recipe for a synthetic user population."""

    n_users: int
    seed: int
    device_mix: Mapping[str, float] = field(
        default_factory=lambda: dict(DEFAULT_DEVICE_MIX)
    )
    trace: TraceSpec = TraceSpec()
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self) -> None:
        if self.n_users < 0:
            raise InvalidInputError("n_users must be nonnegative")
        unknown = set(self.device_mix) - set(DEVICE_CLASSES)
        if unknown:
            raise InvalidInputError(f"unknown device classes {sorted(unknown)}")
        if any(w < 0 for w in self.device_mix.values()):
            raise InvalidInputError("device mix weights must be nonnegative")
        total = sum(self.device_mix.values())
        if abs(total - 1.0) > 1e-9:
            raise InvalidInputError(f"device mix must sum to 1, got {total}")


def _pick_device(mix: Mapping[str, float], draw: float) -> str:
    cumulative = 0.0
    chosen = None
    for cls in DEVICE_CLASSES:
        weight = mix.get(cls, 0.0)
        if weight <= 0:
            continue
        cumulative += weight
        chosen = cls
        if draw < cumulative:
            break
    assert chosen is not None
    return chosen


def gen_cohort(spec: CohortSpec) -> tuple[CohortMember, ...]:
    """Generate ``spec.n_users`` members, each from its own seed stream."""
    members: list[CohortMember] = []
    for i in range(spec.n_users):
        rng = random.Random(derive_seed(spec.seed, i, 0))
        prefs = [round(rng.random(), _FILE_DECIMALS) for _ in range(5)]
        device_class = _pick_device(spec.device_mix, rng.random())
        profile = TwinProfile(
            user_id=f"user{i:04d}",
            pref=PreferenceVector(*prefs),
            alpha=spec.alpha,
        )
        trace = gen_trace(spec.trace, derive_seed(spec.seed, i, 1))
        members.append(
            CohortMember(
                profile=profile,
                device=DEVICE_CAPS[device_class],
                trace=trace,
            )
        )
    return tuple(members)


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def write_trace(trace: NetworkTrace, path: str | Path) -> None:
    """Write a trace CSV (`t_start_s,bandwidth_mbps,latency_ms`)."""
    path = Path(path)
    lines = [",".join(TRACE_HEADER)]
    for p in trace.points:
        lines.append(
            f"{p.t_start_s:.{_FILE_DECIMALS}f}"
            f",{p.bandwidth_mbps:.{_FILE_DECIMALS}f}"
            f",{p.latency_ms:.{_FILE_DECIMALS}f}"
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_trace(path: str | Path) -> NetworkTrace:
    """Read a trace CSV; parse errors name the offending line."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TraceFormatError(f"{path}: empty trace file") from None
        if tuple(h.strip() for h in header) != TRACE_HEADER:
            raise TraceFormatError(
                f"{path}, line 1: expected header {','.join(TRACE_HEADER)}"
            )
        points: list[TracePoint] = []
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 3:
                raise TraceFormatError(
                    f"{path}, line {lineno}: expected 3 fields, got {len(row)}"
                )
            try:
                point = TracePoint(float(row[0]), float(row[1]), float(row[2]))
            except InvalidInputError as exc:
                raise TraceFormatError(f"{path}, line {lineno}: {exc}") from None
            except ValueError:
                raise TraceFormatError(
                    f"{path}, line {lineno}: non-numeric field in {row!r}"
                ) from None
            if points and point.t_start_s <= points[-1].t_start_s:
                raise TraceFormatError(
                    f"{path}, line {lineno}: t_start_s must exceed the"
                    f" previous row's {points[-1].t_start_s}"
                )
            points.append(point)
    try:
        return NetworkTrace(tuple(points))
    except InvalidInputError as exc:
        raise TraceFormatError(f"{path}: {exc}") from None


def write_cohort(members: Sequence[CohortMember], path: str | Path) -> None:
    """Write cohort profiles as CSV; traces are stored separately."""
    path = Path(path)
    lines = [",".join(COHORT_HEADER)]
    for m in members:
        p = m.profile.pref
        fields = [
            m.profile.user_id,
            m.device.device_class,
            f"{m.profile.alpha:.{_FILE_DECIMALS}f}",
        ] + [f"{v:.{_FILE_DECIMALS}f}" for v in p.as_tuple()]
        lines.append(",".join(fields))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_cohort(cohort_path: str | Path, trace_dir: str | Path) -> tuple[CohortMember, ...]:
    """Read a cohort CSV plus one ``<user_id>.csv`` trace per user."""
    cohort_path = Path(cohort_path)
    trace_dir = Path(trace_dir)
    members: list[CohortMember] = []
    with cohort_path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TraceFormatError(f"{cohort_path}: empty cohort file") from None
        if tuple(h.strip() for h in header) != COHORT_HEADER:
            raise TraceFormatError(
                f"{cohort_path}, line 1: expected header {','.join(COHORT_HEADER)}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(COHORT_HEADER):
                raise TraceFormatError(
                    f"{cohort_path}, line {lineno}: expected "
                    f"{len(COHORT_HEADER)} fields, got {len(row)}"
                )
            user_id = row[0].strip()
            device_class = row[1].strip()
            if device_class not in DEVICE_CAPS:
                raise TraceFormatError(
                    f"{cohort_path}, line {lineno}: unknown device class "
                    f"{device_class!r}"
                )
            try:
                alpha = float(row[2])
                pref = PreferenceVector(*(float(v) for v in row[3:8]))
                profile = TwinProfile(user_id=user_id, pref=pref, alpha=alpha)
            except (ValueError, InvalidInputError) as exc:
                raise TraceFormatError(
                    f"{cohort_path}, line {lineno}: {exc}"
                ) from None
            trace_path = trace_dir / f"{user_id}.csv"
            if not trace_path.exists():
                raise TraceFormatError(
                    f"{cohort_path}, line {lineno}: missing trace file {trace_path}"
                )
            members.append(
                CohortMember(
                    profile=profile,
                    device=DEVICE_CAPS[device_class],
                    trace=load_trace(trace_path),
                )
            )
    if not members:
        raise TraceFormatError(f"{cohort_path}: cohort contains no users")
    return tuple(members)
