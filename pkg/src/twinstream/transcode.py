"""Rendition catalogs, device capability filtering, and per-user ladder
optimization under a bitrate budget."""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Sequence

from .errors import (
    InfeasibleConstraintsError,
    InvalidInputError,
    NoFeasibleRenditionError,
    TraceFormatError,
)

if TYPE_CHECKING:  # pragma: no cover - type-only imports
    from .twin import TwinProfile

SUPPORTED_CODECS = frozenset({"h264", "h265", "vp9", "av1"})

#: Candidate-set size at or below which ladder optimization enumerates
#: every subset instead of running the greedy heuristic.
EXHAUSTIVE_LIMIT = 12

#: Fraction of predicted throughput a segment is allowed to occupy.
THROUGHPUT_SAFETY = 0.9

CATALOG_HEADER = ("id", "bitrate_kbps", "width", "height", "framerate_fps", "codec")


@dataclass(frozen=True)
class Rendition:
    """One encode of the content: bitrate plus display parameters."""

    id: str
    bitrate_kbps: float
    width: int
    height: int
    framerate_fps: float
    codec: str

    def __post_init__(self) -> None:
        if self.bitrate_kbps <= 0:
            raise InvalidInputError(f"bitrate_kbps must be positive, got {self.bitrate_kbps}")
        if self.width <= 0 or self.height <= 0:
            raise InvalidInputError("width and height must be positive")
        if self.framerate_fps <= 0:
            raise InvalidInputError("framerate_fps must be positive")
        if self.codec not in SUPPORTED_CODECS:
            raise InvalidInputError(f"unknown codec {self.codec!r}")

    @property
    def bitrate_mbps(self) -> float:
        return self.bitrate_kbps / 1000.0


@dataclass(frozen=True)
class BitrateLadder:
    """Renditions ordered by strictly ascending, unique bitrate."""

    renditions: tuple[Rendition, ...]

    def __post_init__(self) -> None:
        if not self.renditions:
            raise InvalidInputError("a ladder needs at least one rendition")
        bitrates = [r.bitrate_kbps for r in self.renditions]
        if any(b >= c for b, c in zip(bitrates, bitrates[1:])):
            raise InvalidInputError("ladder bitrates must be strictly ascending")

    def __len__(self) -> int:
        return len(self.renditions)

    @property
    def bottom(self) -> Rendition:
        return self.renditions[0]

    @property
    def top(self) -> Rendition:
        return self.renditions[-1]


@dataclass(frozen=True)
class DeviceCapabilities:
    max_width: int
    max_height: int
    supported_codecs: frozenset[str]
    max_decode_bitrate_kbps: float
    device_class: str

    def __post_init__(self) -> None:
        if self.max_width <= 0 or self.max_height <= 0:
            raise InvalidInputError("display dimensions must be positive")
        if self.max_decode_bitrate_kbps <= 0:
            raise InvalidInputError("max_decode_bitrate_kbps must be positive")
        unknown = set(self.supported_codecs) - SUPPORTED_CODECS
        if unknown:
            raise InvalidInputError(f"unknown codecs {sorted(unknown)}")


@dataclass(frozen=True)
class TranscodeConstraints:
    """Resource envelope for one user's personalized ladder."""

    total_bitrate_budget_kbps: float
    max_ladder_size: int
    floor_bitrate_kbps: float

    def __post_init__(self) -> None:
        if self.total_bitrate_budget_kbps <= 0:
            raise InvalidInputError("bitrate budget must be positive")
        if self.max_ladder_size < 1:
            raise InvalidInputError("max_ladder_size must be at least 1")
        if self.floor_bitrate_kbps <= 0:
            raise InvalidInputError("floor_bitrate_kbps must be positive")
        if self.floor_bitrate_kbps > self.total_bitrate_budget_kbps:
            raise InvalidInputError("floor bitrate cannot exceed the total budget")


def feasible_renditions(
    catalog: Sequence[Rendition], device: DeviceCapabilities
) -> tuple[Rendition, ...]:
    """Filter a catalog down to what a device can decode, preserving order."""
    return tuple(
        r
        for r in catalog
        if r.codec in device.supported_codecs
        and r.width <= device.max_width
        and r.height <= device.max_height
        and r.bitrate_kbps <= device.max_decode_bitrate_kbps
    )


def rendition_utility(rendition: Rendition, pref, b_max_mbps: float) -> float:
    """Per-rendition value to a user: log quality gain minus data cost.

    ``pref`` needs ``quality_affinity`` and ``data_sensitivity`` fields;
    ``b_max_mbps`` is the top feasible bitrate used to normalize cost.
    """
    mbps = rendition.bitrate_mbps
    return (
        pref.quality_affinity * math.log1p(mbps)
        - pref.data_sensitivity * mbps / b_max_mbps
    )


def segment_bits(rendition: Rendition, segment_duration_s: float) -> float:
    """Size in bits of one segment encoded at this rendition."""
    return rendition.bitrate_kbps * 1000.0 * segment_duration_s


def _ladder_key(renditions: Iterable[Rendition]) -> tuple[float, ...]:
    return tuple(sorted(r.bitrate_kbps for r in renditions))


def _subset_utility(subset: Sequence[Rendition], pref, b_max_mbps: float) -> float:
    # Summed in ascending-bitrate order so equal sets give equal floats.
    return sum(
        rendition_utility(r, pref, b_max_mbps)
        for r in sorted(subset, key=lambda r: r.bitrate_kbps)
    )


def _satisfies(
    subset: Sequence[Rendition], constraints: TranscodeConstraints
) -> bool:
    bitrates = [r.bitrate_kbps for r in subset]
    if not subset or len(subset) > constraints.max_ladder_size:
        return False
    if len(set(bitrates)) != len(bitrates):
        return False
    if sum(bitrates) > constraints.total_bitrate_budget_kbps:
        return False
    return min(bitrates) <= constraints.floor_bitrate_kbps


def optimize_ladder(
    catalog: Sequence[Rendition],
    profile: "TwinProfile",
    constraints: TranscodeConstraints,
    device: DeviceCapabilities,
) -> BitrateLadder:
    """Pick the utility-maximal ladder for one user.

    Subject to: total bitrate within budget, at most ``max_ladder_size``
    rungs, and at least one rung at or below the floor bitrate so every
    network condition has an escape hatch.  Candidate sets of at most
    :data:`EXHAUSTIVE_LIMIT` renditions are solved exactly by enumeration;
    larger ones use a density greedy pass followed by one round of
    pairwise improvement swaps.  Equal-utility optima resolve to the
    lexicographically smallest bitrate sequence.
    """
    feasible = feasible_renditions(catalog, device)
    if not feasible:
        raise NoFeasibleRenditionError(
            f"no rendition in the catalog suits device class {device.device_class!r}"
        )
    pref = profile.pref
    candidates = sorted(feasible, key=lambda r: (r.bitrate_kbps, r.id))
    if not any(r.bitrate_kbps <= constraints.floor_bitrate_kbps for r in candidates):
        raise InfeasibleConstraintsError(
            "no feasible rendition sits at or below the floor bitrate "
            f"({constraints.floor_bitrate_kbps} kbps)"
        )
    # Normalize data cost by the top of the whole catalog, not the
    # device-feasible top: a megabit costs the same to ship regardless of
    # the screen it lands on, and per-device normalization would punish
    # small-screen users with an inflated data penalty.
    b_max_mbps = max(r.bitrate_mbps for r in catalog)

    if len(candidates) <= EXHAUSTIVE_LIMIT:
        chosen = _optimize_exhaustive(candidates, pref, constraints, b_max_mbps)
    else:
        chosen = _optimize_greedy(candidates, pref, constraints, b_max_mbps)
    return BitrateLadder(tuple(sorted(chosen, key=lambda r: r.bitrate_kbps)))


def _optimize_exhaustive(
    candidates: Sequence[Rendition],
    pref,
    constraints: TranscodeConstraints,
    b_max_mbps: float,
) -> tuple[Rendition, ...]:
    best: tuple[Rendition, ...] | None = None
    best_utility = -math.inf
    max_size = min(constraints.max_ladder_size, len(candidates))
    for size in range(1, max_size + 1):
        for subset in itertools.combinations(candidates, size):
            if not _satisfies(subset, constraints):
                continue
            utility = _subset_utility(subset, pref, b_max_mbps)
            if utility > best_utility or (
                utility == best_utility
                and best is not None
                and _ladder_key(subset) < _ladder_key(best)
            ):
                best = subset
                best_utility = utility
    if best is None:  # unreachable: a lone floor rung always satisfies
        raise InfeasibleConstraintsError("no subset satisfies the ladder constraints")
    return best


def _optimize_greedy(
    candidates: Sequence[Rendition],
    pref,
    constraints: TranscodeConstraints,
    b_max_mbps: float,
) -> tuple[Rendition, ...]:
    def utility(r: Rendition) -> float:
        return rendition_utility(r, pref, b_max_mbps)

    floor_pool = [
        r for r in candidates if r.bitrate_kbps <= constraints.floor_bitrate_kbps
    ]
    seed = min(floor_pool, key=lambda r: (-utility(r), r.bitrate_kbps, r.id))
    selected = [seed]

    by_density = sorted(
        (r for r in candidates if r is not seed),
        key=lambda r: (-utility(r) / r.bitrate_mbps, r.bitrate_kbps, r.id),
    )
    for r in by_density:
        if len(selected) >= constraints.max_ladder_size:
            break
        if utility(r) <= 0:
            continue
        if _satisfies(selected + [r], constraints):
            selected.append(r)

    # One improvement pass: try to swap each selected rung for the best
    # outside candidate that raises total utility while staying feasible.
    pool = [r for r in candidates if r not in selected]
    for i, current in enumerate(sorted(selected, key=lambda r: r.bitrate_kbps)):
        idx = selected.index(current)
        best_swap: Rendition | None = None
        best_gain = 0.0
        for candidate in pool:
            trial = selected[:idx] + [candidate] + selected[idx + 1 :]
            if not _satisfies(trial, constraints):
                continue
            gain = utility(candidate) - utility(current)
            if gain > best_gain:
                best_gain = gain
                best_swap = candidate
        if best_swap is not None:
            pool.remove(best_swap)
            pool.append(current)
            selected[idx] = best_swap
    return tuple(selected)


def cap_ladder(
    renditions: Sequence[Rendition], max_size: int
) -> BitrateLadder:
    """Thin a feasible set down to ``max_size`` rungs, keeping both ends.

    Used for baseline arms that stream from the shared catalog: indices
    are spread evenly across the ascending bitrate order.
    """
    if not renditions:
        raise NoFeasibleRenditionError("cannot build a ladder from no renditions")
    if max_size < 1:
        raise InvalidInputError("max_size must be at least 1")
    ordered = sorted(renditions, key=lambda r: (r.bitrate_kbps, r.id))
    deduped: list[Rendition] = []
    for r in ordered:
        if not deduped or r.bitrate_kbps != deduped[-1].bitrate_kbps:
            deduped.append(r)
    if len(deduped) <= max_size:
        return BitrateLadder(tuple(deduped))
    if max_size == 1:
        return BitrateLadder((deduped[0],))
    step = (len(deduped) - 1) / (max_size - 1)
    indices = sorted({round(i * step) for i in range(max_size)})
    return BitrateLadder(tuple(deduped[i] for i in indices))


def transcode_params_for_segment(
    ladder: BitrateLadder,
    device: DeviceCapabilities,
    predicted_throughput_mbps: float,
) -> Rendition:
    """Choose the encode for the next segment of a live transcode.

    Highest rung whose bitrate fits under both the decode cap and 90% of
    the predicted throughput; falls back to the lowest rung.
    """
    if predicted_throughput_mbps <= 0:
        raise InvalidInputError("predicted throughput must be positive")
    cap_kbps = min(
        device.max_decode_bitrate_kbps,
        THROUGHPUT_SAFETY * predicted_throughput_mbps * 1000.0,
    )
    fitting = [r for r in ladder.renditions if r.bitrate_kbps <= cap_kbps]
    return fitting[-1] if fitting else ladder.bottom


def default_catalog() -> tuple[Rendition, ...]:
    """Built-in seven-rung catalog used when no catalog file is given."""
    return (
        Rendition("r240", 400, 426, 240, 30, "h264"),
        Rendition("r360", 900, 640, 360, 30, "h264"),
        Rendition("r480", 1600, 854, 480, 30, "h264"),
        Rendition("r720", 3000, 1280, 720, 30, "h264"),
        Rendition("r1080", 5000, 1920, 1080, 30, "h264"),
        Rendition("r1080p60", 7500, 1920, 1080, 60, "h265"),
        Rendition("r2160", 14000, 3840, 2160, 60, "h265"),
    )


def load_catalog(path: str | Path) -> tuple[Rendition, ...]:
    """Read a rendition catalog CSV (`id,bitrate_kbps,width,height,framerate_fps,codec`)."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TraceFormatError(f"{path}: empty catalog file") from None
        if tuple(h.strip() for h in header) != CATALOG_HEADER:
            raise TraceFormatError(
                f"{path}, line 1: expected header {','.join(CATALOG_HEADER)}"
            )
        renditions: list[Rendition] = []
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(CATALOG_HEADER):
                raise TraceFormatError(
                    f"{path}, line {lineno}: expected {len(CATALOG_HEADER)} fields, got {len(row)}"
                )
            try:
                renditions.append(
                    Rendition(
                        id=row[0].strip(),
                        bitrate_kbps=float(row[1]),
                        width=int(row[2]),
                        height=int(row[3]),
                        framerate_fps=float(row[4]),
                        codec=row[5].strip(),
                    )
                )
            except (ValueError, InvalidInputError) as exc:
                raise TraceFormatError(f"{path}, line {lineno}: {exc}") from None
    if not renditions:
        raise TraceFormatError(f"{path}: catalog contains no renditions")
    return tuple(renditions)


def write_catalog(renditions: Sequence[Rendition], path: str | Path) -> None:
    """Write a catalog CSV in the format :func:`load_catalog` reads."""
    path = Path(path)
    lines = [",".join(CATALOG_HEADER)]
    for r in renditions:
        lines.append(
            f"{r.id},{r.bitrate_kbps:g},{r.width},{r.height},{r.framerate_fps:g},{r.codec}"
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
