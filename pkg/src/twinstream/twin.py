"""Per-user digital twin: preference state, its update law, and a
decision-tree classifier over preference vectors.

A twin is a five-component preference vector plus a bounded history of
session observations.  Every completed session produces an observation
that is folded into the vector with an exponential moving average, so the
twin tracks the user while old sessions decay geometrically.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Mapping, Sequence, Union

from .errors import InvalidInputError

if TYPE_CHECKING:  # pragma: no cover - type-only imports
    from .metrics import SessionMetrics
    from .transcode import BitrateLadder

#: Canonical component order; also the feature order seen by the tree.
PREFERENCE_FEATURES = (
    "quality_affinity",
    "rebuffer_tolerance",
    "data_sensitivity",
    "switch_tolerance",
    "startup_tolerance",
)

#: Labels the preference classifier may emit.
PREFERENCE_LABELS = ("balanced", "data_saver", "quality_first")

DEFAULT_ALPHA = 0.2
DEFAULT_HISTORY_CAPACITY = 64


def _check_unit(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise InvalidInputError(f"{name} must lie in [0, 1], got {value}")


@dataclass(frozen=True)
class PreferenceVector:
    """Point in the unit hypercube describing what a viewer cares about."""

    quality_affinity: float
    rebuffer_tolerance: float
    data_sensitivity: float
    switch_tolerance: float
    startup_tolerance: float

    def __post_init__(self) -> None:
        for name in PREFERENCE_FEATURES:
            _check_unit(name, getattr(self, name))

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (
            self.quality_affinity,
            self.rebuffer_tolerance,
            self.data_sensitivity,
            self.switch_tolerance,
            self.startup_tolerance,
        )

    @staticmethod
    def balanced() -> "PreferenceVector":
        return PreferenceVector(0.5, 0.5, 0.5, 0.5, 0.5)


@dataclass(frozen=True)
class Observation:
    """One session's evidence about a user, already mapped to preference space."""

    u_obs: PreferenceVector
    watch_fraction: float = 1.0
    abandoned: bool = False
    rebuffer_count: int = 0
    session_id: str = ""

    def __post_init__(self) -> None:
        _check_unit("watch_fraction", self.watch_fraction)
        if self.rebuffer_count < 0:
            raise InvalidInputError("rebuffer_count must be nonnegative")


@dataclass(frozen=True)
class TwinProfile:
    """Digital twin of one user: preference vector, blend rate, history."""

    user_id: str
    pref: PreferenceVector
    alpha: float = DEFAULT_ALPHA
    history: tuple[Observation, ...] = ()
    history_capacity: int = DEFAULT_HISTORY_CAPACITY

    def __post_init__(self) -> None:
        _check_unit("alpha", self.alpha)
        if self.history_capacity < 1:
            raise InvalidInputError("history_capacity must be at least 1")
        if len(self.history) > self.history_capacity:
            raise InvalidInputError("history exceeds its declared capacity")


@dataclass(frozen=True)
class ObservationParams:
    """Saturation points of the session-to-preference mapping.

    ``rebuffer_zero_at`` stalls (or more) drive rebuffer_tolerance to 0;
    likewise for switches and startup seconds.
    """

    rebuffer_zero_at: float = 3.0
    switch_zero_at: float = 10.0
    startup_zero_at_s: float = 10.0


def _clamp01(x: float) -> float:
    return 0.0 if x < 0.0 else 1.0 if x > 1.0 else x


def _ema(old: float, obs: float, alpha: float) -> float:
    # Convex form keeps the alpha = 0 and alpha = 1 endpoints exact in
    # floating point, unlike old + alpha * (obs - old).
    return _clamp01((1.0 - alpha) * old + alpha * obs)


def update_profile(profile: TwinProfile, obs: Observation) -> TwinProfile:
    """Blend an observation into the twin: U <- U + alpha * (U_obs - U).

    Returns a new profile; the observation is appended to the history,
    evicting the oldest entry once capacity is reached.
    """
    a = profile.alpha
    old = profile.pref
    new_pref = PreferenceVector(
        quality_affinity=_ema(old.quality_affinity, obs.u_obs.quality_affinity, a),
        rebuffer_tolerance=_ema(old.rebuffer_tolerance, obs.u_obs.rebuffer_tolerance, a),
        data_sensitivity=_ema(old.data_sensitivity, obs.u_obs.data_sensitivity, a),
        switch_tolerance=_ema(old.switch_tolerance, obs.u_obs.switch_tolerance, a),
        startup_tolerance=_ema(old.startup_tolerance, obs.u_obs.startup_tolerance, a),
    )
    history = (profile.history + (obs,))[-profile.history_capacity:]
    return replace(profile, pref=new_pref, history=history)


def derive_observation(
    metrics: "SessionMetrics",
    ladder: "BitrateLadder",
    session_id: str = "",
    params: ObservationParams = ObservationParams(),
    watch_fraction: float = 1.0,
    abandoned: bool = False,
) -> Observation:
    """Map session metrics onto preference space relative to a ladder.

    The top rung is the quality and bandwidth yardstick: a session that
    averaged the top bitrate scores quality_affinity 1.0, and one that
    consumed no bandwidth scores data_sensitivity 1.0.
    """
    if not ladder.renditions:
        raise InvalidInputError("ladder must contain at least one rendition")
    top_mbps = ladder.renditions[-1].bitrate_kbps / 1000.0
    u_obs = PreferenceVector(
        quality_affinity=_clamp01(metrics.avg_quality_mbps / top_mbps),
        rebuffer_tolerance=max(
            0.0, 1.0 - metrics.rebuffer_event_count / params.rebuffer_zero_at
        ),
        data_sensitivity=_clamp01(1.0 - metrics.avg_bandwidth_mbps / top_mbps),
        switch_tolerance=max(0.0, 1.0 - metrics.switch_count / params.switch_zero_at),
        startup_tolerance=max(
            0.0, 1.0 - metrics.startup_delay_s / params.startup_zero_at_s
        ),
    )
    return Observation(
        u_obs=u_obs,
        watch_fraction=watch_fraction,
        abandoned=abandoned,
        rebuffer_count=metrics.rebuffer_event_count,
        session_id=session_id,
    )


def ingest_feedback(
    profile: TwinProfile, rating: int, session_id: str = "feedback"
) -> TwinProfile:
    """Fold an explicit 1..5 star rating into the twin.

    The rating rescales to [0, 1] and blends into quality_affinity and
    rebuffer_tolerance only; the other components are left untouched by
    observing them at their current values.
    """
    if not isinstance(rating, int) or isinstance(rating, bool):
        raise InvalidInputError(f"rating must be an integer, got {rating!r}")
    if not 1 <= rating <= 5:
        raise InvalidInputError(f"rating must lie in 1..5, got {rating}")
    s = (rating - 1) / 4.0
    u_obs = replace(profile.pref, quality_affinity=s, rebuffer_tolerance=s)
    return update_profile(profile, Observation(u_obs=u_obs, session_id=session_id))


# ---------------------------------------------------------------------------
# Preference classification tree
# ---------------------------------------------------------------------------

FeatureVector = Union["PreferenceVector", Sequence[float]]


@dataclass(frozen=True)
class TreeParams:
    max_depth: int = 3
    min_leaf: int = 1

    def __post_init__(self) -> None:
        if self.max_depth < 0:
            raise InvalidInputError("max_depth must be nonnegative")
        if self.min_leaf < 1:
            raise InvalidInputError("min_leaf must be at least 1")


@dataclass(frozen=True)
class LeafNode:
    label: str
    counts: Mapping[str, int]


@dataclass(frozen=True)
class SplitNode:
    feature_index: int
    threshold: float
    left: "TreeNode"
    right: "TreeNode"


TreeNode = Union[LeafNode, SplitNode]


@dataclass(frozen=True)
class PreferenceTree:
    root: TreeNode
    n_features: int

    def depth(self) -> int:
        def walk(node: TreeNode) -> int:
            if isinstance(node, LeafNode):
                return 0
            return 1 + max(walk(node.left), walk(node.right))

        return walk(self.root)


def _as_features(x: FeatureVector) -> tuple[float, ...]:
    if isinstance(x, PreferenceVector):
        return x.as_tuple()
    return tuple(float(v) for v in x)


def _gini(labels: Sequence[str]) -> float:
    n = len(labels)
    counts: dict[str, int] = {}
    for lab in labels:
        counts[lab] = counts.get(lab, 0) + 1
    return 1.0 - sum((c / n) ** 2 for c in counts.values())


def _leaf(labels: Sequence[str]) -> LeafNode:
    counts: dict[str, int] = {}
    for lab in labels:
        counts[lab] = counts.get(lab, 0) + 1
    # Majority label; ties resolve to the lexicographically smallest.
    best = min(counts, key=lambda lab: (-counts[lab], lab))
    return LeafNode(label=best, counts=counts)


def _best_split(
    rows: Sequence[tuple[tuple[float, ...], str]], n_features: int, min_leaf: int
) -> tuple[int, float] | None:
    """Exhaustive CART split search with deterministic tie-breaking.

    Candidate thresholds are midpoints between consecutive distinct sorted
    feature values.  Among splits of equal weighted Gini impurity the
    lowest feature index wins, then the lowest threshold; iteration order
    plus strict improvement encodes exactly that.
    """
    n = len(rows)
    best: tuple[int, float] | None = None
    best_impurity = float("inf")
    for f in range(n_features):
        values = sorted({row[0][f] for row in rows})
        for lo, hi in zip(values, values[1:]):
            threshold = (lo + hi) / 2.0
            left = [lab for feats, lab in rows if feats[f] <= threshold]
            right = [lab for feats, lab in rows if feats[f] > threshold]
            if len(left) < min_leaf or len(right) < min_leaf:
                continue
            weighted = (len(left) * _gini(left) + len(right) * _gini(right)) / n
            if weighted < best_impurity:
                best_impurity = weighted
                best = (f, threshold)
    return best


def train_preference_tree(
    dataset: Sequence[tuple[FeatureVector, str]],
    params: TreeParams = TreeParams(),
) -> PreferenceTree:
    """Fit a CART classifier on (features, label) pairs.

    Accepts :class:`PreferenceVector` or plain float sequences as feature
    rows; all rows must share one dimensionality and labels must come from
    :data:`PREFERENCE_LABELS`.  Splitting recurses until a node is pure,
    the depth limit is reached, or no split keeps ``min_leaf`` samples on
    both sides.
    """
    if not dataset:
        raise InvalidInputError("training dataset must not be empty")
    rows = [(_as_features(feats), label) for feats, label in dataset]
    n_features = len(rows[0][0])
    if n_features == 0:
        raise InvalidInputError("feature vectors must not be empty")
    for feats, label in rows:
        if len(feats) != n_features:
            raise InvalidInputError("feature vectors differ in length")
        if label not in PREFERENCE_LABELS:
            raise InvalidInputError(f"unknown label {label!r}")

    def grow(subset: Sequence[tuple[tuple[float, ...], str]], depth: int) -> TreeNode:
        labels = [lab for _, lab in subset]
        if depth >= params.max_depth or _gini(labels) == 0.0:
            return _leaf(labels)
        split = _best_split(subset, n_features, params.min_leaf)
        if split is None:
            return _leaf(labels)
        f, threshold = split
        left = [row for row in subset if row[0][f] <= threshold]
        right = [row for row in subset if row[0][f] > threshold]
        return SplitNode(
            feature_index=f,
            threshold=threshold,
            left=grow(left, depth + 1),
            right=grow(right, depth + 1),
        )

    return PreferenceTree(root=grow(rows, 0), n_features=n_features)


def classify_preference(tree: PreferenceTree, features: FeatureVector) -> str:
    """Run a feature vector through the tree; value <= threshold goes left."""
    feats = _as_features(features)
    if len(feats) != tree.n_features:
        raise InvalidInputError(
            f"expected {tree.n_features} features, got {len(feats)}"
        )
    node = tree.root
    while isinstance(node, SplitNode):
        node = node.left if feats[node.feature_index] <= node.threshold else node.right
    return node.label
