"""Throughput estimation and the learned quality-target model.

The controller consumes two predictions per decision: a harmonic-mean
throughput estimate over recent segment downloads, and a scalar quality
target (Mbps) produced either by a small trained network or by the
deterministic rule the network is trained to imitate.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import InsufficientDataError, InvalidInputError
from .twin import PreferenceVector

if TYPE_CHECKING:  # pragma: no cover - type-only imports
    from .transcode import DeviceCapabilities

#: Number of most recent throughput samples the estimator looks at.
THROUGHPUT_WINDOW = 5

INPUT_DIM = 7  # 2 device + 3 preference + 2 network features
HIDDEN_DIM = 16
INIT_SPAN = 0.5  # weights start uniform in [-INIT_SPAN, INIT_SPAN]

# Feature normalization constants.
HEIGHT_NORM = 2160.0
DECODE_NORM_KBPS = 100_000.0
THROUGHPUT_NORM_MBPS = 15.0
LATENCY_NORM_MS = 100.0

# Quality-target rule: share of predicted throughput to aim for, shaded
# by how much the user values quality versus data.
TARGET_BASE_SHADE = 0.90
TARGET_QUALITY_GAIN = 0.55
TARGET_DATA_CUT = 0.25
# Never target more than this share of predicted throughput.  A session
# that downloads at the predicted rate plays out in real time and its
# buffer never grows, so even the most quality-hungry profile keeps a
# fill margin.
TARGET_SHADE_CAP = 0.95
# Treat the newest sample as the anchor when it falls below this share
# of the smoothed estimate (0 disables).  Disabled by default: the
# buffer cushion absorbs capacity drops more cheaply than early
# re-anchoring, which taxes every routine dip.
TARGET_DROP_DETECT = 0.0


@dataclass(frozen=True)
class NetState:
    """Network conditions as seen by the controller at one decision."""

    predicted_throughput_mbps: float
    latency_ms: float
    recent_samples: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.latency_ms < 0:
            raise InvalidInputError("latency_ms must be nonnegative")
        if self.recent_samples and self.predicted_throughput_mbps <= 0:
            raise InvalidInputError(
                "predicted throughput must be positive when samples exist"
            )

    @staticmethod
    def from_samples(
        samples: Sequence[float], latency_ms: float, window: int = THROUGHPUT_WINDOW
    ) -> "NetState":
        recent = tuple(samples[-window:])
        predicted = predict_throughput(samples, window) if samples else 0.0
        return NetState(
            predicted_throughput_mbps=predicted,
            latency_ms=latency_ms,
            recent_samples=recent,
        )


def predict_throughput(
    samples: Sequence[float], window: int = THROUGHPUT_WINDOW
) -> float:
    """Harmonic mean of the last ``window`` throughput samples (Mbps).

    The harmonic mean weights slow samples heavily, which is the safe
    direction for download-time estimates.
    """
    if window < 1:
        raise InvalidInputError("window must be at least 1")
    if not samples:
        raise InsufficientDataError("no throughput samples yet")
    if any(s <= 0 for s in samples):
        raise InvalidInputError("throughput samples must be positive")
    recent = samples[-window:]
    return len(recent) / sum(1.0 / s for s in recent)


# ---------------------------------------------------------------------------
# Feature construction
# ---------------------------------------------------------------------------


def device_features(device: "DeviceCapabilities") -> tuple[float, float]:
    return (
        device.max_height / HEIGHT_NORM,
        device.max_decode_bitrate_kbps / DECODE_NORM_KBPS,
    )


def pref_features(pref: PreferenceVector) -> tuple[float, float, float]:
    return (pref.quality_affinity, pref.rebuffer_tolerance, pref.data_sensitivity)


def net_features(state: NetState) -> tuple[float, float]:
    return (
        state.predicted_throughput_mbps / THROUGHPUT_NORM_MBPS,
        state.latency_ms / LATENCY_NORM_MS,
    )


def quality_target(
    device: "DeviceCapabilities", pref: PreferenceVector, state: NetState
) -> float:
    """Deterministic quality-target rule (Mbps).

    Aims at a preference-shaded share of predicted throughput: quality
    lovers overshoot the throughput-safe operating point and lean on the
    controller's risk term, data savers undershoot it.  Clamped to the
    device decode cap.
    """
    if state.predicted_throughput_mbps <= 0:
        raise InvalidInputError("predicted throughput must be positive")
    shade = (
        TARGET_BASE_SHADE
        + TARGET_QUALITY_GAIN * pref.quality_affinity
        - TARGET_DATA_CUT * pref.data_sensitivity
    )
    shade = min(max(0.0, shade), TARGET_SHADE_CAP)
    # The smoothed estimate lags sharp capacity drops by several
    # segments; the newest sample sees them first.  Re-anchor on it only
    # when it signals a genuine drop, so routine jitter keeps the
    # smoothed anchor.
    anchor = state.predicted_throughput_mbps
    if state.recent_samples:
        newest = state.recent_samples[-1]
        if newest < TARGET_DROP_DETECT * anchor:
            anchor = newest
    target = anchor * shade
    return min(target, device.max_decode_bitrate_kbps / 1000.0)


# ---------------------------------------------------------------------------
# Quality network
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QualityNet:
    """Fixed-topology regressor: 7 inputs, 16 tanh units, linear output."""

    w1: np.ndarray  # (INPUT_DIM, HIDDEN_DIM)
    b1: np.ndarray  # (HIDDEN_DIM,)
    w2: np.ndarray  # (HIDDEN_DIM,)
    b2: float
    loss_history: tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        for name, shape in (("w1", (INPUT_DIM, HIDDEN_DIM)), ("b1", (HIDDEN_DIM,)), ("w2", (HIDDEN_DIM,))):
            arr = np.array(getattr(self, name), dtype=np.float64)
            if arr.shape != shape:
                raise InvalidInputError(f"{name} must have shape {shape}, got {arr.shape}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "b2", float(self.b2))

    @staticmethod
    def initialized(seed: int) -> "QualityNet":
        rng = random.Random(seed)

        def draw(n: int) -> list[float]:
            return [rng.uniform(-INIT_SPAN, INIT_SPAN) for _ in range(n)]

        w1 = np.array(draw(INPUT_DIM * HIDDEN_DIM), dtype=np.float64).reshape(
            INPUT_DIM, HIDDEN_DIM
        )
        b1 = np.array(draw(HIDDEN_DIM), dtype=np.float64)
        w2 = np.array(draw(HIDDEN_DIM), dtype=np.float64)
        b2 = rng.uniform(-INIT_SPAN, INIT_SPAN)
        return QualityNet(w1=w1, b1=b1, w2=w2, b2=b2)

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Raw (unclamped) outputs for a batch of feature rows."""
        x = np.asarray(x, dtype=np.float64)
        hidden = np.tanh(x @ self.w1 + self.b1)
        return hidden @ self.w2 + self.b2


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 500
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise InvalidInputError("learning_rate must be positive")
        if self.epochs < 0:
            raise InvalidInputError("epochs must be nonnegative")


def net_loss(net: QualityNet, x: np.ndarray, targets: np.ndarray) -> float:
    """Mean squared error of the raw network outputs."""
    pred = net.forward(x)
    diff = pred - np.asarray(targets, dtype=np.float64)
    return float(np.mean(diff * diff))


def net_gradients(
    net: QualityNet, x: np.ndarray, targets: np.ndarray
) -> dict[str, np.ndarray]:
    """Analytic MSE gradients for every parameter tensor."""
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    n = x.shape[0]
    z = x @ net.w1 + net.b1
    h = np.tanh(z)
    pred = h @ net.w2 + net.b2
    dy = 2.0 * (pred - t) / n  # (n,)
    dw2 = h.T @ dy
    db2 = np.sum(dy)
    dh = np.outer(dy, net.w2)
    dz = dh * (1.0 - h * h)
    dw1 = x.T @ dz
    db1 = dz.sum(axis=0)
    return {"w1": dw1, "b1": db1, "w2": dw2, "b2": np.array(db2)}


def train_quality_net(
    dataset: Sequence[tuple[Sequence[float], float]],
    config: TrainConfig = TrainConfig(),
) -> QualityNet:
    """Fit the quality network by full-batch gradient descent on MSE.

    Initialization and the update sequence are fully determined by
    ``config.seed``, so identical inputs reproduce identical parameters.
    """
    if not dataset:
        raise InvalidInputError("training dataset must not be empty")
    x = np.array([row[0] for row in dataset], dtype=np.float64)
    t = np.array([row[1] for row in dataset], dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != INPUT_DIM:
        raise InvalidInputError(f"features must have {INPUT_DIM} columns")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(t))):
        raise InvalidInputError("training data must be finite")

    net = QualityNet.initialized(config.seed)
    w1, b1, w2, b2 = (
        net.w1.copy(),
        net.b1.copy(),
        net.w2.copy(),
        net.b2,
    )
    lr = config.learning_rate
    losses: list[float] = []
    for _ in range(config.epochs):
        z = x @ w1 + b1
        h = np.tanh(z)
        pred = h @ w2 + b2
        diff = pred - t
        losses.append(float(np.mean(diff * diff)))
        dy = 2.0 * diff / len(t)
        dw2 = h.T @ dy
        db2 = np.sum(dy)
        dz = np.outer(dy, w2) * (1.0 - h * h)
        dw1 = x.T @ dz
        db1 = dz.sum(axis=0)
        w1 -= lr * dw1
        b1 -= lr * db1
        w2 -= lr * dw2
        b2 -= lr * db2
    return QualityNet(w1=w1, b1=b1, w2=w2, b2=float(b2), loss_history=tuple(losses))


def predict_quality(
    net: QualityNet,
    device_feats: Sequence[float],
    pref_feats: Sequence[float],
    network_feats: Sequence[float],
) -> float:
    """Predicted quality target in Mbps, clamped to be nonnegative."""
    if len(device_feats) != 2 or len(pref_feats) != 3 or len(network_feats) != 2:
        raise InvalidInputError("expected feature group sizes 2, 3, and 2")
    row = np.array(
        [*device_feats, *pref_feats, *network_feats], dtype=np.float64
    )
    if not np.all(np.isfinite(row)):
        raise InvalidInputError("features must be finite")
    return max(0.0, float(net.forward(row[None, :])[0]))


def make_training_set(
    devices: Sequence["DeviceCapabilities"],
    seed: int,
    n: int = 256,
) -> list[tuple[tuple[float, ...], float]]:
    """Sample a synthetic (features, target) set labeled by the target rule.

    The network trained on this set imitates :func:`quality_target` over
    the device classes it will see, which keeps the learned predictor
    auditable against the rule.
    """
    if not devices:
        raise InvalidInputError("at least one device profile is required")
    rng = random.Random(seed)
    rows: list[tuple[tuple[float, ...], float]] = []
    for _ in range(n):
        device = devices[rng.randrange(len(devices))]
        pref = PreferenceVector(
            quality_affinity=rng.random(),
            rebuffer_tolerance=rng.random(),
            data_sensitivity=rng.random(),
            switch_tolerance=0.5,
            startup_tolerance=0.5,
        )
        state = NetState(
            predicted_throughput_mbps=rng.uniform(0.3, 15.0),
            latency_ms=rng.uniform(20.0, 80.0),
            recent_samples=(1.0,),
        )
        features = (
            *device_features(device),
            *pref_features(pref),
            *net_features(state),
        )
        rows.append((features, quality_target(device, pref, state)))
    return rows
