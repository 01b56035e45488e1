"""twinstream: digital-twin driven adaptive video streaming simulator."""

from .abr import (
    BaselineParams,
    ControllerKind,
    DecisionContext,
    ScoreWeights,
    select_baseline,
    select_quality,
)
from .errors import (
    ConfigError,
    InfeasibleConstraintsError,
    InsufficientDataError,
    InvalidInputError,
    NoFeasibleRenditionError,
    TraceFormatError,
    TwinstreamError,
)
from .metrics import (
    CohortReport,
    QoeParams,
    SessionMetrics,
    aggregate,
    build_report,
    compute_session_metrics,
    emit_report,
)
from .prediction import (
    NetState,
    QualityNet,
    TrainConfig,
    predict_quality,
    predict_throughput,
    quality_target,
    train_quality_net,
)
from .simnet import (
    CohortMember,
    NetworkTrace,
    SegmentRecord,
    SessionConfig,
    SessionOutcome,
    TracePoint,
    download_time,
    run_arm,
    run_cohort,
    run_session,
)
from .transcode import (
    BitrateLadder,
    DeviceCapabilities,
    Rendition,
    TranscodeConstraints,
    feasible_renditions,
    optimize_ladder,
    transcode_params_for_segment,
)
from .twin import (
    Observation,
    PreferenceTree,
    PreferenceVector,
    TreeParams,
    TwinProfile,
    classify_preference,
    derive_observation,
    ingest_feedback,
    train_preference_tree,
    update_profile,
)
from .workload import CohortSpec, TraceSpec, gen_cohort, gen_trace, load_trace

__version__ = "0.1.0"

__all__ = [
    "BaselineParams",
    "BitrateLadder",
    "CohortMember",
    "CohortReport",
    "CohortSpec",
    "ConfigError",
    "ControllerKind",
    "DecisionContext",
    "DeviceCapabilities",
    "InfeasibleConstraintsError",
    "InsufficientDataError",
    "InvalidInputError",
    "NetState",
    "NetworkTrace",
    "NoFeasibleRenditionError",
    "Observation",
    "PreferenceTree",
    "PreferenceVector",
    "QoeParams",
    "QualityNet",
    "Rendition",
    "ScoreWeights",
    "SegmentRecord",
    "SessionConfig",
    "SessionMetrics",
    "SessionOutcome",
    "TraceFormatError",
    "TracePoint",
    "TraceSpec",
    "TrainConfig",
    "TranscodeConstraints",
    "TreeParams",
    "TwinProfile",
    "TwinstreamError",
    "aggregate",
    "build_report",
    "classify_preference",
    "compute_session_metrics",
    "derive_observation",
    "download_time",
    "emit_report",
    "feasible_renditions",
    "gen_cohort",
    "gen_trace",
    "ingest_feedback",
    "load_trace",
    "optimize_ladder",
    "predict_quality",
    "predict_throughput",
    "quality_target",
    "run_arm",
    "run_cohort",
    "run_session",
    "select_baseline",
    "select_quality",
    "train_preference_tree",
    "train_quality_net",
    "transcode_params_for_segment",
    "update_profile",
]
