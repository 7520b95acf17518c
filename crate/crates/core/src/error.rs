use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("pose query at t={t} outside buffer span [{start}, {end}]")]
    Extrapolation { t: f64, start: f64, end: f64 },

    #[error("pose buffer is empty")]
    EmptyPoseBuffer,

    #[error("pose timestamps must be strictly increasing (index {index})")]
    UnorderedPoses { index: usize },

    #[error("frame chain mismatch: cannot compose {left_from}->{left_to} after {right_from}->{right_to}")]
    FrameChain {
        left_from: String,
        left_to: String,
        right_from: String,
        right_to: String,
    },

    #[error("point is behind the camera (z = {z})")]
    BehindCamera { z: f64 },

    #[error("degenerate box height {h}")]
    DegenerateBox { h: f64 },

    #[error("background has no traffic light type")]
    NoType,

    #[error("confusion column {column} has zero total")]
    DegenerateColumn { column: usize },

    #[error("no evidence: confidence is zero on every valid state")]
    NoEvidence,

    #[error("impossible observation: belief normalizer is zero")]
    ImpossibleObservation,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("duplicate light id `{0}`")]
    DuplicateLightId(String),

    #[error("unknown light id `{0}`")]
    UnknownLight(String),

    #[error("unknown camera id `{0}`")]
    UnknownCamera(String),

    #[error("no pose coverage for t={t}")]
    PoseCoverage { t: f64 },

    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    #[error("scenario validation failed: {0}")]
    Scenario(String),

    #[error("ground truth is empty")]
    EmptyGroundTruth,

    #[error("parse error in {source_name} at line {line}, column {column}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            reason: reason.into(),
        }
    }

    pub fn parse(source_name: impl Into<String>, err: &serde_json::Error) -> Self {
        Error::Parse {
            source_name: source_name.into(),
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }

    /// Short machine-readable tag, used by the CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Extrapolation { .. } => "extrapolation",
            Error::EmptyPoseBuffer => "empty_pose_buffer",
            Error::UnorderedPoses { .. } => "unordered_poses",
            Error::FrameChain { .. } => "frame_chain",
            Error::BehindCamera { .. } => "behind_camera",
            Error::DegenerateBox { .. } => "degenerate_box",
            Error::NoType => "no_type",
            Error::DegenerateColumn { .. } => "degenerate_column",
            Error::NoEvidence => "no_evidence",
            Error::ImpossibleObservation => "impossible_observation",
            Error::Dimension(_) => "dimension",
            Error::DuplicateLightId(_) => "duplicate_light_id",
            Error::UnknownLight(_) => "unknown_light",
            Error::UnknownCamera(_) => "unknown_camera",
            Error::PoseCoverage { .. } => "pose_coverage",
            Error::Invalid { .. } => "invalid",
            Error::Scenario(_) => "scenario",
            Error::EmptyGroundTruth => "empty_ground_truth",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
