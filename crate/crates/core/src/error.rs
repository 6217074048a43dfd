use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid rotation: |RᵀR - I| = {orthogonality:e}, det = {det}")]
    InvalidRotation { orthogonality: f64, det: f64 },
    #[error("binary pattern needs 6 entries, got {0}")]
    PatternLength(usize),
    #[error("binary pattern entry {0} is neither 0 nor 1")]
    NonBinaryPattern(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("simulation diverged at t = {time} s: non-finite acceleration")]
    Diverged { time: f64 },
    #[error("inertia must be symmetric positive definite")]
    InvalidInertia,
    #[error("environment coefficient `{0}` must be non-negative")]
    NegativeCoefficient(&'static str),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScriptError {
    #[error("segment {index}: t_end ({t_end}) must exceed t_start ({t_start})")]
    EmptySegment { index: usize, t_start: f64, t_end: f64 },
    #[error("segment {index} starts before the previous segment ends")]
    Overlap { index: usize },
    #[error("segment {index}: {reason}")]
    Invalid { index: usize, reason: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TankError {
    #[error("thresholds require δ_h > δ_s >= 0 (got δ_h = {hard}, δ_s = {soft})")]
    Thresholds { hard: f64, soft: f64 },
    #[error("interactive budget {inter} J exceeds total budget {total} J")]
    Budget { inter: f64, total: f64 },
    #[error("tank parameter `{0}` must be positive")]
    NonPositive(&'static str),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("control period must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("force sub-port decomposition residual {0:e} exceeds 1e-6")]
    Decomposition(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Tank(#[from] TankError),
    #[error("baseline parameter: {0}")]
    Baseline(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("no cycles selected by the mask")]
    EmptyMask,
    #[error("no positive human work in the trace; efficiency undefined")]
    NoHumanWork,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("invalid value: {0}")]
    Invalid(String),
    #[error(transparent)]
    Script(#[from] ScriptError),
    #[error(transparent)]
    Tank(#[from] TankError),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Control(#[from] ControlError),
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("trace header mismatch at column {index}: expected `{expected}`, found `{found}`")]
    Header {
        index: usize,
        expected: String,
        found: String,
    },
    #[error("row {row}: {reason}")]
    Row { row: usize, reason: String },
}

/// Failure of a scenario run. The records produced before the failure are
/// preserved in [`crate::scenarios::Trace`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulationError {
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Control(#[from] ControlError),
}
