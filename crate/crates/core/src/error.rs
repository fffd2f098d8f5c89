//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid too coarse: {nx}x{ny} (need at least 8 cells per axis)")]
    GridTooCoarse { nx: usize, ny: usize },

    #[error("field shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("metric not SPD at cell ({i}, {j})")]
    NonSpdMetric { i: usize, j: usize },

    #[error("metric field carries no Teichmueller parameters")]
    MissingTeichParams,

    #[error("TeichParams invalid: {0}")]
    InvalidTeichParams(String),

    #[error("ball not embedded: radius {radius} vs half systole {half_systole}")]
    BallNotEmbedded { radius: f64, half_systole: f64 },

    #[error("point off manifold at cell ({i}, {j}): distance {dist:.3e} exceeds band {band:.3e}")]
    OffManifold { i: usize, j: usize, dist: f64, band: f64 },

    #[error("right side not orthogonal to Killing fields (relative moment {moment:.3e})")]
    RhsNotCompatible { moment: f64 },

    #[error("solver iteration budget exceeded: {iterations} iterations, relative residual {rel_residual:.3e}")]
    SolverBudget { iterations: usize, rel_residual: f64 },

    #[error("dt too large: Picard iterate gap grew from {previous:.3e} to {current:.3e}")]
    DtTooLarge { previous: f64, current: f64 },

    #[error("dt too large: metric substep left the parameter domain")]
    MetricDomain,

    #[error("config parse error at line {line}: {message}")]
    ConfigParse { line: usize, message: String },

    #[error("config error for key '{key}': {message}")]
    ConfigValue { key: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("checkpoint format error: {0}")]
    CheckpointFormat(String),

    #[error("engine error: {0}")]
    Engine(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 config, 3 engine/runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ConfigParse { .. } | Error::ConfigValue { .. } => 2,
            _ => 3,
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io { path: path.display().to_string(), source }
    }
}
