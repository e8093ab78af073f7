use std::path::PathBuf;

use uniband_core::Error as CoreError;

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{}: line {line}: {reason}", path.display())]
    Csv { path: PathBuf, line: u64, reason: String },

    #[error("{0}")]
    Usage(String),

    #[error("coverage run aborted: {failures} of {replications} replications failed (last: {last})")]
    TooManyFailures { failures: usize, replications: usize, last: CoreError },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("thread pool: {0}")]
    ThreadPool(#[from] rayon::ThreadPoolBuildError),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Core(e) | AppError::TooManyFailures { last: e, .. } => core_exit_code(e),
            AppError::Io { .. } | AppError::Csv { .. } | AppError::Usage(_) | AppError::Json(_) => EXIT_INPUT,
            AppError::ThreadPool(_) => EXIT_NUMERIC,
        }
    }
}

fn core_exit_code(e: &CoreError) -> i32 {
    match e {
        CoreError::InfeasibleMesh { .. } | CoreError::MeshConditionViolated { .. } => EXIT_INFEASIBLE,
        CoreError::DegenerateVariance { .. } | CoreError::QuadratureDiverged { .. } => EXIT_NUMERIC,
        _ => EXIT_INPUT,
    }
}
