use thiserror::Error;

pub type Result<T, E = PdhpError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum PdhpError {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("out-of-order event: {what} at t={time} precedes t={frontier}")]
    Ordering {
        what: String,
        time: f64,
        frontier: f64,
    },

    #[error("every alpha sample has zero likelihood for this cluster")]
    DegenerateCluster,

    #[error("explosive process: branching ratio {0} >= 1 (set allow_explosive to override)")]
    Explosive(f64),

    #[error("overlap target {target} not reached within tolerance {tolerance}; best achieved {best} at shift {shift}")]
    Convergence {
        target: f64,
        tolerance: f64,
        best: f64,
        shift: f64,
    },

    #[error("infeasible configuration: {0}")]
    Infeasible(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed json ({context}): {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl PdhpError {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        PdhpError::Input(msg.into())
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        PdhpError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        PdhpError::Json {
            context: context.into(),
            source,
        }
    }
}
