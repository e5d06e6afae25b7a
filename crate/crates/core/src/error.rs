use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("numerical blowup at particle {index}: {detail}")]
    Blowup { index: usize, detail: String },

    #[error(
        "integration did not converge after {steps} steps \
         (last dt {last_dt:e}, {rejections} rejected steps)"
    )]
    NonConvergence {
        steps: usize,
        last_dt: f64,
        rejections: usize,
    },

    #[error("unsupported kernel: {0}")]
    UnsupportedKernel(String),

    #[error("eigen solver failed: {0}")]
    Eigen(String),

    #[error("numerical instability: {0}")]
    Instability(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics, as opposed to bad configuration or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Blowup { .. }
                | Error::NonConvergence { .. }
                | Error::Eigen(_)
                | Error::Instability(_)
                | Error::Degenerate(_)
        )
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Prefixes the error message with run context, keeping the variant.
    pub fn context(self, ctx: &str) -> Self {
        match self {
            Error::InvalidInput(m) => Error::InvalidInput(format!("{ctx}: {m}")),
            Error::Degenerate(m) => Error::Degenerate(format!("{ctx}: {m}")),
            Error::Blowup { index, detail } => Error::Blowup {
                index,
                detail: format!("{ctx}: {detail}"),
            },
            Error::UnsupportedKernel(m) => Error::UnsupportedKernel(format!("{ctx}: {m}")),
            Error::Eigen(m) => Error::Eigen(format!("{ctx}: {m}")),
            Error::Instability(m) => Error::Instability(format!("{ctx}: {m}")),
            Error::Config(m) => Error::Config(format!("{ctx}: {m}")),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
