use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Sim(#[from] grass_sim::Error),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("image: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable code for error JSON.
    pub fn code(&self) -> &'static str {
        use grass_sim::Error as S;
        match self {
            Error::NotFound(_) => "not_found",
            Error::Conflict(_) => "conflict",
            Error::Invalid(_) | Error::Json(_) => "invalid_params",
            Error::Sim(S::LengthOutOfRange { .. }) => "length_out_of_range",
            Error::Sim(S::Cancelled) => "cancelled",
            Error::Sim(S::Io { .. } | S::Image(_)) | Error::Io { .. } | Error::Image(_) => "io_error",
            Error::Sim(S::MalformedHdr { .. }) => "malformed_hdr",
            Error::Sim(_) => "invalid_params",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
