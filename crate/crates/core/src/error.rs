use std::path::PathBuf;

use crate::colorimetry::{Space, WhitePoint};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unsupported conversion {from:?}/{from_white:?} -> {to:?}/{to_white:?}")]
    UnsupportedConversion {
        from: Space,
        from_white: WhitePoint,
        to: Space,
        to_white: WhitePoint,
    },
    #[error("expected a {expected:?} color, got {got:?}")]
    WrongSpace { expected: Space, got: Space },
    #[error("white point mismatch: {0:?} vs {1:?}")]
    WhiteMismatch(WhitePoint, WhitePoint),
    #[error("non-finite color value {0:?}")]
    NonFinite([f64; 3]),

    #[error("patch set must hold exactly 24 patches, got {0}")]
    PatchCount(usize),
    #[error("invalid patch {index}: {reason}")]
    InvalidPatch { index: usize, reason: String },
    #[error("singular fit: virtual patch matrix is rank deficient")]
    SingularFit,

    #[error("degenerate quad: {0}")]
    DegenerateQuad(&'static str),
    #[error("quad covers no pixel centers")]
    EmptyRegion,

    #[error("length out of range: {length} mm not in [{min}, {max}] mm")]
    LengthOutOfRange { length: f64, min: f64, max: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("point lies behind the camera")]
    BehindCamera,

    #[error("malformed HDR image {path}: {reason}")]
    MalformedHdr { path: PathBuf, reason: String },
    #[error("environment map carries no energy")]
    ZeroEnergy,
    #[error("total illuminance {total} lux is below ambient {ambient} lux")]
    SunBelowAmbient { total: f64, ambient: f64 },
    #[error("zero illuminance at the grass pixel")]
    ZeroIlluminance,

    #[error("curve needs at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("curve is empty")]
    EmptyCurve,
    #[error("invalid curve: {0}")]
    InvalidCurve(String),
    #[error("curves have disjoint length ranges")]
    DisjointRanges,
    #[error("curve has zero OGCD range")]
    ZeroRange,
    #[error("cancelled")]
    Cancelled,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
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
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
