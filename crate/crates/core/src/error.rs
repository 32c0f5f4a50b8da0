use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed RIFF/WAVE header in {}: {reason}", path.display())]
    MalformedWav { path: PathBuf, reason: String },

    #[error("unsupported WAV encoding in {}: {reason}", path.display())]
    UnsupportedCodec { path: PathBuf, reason: String },

    #[error("audio buffer is empty")]
    EmptyAudio,

    #[error("audio has {samples} samples, fewer than one analysis window ({window})")]
    AudioTooShort { samples: usize, window: usize },

    #[error("bad feature file magic {found:?}, expected \"QBF1\"")]
    BadMagic { found: [u8; 4] },

    #[error("truncated feature file: header declares {expected} values, payload holds {found}")]
    Truncated { expected: usize, found: usize },

    #[error("non-finite feature value at frame {frame}, dim {dim}")]
    NonFinite { frame: usize, dim: usize },

    #[error("invalid feature matrix: {0}")]
    InvalidFeatures(String),

    #[error("feature dimension mismatch: query has {query}, reference has {reference}")]
    DimensionMismatch { query: usize, reference: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("query ({query} frames) is longer than reference ({reference} frames)")]
    QueryLongerThanReference { query: usize, reference: usize },

    #[error("image {rows}x{cols} is smaller than the {kernel}x{kernel} kernel")]
    ImageTooSmall {
        rows: usize,
        cols: usize,
        kernel: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("duplicate reference id {0:?}")]
    DuplicateId(String),

    #[error("manifest schema violation: {0}")]
    Manifest(String),

    #[error("manifest references missing file {}", .0.display())]
    DanglingReference(PathBuf),

    #[error("trial references unknown term id {0:?}")]
    UnknownTerm(String),

    #[error("no term has a positive trial; TWV is undefined")]
    NoPositiveTrials,

    #[error("non-finite score {0}")]
    NonFiniteScore(f64),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for violations of the feature/geometry contract between two
    /// inputs that are individually well-formed.
    pub fn is_data_contract(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch { .. } | Error::QueryLongerThanReference { .. }
        )
    }
}
