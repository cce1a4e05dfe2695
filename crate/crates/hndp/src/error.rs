use std::path::{Path, PathBuf};

/// Errors surfaced by the operational layer.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] hndp_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("corrupt file {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("{path}: format version {found}, this build reads version {expected}")]
    Version { path: PathBuf, found: u32, expected: u32 },
    #[error("{path}: holds a {found} checkpoint where a {expected} one was expected")]
    RoleMismatch { path: PathBuf, found: String, expected: String },
    #[error("unknown plot kind {0:?}")]
    UnknownPlotKind(String),
    #[error("nothing to plot: {0}")]
    EmptyData(String),
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("encoding failed: {0}")]
    Encode(String),
    #[error("{0}")]
    Unsupported(String),
}

impl Error {
    /// Short stable name of the variant, for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Core(_) => "core",
            Error::Io { .. } => "io",
            Error::Config { .. } => "config",
            Error::Corrupt { .. } => "corrupt",
            Error::Version { .. } => "version",
            Error::RoleMismatch { .. } => "role_mismatch",
            Error::UnknownPlotKind(_) => "unknown_plot_kind",
            Error::EmptyData(_) => "empty_data",
            Error::Csv { .. } => "csv",
            Error::Encode(_) => "encode",
            Error::Unsupported(_) => "unsupported",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn io_at(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

pub(crate) fn csv_at(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |source| Error::Csv { path: path.to_path_buf(), source }
}
