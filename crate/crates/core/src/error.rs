use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("mesh {0} contains no triangles")]
    EmptyMesh(PathBuf),

    #[error("triangle on line {line} references vertex {index}, but only {count} vertices exist")]
    IndexOutOfRange {
        line: usize,
        index: usize,
        count: usize,
    },

    #[error("invalid value for `{field}`: {message}")]
    InvalidField { field: String, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_path_to_error::Error<serde_json::Error>,
    },

    #[error("missing files:\n{}", list_paths(.0))]
    MissingFiles(Vec<PathBuf>),

    #[error("{}{constraint} not satisfied after {attempts} attempts", frame_prefix(.frame))]
    ScenarioExhausted {
        frame: Option<u64>,
        constraint: &'static str,
        attempts: u32,
    },

    #[error("structural error: {0}")]
    Structure(String),

    #[error("refusing to resume: {0}")]
    ResumeRefused(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Image {
        context: String,
        #[source]
        source: image::ImageError,
    },
}

fn list_paths(paths: &[PathBuf]) -> String {
    paths
        .iter()
        .map(|p| format!("  {}", p.display()))
        .collect::<Vec<_>>()
        .join("\n")
}

impl Error {
    /// Short stable category name, used as the CLI error tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } | Error::EmptyMesh(_) | Error::IndexOutOfRange { .. } => "mesh",
            Error::InvalidField { .. } => "invalid-field",
            Error::Config(_) => "config",
            Error::Json { .. } => "json",
            Error::MissingFiles(_) => "missing-files",
            Error::ScenarioExhausted { .. } => "scenario",
            Error::Structure(_) => "structure",
            Error::ResumeRefused(_) => "resume",
            Error::Io { .. } => "io",
            Error::Image { .. } => "image",
        }
    }

    pub(crate) fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidField {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn image(context: impl Into<String>, source: image::ImageError) -> Self {
        Error::Image {
            context: context.into(),
            source,
        }
    }
}

fn frame_prefix(frame: &Option<u64>) -> String {
    frame.map(|f| format!("frame {f}: ")).unwrap_or_default()
}
