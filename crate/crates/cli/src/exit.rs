//! Error categories and their process exit codes.

use std::fmt;
use std::path::Path;

use recompose::collect::CollectError;
use recompose::coverage::CoverageError;
use recompose::demo::DemoError;
use recompose::pipeline::{ConfigError, PipelineError, QueryFailure};
use recompose::ProviderError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Other,
    Usage,
    Config,
    Io,
    Provider,
    Validation,
    PartialBatch,
}

impl Category {
    pub fn code(self) -> u8 {
        match self {
            Self::Other => 1,
            Self::Usage => 2,
            Self::Config => 3,
            Self::Io => 4,
            Self::Provider => 5,
            Self::Validation => 6,
            Self::PartialBatch => 7,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub category: Category,
    pub message: String,
}

impl CliError {
    pub fn new(category: Category, message: impl Into<String>) -> Self {
        Self { category, message: message.into() }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::new(Category::Io, format!("{}: {e}", path.display()))
    }

    fn tagged(category: Category, e: impl fmt::Display) -> Self {
        Self::new(category, e.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::tagged(Category::Config, e)
    }
}

impl From<ProviderError> for CliError {
    fn from(e: ProviderError) -> Self {
        let category = match e {
            ProviderError::Config(_) | ProviderError::AuthMissing(_) => Category::Config,
            ProviderError::MissingFile(_) => Category::Io,
            _ => Category::Provider,
        };
        Self::tagged(category, e)
    }
}

impl From<DemoError> for CliError {
    fn from(e: DemoError) -> Self {
        let category = match e {
            DemoError::Io { .. } => Category::Io,
            _ => Category::Validation,
        };
        Self::tagged(category, e)
    }
}

impl From<CoverageError> for CliError {
    fn from(e: CoverageError) -> Self {
        let category = match e {
            CoverageError::Io { .. } => Category::Io,
            _ => Category::Validation,
        };
        Self::tagged(category, e)
    }
}

impl From<CollectError> for CliError {
    fn from(e: CollectError) -> Self {
        match e {
            CollectError::AnnotatorUnavailable { .. } => Self::tagged(Category::Provider, e),
            CollectError::Demo(d) => d.into(),
            _ => Self::tagged(Category::Validation, e),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Provider(p) => p.into(),
            PipelineError::Demo(d) => d.into(),
            PipelineError::Coverage(c) => c.into(),
            PipelineError::Config(c) => c.into(),
            PipelineError::Prompt(_) => Self::tagged(Category::Provider, e),
            PipelineError::UnknownDemo(_) | PipelineError::DegenerateEmbedding => {
                Self::tagged(Category::Validation, e)
            }
            _ => Self::tagged(Category::Other, e),
        }
    }
}

impl From<QueryFailure> for CliError {
    fn from(f: QueryFailure) -> Self {
        let message = f.to_string();
        Self { message, ..f.error.into() }
    }
}
