//! Crate-level error type.

use crate::fixtures::FixtureError;
use crate::ingestion::IngestionError;
use crate::linkage::ConfigError;
use crate::metagraph::MetaGraphError;
use crate::planner::PlanError;
use crate::provider::ProviderError;
use crate::staging::StagingError;
use crate::synthesis::ScoreError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Ingestion(#[from] IngestionError),
    #[error(transparent)]
    MetaGraph(#[from] MetaGraphError),
    #[error(transparent)]
    Similarity(#[from] ConfigError),
    #[error(transparent)]
    Staging(#[from] StagingError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Fixture(#[from] FixtureError),
    #[error("configuration: {0}")]
    Config(String),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
}

impl Error {
    pub fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> Error {
        let context = context.into();
        move |source| Error::Io { context, source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
