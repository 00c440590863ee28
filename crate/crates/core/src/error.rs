use thiserror::Error;

use crate::config::ConfigError;
use crate::explore::ExploreError;
use crate::mdp::MdpError;
use crate::network::GraphError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Explore(#[from] ExploreError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("non-finite value {value} in column {column} of {file}")]
    NonFinite { file: &'static str, column: &'static str, value: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
