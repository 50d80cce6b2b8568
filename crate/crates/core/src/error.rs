use thiserror::Error;

use crate::structure::PairClass;
use crate::topology::NodeId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParams { name: &'static str, reason: String },

    #[error("wiring infeasible: {0}")]
    WiringInfeasible(String),

    #[error("horizontal wiring needs at least two switches per layer, found {per_layer}")]
    NoPeer { per_layer: usize },

    #[error("vertical wiring needs an overhead layer, but the topology has a single switch layer")]
    NoOverheadLayer,

    #[error("invalid link {index}: {reason}")]
    InvalidLink { index: usize, reason: String },

    #[error("topology is disconnected over the requested node class ({components} components)")]
    Disconnected {
        /// Component id of every node taking part in the query, in node order.
        component_of: Vec<(NodeId, usize)>,
        components: usize,
    },

    #[error("node {0} is not available")]
    NodeUnavailable(NodeId),

    #[error("source and destination are the same node {0}")]
    SameEndpoint(NodeId),

    #[error("no node pairs of class {0} in the requested node set")]
    EmptyClass(PairClass),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("config key `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParams {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }
}
