//! Discrete-event simulation of nodes sharing BLE and UDP media.

pub mod metrics;
pub mod run;
pub mod scenario;

pub use metrics::{emit_metrics, Fig2Row, Fig8Row, LinkCount, Metrics};
pub use run::run_scenario;
pub use scenario::{builtin_names, load_scenario, resolve_scenario, Scenario};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("io: {0}")]
    Io(String),
}

macro_rules! invalid_from {
    ($($t:ty),*) => {$(
        impl From<$t> for SimError {
            fn from(e: $t) -> Self {
                SimError::Invalid(e.to_string())
            }
        }
    )*};
}

invalid_from!(
    crate::ble_sim::SimError,
    crate::node::NodeError,
    crate::router::RouterError,
    crate::agent::AgentError,
    crate::codec::CodecError
);
