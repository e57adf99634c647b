//! Federated-learning simulation over the trace corpus.

mod client;
mod sim;
mod task;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::EnergyError;
use crate::engine::EngineError;

pub use client::{
    assign_exploration, derive_foreground_sessions, latency_inflation, BusyInterval, ClientSim, ForegroundSessions,
    DEFAULT_TEMPERATURE_CELSIUS, FOREGROUND_CLASSES,
};
pub use sim::{
    run_simulation, time_to_accuracy, ClientRecord, Comparison, EnergyConfig, FlConfig, RoundReport, SimConfig,
    SimRun, SocFleet,
};
pub use task::{fedavg_aggregate, LogisticModel, ModelParams, Sample, SyntheticTask, TaskConfig};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("nothing to aggregate")]
    EmptyAggregation,
    #[error("update dimension {found} does not match {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("no profile for choice {choice} on soc {soc}")]
    MissingProfile { soc: String, choice: String },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SchedulingPolicy {
    GreedyBaseline,
    Swan,
}

impl SchedulingPolicy {
    pub const ALL: [SchedulingPolicy; 2] = [SchedulingPolicy::GreedyBaseline, SchedulingPolicy::Swan];

    pub fn as_str(self) -> &'static str {
        match self {
            SchedulingPolicy::GreedyBaseline => "GreedyBaseline",
            SchedulingPolicy::Swan => "Swan",
        }
    }
}

impl std::fmt::Display for SchedulingPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}
