//! End-to-end protocol rounds and experiment sweeps.
//!
//! [`run_round`] executes one round over a [`Transport`]. [`run_experiment`]
//! resolves an [`ExperimentConfig`], sweeps its budget list and returns a
//! [`RunReport`] that [`emit_report`] writes as CSV or JSON.

pub mod config;
pub mod coordinator;
pub mod experiment;
pub mod report;
pub mod round;
pub mod transport;
pub mod wire;

pub use config::{ExperimentConfig, GridSpec, OracleSpec, PartitionSpec};
pub use coordinator::{Coordinator, CoordinatorOutcome};
pub use experiment::{resolve, run_experiment, run_resolved, EpsilonSummary, ResolvedExperiment, RunRecord, RunReport};
pub use report::{emit_report, ReportFormat};
pub use round::{run_round, FailurePlan, RoundInput, RoundOutcome};
pub use transport::{MemoryTransport, SocketTransport, Transport, TransportKind};
pub use wire::{MessageType, RoundMessage};
