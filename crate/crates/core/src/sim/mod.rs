//! Market simulation around the solver: scenarios, the message-passing
//! negotiation, participation, grid comparison and parameter sweeps.

mod grid;
mod participation;
mod protocol;
mod scenario;
mod sweep;

pub use grid::{grid_comparison, grid_fixture, GridComparison, GRID_FIXTURE_SURPLUS};
pub use participation::{apply_participation, solve_scenario, MarketOutcome, ParticipationMode};
pub use protocol::{
    run_protocol, Agent, MessageKind, MessageLog, Payload, PrivacyViolation, ProtocolMessage, ProtocolRun,
};
pub use scenario::{generate_scenario, GenerationParams, Scenario, ScenarioFile, UserSpec};
pub use sweep::{sweep, sweep_scenario, SweepAxis, SweepRow};
