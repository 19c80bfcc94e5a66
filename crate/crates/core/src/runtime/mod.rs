//! Session lifecycle, logging, scenarios, replay and benchmarking.

pub mod bench;
pub mod config;
pub mod log;
pub mod replay;
pub mod scenario;
pub mod session;

pub use bench::{bench, fit_linear, BenchError, BenchRow, LinearFit};
pub use config::{AgentPlacement, AgentSpec, BackendConfig, ConfigError, SessionConfig, WorldLayout};
pub use log::{read_log, EventLog, LogError};
pub use replay::{replay, replay_file, ReplayError};
pub use scenario::{run_scenario, RunOptions, Scenario, ScenarioError, ScenarioReport};
pub use session::{Session, SessionError, SessionHandle, Snapshot};
