//! Front end for the cohort runtime: HTTP/SSE server and command helpers.

pub mod server;

use std::path::Path;

use cohort_core::runtime::{Scenario, ScenarioError};

/// Loads a scenario from a path, or from the bundled set when no such file
/// exists and the name matches.
pub fn load_scenario(arg: &str) -> Result<Scenario, ScenarioError> {
    let path = Path::new(arg);
    if !path.exists() {
        if let Some(s) = Scenario::bundled(arg) {
            return Ok(s);
        }
    }
    Scenario::load(path)
}
