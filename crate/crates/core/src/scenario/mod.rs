//! JSON scenarios: declared operators, vectors and checks, run in order into a report.

mod generate;
mod runner;
mod schema;

pub use generate::scenario_from_instance;
pub use runner::{run_scenario, verdict_csv, CheckReport, RunOptions, RunOutcome, RunReport, Summary, Workspace};
pub use schema::{
    check_seed, parse_scenario, validate, CheckKind, CheckSpec, EstimateSpec, GraphSpec, OperatorSpec, Scenario,
    SpaceSpec, VectorSpec, SCHEMA_VERSION,
};

use crate::error::{Error, Result};

/// Reads and parses a scenario file.
pub fn load_scenario(path: &std::path::Path) -> Result<Scenario> {
    let origin = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: origin.clone(), message: e.to_string() })?;
    parse_scenario(&text, &origin)
}
