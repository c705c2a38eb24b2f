//! Run reports: what a subcommand did, checked, and wrote.

use std::time::Instant;

use serde::Serialize;

use crate::scenario::Scenario;

/// Report of one subcommand run: the scenario it executed, how long each
/// stage took, the solver's residual history, every invariant it checked,
/// and the files it wrote.
///
/// Timings are wall-clock and therefore not covered by the byte-stability
/// guarantee; all other fields are deterministic for a fixed scenario + seed.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RunReport {
    pub scenario: Scenario,
    pub stages: Vec<StageTiming>,
    pub residual_history: Vec<f64>,
    pub invariants: Vec<InvariantCheck>,
    pub outputs: Vec<OutputRecord>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StageTiming {
    pub stage: String,
    pub runtime_ms: u64,
}

/// One checked invariant: its measured defect against the budget it must
/// stay under. `Skipped` marks checks the scenario's field kind cannot
/// support (they do not fail the run).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct InvariantCheck {
    pub name: String,
    pub status: CheckStatus,
    pub defect: f64,
    pub budget: f64,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct OutputRecord {
    pub name: String,
    pub file: String,
    pub bytes: u64,
}

impl RunReport {
    pub fn new(scenario: Scenario) -> Self {
        RunReport {
            scenario,
            stages: Vec::new(),
            residual_history: Vec::new(),
            invariants: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Runs a stage, recording its wall-clock time under `name`.
    pub fn stage<T>(
        &mut self,
        name: &str,
        f: impl FnOnce() -> anyhow::Result<T>,
    ) -> anyhow::Result<T> {
        let start = Instant::now();
        let value = f().map_err(|e| e.context(format!("stage `{name}`")))?;
        self.stages.push(StageTiming {
            stage: name.to_string(),
            runtime_ms: start.elapsed().as_millis() as u64,
        });
        Ok(value)
    }

    /// Records a defect-vs-budget invariant check.
    pub fn check(&mut self, name: &str, defect: f64, budget: f64) {
        let status = if defect.is_finite() && defect <= budget {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        };
        self.invariants.push(InvariantCheck {
            name: name.to_string(),
            status,
            defect,
            budget,
        });
    }

    /// Records a check the field kind cannot support.
    pub fn skip(&mut self, name: &str) {
        self.invariants.push(InvariantCheck {
            name: name.to_string(),
            status: CheckStatus::Skipped,
            defect: 0.0,
            budget: 0.0,
        });
    }

    pub fn all_passed(&self) -> bool {
        self.invariants
            .iter()
            .all(|c| c.status != CheckStatus::Fail)
    }
}
