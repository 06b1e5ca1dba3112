//! Scenario reports and the event trace.

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub step: u32,
    /// Virtual seconds.
    pub t: u64,
    pub actor: String,
    pub event: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TapSummary {
    pub events: usize,
    pub bytes: usize,
    /// Plaintext passwords of accepted logins checked against the tap.
    pub secrets_checked: usize,
    /// Channels that carried one of them. Must be empty.
    pub leaks: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<Check>,
    /// Scenario-specific measurements.
    pub metrics: Value,
    pub tap: TapSummary,
    pub trace: Vec<TraceEvent>,
}

impl ScenarioReport {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    /// Human-readable summary, one line per check.
    pub fn render(&self) -> String {
        let mut out = format!(
            "{} seed={} {}\n",
            self.scenario,
            self.seed,
            if self.passed { "PASS" } else { "FAIL" }
        );
        for c in &self.checks {
            let mark = if c.passed { "ok  " } else { "FAIL" };
            out.push_str(&format!("  {mark} {}: {}\n", c.name, c.detail));
        }
        out.push_str(&format!(
            "  tap: {} events, {} bytes, {} secrets checked, leaks: {}\n",
            self.tap.events,
            self.tap.bytes,
            self.tap.secrets_checked,
            if self.tap.leaks.is_empty() {
                "none".to_string()
            } else {
                self.tap.leaks.join(", ")
            }
        ));
        out.push_str(&format!("  trace: {} events\n", self.trace.len()));
        out
    }
}
