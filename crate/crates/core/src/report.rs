//! Machine-readable run reports.

use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub tool_version: String,
    /// "pass" when every executed check passed, else "fail".
    pub verdict: String,
    /// Echo of the effective configuration, overrides applied.
    pub config: serde_json::Value,
    pub stages: Vec<StageReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageReport {
    pub name: String,
    /// "passed" | "failed" | "skipped".
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub details: serde_json::Value,
    pub duration_ms: u64,
}

impl StageReport {
    pub fn failed(&self) -> bool {
        self.status == "failed"
    }
}
