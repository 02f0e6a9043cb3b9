//! Versioned JSON reports.

use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::lambda_site::CaseOutcome;

pub const SCHEMA: &str = "report_v1";

#[derive(Clone, Debug, Serialize)]
pub struct ReportCase {
    pub name: String,
    pub inputs_digest: String,
    pub pass: bool,
    pub details: serde_json::Value,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Summary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
}

/// The only run-dependent part of a report.
#[derive(Clone, Debug, Serialize)]
pub struct Timing {
    pub started_at: u64,
    pub wall_ms: u128,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub schema: &'static str,
    pub suite: String,
    pub scenario: String,
    pub scenario_digest: String,
    pub cases: Vec<ReportCase>,
    pub summary: Summary,
    pub timing: Timing,
}

impl Report {
    pub fn all_passed(&self) -> bool {
        self.summary.failed == 0
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// JSON with the timing field removed.
    pub fn deterministic_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report serializes");
        v.as_object_mut().expect("object").remove("timing");
        serde_json::to_string_pretty(&v).expect("value serializes")
    }
}

/// Accumulates cases and stamps the report on [`finish`](Self::finish).
pub struct ReportBuilder {
    suite: String,
    scenario: String,
    scenario_digest: String,
    cases: Vec<ReportCase>,
    started_at: u64,
    clock: Instant,
}

impl ReportBuilder {
    pub fn new(suite: &str, scenario: &str, scenario_digest: &str) -> Self {
        let started_at = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        ReportBuilder {
            suite: suite.into(),
            scenario: scenario.into(),
            scenario_digest: scenario_digest.into(),
            cases: Vec::new(),
            started_at,
            clock: Instant::now(),
        }
    }

    pub fn push(&mut self, case: CaseOutcome) {
        let mut h = Sha256::new();
        for part in [&self.scenario_digest, &self.suite, &case.name] {
            h.update(part.as_bytes());
            h.update([0]);
        }
        self.cases.push(ReportCase {
            inputs_digest: hex::encode(h.finalize()),
            name: case.name,
            pass: case.pass,
            details: case.details,
        });
    }

    pub fn extend(&mut self, cases: impl IntoIterator<Item = CaseOutcome>) {
        for c in cases {
            self.push(c);
        }
    }

    pub fn finish(self) -> Report {
        let passed = self.cases.iter().filter(|c| c.pass).count();
        let total = self.cases.len();
        Report {
            schema: SCHEMA,
            suite: self.suite,
            scenario: self.scenario,
            scenario_digest: self.scenario_digest,
            summary: Summary { total, passed, failed: total - passed },
            cases: self.cases,
            timing: Timing { started_at: self.started_at, wall_ms: self.clock.elapsed().as_millis() },
        }
    }
}
