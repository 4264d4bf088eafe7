use serde::{Deserialize, Serialize};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticRecord {
    pub name: String,
    pub estimate: f64,
    pub standard_error: Option<f64>,
    pub reference: Option<f64>,
    pub reference_error: Option<f64>,
    pub z_score: Option<f64>,
    pub p_value: Option<f64>,
    /// The rule the verdict was derived from, e.g. `|z| <= 4`.
    pub threshold: String,
    pub pass: bool,
}

impl StatisticRecord {
    pub fn value(name: impl Into<String>, estimate: f64, threshold: impl Into<String>, pass: bool) -> Self {
        Self {
            name: name.into(),
            estimate,
            standard_error: None,
            reference: None,
            reference_error: None,
            z_score: None,
            p_value: None,
            threshold: threshold.into(),
            pass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub experiment: String,
    pub parameters: serde_json::Value,
    pub seed: u64,
    pub paths: usize,
    pub wall_time_seconds: f64,
    pub statistics: Vec<StatisticRecord>,
    pub notes: Vec<String>,
    pub verdict: bool,
}

impl ExperimentReport {
    pub fn new(experiment: impl Into<String>, parameters: serde_json::Value, seed: u64, paths: usize) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            experiment: experiment.into(),
            parameters,
            seed,
            paths,
            wall_time_seconds: 0.0,
            statistics: Vec::new(),
            notes: Vec::new(),
            verdict: true,
        }
    }

    pub fn statistic(&self, name: &str) -> Option<&StatisticRecord> {
        self.statistics.iter().find(|s| s.name == name)
    }

    /// Equality of everything except wall time, bit-for-bit on floats.
    pub fn same_outcome(&self, other: &Self) -> bool {
        let mut a = self.clone();
        let mut b = other.clone();
        a.wall_time_seconds = 0.0;
        b.wall_time_seconds = 0.0;
        serde_json::to_string(&a).ok() == serde_json::to_string(&b).ok()
    }

    pub fn summary_line(&self) -> String {
        let passed = self.statistics.iter().filter(|s| s.pass).count();
        format!(
            "{}: {} ({}/{} statistics pass, seed {}, {} paths, {:.2}s)",
            self.experiment,
            if self.verdict { "PASS" } else { "FAIL" },
            passed,
            self.statistics.len(),
            self.seed,
            self.paths,
            self.wall_time_seconds
        )
    }
}
