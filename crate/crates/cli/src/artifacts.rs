//! CSV and JSON artifact writers. Every CSV starts with a `#` header block
//! carrying the subcommand, seed and the resolved config.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use stickykin::ExperimentReport;

pub struct Artifacts {
    dir: PathBuf,
    header: String,
}

/// Empty string for `None`, shortest round-trip form otherwise.
pub fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl Artifacts {
    pub fn new(dir: &Path, subcommand: &str, seed: u64, config: &serde_json::Value) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        let header = format!(
            "# stickykin {} {subcommand}\n# seed: {seed}\n# config: {}\n",
            env!("CARGO_PKG_VERSION"),
            serde_json::to_string(config)?
        );
        Ok(Self { dir: dir.to_path_buf(), header })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Writes a tidy CSV; `extra` lines join the header block.
    pub fn csv<I>(&self, name: &str, extra: &[String], columns: &[&str], rows: I) -> Result<PathBuf>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let mut text = self.header.clone();
        for line in extra {
            writeln!(text, "# {line}")?;
        }
        let mut writer = csv::Writer::from_writer(text.into_bytes());
        writer.write_record(columns)?;
        for row in rows {
            writer.write_record(&row)?;
        }
        let bytes = writer.into_inner().map_err(|e| anyhow::anyhow!("flushing {name}: {e}"))?;
        let path = self.path(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let path = self.path(name);
        fs::write(&path, serde_json::to_string_pretty(value)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

/// `report.json` always, `summary.csv` when `csv` is among the formats.
pub fn emit_report(report: &ExperimentReport, artifacts: &Artifacts, formats: &[String]) -> Result<Vec<PathBuf>> {
    let mut written = vec![artifacts.json("report.json", report)?];
    if formats.iter().any(|f| f == "csv") {
        let rows = report.statistics.iter().map(|s| {
            vec![
                s.name.clone(),
                s.estimate.to_string(),
                opt(s.standard_error),
                opt(s.reference),
                opt(s.reference_error),
                opt(s.z_score),
                opt(s.p_value),
                s.threshold.clone(),
                s.pass.to_string(),
            ]
        });
        written.push(artifacts.csv(
            "summary.csv",
            &[format!("experiment: {}", report.experiment), format!("verdict: {}", report.verdict)],
            &[
                "name",
                "estimate",
                "standard_error",
                "reference",
                "reference_error",
                "z_score",
                "p_value",
                "threshold",
                "pass",
            ],
            rows,
        )?);
    }
    Ok(written)
}
