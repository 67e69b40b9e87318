use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::exit::{CliError, ExitCode};

/// Machine-readable account of one command run, written as JSON beside its outputs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    /// Wall time per stage, in milliseconds.
    pub timings_ms: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
    /// Command-specific results.
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub details: serde_json::Value,
}

impl RunReport {
    pub fn new(command: &str, inputs: &[&Path]) -> Self {
        Self {
            command: command.to_owned(),
            inputs: inputs.iter().map(|p| p.to_path_buf()).collect(),
            ..Self::default()
        }
    }

    /// Runs `f`, recording its duration under `stage`.
    pub fn timed<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        *self.timings_ms.entry(stage.to_owned()).or_default() += start.elapsed().as_secs_f64() * 1e3;
        out
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        self.warnings.push(message.into());
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::internal(e.to_string()))?;
        std::fs::write(path, text + "\n")
            .map_err(|e| CliError::new(ExitCode::Input, format!("cannot write report {}: {e}", path.display())))
    }
}

/// `<output>.report.json`
pub fn default_report_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".report.json");
    PathBuf::from(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_path_appends_suffix() {
        assert_eq!(default_report_path(Path::new("out/a.png")), PathBuf::from("out/a.png.report.json"));
    }

    #[test]
    fn timings_accumulate() {
        let mut r = RunReport::new("render", &[]);
        assert_eq!(r.timed("solve", || 7), 7);
        r.timed("solve", || ());
        assert_eq!(r.timings_ms.len(), 1);
        assert!(r.timings_ms["solve"] >= 0.0);
    }

    #[test]
    fn json_round_trip() {
        let mut r = RunReport::new("match", &[Path::new("a.hdr")]);
        r.warn("something");
        r.details = serde_json::json!({ "inliers": 12 });
        let back: RunReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
