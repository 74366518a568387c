//! Run manifest: the first file a run writes and the last one it touches.
//!
//! The manifest exists before any result file so that a crashed or aborted
//! run still leaves a record of what was attempted, with
//! `wall_clock_seconds = pending`. On success it is rewritten with the
//! elapsed time. Everything else in it — the resolved config echo, the two
//! sign conventions, the planned output list — is byte-identical across
//! reruns of the same configuration, so diffing two manifests modulo the
//! wall-clock line is a determinism check.

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::config::{CliError, ResolvedConfig};

pub const HERMITE_CONVENTION: &str = "generator: H_n(t) = exp(t^2/2) d^n/dt^n exp(-t^2/2) (so H_1(t) = -t); reconstruction pairs coefficients with the probabilists' variant He_n = (-1)^n H_n";
pub const NOISE_SIGN: &str = "plus: propagator theta_dot = A theta + sum sqrt(alpha_rk) m_r(t) M_k theta_{alpha-e_rk}; pathwise Ito form d theta = A theta dt + sum_k M_k theta dw_k";

pub struct Manifest {
    dir: PathBuf,
    kind: String,
    echo: Vec<(String, String)>,
    outputs: Vec<String>,
    started: Instant,
}

impl Manifest {
    /// Creates the output directory and writes the manifest with the full
    /// planned output list and a pending wall clock.
    pub fn start(cfg: &ResolvedConfig, kind: &str, outputs: &[&str]) -> Result<Self, CliError> {
        std::fs::create_dir_all(&cfg.out_dir).map_err(|e| {
            CliError::Failure(format!(
                "cannot create output directory {}: {e}",
                cfg.out_dir.display()
            ))
        })?;
        let m = Manifest {
            dir: cfg.out_dir.clone(),
            kind: kind.to_string(),
            echo: cfg.echo.clone(),
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
            started: Instant::now(),
        };
        m.write("pending")?;
        Ok(m)
    }

    fn write(&self, wall_clock: &str) -> Result<(), CliError> {
        let mut text = String::new();
        text.push_str(&format!("kind = {}\n", self.kind));
        text.push_str(&format!("code_version = {}\n", env!("CARGO_PKG_VERSION")));
        text.push_str(&format!("hermite_convention = {HERMITE_CONVENTION}\n"));
        text.push_str(&format!("noise_sign = {NOISE_SIGN}\n"));
        text.push_str(&format!("wall_clock_seconds = {wall_clock}\n"));
        for (k, v) in &self.echo {
            text.push_str(&format!("{k} = {v}\n"));
        }
        for (i, name) in self.outputs.iter().enumerate() {
            text.push_str(&format!("output.{i} = {name}\n"));
        }
        let path = self.dir.join("manifest.txt");
        std::fs::write(&path, text).map_err(|e| {
            CliError::Failure(format!("cannot write manifest {}: {e}", path.display()))
        })
    }

    /// Rewrites the manifest with the measured wall clock. `emitted` must
    /// match the planned output list exactly — a mismatch means a result file
    /// exists that the manifest would not account for.
    pub fn finalize(self, emitted: &[String]) -> Result<(), CliError> {
        if emitted != self.outputs.as_slice() {
            return Err(CliError::Failure(format!(
                "manifest output list {:?} does not match emitted files {:?}",
                self.outputs, emitted
            )));
        }
        let secs = self.started.elapsed().as_secs_f64();
        self.write(&format!("{secs:.3}"))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{resolve, FileConfig};

    #[test]
    fn manifest_is_written_before_results_and_finalized_after() {
        let dir = tempfile::tempdir().unwrap();
        let file: FileConfig = toml::from_str("").unwrap();
        let cfg = resolve(file, None, Some(dir.path())).unwrap();
        let m = Manifest::start(&cfg, "energy", &["energy.csv"]).unwrap();
        let text = std::fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
        assert!(text.contains("wall_clock_seconds = pending"));
        assert!(text.contains("output.0 = energy.csv"));
        assert!(text.contains("kind = energy"));
        assert!(text.contains("hermite_convention = generator"));
        assert!(text.contains("propagator.dt = 0.001953125"));
        m.finalize(&["energy.csv".to_string()]).unwrap();
        let text = std::fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
        assert!(!text.contains("pending"));
        assert!(text.contains("wall_clock_seconds = "));
    }

    #[test]
    fn unplanned_output_is_a_failure() {
        let dir = tempfile::tempdir().unwrap();
        let file: FileConfig = toml::from_str("").unwrap();
        let cfg = resolve(file, None, Some(dir.path())).unwrap();
        let m = Manifest::start(&cfg, "energy", &["energy.csv"]).unwrap();
        let err = m.finalize(&["energy.csv".to_string(), "extra.csv".to_string()]).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }
}
