//! Experiment drivers for the `scbf` command-line tool.
//!
//! Each `run_*` function takes a resolved [`ExperimentConfig`], performs the
//! whole experiment in memory and returns a [`RunReport`] holding the
//! artifacts as bytes. Nothing touches the disk until
//! [`RunReport::write_to`], so outputs can be compared byte for byte.

use std::path::{Path, PathBuf};

use serde::Serialize;

mod config;
mod runs;

pub use config::{
    CheckExample, CheckKind, CheckSettings, Experiment, ExperimentConfig, MuZoneSettings,
    PlantConfig, SimSettings,
};
pub use runs::{
    example1_certificate_grids, example2_certificate_grids, run, run_check, run_example1,
    run_example2, run_motivation, run_sweep, CertificateEntry, Comparison,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_BLOWUP: i32 = 2;
pub const EXIT_INCONSISTENT: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error(transparent)]
    Model(#[from] scbf::Error),
    #[error("i/o: {0}")]
    Io(String),
}

impl ExperimentError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Model(scbf::Error::NumericalBlowup { .. }) => EXIT_BLOWUP,
            _ => EXIT_VALIDATION,
        }
    }
}

/// One output file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub experiment: Experiment,
    /// Human-readable summary, one line each.
    pub lines: Vec<String>,
    pub artifacts: Vec<Artifact>,
    /// False when an empirical exit fraction exceeds its cap beyond the CI.
    pub consistent: bool,
}

impl RunReport {
    fn new(experiment: Experiment) -> Self {
        Self {
            experiment,
            lines: Vec::new(),
            artifacts: Vec::new(),
            consistent: true,
        }
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), ExperimentError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(scbf::Error::from)?;
        bytes.push(b'\n');
        self.push(name, bytes);
        Ok(())
    }

    fn push(&mut self, name: &str, bytes: Vec<u8>) {
        self.artifacts.push(Artifact {
            name: name.to_string(),
            bytes,
        });
    }

    fn line(&mut self, text: impl Into<String>) {
        self.lines.push(text.into());
    }

    pub fn artifact(&self, name: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.name == name)
    }

    pub fn exit_code(&self) -> i32 {
        if self.consistent {
            EXIT_OK
        } else {
            EXIT_INCONSISTENT
        }
    }

    /// Writes every artifact into `dir`, creating it if needed.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
        let io = |e: std::io::Error| ExperimentError::Io(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir).map_err(io)?;
        let mut written = Vec::with_capacity(self.artifacts.len());
        for a in &self.artifacts {
            let path = dir.join(&a.name);
            std::fs::write(&path, &a.bytes).map_err(io)?;
            written.push(path);
        }
        Ok(written)
    }
}
