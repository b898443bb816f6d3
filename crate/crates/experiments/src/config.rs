//! Experiment configuration: one JSON document per run, merged over the
//! defaults of the selected experiment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::ExperimentError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Motivation,
    Example1,
    Example2,
    Sweep,
    Check,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Motivation => "motivation",
            Experiment::Example1 => "example1",
            Experiment::Example2 => "example2",
            Experiment::Sweep => "sweep",
            Experiment::Check => "check",
        }
    }
}

/// Plant and compensator parameters. Fields unused by an experiment are
/// ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub c: f64,
    pub u_max: f64,
    /// Cutoff `N` of the Example 1 barrier.
    pub n_cut: f64,
    /// Constant pre-input.
    pub u_o: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSettings {
    pub x0: f64,
    pub dt: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub master_seed: u64,
    /// Paths written to `trajectories.csv` (and averaged in `mean.csv`).
    pub paths_written: usize,
    /// Every `record_stride`-th step is written.
    pub record_stride: usize,
}

/// The μ-zone ensemble of Example 1, started on the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MuZoneSettings {
    pub enabled: bool,
    pub dt: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub record_stride: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckExample {
    Example1,
    Example2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    AsRcbf,
    AsZcbf,
    StochasticZcbf,
}

/// Selection for the generic `check` command.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSettings {
    pub example: CheckExample,
    pub kind: CheckKind,
    /// Overrides the derived rate of the stochastic check.
    pub b: Option<f64>,
    /// Overrides the AS rate.
    pub gamma: Option<f64>,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub plant: PlantConfig,
    pub sim: SimSettings,
    pub mu_zone: MuZoneSettings,
    /// Diffusion scales of the robustness sweep.
    pub a_values: Vec<f64>,
    pub check: CheckSettings,
    pub out: PathBuf,
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        let example1 = PlantConfig {
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            c: 0.1,
            u_max: 1.0,
            n_cut: 1e10,
            u_o: -1.0,
        };
        let (plant, sim) = match experiment {
            Experiment::Motivation => (
                example1,
                SimSettings {
                    x0: 1.0 + 1e-6,
                    dt: 1e-4,
                    horizon: 1.0,
                    n_paths: 1000,
                    master_seed: 1,
                    paths_written: 10,
                    record_stride: 100,
                },
            ),
            Experiment::Example1 | Experiment::Check => (
                example1,
                SimSettings {
                    x0: 4.0,
                    dt: 1e-3,
                    horizon: 10.0,
                    n_paths: 10,
                    master_seed: 1,
                    paths_written: 10,
                    record_stride: 10,
                },
            ),
            Experiment::Sweep => (
                example1,
                SimSettings {
                    x0: 4.0,
                    dt: 1e-3,
                    horizon: 10.0,
                    n_paths: 1000,
                    master_seed: 1,
                    paths_written: 0,
                    record_stride: 10,
                },
            ),
            Experiment::Example2 => (
                PlantConfig {
                    alpha: 0.0,
                    beta: 1.0,
                    gamma: 1.0,
                    c: 0.01,
                    u_max: 1.0,
                    n_cut: 1e10,
                    u_o: 1.0,
                },
                SimSettings {
                    x0: 0.99,
                    dt: 1e-4,
                    horizon: 10.0,
                    n_paths: 10,
                    master_seed: 1,
                    paths_written: 10,
                    record_stride: 100,
                },
            ),
        };
        Self {
            experiment,
            plant,
            sim,
            mu_zone: MuZoneSettings {
                enabled: experiment == Experiment::Example1,
                dt: 1e-3,
                horizon: 2.0,
                n_paths: 1000,
                record_stride: 10,
            },
            a_values: vec![1.0, 0.5, 0.0],
            check: CheckSettings {
                example: CheckExample::Example1,
                kind: CheckKind::AsRcbf,
                b: None,
                gamma: None,
                points: 10_000,
            },
            out: PathBuf::from("out").join(experiment.name()),
        }
    }

    /// Defaults of the `check` command for one example's plant.
    pub fn check_defaults(example: CheckExample) -> Self {
        let mut cfg = Self::defaults(Experiment::Check);
        cfg.check.example = example;
        if example == CheckExample::Example2 {
            cfg.plant = Self::defaults(Experiment::Example2).plant;
        }
        cfg
    }

    /// Defaults for `experiment` overlaid with the JSON document `doc`.
    ///
    /// Objects merge key by key; anything else replaces the default. An
    /// `experiment` key, if present, must name the same experiment.
    pub fn from_json(experiment: Experiment, doc: &str) -> Result<Self, ExperimentError> {
        let overlay: Value = serde_json::from_str(doc)
            .map_err(|e| ExperimentError::Validation(format!("config: {e}")))?;
        if !overlay.is_object() {
            return Err(ExperimentError::Validation(
                "config: top level must be an object".into(),
            ));
        }
        if let Some(named) = overlay.get("experiment") {
            if named.as_str() != Some(experiment.name()) {
                return Err(ExperimentError::Validation(format!(
                    "config: experiment is {named}, but the command is {}",
                    experiment.name()
                )));
            }
        }
        let mut base = serde_json::to_value(Self::defaults(experiment))
            .map_err(|e| ExperimentError::Validation(format!("config: {e}")))?;
        merge(&mut base, overlay);
        serde_json::from_value(base).map_err(|e| ExperimentError::Validation(format!("config: {e}")))
    }

    pub fn load(experiment: Experiment, path: &Path) -> Result<Self, ExperimentError> {
        let doc = std::fs::read_to_string(path).map_err(|e| {
            ExperimentError::Validation(format!("config {}: {e}", path.display()))
        })?;
        Self::from_json(experiment, &doc)
    }

    /// Field-level checks not delegated to the library constructors.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let s = &self.sim;
        let bad = |field: &str, why: &str| {
            Err(ExperimentError::Validation(format!("{field}: {why}")))
        };
        if !s.x0.is_finite() {
            return bad("sim.x0", "must be finite");
        }
        if !(s.dt > 0.0 && s.dt.is_finite()) {
            return bad("sim.dt", "must be positive");
        }
        if !(s.horizon >= s.dt && s.horizon.is_finite()) {
            return bad("sim.horizon", "must be finite and at least dt");
        }
        if s.n_paths == 0 {
            return bad("sim.n_paths", "must be at least 1");
        }
        if s.record_stride == 0 {
            return bad("sim.record_stride", "must be at least 1");
        }
        if !self.plant.u_o.is_finite() {
            return bad("plant.u_o", "must be finite");
        }
        if self.experiment == Experiment::Example1 && self.mu_zone.enabled {
            let m = &self.mu_zone;
            if !(m.dt > 0.0 && m.horizon >= m.dt && m.horizon.is_finite()) {
                return bad("mu_zone", "dt must be positive and horizon at least dt");
            }
            if m.n_paths < 2 || m.record_stride == 0 {
                return bad("mu_zone", "needs n_paths ≥ 2 and record_stride ≥ 1");
            }
        }
        if self.experiment == Experiment::Sweep {
            if self.a_values.is_empty() {
                return bad("a_values", "must not be empty");
            }
            if let Some(a) = self.a_values.iter().find(|a| !(0.0..=1.0).contains(*a)) {
                return bad("a_values", &format!("{a} is outside [0, 1]"));
            }
        }
        if self.experiment == Experiment::Check && self.check.points < 2 {
            return bad("check.points", "must be at least 2");
        }
        Ok(())
    }
}

fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        for e in [
            Experiment::Motivation,
            Experiment::Example1,
            Experiment::Example2,
            Experiment::Sweep,
            Experiment::Check,
        ] {
            assert_eq!(ExperimentConfig::from_json(e, "{}").unwrap(), ExperimentConfig::defaults(e));
        }
    }

    #[test]
    fn nested_keys_override_one_field() {
        let c = ExperimentConfig::from_json(
            Experiment::Example2,
            r#"{"sim": {"n_paths": 7}, "plant": {"c": 0.02}}"#,
        )
        .unwrap();
        assert_eq!(c.sim.n_paths, 7);
        assert_eq!(c.sim.dt, 1e-4);
        assert_eq!(c.plant.c, 0.02);
        assert_eq!(c.plant.beta, 1.0);
    }

    #[test]
    fn unknown_and_mismatched_fields_are_rejected() {
        let e = ExperimentConfig::from_json(Experiment::Example1, r#"{"sim": {"n_path": 3}}"#);
        assert!(matches!(e, Err(ExperimentError::Validation(m)) if m.contains("n_path")));
        let e = ExperimentConfig::from_json(Experiment::Example1, r#"{"experiment": "sweep"}"#);
        assert!(matches!(e, Err(ExperimentError::Validation(_))));
        let e = ExperimentConfig::from_json(Experiment::Example1, "[1]");
        assert!(matches!(e, Err(ExperimentError::Validation(_))));
    }

    #[test]
    fn validation_names_the_field() {
        let mut c = ExperimentConfig::defaults(Experiment::Sweep);
        c.a_values = vec![1.0, 2.0];
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("a_values"));
        let mut c = ExperimentConfig::defaults(Experiment::Example1);
        c.sim.dt = 0.0;
        assert!(c.validate().unwrap_err().to_string().contains("sim.dt"));
    }
}
