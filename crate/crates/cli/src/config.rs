use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use polylab_core::EnsembleConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Events,
    Inradius,
    Incompressibility,
    Grassmann,
    ProjectionTails,
    Cotype,
    Spans,
    EmbedProbe,
    Cleaning,
}

impl Experiment {
    pub const ALL: [Experiment; 9] = [
        Experiment::Events,
        Experiment::Inradius,
        Experiment::Incompressibility,
        Experiment::Grassmann,
        Experiment::ProjectionTails,
        Experiment::Cotype,
        Experiment::Spans,
        Experiment::EmbedProbe,
        Experiment::Cleaning,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Events => "events",
            Experiment::Inradius => "inradius",
            Experiment::Incompressibility => "incompressibility",
            Experiment::Grassmann => "grassmann",
            Experiment::ProjectionTails => "projection-tails",
            Experiment::Cotype => "cotype",
            Experiment::Spans => "spans",
            Experiment::EmbedProbe => "embed-probe",
            Experiment::Cleaning => "cleaning",
        }
    }

    /// Named constants and their defaults.
    pub fn default_constants(self) -> BTreeMap<String, f64> {
        let pairs: &[(&str, f64)] = match self {
            Experiment::Events => &[("c", 0.01), ("subset_budget", 100_000.0), ("norm_factor", 4.0)],
            Experiment::Inradius => &[("budget", 2000.0)],
            Experiment::Incompressibility => &[
                ("delta", 0.02),
                ("rho", 0.05),
                ("probes", 10_000.0),
                ("adversarial", 64.0),
            ],
            Experiment::Grassmann => &[("d", 1.0), ("epsilon", 0.25), ("terms", 8.0), ("net_budget", 2000.0)],
            Experiment::ProjectionTails => &[("d", 1.0), ("s", 10.0), ("C", 10.0)],
            Experiment::Cotype => &[("k", 4.0), ("q", 2.0), ("mc_trials", 10_000.0)],
            Experiment::Spans => &[("k", 4.0), ("C_floor", 0.5), ("retry_cap", 100.0)],
            Experiment::EmbedProbe => &[("k", 4.0), ("candidates", 4.0), ("sign_budget", 256.0)],
            Experiment::Cleaning => &[("alpha", 0.5), ("epsilon", 0.25), ("L", 16.0), ("hist_len", 10.0)],
        };
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    /// Named string options and their defaults.
    pub fn default_options(self) -> BTreeMap<String, String> {
        let pairs: &[(&str, &str)] = match self {
            Experiment::Grassmann => &[("mode", "strict")],
            Experiment::Cotype => &[("oracle", "polytope"), ("mode", "exact"), ("family", "basis")],
            _ => &[],
        };
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| CliError::UnknownExperiment(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub constants: BTreeMap<String, f64>,
    #[serde(default)]
    pub options: BTreeMap<String, String>,
    pub trials: usize,
    #[serde(default)]
    pub output: Option<String>,
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment, ensemble: EnsembleConfig, trials: usize) -> Self {
        Self {
            experiment,
            ensemble,
            constants: BTreeMap::new(),
            options: BTreeMap::new(),
            trials,
            output: None,
        }
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Fills in defaults and rejects names the experiment does not use.
    pub fn resolve(mut self) -> CliResult<Self> {
        let defaults = self.experiment.default_constants();
        for key in self.constants.keys() {
            if !defaults.contains_key(key) {
                return Err(CliError::Config(format!(
                    "`{}` has no constant `{key}`",
                    self.experiment
                )));
            }
        }
        for (key, value) in &self.constants {
            if !value.is_finite() {
                return Err(CliError::Config(format!("constant `{key}` must be finite")));
            }
        }
        for (k, v) in defaults {
            self.constants.entry(k).or_insert(v);
        }
        let options = self.experiment.default_options();
        for key in self.options.keys() {
            if !options.contains_key(key) {
                return Err(CliError::Config(format!("`{}` has no option `{key}`", self.experiment)));
            }
        }
        for (k, v) in options {
            self.options.entry(k).or_insert(v);
        }
        self.ensemble.validate()?;
        Ok(self)
    }

    pub fn constant(&self, key: &str) -> f64 {
        self.constants[key]
    }

    /// A constant that must be a non-negative integer.
    pub fn count(&self, key: &str) -> CliResult<usize> {
        let v = self.constant(key);
        if v < 0.0 || v.fract() != 0.0 {
            return Err(CliError::Config(format!(
                "constant `{key}` must be a non-negative integer, got {v}"
            )));
        }
        Ok(v as usize)
    }

    pub fn option(&self, key: &str) -> &str {
        &self.options[key]
    }
}
