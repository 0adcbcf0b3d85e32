//! Experiment configuration: TOML files with defaults, validation, and
//! stable round-tripping.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classical::Direction3;
use crate::error::{Error, Result};
use crate::werner::Conjugation;

/// The named batch experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Classical,
    ClassicalPostselected,
    QuantumWerner,
    HvValidate,
    ParadoxDemo,
    PopescuSearch,
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            ExperimentKind::Classical => "classical",
            ExperimentKind::ClassicalPostselected => "classical-postselected",
            ExperimentKind::QuantumWerner => "quantum-werner",
            ExperimentKind::HvValidate => "hv-validate",
            ExperimentKind::ParadoxDemo => "paradox-demo",
            ExperimentKind::PopescuSearch => "popescu-search",
        };
        write!(f, "{name}")
    }
}

/// Raw file shape: everything except the experiment name is optional and
/// filled in by [`ExperimentConfig::resolve`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: ExperimentKind,
    seed: Option<u64>,
    trials: Option<u64>,
    flip_bob: Option<bool>,
    conjugation: Option<Conjugation>,
    dimension: Option<usize>,
    phi: Option<f64>,
    phi_grid: Option<Vec<f64>>,
    settings_a: Option<Vec<[f64; 3]>>,
    settings_b: Option<Vec<[f64; 3]>>,
    n_pairs: Option<usize>,
    n_configs: Option<usize>,
    budget: Option<u64>,
    hv_trials: Option<u64>,
    out_dir: Option<PathBuf>,
}

/// A fully resolved experiment configuration. Every field is concrete, so
/// load -> serialize -> load is the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    /// Trials per setting pair (classical), samples (validation, averaging).
    pub trials: u64,
    pub flip_bob: bool,
    pub conjugation: Conjugation,
    /// Single-particle Hilbert dimension for quantum experiments.
    pub dimension: usize,
    /// Flip parameter of the Werner family.
    pub phi: f64,
    /// Flip parameters swept by the settings search.
    pub phi_grid: Vec<f64>,
    /// Alice's settings; the CHSH convention reads [a, a'].
    pub settings_a: Vec<[f64; 3]>,
    /// Bob's settings; the CHSH convention reads [b, b'].
    pub settings_b: Vec<[f64; 3]>,
    /// Random setting pairs drawn by hv-validate.
    pub n_pairs: usize,
    /// Configurations scanned by the classical experiments.
    pub n_configs: usize,
    /// Objective evaluations for the settings search (total over the grid).
    pub budget: u64,
    /// Hidden-variable trials per arm at each visited search configuration.
    pub hv_trials: u64,
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    /// Defaults for the given experiment: seed 1, 10^6 trials, flipped Bob
    /// convention, the 45-degree figure settings, and the per-experiment
    /// dimension (5 for the sequential search, 2 otherwise).
    pub fn default_for(kind: ExperimentKind) -> Self {
        let figure = crate::chsh::ChshConfig::figure_45();
        ExperimentConfig {
            experiment: kind,
            seed: 1,
            trials: 1_000_000,
            flip_bob: true,
            conjugation: Conjugation::None,
            dimension: match kind {
                ExperimentKind::PopescuSearch => 5,
                _ => 2,
            },
            phi: -0.25,
            phi_grid: vec![-1.0, -0.76],
            settings_a: vec![figure.a.components(), figure.a_prime.components()],
            settings_b: vec![figure.b.components(), figure.b_prime.components()],
            n_pairs: 10,
            n_configs: 200,
            budget: 10_000,
            hv_trials: 10_000,
            out_dir: PathBuf::from("out"),
        }
    }

    /// Parse and resolve a config from TOML text.
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| Error::config("<config>", e.to_string()))?;
        Self::resolve(raw)
    }

    fn resolve(raw: RawConfig) -> Result<Self> {
        let mut config = ExperimentConfig::default_for(raw.experiment);
        if let Some(seed) = raw.seed {
            config.seed = seed;
        }
        if let Some(trials) = raw.trials {
            config.trials = trials;
        }
        if let Some(flip_bob) = raw.flip_bob {
            config.flip_bob = flip_bob;
        }
        if let Some(conjugation) = raw.conjugation {
            config.conjugation = conjugation;
        }
        if let Some(dimension) = raw.dimension {
            config.dimension = dimension;
        }
        if let Some(phi) = raw.phi {
            config.phi = phi;
        }
        if let Some(phi_grid) = raw.phi_grid {
            config.phi_grid = phi_grid;
        }
        if let Some(settings_a) = raw.settings_a {
            config.settings_a = settings_a;
        }
        if let Some(settings_b) = raw.settings_b {
            config.settings_b = settings_b;
        }
        if let Some(n_pairs) = raw.n_pairs {
            config.n_pairs = n_pairs;
        }
        if let Some(n_configs) = raw.n_configs {
            config.n_configs = n_configs;
        }
        if let Some(budget) = raw.budget {
            config.budget = budget;
        }
        if let Some(hv_trials) = raw.hv_trials {
            config.hv_trials = hv_trials;
        }
        if let Some(out_dir) = raw.out_dir {
            config.out_dir = out_dir;
        }
        config.validate()?;
        Ok(config)
    }

    /// Check counts, ranges, and that every settings vector normalizes.
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::config("trials", "must be positive"));
        }
        if self.n_configs == 0 {
            return Err(Error::config("n_configs", "must be positive"));
        }
        if self.n_pairs == 0 {
            return Err(Error::config("n_pairs", "must be positive"));
        }
        if self.dimension < 2 {
            return Err(Error::config("dimension", "must be at least 2"));
        }
        if !(-1.0..=1.0).contains(&self.phi) {
            return Err(Error::config("phi", "must lie in [-1, 1]"));
        }
        if self.phi_grid.is_empty() {
            return Err(Error::config("phi_grid", "must be non-empty"));
        }
        for (i, phi) in self.phi_grid.iter().enumerate() {
            if !(-1.0..=1.0).contains(phi) {
                return Err(Error::config(
                    format!("phi_grid[{i}]"),
                    "must lie in [-1, 1]",
                ));
            }
        }
        for (name, list) in [
            ("settings_a", &self.settings_a),
            ("settings_b", &self.settings_b),
        ] {
            if list.is_empty() {
                return Err(Error::config(name, "must be non-empty"));
            }
            for (i, v) in list.iter().enumerate() {
                Direction3::new(v[0], v[1], v[2])
                    .map_err(|e| Error::config(format!("{name}[{i}]"), e.to_string()))?;
            }
        }
        Ok(())
    }

    /// Alice's settings as validated directions.
    pub fn directions_a(&self) -> Vec<Direction3> {
        self.settings_a
            .iter()
            .map(|v| Direction3::new(v[0], v[1], v[2]).expect("validated"))
            .collect()
    }

    pub fn directions_b(&self) -> Vec<Direction3> {
        self.settings_b
            .iter()
            .map(|v| Direction3::new(v[0], v[1], v[2]).expect("validated"))
            .collect()
    }

    pub fn convention(&self) -> crate::classical::ReadoutConvention {
        crate::classical::ReadoutConvention {
            flip_bob: self.flip_bob,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// Load and resolve a configuration file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    ExperimentConfig::from_toml(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_gets_defaults_and_figure_settings() {
        let config = ExperimentConfig::from_toml("experiment = \"classical\"").unwrap();
        assert_eq!(config.experiment, ExperimentKind::Classical);
        assert_eq!(config.trials, 1_000_000);
        assert!(config.flip_bob);
        assert_eq!(config.settings_a.len(), 2);
        assert_eq!(config.settings_b.len(), 2);
        // Figure settings: a at 45 degrees.
        let a = config.directions_a()[0];
        assert!((a.x() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn zero_vector_is_rejected_with_the_field_path() {
        let text = r#"
experiment = "classical"
settings_a = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]
"#;
        let err = ExperimentConfig::from_toml(text).unwrap_err();
        match err {
            Error::Config { field, .. } => assert_eq!(field, "settings_a[0]"),
            other => panic!("expected config error, got {other}"),
        }
    }

    #[test]
    fn unknown_experiment_is_a_config_error() {
        assert!(matches!(
            ExperimentConfig::from_toml("experiment = \"frobnicate\""),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn round_trip_is_identity() {
        let config =
            ExperimentConfig::from_toml("experiment = \"popescu-search\"\nseed = 9\nbudget = 2000")
                .unwrap();
        let text = config.to_toml();
        let reloaded = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(config, reloaded);
        assert_eq!(text, reloaded.to_toml());
    }

    #[test]
    fn dimension_default_depends_on_experiment() {
        let search = ExperimentConfig::default_for(ExperimentKind::PopescuSearch);
        assert_eq!(search.dimension, 5);
        let classical = ExperimentConfig::default_for(ExperimentKind::Classical);
        assert_eq!(classical.dimension, 2);
    }

    #[test]
    fn counts_must_be_positive() {
        let err = ExperimentConfig::from_toml("experiment = \"classical\"\ntrials = 0");
        assert!(matches!(err, Err(Error::Config { .. })));
    }
}
