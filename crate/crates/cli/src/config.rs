use std::path::{Path, PathBuf};

use amiguard_core::data::{LabelConfig, SyntheticConfig};
use amiguard_core::defense::DecisionRule;
use amiguard_core::protocol::SecurityConfig;
use amiguard_core::Rate;
use amiguard_nn::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum AttackerVariant {
    #[default]
    Twoclass,
    Threeclass,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SuiteKind {
    /// Fast, insecure pairing stand-in for simulation at scale.
    #[default]
    Toy,
    Bls12,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub l2_lambda: f64,
    pub max_samples_per_epoch: Option<usize>,
}

impl TrainSettings {
    fn from_config(c: TrainConfig) -> Self {
        Self {
            epochs: c.epochs,
            batch_size: c.batch_size,
            learning_rate: c.learning_rate,
            l2_lambda: c.l2_lambda,
            max_samples_per_epoch: c.max_samples_per_epoch,
        }
    }

    pub fn to_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            l2_lambda: self.l2_lambda,
            max_samples_per_epoch: self.max_samples_per_epoch,
            rng_seed: seed,
            ..TrainConfig::default()
        }
    }
}

/// Everything a run depends on. Stage seeds are derived from `seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub rate: Rate,
    pub threshold_percent: f64,
    pub seed: u64,
    pub defense: bool,
    pub attacker: AttackerVariant,
    pub decision_rule: DecisionRule,
    pub tau_p: f64,
    pub kmeans_max_iter: usize,
    /// `rng_seed` is overwritten by `seed`.
    pub synth: SyntheticConfig,
    pub attacker_training: TrainSettings,
    pub defense_training: TrainSettings,
    pub threeclass_training: TrainSettings,
    pub paillier_bits: usize,
    pub suite: SuiteKind,
    /// Holds every input and output file.
    pub workdir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let label = LabelConfig::default();
        Self {
            rate: Rate::Per5Min,
            threshold_percent: 10.0,
            seed: 42,
            defense: true,
            attacker: AttackerVariant::Twoclass,
            decision_rule: DecisionRule::Sample,
            tau_p: label.tau_p,
            kmeans_max_iter: label.max_iter,
            synth: SyntheticConfig::default(),
            attacker_training: TrainSettings::from_config(amiguard_core::attacker::default_train_config()),
            defense_training: TrainSettings::from_config(amiguard_core::defense::default_train_config()),
            threeclass_training: TrainSettings::from_config(amiguard_core::attacker::default_train_config()),
            paillier_bits: 1024,
            suite: SuiteKind::Toy,
            workdir: PathBuf::from("."),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Checks every field; nothing runs on an invalid config.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if !(self.threshold_percent > 0.0 && self.threshold_percent < 100.0) {
            return bad("threshold_percent must lie in (0, 100)");
        }
        if !(self.tau_p >= 0.0) || !self.tau_p.is_finite() {
            return bad("tau_p must be a non-negative number");
        }
        if self.kmeans_max_iter == 0 {
            return bad("kmeans_max_iter must be positive");
        }
        if self.paillier_bits < 256 || self.paillier_bits % 2 != 0 {
            return bad("paillier_bits must be even and at least 256");
        }
        self.synth_config().validate()?;
        for (name, t) in [
            ("attacker_training", &self.attacker_training),
            ("defense_training", &self.defense_training),
            ("threeclass_training", &self.threeclass_training),
        ] {
            t.to_config(0).validate().map_err(|e| CliError::Config(format!("{name}: {e}")))?;
        }
        Ok(())
    }

    pub fn synth_config(&self) -> SyntheticConfig {
        SyntheticConfig { rng_seed: self.seed, ..self.synth.clone() }
    }

    pub fn label_config(&self) -> LabelConfig {
        LabelConfig { tau_p: self.tau_p, seed: self.seed, max_iter: self.kmeans_max_iter }
    }

    pub fn attacker_train(&self) -> TrainConfig {
        self.attacker_training.to_config(self.seed)
    }

    pub fn defense_train(&self) -> TrainConfig {
        self.defense_training.to_config(self.seed.wrapping_add(1))
    }

    pub fn threeclass_train(&self) -> TrainConfig {
        self.threeclass_training.to_config(self.seed.wrapping_add(2))
    }

    /// Seed of the meters' spoofing draws.
    pub fn defense_seed(&self) -> u64 {
        self.seed.wrapping_add(3)
    }

    pub fn security(&self) -> SecurityConfig {
        SecurityConfig { paillier_bits: self.paillier_bits, seed: self.seed, slot_minutes: self.rate.minutes() }
    }

    /// The config as echoed into artifacts: resolved seeds, no paths.
    pub fn echo(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(ExperimentConfig { synth: self.synth_config(), ..self.clone() })
            .expect("config serialises");
        if let Some(o) = v.as_object_mut() {
            o.remove("workdir");
        }
        v
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.workdir.join(name)
    }
}
