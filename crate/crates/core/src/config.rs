//! Flat TOML run configuration with named presets.
//!
//! A file may name a `preset`; every other key overrides that preset's value.
//! Unknown keys are rejected.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gcnn::{GcnnConfig, Masking};
use crate::heisenberg::HeisenbergModel;
use crate::lattice::{FilterSupport, Geometry, LatticeSpec};
use crate::sampler::SamplerConfig;
use crate::symmetry::{CharacterSector, SymmetryGroup};
use crate::vmc::{TrainOptions, TrainSchedule};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config is not valid TOML: {0}")]
    Syntax(String),
    #[error("unknown preset `{0}` (expected `large` or `desk`)")]
    UnknownPreset(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: Geometry,
    /// Linear size L of the L×L torus.
    pub side: usize,
    pub j1: f64,
    pub j2: f64,
    pub masking: Masking,
    pub support: FilterSupport,
    /// Feature layers including the input layer.
    pub n_layers: usize,
    pub width: usize,
    pub character: CharacterSector,

    pub phase_preopt_steps: usize,
    pub stage1_steps: usize,
    pub stage1_batch: usize,
    pub stage2_steps: usize,
    pub stage2_batch: usize,
    pub learning_rate: f64,
    pub reduce_learning_rate: bool,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub reset_adam_between_stages: bool,

    /// 0 means one chain per sample.
    pub n_chains: usize,
    pub sweeps_between: usize,
    pub burn_in: usize,

    pub seed: u64,
    pub output_dir: PathBuf,
    /// Modes trained by the masking experiment.
    pub modes: Vec<Masking>,
    /// Fresh samples for the post-training energy estimate.
    pub eval_samples: usize,
    /// Record per-step wall-clock time in traces.
    pub trace_wall_clock: bool,
}

impl RunConfig {
    /// Published hyperparameters: 6×6 triangular, J2 = J1/8, four layers of width 16.
    pub fn large() -> Self {
        let s = TrainSchedule::large();
        let sampler = SamplerConfig::default();
        Self {
            geometry: Geometry::Triangular,
            side: 6,
            j1: 1.0,
            j2: 0.125,
            masking: Masking::Full,
            support: FilterSupport::Full,
            n_layers: 4,
            width: 16,
            character: CharacterSector::Symmetric,
            phase_preopt_steps: s.phase_preopt_steps,
            stage1_steps: s.stage1_steps,
            stage1_batch: s.stage1_batch,
            stage2_steps: s.stage2_steps,
            stage2_batch: s.stage2_batch,
            learning_rate: s.learning_rate,
            reduce_learning_rate: s.reduce_learning_rate,
            adam_beta1: s.adam_beta1,
            adam_beta2: s.adam_beta2,
            adam_eps: s.adam_eps,
            reset_adam_between_stages: s.reset_adam_between_stages,
            n_chains: sampler.n_chains,
            sweeps_between: sampler.sweeps_between,
            burn_in: sampler.burn_in,
            seed: 1,
            output_dir: PathBuf::from("runs"),
            modes: Masking::ALL.to_vec(),
            eval_samples: 100_000,
            trace_wall_clock: true,
        }
    }

    /// 4×4 budget that runs in minutes on one core.
    pub fn desk() -> Self {
        Self {
            side: 4,
            n_layers: 2,
            width: 4,
            phase_preopt_steps: 100,
            stage1_steps: 2000,
            stage2_steps: 0,
            learning_rate: 1e-3,
            eval_samples: 20_000,
            ..Self::large()
        }
    }

    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        match name {
            "large" => Ok(Self::large()),
            "desk" => Ok(Self::desk()),
            other => Err(ConfigError::UnknownPreset(other.to_string())),
        }
    }

    /// Parses and validates. Without a `preset` key every field is required.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
        let config = match table.remove("preset") {
            None => table.try_into(),
            Some(toml::Value::String(name)) => {
                let mut base = toml::Table::try_from(Self::preset(&name)?).expect("presets serialize");
                base.extend(table);
                base.try_into()
            }
            Some(other) => return Err(ConfigError::Invalid(format!("preset must be a string, got {other}"))),
        };
        let config: Self = config.map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn schedule(&self) -> TrainSchedule {
        TrainSchedule {
            phase_preopt_steps: self.phase_preopt_steps,
            stage1_steps: self.stage1_steps,
            stage1_batch: self.stage1_batch,
            stage2_steps: self.stage2_steps,
            stage2_batch: self.stage2_batch,
            learning_rate: self.learning_rate,
            reduce_learning_rate: self.reduce_learning_rate,
            adam_beta1: self.adam_beta1,
            adam_beta2: self.adam_beta2,
            adam_eps: self.adam_eps,
            reset_adam_between_stages: self.reset_adam_between_stages,
        }
    }

    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig { n_chains: self.n_chains, sweeps_between: self.sweeps_between, burn_in: self.burn_in }
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            schedule: self.schedule(),
            sampler: self.sampler(),
            seed: self.seed,
            wall_clock: self.trace_wall_clock,
        }
    }

    pub fn lattice(&self) -> Result<LatticeSpec, ConfigError> {
        LatticeSpec::new(self.geometry, self.side, self.support).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn model(&self, lattice: &LatticeSpec) -> Result<HeisenbergModel, ConfigError> {
        HeisenbergModel::from_lattice(lattice, self.j1, self.j2).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn group(&self, lattice: &LatticeSpec) -> Arc<SymmetryGroup> {
        Arc::new(SymmetryGroup::wallpaper(lattice))
    }

    pub fn gcnn_config(&self, group: &SymmetryGroup) -> GcnnConfig {
        GcnnConfig {
            n_layers: self.n_layers,
            width: self.width,
            masking: self.masking,
            support: self.support,
            character: self.character.character(group),
            seed: self.seed,
        }
    }

    /// Checks every precondition that can be checked before compute starts.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        let lattice = self.lattice()?;
        if lattice.n_sites() % 2 != 0 {
            return invalid(format!("side {} gives an odd site count with no zero-magnetization sector", self.side));
        }
        self.model(&lattice)?;
        if self.n_layers == 0 {
            return invalid("n_layers must be at least 1".into());
        }
        if self.width == 0 {
            return invalid("width must be at least 1".into());
        }
        self.schedule().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.sampler().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.modes.is_empty() {
            return invalid("modes must list at least one masking mode".into());
        }
        for (i, m) in self.modes.iter().enumerate() {
            if self.modes[..i].contains(m) {
                return invalid(format!("mode `{m}` listed twice"));
            }
        }
        if self.eval_samples == 0 {
            return invalid("eval_samples must be positive".into());
        }
        let group = SymmetryGroup::wallpaper(&lattice);
        self.gcnn_config(&group).validate(&group).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }
}
