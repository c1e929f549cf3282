use std::path::Path;

use serde::{Deserialize, Serialize};

use super::write_atomic;
use crate::diffusion::DiffusionSchedule;
use crate::dilo::{InversionConfig, InversionMode};
use crate::error::{Error, Result};
use crate::networks::{Activation, Bounds};
use crate::physics::SolverSettings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Problem {
    Eit,
    NavierStokes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub t_train: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub substeps: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            t_train: 1000,
            beta_start: 1e-4,
            beta_end: 0.02,
            substeps: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AeConfig {
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Admissible range enforced by the decoder.
    pub field_min: f64,
    pub field_max: f64,
}

impl Default for AeConfig {
    fn default() -> Self {
        Self {
            latent_dim: 16,
            hidden: vec![128],
            activation: Activation::Tanh,
            epochs: 400,
            batch_size: 32,
            lr: 1e-3,
            field_min: 0.01,
            field_max: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LdmConfig {
    pub hidden: Vec<usize>,
    pub embedding_dim: usize,
    pub activation: Activation,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for LdmConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128, 128],
            embedding_dim: 32,
            activation: Activation::Tanh,
            epochs: 1500,
            batch_size: 64,
            lr: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogateConfig {
    pub width: usize,
    pub modes: usize,
    pub layers: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Number of `(a, y)` pairs drawn from the dataset, held-out ones included.
    pub pairs: usize,
    pub holdout: usize,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            width: 12,
            modes: 4,
            layers: 3,
            epochs: 100,
            batch_size: 8,
            lr: 3e-3,
            pairs: 240,
            holdout: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsConfig {
    pub problem: Problem,
    pub grid_n: usize,
    /// Number of dataset samples generated.
    pub samples: usize,
    pub patterns: usize,
    pub solver: SolverSettings,
    pub ns_nu: f64,
    pub ns_t_final: f64,
    pub ns_dt: f64,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self {
            problem: Problem::Eit,
            grid_n: 16,
            samples: 512,
            patterns: 8,
            solver: SolverSettings::Direct,
            ns_nu: 1.0 / 200.0,
            ns_t_final: 1.0,
            ns_dt: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InvertSection {
    pub iterations: usize,
    pub mode: InversionMode,
    pub lr: f64,
    pub weight_decay: f64,
    /// Overrides `[schedule] substeps` during inversion when set.
    pub substeps: Option<usize>,
    pub loss_weight: f64,
    pub noise_gamma: f64,
    pub grad_tol: f64,
    pub loss_tol: f64,
    pub record_wallclock: bool,
    /// Guidance scale of the guided-sampling baseline.
    pub dps_gamma: f64,
    /// Dataset sample whose observation is inverted.
    pub sample: usize,
}

impl Default for InvertSection {
    fn default() -> Self {
        let c = InversionConfig::default();
        Self {
            iterations: c.iterations,
            mode: c.mode,
            lr: c.lr,
            weight_decay: c.weight_decay,
            substeps: c.substeps,
            loss_weight: c.loss_weight,
            noise_gamma: c.noise_gamma,
            grad_tol: c.grad_tol,
            loss_tol: c.loss_tol,
            record_wallclock: c.record_wallclock,
            dps_gamma: 0.1,
            sample: 0,
        }
    }
}

/// Every tunable of a run, one TOML table per stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub schedule: ScheduleConfig,
    pub ae: AeConfig,
    pub ldm: LdmConfig,
    pub surrogate: SurrogateConfig,
    pub physics: PhysicsConfig,
    pub invert: InvertSection,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_toml()?.as_bytes())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.physics.grid_n < 3 {
            return bad(format!("physics.grid_n must be at least 3, got {}", self.physics.grid_n));
        }
        if self.physics.samples == 0 {
            return bad("physics.samples must be positive".into());
        }
        if self.surrogate.pairs > self.physics.samples {
            return bad(format!(
                "surrogate.pairs ({}) exceeds physics.samples ({})",
                self.surrogate.pairs, self.physics.samples
            ));
        }
        if self.surrogate.holdout >= self.surrogate.pairs {
            return bad("surrogate.holdout must be smaller than surrogate.pairs".into());
        }
        if self.invert.sample >= self.physics.samples {
            return bad(format!("invert.sample must be below {}", self.physics.samples));
        }
        self.schedule()?;
        self.bounds()?;
        self.inversion().validate()
    }

    pub fn schedule(&self) -> Result<DiffusionSchedule> {
        let s = &self.schedule;
        DiffusionSchedule::linear(s.t_train, s.beta_start, s.beta_end, s.substeps)
    }

    pub fn bounds(&self) -> Result<Bounds> {
        Bounds::new(self.ae.field_min, self.ae.field_max)
    }

    pub fn inversion(&self) -> InversionConfig {
        let i = &self.invert;
        InversionConfig {
            iterations: i.iterations,
            mode: i.mode,
            lr: i.lr,
            weight_decay: i.weight_decay,
            seed: self.seed,
            substeps: i.substeps,
            loss_weight: i.loss_weight,
            noise_gamma: i.noise_gamma,
            grad_tol: i.grad_tol,
            loss_tol: i.loss_tol,
            record_wallclock: i.record_wallclock,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let c = RunConfig::default();
        let text = c.to_toml().unwrap();
        assert_eq!(RunConfig::parse(&text).unwrap(), c);
        for section in ["[schedule]", "[ae]", "[ldm]", "[surrogate]", "[physics]", "[invert]"] {
            assert!(text.contains(section), "{section} missing");
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(RunConfig::parse("[ae]\nlatent = 3\n"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("bogus = 1\n"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("[nope]\n"), Err(Error::Config(_))));
    }

    #[test]
    fn partial_file_takes_defaults() {
        let c = RunConfig::parse("seed = 7\n[invert]\nmode = \"gd-1-over-L\"\nsubsteps = 5\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.invert.mode, InversionMode::GdOneOverL);
        assert_eq!(c.invert.substeps, Some(5));
        assert_eq!(c.ae, AeConfig::default());
    }
}
