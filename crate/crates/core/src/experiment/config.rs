//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LossSpec;
use crate::model::HyperParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    GaussBlobs,
    TwoMoons,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub n_per_class: usize,
    /// Test points per class; defaults to `n_per_class`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_per_class: Option<usize>,
    pub d: usize,
    pub separation: f64,
    pub noise: f64,
    /// Defaults to the experiment seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl DatasetSpec {
    pub fn test_per_class(&self) -> usize {
        self.test_per_class.unwrap_or(self.n_per_class)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_per_class == 0 || self.test_per_class() == 0 {
            return Err(Error::Config("dataset needs at least one point per class".into()));
        }
        if self.d == 0 || (self.kind == DatasetKind::TwoMoons && self.d < 2) {
            return Err(Error::Config(format!("dataset dimension {} is too small", self.d)));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return Err(Error::Config("dataset separation must be finite and >= 0".into()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config("dataset noise must be finite and >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HpSpec {
    pub lambda: f64,
    pub epsilon: f64,
}

impl Default for HpSpec {
    fn default() -> Self {
        Self {
            lambda: 20.0,
            epsilon: 0.1,
        }
    }
}

impl HpSpec {
    pub fn build(&self) -> Result<HyperParams> {
        HyperParams::new(self.lambda, self.epsilon).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Training method and its knobs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SolverSpec {
    /// SGD on the empirical loss.
    Erm { steps: usize, eta: f64 },
    /// SGD on the penalized Wasserstein dual with a gradient-ascent inner solver.
    Wdro {
        steps: usize,
        eta: f64,
        inner_steps: usize,
        ascent_rate: f64,
    },
    /// Double loop with a fixed Langevin schedule per outer step.
    SdroDouble {
        t_out: usize,
        eta: f64,
        tau: f64,
        inner_steps: usize,
    },
    /// Single loop with particle banks.
    SdroSingle {
        t: usize,
        tau: f64,
        eta: f64,
        beta0: f64,
        batch: usize,
        particles: usize,
    },
}

impl SolverSpec {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Erm { .. } => "erm",
            Self::Wdro { .. } => "wdro",
            Self::SdroDouble { .. } => "sdro_double",
            Self::SdroSingle { .. } => "sdro_single",
        }
    }

    fn validate(&self, n_train: usize) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("solver.{name} must be > 0, got {v}")))
            }
        };
        let nonneg = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("solver.{name} must be >= 0, got {v}")))
            }
        };
        match *self {
            Self::Erm { eta, .. } => nonneg("eta", eta),
            Self::Wdro { eta, ascent_rate, .. } => {
                nonneg("eta", eta)?;
                positive("ascent_rate", ascent_rate)
            }
            Self::SdroDouble { t_out, eta, tau, .. } => {
                if t_out == 0 {
                    return Err(Error::Config("solver.t_out must be >= 1".into()));
                }
                nonneg("eta", eta)?;
                positive("tau", tau)
            }
            Self::SdroSingle {
                t,
                tau,
                eta,
                beta0,
                batch,
                particles,
            } => {
                if t == 0 || particles == 0 {
                    return Err(Error::Config("solver.t and solver.particles must be >= 1".into()));
                }
                positive("tau", tau)?;
                nonneg("eta", eta)?;
                if !(beta0 > 0.0 && beta0 <= 1.0) {
                    return Err(Error::Config(format!("solver.beta0 must lie in (0, 1], got {beta0}")));
                }
                if batch == 0 || batch > n_train {
                    return Err(Error::Config(format!(
                        "solver.batch must lie in [1, {n_train}], got {batch}"
                    )));
                }
                Ok(())
            }
        }
    }
}

/// Which iterate a stochastic solver reports.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputChoice {
    #[default]
    Last,
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    /// Radii as fractions of the mean test-feature norm, ascending.
    pub radii: Vec<f64>,
    pub steps: usize,
    /// Step length as a fraction of the radius.
    pub step_size: f64,
}

impl Default for AttackSpec {
    fn default() -> Self {
        Self {
            radii: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
            steps: 20,
            step_size: 0.25,
        }
    }
}

impl AttackSpec {
    pub fn validate(&self) -> Result<()> {
        if self.radii.is_empty() {
            return Err(Error::Config("attack.radii is empty".into()));
        }
        if self.radii.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return Err(Error::Config("attack radii must be finite and >= 0".into()));
        }
        if self.radii.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Config("attack radii must be ascending".into()));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::Config("attack.step_size must be > 0".into()));
        }
        Ok(())
    }
}

/// Settings for `sample-worstcase`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSpec {
    pub tau: f64,
    pub steps: usize,
    pub samples_per_anchor: usize,
}

impl Default for SamplerSpec {
    fn default() -> Self {
        Self {
            tau: 1e-2,
            steps: 1000,
            samples_per_anchor: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    /// Overridden by `--out-dir`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    pub dataset: DatasetSpec,
    pub loss: LossSpec,
    #[serde(default)]
    pub hp: HpSpec,
    pub solver: SolverSpec,
    #[serde(default)]
    pub output: OutputChoice,
    #[serde(default)]
    pub attack: AttackSpec,
    #[serde(default)]
    pub sampler: SamplerSpec,
    /// Transport budget as a fraction of the mean training-feature norm; the
    /// training summary reports whether the worst-case samples stay within it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c2_fraction: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn dataset_seed(&self) -> u64 {
        self.dataset.seed.unwrap_or(self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.hp.build()?;
        self.solver.validate(2 * self.dataset.n_per_class)?;
        self.attack.validate()?;
        if !(self.sampler.tau > 0.0 && self.sampler.tau < 1.0) || self.sampler.samples_per_anchor == 0 {
            return Err(Error::Config(
                "sampler needs tau in (0, 1) and samples_per_anchor >= 1".into(),
            ));
        }
        if let Some(c) = self.c2_fraction {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Config("c2_fraction must be > 0".into()));
            }
        }
        if let LossSpec::Quadratic { .. } | LossSpec::Linear = self.loss {
            return Err(Error::Config(
                "experiments need a classification loss (logistic or shallow_net)".into(),
            ));
        }
        Ok(())
    }
}
