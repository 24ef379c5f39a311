//! Run configuration, read from TOML.
//!
//! Defaults follow the published MNIST SGLD recipe: batch 100, initial step
//! 0.004 decayed by 0.96 every 5 epochs, inverse temperature 5000, 50
//! epochs, 30 repeats. The CNN of that recipe is out of desk scale, so the
//! default model is multinomial logistic regression.

use std::path::Path;

use serde::Deserialize;

use efld_core::bound::BoundConfig;
use efld_core::engine::{AlphaRule, BatchMode, OptimizerKind, OptimizerSpec, Schedule, SigmaRule, ALPHA_MIN};
use efld_core::models::{LossCaps, Model};
use efld_core::{Error, ExpFamily, Result};

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub optimizer: OptimizerConfig,
    pub run: RunSection,
    pub bound: BoundSection,
    pub sweep: Option<SweepSpec>,
    pub plot: PlotSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic,
    Mnist,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub source: DataSource,
    /// Training-set size.
    pub n: usize,
    /// Held-out pool for replacement points; `n/4` when absent.
    pub held_out: Option<usize>,
    pub test_n: usize,
    /// Synthetic blobs only.
    pub dim: usize,
    pub classes: usize,
    pub separation: f64,
    /// Fraction of training labels replaced by a different random label.
    pub corruption: f64,
    /// Seed for data generation and subsetting; the run seed when absent.
    pub seed: Option<u64>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Mnist,
            n: 1000,
            held_out: None,
            test_n: 2000,
            dim: 64,
            classes: 10,
            separation: 4.5,
            corruption: 0.0,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Quadratic,
    Logistic,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Hidden widths of the MLP.
    pub hidden: Vec<usize>,
    /// Loss clamp `L_max`; the bound uses `c₀ = 2·L_max`.
    pub loss_clamp: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { kind: ModelKind::Logistic, hidden: vec![64], loss_clamp: 4.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerName {
    Sgld,
    NoisySignSgd,
    SignSgd,
    Sgd,
    Efld,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaMode {
    Fixed,
    Adaptive,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub kind: OptimizerName,
    /// Noise family for `kind = "efld"`.
    pub family: String,
    pub eta0: f64,
    pub decay_rate: f64,
    pub decay_epochs: u64,
    /// 0 means full batch.
    pub batch_size: usize,
    /// SGLD inverse temperature `β = 2η/σ²`.
    pub beta: Option<f64>,
    /// SGLD `σ_t = sigma_ratio · η_t`; takes precedence over `beta`.
    pub sigma_ratio: Option<f64>,
    /// Scaling for noisy sign-SGD and EFLD.
    pub alpha: f64,
    pub alpha_mode: AlphaMode,
    pub alpha_safety: f64,
    pub alpha_pool: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerName::Sgld,
            family: "gaussian".into(),
            eta0: 0.004,
            decay_rate: 0.96,
            decay_epochs: 5,
            batch_size: 100,
            beta: Some(5000.0),
            sigma_ratio: None,
            alpha: 0.01,
            alpha_mode: AlphaMode::Fixed,
            alpha_safety: 1.0,
            alpha_pool: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub epochs: u64,
    /// Overrides `epochs` when set.
    pub steps: Option<u64>,
    /// Used when no `--seeds` is given: seeds `0..repeats`.
    pub repeats: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { epochs: 50, steps: None, repeats: 30 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundSection {
    pub pairs_per_step: usize,
    pub eval_every: u64,
    pub delta_pool: usize,
    pub track_incoherence: bool,
    /// Constant of the gradient-norm comparison bound; shares `c₀√(5c₂)` when absent.
    pub c_li: Option<f64>,
}

impl Default for BoundSection {
    fn default() -> Self {
        Self { pairs_per_step: 20, eval_every: 10, delta_pool: 0, track_incoherence: true, c_li: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Alpha,
    Beta,
    CorruptionFraction,
    N,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Alpha => "alpha",
            SweepAxis::Beta => "beta",
            SweepAxis::CorruptionFraction => "corruption_fraction",
            SweepAxis::N => "n",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "alpha" => SweepAxis::Alpha,
            "beta" => SweepAxis::Beta,
            "corruption" | "corruption_fraction" => SweepAxis::CorruptionFraction,
            "n" => SweepAxis::N,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::config("sweep.values is empty"));
        }
        let up = self.values.windows(2).all(|w| w[0] < w[1]);
        let down = self.values.windows(2).all(|w| w[0] > w[1]);
        if !(up || down) {
            return Err(Error::config(format!("sweep.values must be strictly ordered, got {:?}", self.values)));
        }
        if self.axis == SweepAxis::N && self.values.iter().any(|v| *v < 1.0 || v.fract() != 0.0) {
            return Err(Error::config("sweep.values for axis n must be positive integers"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlotSection {
    pub log_scale: bool,
}

impl Default for PlotSection {
    fn default() -> Self {
        Self { log_scale: true }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        if d.n < 2 {
            return Err(Error::config(format!("data.n must be >= 2, got {}", d.n)));
        }
        if !(0.0..=1.0).contains(&d.corruption) {
            return Err(Error::config(format!("data.corruption must be in [0, 1], got {}", d.corruption)));
        }
        if self.model.kind == ModelKind::Mlp && self.model.hidden.is_empty() {
            return Err(Error::config("model.hidden must list at least one width for an mlp"));
        }
        LossCaps::new(self.model.loss_clamp).map_err(|_| Error::config("model.loss_clamp must be finite and > 0"))?;
        let o = &self.optimizer;
        if o.kind == OptimizerName::Efld && ExpFamily::from_name(&o.family).is_none() {
            return Err(Error::config(format!("optimizer.family `{}` is not a known family", o.family)));
        }
        if o.kind == OptimizerName::Sgld && o.beta.is_none() && o.sigma_ratio.is_none() {
            return Err(Error::config("optimizer.beta or optimizer.sigma_ratio is required for sgld"));
        }
        if self.run.steps.is_none() && self.run.epochs == 0 {
            return Err(Error::config("run.epochs must be >= 1"));
        }
        if self.run.steps.is_none() && self.run.repeats == 0 {
            return Err(Error::config("run.repeats must be >= 1"));
        }
        self.optimizer_spec()?.validate()?;
        self.bound_config(self.data.n).validate()?;
        if let Some(s) = &self.sweep {
            s.validate()?;
        }
        Ok(())
    }

    pub fn family(&self) -> Option<ExpFamily> {
        match self.optimizer.kind {
            OptimizerName::Sgld => Some(ExpFamily::Gaussian),
            OptimizerName::NoisySignSgd => Some(ExpFamily::BernoulliPm1),
            OptimizerName::Efld => ExpFamily::from_name(&self.optimizer.family),
            OptimizerName::SignSgd | OptimizerName::Sgd => None,
        }
    }

    pub fn optimizer_spec(&self) -> Result<OptimizerSpec> {
        let o = &self.optimizer;
        let eta = if o.decay_rate == 1.0 {
            Schedule::Constant(o.eta0)
        } else {
            Schedule::StepDecay { base: o.eta0, rate: o.decay_rate, every_epochs: o.decay_epochs }
        };
        let alpha = match o.alpha_mode {
            AlphaMode::Fixed => AlphaRule::Fixed(Schedule::Constant(o.alpha)),
            AlphaMode::Adaptive => {
                AlphaRule::Adaptive { safety: o.alpha_safety, pool_size: o.alpha_pool, alpha_min: ALPHA_MIN }
            }
        };
        let kind = match o.kind {
            OptimizerName::Sgld => {
                let sigma = match (o.sigma_ratio, o.beta) {
                    (Some(r), _) => SigmaRule::RatioToEta(r),
                    (None, Some(b)) => SigmaRule::InverseTemperature(b),
                    (None, None) => return Err(Error::config("optimizer.beta or optimizer.sigma_ratio is required")),
                };
                OptimizerKind::Sgld { eta, sigma }
            }
            OptimizerName::NoisySignSgd => OptimizerKind::NoisySignSgd { eta, alpha },
            OptimizerName::SignSgd => OptimizerKind::SignSgd { eta },
            OptimizerName::Sgd => OptimizerKind::Sgd { eta },
            OptimizerName::Efld => OptimizerKind::Efld {
                family: ExpFamily::from_name(&o.family)
                    .ok_or_else(|| Error::config(format!("optimizer.family `{}` is unknown", o.family)))?,
                rho: eta,
                alpha,
            },
        };
        let batch = if o.batch_size == 0 { BatchMode::Full } else { BatchMode::MiniBatch(o.batch_size) };
        Ok(OptimizerSpec { kind, batch })
    }

    pub fn model(&self, dim: usize, classes: usize) -> Result<Model> {
        Ok(match self.model.kind {
            ModelKind::Quadratic => Model::Quadratic { target: vec![0.0; dim] },
            ModelKind::Logistic => Model::Logistic { dim, classes },
            ModelKind::Mlp => {
                let mut sizes = vec![dim];
                sizes.extend(&self.model.hidden);
                sizes.push(classes);
                Model::mlp(sizes)?
            }
        })
    }

    pub fn bound_config(&self, n: usize) -> BoundConfig {
        let caps = LossCaps { loss_clamp: self.model.loss_clamp };
        BoundConfig {
            n,
            c0: caps.c0(),
            c2: self.family().map_or(1.0, ExpFamily::c2),
            pairs_per_step: self.bound.pairs_per_step,
            eval_every: self.bound.eval_every,
            c_li: self.bound.c_li,
            delta_pool: self.bound.delta_pool,
            track_incoherence: self.bound.track_incoherence,
        }
    }

    pub fn steps(&self, n: usize) -> u64 {
        let b = if self.optimizer.batch_size == 0 { n } else { self.optimizer.batch_size };
        self.run.steps.unwrap_or_else(|| self.run.epochs * n.div_ceil(b.max(1)) as u64)
    }

    /// Copy with one sweep coordinate applied.
    pub fn with_axis(&self, axis: SweepAxis, value: f64) -> Result<Self> {
        let mut c = self.clone();
        match axis {
            SweepAxis::Alpha => {
                c.optimizer.alpha = value;
                c.optimizer.alpha_mode = AlphaMode::Fixed;
                if c.optimizer.kind == OptimizerName::Sgld {
                    c.optimizer.sigma_ratio = Some(value);
                }
            }
            SweepAxis::Beta => {
                c.optimizer.beta = Some(value);
                c.optimizer.sigma_ratio = None;
            }
            SweepAxis::CorruptionFraction => c.data.corruption = value,
            SweepAxis::N => c.data.n = value as usize,
        }
        c.sweep = None;
        c.validate()?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_mnist_recipe() {
        let c = RunConfig::from_toml("").unwrap();
        assert_eq!(c.optimizer.batch_size, 100);
        assert_eq!(c.optimizer.eta0, 0.004);
        assert_eq!(c.optimizer.decay_rate, 0.96);
        assert_eq!(c.optimizer.decay_epochs, 5);
        assert_eq!(c.optimizer.beta, Some(5000.0));
        assert_eq!(c.run.epochs, 50);
        assert_eq!(c.run.repeats, 30);
        assert_eq!(c.steps(1000), 500);
        assert_eq!(c.bound_config(1000).c0, 8.0);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::from_toml("[optimizer]\nlearning_rate = 0.1\n").unwrap_err();
        assert!(err.to_string().contains("learning_rate"), "{err}");
        let err = RunConfig::from_toml("[data]\nn = 1\n").unwrap_err();
        assert!(err.to_string().contains("data.n"), "{err}");
    }

    #[test]
    fn sweep_validation() {
        assert!(SweepSpec { axis: SweepAxis::Alpha, values: vec![] }.validate().is_err());
        assert!(SweepSpec { axis: SweepAxis::Alpha, values: vec![1.0, 0.1, 0.5] }.validate().is_err());
        assert!(SweepSpec { axis: SweepAxis::Alpha, values: vec![1.0, 0.1, 0.01] }.validate().is_ok());
        assert!(SweepSpec { axis: SweepAxis::N, values: vec![500.0, 1000.5] }.validate().is_err());
    }

    #[test]
    fn beta_maps_to_sigma() {
        let c = RunConfig::from_toml("[optimizer]\nbeta = 55000.0\n").unwrap();
        match c.optimizer_spec().unwrap().kind {
            OptimizerKind::Sgld { sigma: SigmaRule::InverseTemperature(b), .. } => assert_eq!(b, 55000.0),
            other => panic!("{other:?}"),
        }
    }
}
