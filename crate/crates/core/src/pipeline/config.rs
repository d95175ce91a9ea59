use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{bail, Error, Result};
use crate::objectives::LossKind;
use crate::sampler::{SamplerConfig, SamplingStrategy};
use crate::schedule::ScheduleKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Gen,
    Dis,
    Both,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Gen, Strategy::Dis, Strategy::Both];

    pub fn uses_generation(self) -> bool {
        self != Strategy::Dis
    }

    pub fn uses_discrimination(self) -> bool {
        self != Strategy::Gen
    }

    /// Fusion weight on the generated distribution when none is given.
    pub fn default_fusion_weight(self) -> f64 {
        match self {
            Strategy::Gen => 1.0,
            Strategy::Dis => 0.0,
            Strategy::Both => 0.5,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Gen => "gen",
            Strategy::Dis => "dis",
            Strategy::Both => "both",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gen" => Ok(Self::Gen),
            "dis" => Ok(Self::Dis),
            "both" => Ok(Self::Both),
            other => bail!(Config, "unknown training strategy {other:?} (gen | dis | both)"),
        }
    }
}

/// Everything that shapes a training run, model widths included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub strategy: Strategy,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Weight of the generation loss.
    pub lambda: f64,
    /// Diffusion steps `K`.
    pub steps: usize,
    pub schedule: ScheduleKind,
    pub signal_scale: f64,
    pub smoothing: f64,
    pub loss: LossKind,
    pub seed: u64,
    pub model_dim: usize,
    pub hidden_dim: usize,
    pub aggregator_depth: usize,
    pub text_frame_tau: f64,
    pub contrastive_tau: f64,
    pub scaled_attention: bool,
    pub frame_positions: bool,
    pub uniform_token_weights: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Both,
            epochs: 150,
            batch_size: 32,
            learning_rate: 3e-3,
            lambda: 1.0,
            steps: 50,
            schedule: ScheduleKind::Cosine,
            signal_scale: 1.0,
            smoothing: 0.1,
            loss: LossKind::Kl,
            seed: 0,
            model_dim: 32,
            hidden_dim: 64,
            aggregator_depth: 1,
            text_frame_tau: 1.0,
            contrastive_tau: 0.01,
            scaled_attention: false,
            frame_positions: false,
            uniform_token_weights: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("steps", self.steps),
            ("model_dim", self.model_dim),
            ("hidden_dim", self.hidden_dim),
        ];
        for (name, v) in positive {
            if v == 0 {
                bail!(Config, "{name} must be positive");
            }
        }
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("signal_scale", self.signal_scale),
            ("text_frame_tau", self.text_frame_tau),
            ("contrastive_tau", self.contrastive_tau),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                bail!(Config, "{name} must be positive, got {v}");
            }
        }
        if !(self.lambda >= 0.0) {
            bail!(Config, "lambda must be non-negative, got {}", self.lambda);
        }
        if !(0.0..1.0).contains(&self.smoothing) {
            bail!(Config, "smoothing {} outside [0, 1)", self.smoothing);
        }
        if self.loss == LossKind::KlReverse && self.smoothing == 0.0 {
            bail!(Config, "the reverse KL loss needs smoothing > 0");
        }
        Ok(())
    }
}

/// Inference settings: sampler plus score fusion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub sampling: SamplingStrategy,
    /// Defaults to the trained `K`.
    pub eval_steps: Option<usize>,
    pub ddim_eta: f64,
    /// Defaults to twice the signal scale.
    pub clamp: Option<f64>,
    pub repeats: usize,
    /// Defaults to the strategy's own weight.
    pub fusion_weight: Option<f64>,
    pub eval_seed: u64,
    pub histogram_bins: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            sampling: SamplingStrategy::Ddim,
            eval_steps: None,
            ddim_eta: 0.0,
            clamp: None,
            repeats: 1,
            fusion_weight: None,
            eval_seed: 0,
            histogram_bins: 20,
        }
    }
}

impl EvalConfig {
    pub fn sampler(&self, steps: usize, signal_scale: f64) -> Result<SamplerConfig> {
        let cfg = SamplerConfig {
            strategy: self.sampling,
            eval_steps: self.eval_steps.unwrap_or(steps),
            ddim_eta: self.ddim_eta,
            clamp: self.clamp.unwrap_or(2.0 * signal_scale),
            repeats: self.repeats,
        };
        cfg.validate(steps)?;
        Ok(cfg)
    }

    pub fn weight(&self, strategy: Strategy) -> Result<f64> {
        let w = self.fusion_weight.unwrap_or(strategy.default_fusion_weight());
        if !(0.0..=1.0).contains(&w) {
            bail!(Config, "fusion weight {w} outside [0, 1]");
        }
        Ok(w)
    }
}

/// Train and eval settings in one flat namespace, as read from a config
/// file and echoed next to outputs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub train: TrainConfig,
    #[serde(flatten)]
    pub eval: EvalConfig,
}

impl RunConfig {
    pub const KEYS: [&'static str; 27] = [
        "strategy",
        "epochs",
        "batch_size",
        "learning_rate",
        "lambda",
        "steps",
        "schedule",
        "signal_scale",
        "smoothing",
        "loss",
        "seed",
        "model_dim",
        "hidden_dim",
        "aggregator_depth",
        "text_frame_tau",
        "contrastive_tau",
        "scaled_attention",
        "frame_positions",
        "uniform_token_weights",
        "sampling",
        "eval_steps",
        "ddim_eta",
        "clamp",
        "repeats",
        "fusion_weight",
        "eval_seed",
        "histogram_bins",
    ];

    /// Parses `key = value` lines; unknown keys are rejected.
    pub fn from_toml(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e| Error::Config(format!("config file: {e}")))?;
        Self::from_table(table)
    }

    /// Same as [`RunConfig::from_toml`] for an already parsed table.
    pub fn from_table(table: toml::Table) -> Result<Self> {
        if let Some(k) = table.keys().find(|k| !Self::KEYS.contains(&k.as_str())) {
            bail!(Config, "unknown config key {k:?}");
        }
        let cfg: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("config file: {e}")))?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_roundtrip_and_unknown_keys() {
        let mut cfg = RunConfig::default();
        cfg.train.strategy = Strategy::Gen;
        cfg.eval.eval_steps = Some(10);
        cfg.eval.fusion_weight = Some(0.25);
        let text = cfg.to_toml();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
        assert!(matches!(RunConfig::from_toml("bogus = 1"), Err(Error::Config(_))));
        assert!(RunConfig::from_toml("epochs = 0").is_err());
        let partial = RunConfig::from_toml("schedule = \"linear\"\nepochs = 3").unwrap();
        assert_eq!(partial.train.schedule, ScheduleKind::Linear);
        assert_eq!(partial.train.batch_size, 32);
    }

    #[test]
    fn keys_cover_every_field() {
        let table: toml::Table = RunConfig {
            eval: EvalConfig {
                eval_steps: Some(1),
                clamp: Some(1.0),
                fusion_weight: Some(0.5),
                ..EvalConfig::default()
            },
            ..RunConfig::default()
        }
        .to_toml()
        .parse()
        .unwrap();
        let mut keys: Vec<&str> = table.keys().map(|k| k.as_str()).collect();
        keys.sort_unstable();
        let mut want = RunConfig::KEYS.to_vec();
        want.sort_unstable();
        assert_eq!(keys, want);
    }
}
