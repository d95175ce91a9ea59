use super::config::TrainConfig;
use crate::denoiser::DenoiserParams;
use crate::encoders::{EncoderParams, EncoderShape};
use crate::error::{bail, Result};
use crate::numerics::{SeededRng, Tensor};
use crate::schedule::NoiseSchedule;

/// Encoders, denoiser and noise schedule, plus the configuration that
/// produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: TrainConfig,
    pub encoder: EncoderParams,
    pub denoiser: DenoiserParams,
    pub schedule: NoiseSchedule,
    /// State of the training noise stream, advanced by every epoch.
    pub rng_state: String,
}

impl Model {
    pub fn init(cfg: &TrainConfig, input_dim: usize) -> Result<Self> {
        cfg.validate()?;
        if input_dim == 0 {
            bail!(Config, "input feature width must be positive");
        }
        let mut rng = SeededRng::new(cfg.seed).fork(0);
        let mut encoder = EncoderParams::init(
            EncoderShape {
                input_dim,
                model_dim: cfg.model_dim,
                aggregator_depth: cfg.aggregator_depth,
            },
            &mut rng,
        );
        let mut denoiser = DenoiserParams::init(cfg.model_dim, cfg.hidden_dim, cfg.steps, &mut rng);
        Self::apply_flags(cfg, &mut encoder, &mut denoiser);
        Ok(Self {
            config: cfg.clone(),
            encoder,
            denoiser,
            schedule: NoiseSchedule::new(cfg.schedule, cfg.steps, cfg.signal_scale)?,
            rng_state: SeededRng::new(cfg.seed).fork(2).state_string(),
        })
    }

    pub(crate) fn apply_flags(cfg: &TrainConfig, encoder: &mut EncoderParams, denoiser: &mut DenoiserParams) {
        encoder.text_frame_tau = cfg.text_frame_tau;
        encoder.contrastive_tau = cfg.contrastive_tau;
        encoder.frame_positions = cfg.frame_positions;
        encoder.uniform_token_weights = cfg.uniform_token_weights;
        denoiser.scaled_attention = cfg.scaled_attention;
        denoiser.steps = cfg.steps;
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.shape().input_dim
    }

    /// All parameters with checkpoint names, encoder first.
    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let enc = self.encoder.named().into_iter().map(|(n, t)| (format!("encoder.{n}"), t));
        let den = self.denoiser.named().into_iter().map(|(n, t)| (format!("denoiser.{n}"), t));
        enc.chain(den).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.encoder.tensors_mut();
        out.extend(self.denoiser.tensors_mut());
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }
}
