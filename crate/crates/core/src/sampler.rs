//! Reverse diffusion from Gaussian noise to a joint distribution over a
//! gallery, by ancestral (DDPM) or deterministic (DDIM) sampling.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::denoiser::{DenoiserParams, Direction, PreparedQuery};
use crate::error::{bail, Error, Result};
use crate::numerics::{softmax, SeededRng, Tensor};
use crate::schedule::{ddim_subsequence, NoiseSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingStrategy {
    Ddpm,
    Ddim,
}

impl fmt::Display for SamplingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplingStrategy::Ddpm => "ddpm",
            SamplingStrategy::Ddim => "ddim",
        })
    }
}

impl FromStr for SamplingStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ddpm" => Ok(Self::Ddpm),
            "ddim" => Ok(Self::Ddim),
            other => bail!(Config, "unknown sampling strategy {other:?} (ddpm | ddim)"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub strategy: SamplingStrategy,
    /// Timesteps visited by DDIM. DDPM always walks the full chain.
    pub eval_steps: usize,
    pub ddim_eta: f64,
    /// `x̂₀` is clamped to `±clamp` inside the step rules.
    pub clamp: f64,
    /// Independent chains averaged per query.
    pub repeats: usize,
}

impl SamplerConfig {
    pub fn new(eval_steps: usize, signal_scale: f64) -> Self {
        Self {
            strategy: SamplingStrategy::Ddim,
            eval_steps,
            ddim_eta: 0.0,
            clamp: 2.0 * signal_scale,
            repeats: 1,
        }
    }

    pub fn validate(&self, steps: usize) -> Result<()> {
        if self.eval_steps == 0 || self.eval_steps > steps {
            bail!(
                Config,
                "eval_steps {} outside 1..={steps} for a model trained with K={steps}",
                self.eval_steps
            );
        }
        if !(0.0..=1.0).contains(&self.ddim_eta) {
            bail!(Config, "ddim_eta {} outside [0, 1]", self.ddim_eta);
        }
        if !(self.clamp > 0.0) {
            bail!(Config, "clamp range must be positive, got {}", self.clamp);
        }
        if self.repeats == 0 {
            bail!(Config, "repeats must be at least 1");
        }
        Ok(())
    }

    /// Timesteps visited, from `K` down to 1.
    pub fn timesteps(&self, steps: usize) -> Result<Vec<usize>> {
        self.validate(steps)?;
        match self.strategy {
            SamplingStrategy::Ddpm => Ok((1..=steps).rev().collect()),
            SamplingStrategy::Ddim => ddim_subsequence(steps, self.eval_steps),
        }
    }
}

/// Anything that predicts the clean signal over a fixed gallery.
pub trait X0Predictor {
    fn gallery_size(&self) -> usize;
    fn predict_x0(&self, x_k: &[f64], k: usize) -> Result<Vec<f64>>;
}

impl X0Predictor for PreparedQuery<'_> {
    fn gallery_size(&self) -> usize {
        PreparedQuery::gallery_size(self)
    }

    fn predict_x0(&self, x_k: &[f64], k: usize) -> Result<Vec<f64>> {
        PreparedQuery::predict_x0(self, x_k, k)
    }
}

/// Always answers with a fixed signal, whatever the input.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleDenoiser {
    pub signal: Vec<f64>,
}

impl X0Predictor for OracleDenoiser {
    fn gallery_size(&self) -> usize {
        self.signal.len()
    }

    fn predict_x0(&self, x_k: &[f64], _k: usize) -> Result<Vec<f64>> {
        if x_k.len() != self.signal.len() {
            bail!(Contract, "x_k length {} vs oracle length {}", x_k.len(), self.signal.len());
        }
        Ok(self.signal.clone())
    }
}

fn clamp_all(x: &[f64], limit: f64) -> Vec<f64> {
    x.iter().map(|v| v.clamp(-limit, limit)).collect()
}

pub fn ddim_step(
    x_k: &[f64],
    x0_hat: &[f64],
    k: usize,
    k_prev: usize,
    sched: &NoiseSchedule,
    eta: f64,
    rng: &mut SeededRng,
) -> Result<Vec<f64>> {
    if k_prev >= k {
        bail!(Contract, "DDIM step must move down: {k} -> {k_prev}");
    }
    if x_k.len() != x0_hat.len() {
        bail!(Contract, "x_k length {} vs x̂₀ length {}", x_k.len(), x0_hat.len());
    }
    let ab = sched.alpha_bar(k)?;
    let ab_prev = sched.alpha_bar(k_prev)?;
    let sigma = eta * ((1.0 - ab_prev) / (1.0 - ab)).sqrt() * (1.0 - ab / ab_prev).sqrt();
    let dir = (1.0 - ab_prev - sigma * sigma).max(0.0).sqrt();
    let (sa, sn) = (ab.sqrt(), (1.0 - ab).sqrt());
    let mut out: Vec<f64> = x_k
        .iter()
        .zip(x0_hat)
        .map(|(x, x0)| {
            let eps = (x - sa * x0) / sn;
            ab_prev.sqrt() * x0 + dir * eps
        })
        .collect();
    if sigma > 0.0 {
        for o in out.iter_mut() {
            *o += sigma * rng.normal();
        }
    }
    Ok(out)
}

/// Posterior mean and variance of `q(x_{k−1} | x_k, x̂₀)`.
pub fn ddpm_posterior(
    x_k: &[f64],
    x0_hat: &[f64],
    k: usize,
    sched: &NoiseSchedule,
) -> Result<(Vec<f64>, f64)> {
    if k == 0 {
        bail!(Contract, "DDPM step needs k >= 1");
    }
    if x_k.len() != x0_hat.len() {
        bail!(Contract, "x_k length {} vs x̂₀ length {}", x_k.len(), x0_hat.len());
    }
    let ab = sched.alpha_bar(k)?;
    let ab_prev = sched.alpha_bar(k - 1)?;
    let beta = sched.beta(k)?;
    let alpha = sched.alpha(k)?;
    let c0 = ab_prev.sqrt() * beta / (1.0 - ab);
    let ck = alpha.sqrt() * (1.0 - ab_prev) / (1.0 - ab);
    let var = (1.0 - ab_prev) / (1.0 - ab) * beta;
    let mean = x_k.iter().zip(x0_hat).map(|(x, x0)| c0 * x0 + ck * x).collect();
    Ok((mean, var))
}

pub fn ddpm_step(
    x_k: &[f64],
    x0_hat: &[f64],
    k: usize,
    sched: &NoiseSchedule,
    rng: &mut SeededRng,
) -> Result<Vec<f64>> {
    let (mut mean, var) = ddpm_posterior(x_k, x0_hat, k, sched)?;
    if k > 1 {
        let sd = var.sqrt();
        for m in mean.iter_mut() {
            *m += sd * rng.normal();
        }
    }
    Ok(mean)
}

/// Per-step readouts of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingTrace {
    /// Timestep of each row of `predictions`.
    pub levels: Vec<usize>,
    /// `softmax(x_K)`: the readout of the starting noise.
    pub initial: Vec<f64>,
    /// `softmax(x̂₀)` after each denoiser call.
    pub predictions: Vec<Vec<f64>>,
}

impl SamplingTrace {
    /// Initial readout followed by every per-step prediction.
    pub fn rows(&self) -> Vec<(usize, &[f64])> {
        let k_max = self.levels.first().copied().unwrap_or(0);
        std::iter::once((k_max, self.initial.as_slice()))
            .chain(self.levels.iter().copied().zip(self.predictions.iter().map(|r| r.as_slice())))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointSample {
    /// `softmax` of the last `x̂₀`, averaged over repeats.
    pub prob: Vec<f64>,
    /// State after the last step of the first chain.
    pub terminal: Vec<f64>,
    pub trace: Option<SamplingTrace>,
}

/// Runs `cfg.repeats` reverse chains against `model` and reads out the
/// joint distribution.
pub fn sample<P: X0Predictor + ?Sized>(
    model: &P,
    sched: &NoiseSchedule,
    cfg: &SamplerConfig,
    rng: &mut SeededRng,
    record_trace: bool,
) -> Result<JointSample> {
    let n = model.gallery_size();
    if n == 0 {
        bail!(Input, "empty candidate gallery");
    }
    let levels = cfg.timesteps(sched.steps())?;
    let mut prob = vec![0.0; n];
    let mut terminal = Vec::new();
    let mut trace = None;
    for rep in 0..cfg.repeats {
        let mut x = rng.normals(n);
        let mut rows = Vec::new();
        let initial = if record_trace && rep == 0 {
            softmax(&x)
        } else {
            Vec::new()
        };
        let mut last = Vec::new();
        for (i, &k) in levels.iter().enumerate() {
            let raw = model.predict_x0(&x, k)?;
            let x0 = clamp_all(&raw, cfg.clamp);
            x = match cfg.strategy {
                SamplingStrategy::Ddim => {
                    let k_prev = levels.get(i + 1).copied().unwrap_or(0);
                    ddim_step(&x, &x0, k, k_prev, sched, cfg.ddim_eta, rng)?
                }
                SamplingStrategy::Ddpm => ddpm_step(&x, &x0, k, sched, rng)?,
            };
            if record_trace && rep == 0 {
                rows.push(softmax(&raw));
            }
            last = raw;
        }
        for (p, q) in prob.iter_mut().zip(softmax(&last)) {
            *p += q / cfg.repeats as f64;
        }
        if rep == 0 {
            terminal = x;
            if record_trace {
                trace = Some(SamplingTrace {
                    levels: levels.clone(),
                    initial,
                    predictions: rows,
                });
            }
        }
    }
    Ok(JointSample {
        prob,
        terminal,
        trace,
    })
}

/// Generates `p(candidates, query)` with a trained denoiser.
#[allow(clippy::too_many_arguments)]
pub fn generate_joint(
    params: &DenoiserParams,
    sched: &NoiseSchedule,
    query: &[f64],
    candidates: &Tensor,
    cfg: &SamplerConfig,
    rng: &mut SeededRng,
    direction: Direction,
    record_trace: bool,
) -> Result<JointSample> {
    if sched.steps() != params.steps {
        bail!(
            Config,
            "schedule has {} steps but the denoiser was trained with {}",
            sched.steps(),
            params.steps
        );
    }
    let prepared = params.prepare(query, candidates, direction)?;
    sample(&prepared, sched, cfg, rng, record_trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::ScheduleKind;

    fn cosine(k: usize) -> NoiseSchedule {
        NoiseSchedule::new(ScheduleKind::Cosine, k, 1.0).unwrap()
    }

    #[test]
    fn ddim_oracle_recovers_target() {
        let sched = cosine(50);
        let x0 = vec![1.0, -1.0, -1.0, -1.0];
        let oracle = OracleDenoiser { signal: x0.clone() };
        for steps in [1, 10, 50] {
            let cfg = SamplerConfig::new(steps, 1.0);
            let out = sample(&oracle, &sched, &cfg, &mut SeededRng::new(3), false).unwrap();
            for (a, b) in out.terminal.iter().zip(&x0) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn ddim_eta_zero_is_deterministic() {
        let sched = cosine(20);
        let mut rng = SeededRng::new(1);
        let x = rng.normals(5);
        let x0 = rng.normals(5);
        let a = ddim_step(&x, &x0, 12, 7, &sched, 0.0, &mut SeededRng::new(1)).unwrap();
        let b = ddim_step(&x, &x0, 12, 7, &sched, 0.0, &mut SeededRng::new(99)).unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            ddim_step(&x, &x0, 7, 7, &sched, 0.0, &mut rng),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn ddim_step_matches_hand_formula() {
        let sched = cosine(30);
        let mut rng = SeededRng::new(17);
        let x = rng.normals(3);
        let x0 = rng.normals(3);
        let eta = 0.7;
        let out = ddim_step(&x, &x0, 20, 11, &sched, eta, &mut SeededRng::new(5)).unwrap();
        let mut z = SeededRng::new(5);
        let ab = sched.alpha_bars()[19];
        let abp = sched.alpha_bars()[10];
        let sigma = eta * ((1.0 - abp) / (1.0 - ab) * (1.0 - ab / abp)).sqrt();
        for i in 0..3 {
            let e = (x[i] - ab.sqrt() * x0[i]) / (1.0 - ab).sqrt();
            let want = abp.sqrt() * x0[i] + (1.0 - abp - sigma * sigma).sqrt() * e + sigma * z.normal();
            assert!((out[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn ddpm_last_step_is_mean() {
        let sched = cosine(10);
        let x = [0.3, -0.2];
        let x0 = [1.0, -1.0];
        let (mean, _) = ddpm_posterior(&x, &x0, 1, &sched).unwrap();
        let out = ddpm_step(&x, &x0, 1, &sched, &mut SeededRng::new(0)).unwrap();
        assert_eq!(out, mean);
        assert!(matches!(ddpm_step(&x, &x0, 0, &sched, &mut SeededRng::new(0)), Err(Error::Contract(_))));
    }

    #[test]
    fn ddpm_mean_is_consistent_on_noiseless_input() {
        // x_k = sqrt(ᾱ_k)·x₀ with x̂₀ = x₀ must map to sqrt(ᾱ_{k−1})·x₀
        let mut rng = SeededRng::new(4);
        for _ in 0..3 {
            let betas: Vec<f64> = (0..8).map(|_| 0.01 + 0.3 * rng.uniform()).collect();
            let sched = NoiseSchedule::from_betas(ScheduleKind::Linear, betas, 1.0).unwrap();
            let x0 = rng.normals(4);
            for k in 1..=8 {
                let ab = sched.alpha_bar(k).unwrap();
                let xk: Vec<f64> = x0.iter().map(|v| ab.sqrt() * v).collect();
                let (mean, _) = ddpm_posterior(&xk, &x0, k, &sched).unwrap();
                let want = sched.alpha_bar(k - 1).unwrap().sqrt();
                for (m, v) in mean.iter().zip(&x0) {
                    assert!((m - want * v).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn output_is_a_distribution_and_reproducible() {
        let sched = cosine(50);
        let mut rng = SeededRng::new(8);
        let params = DenoiserParams::init(6, 12, 50, &mut rng);
        let q = rng.normals(6);
        let c = rng.gaussian(9, 6).unwrap();
        let cfg = SamplerConfig::new(10, 1.0);
        let run = |seed| {
            generate_joint(&params, &sched, &q, &c, &cfg, &mut SeededRng::new(seed), Direction::TextToVideo, true)
                .unwrap()
        };
        let a = run(2);
        assert_eq!(a.prob.len(), 9);
        assert!((a.prob.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(a, run(2));
        let trace = a.trace.unwrap();
        assert_eq!(trace.rows().len(), 11);
        assert_eq!(trace.predictions.last().unwrap(), &a.prob);
    }

    #[test]
    fn oracle_argmax_is_positive() {
        let sched = cosine(50);
        let mut rng = SeededRng::new(31);
        for n in [1, 2, 5, 17, 64] {
            let pos = rng.int_inclusive(0, n - 1);
            let t = crate::objectives::joint_target(pos, n, 1.0, 0.0).unwrap();
            let oracle = OracleDenoiser { signal: t.signal };
            let out = sample(&oracle, &sched, &SamplerConfig::new(10, 1.0), &mut rng, false).unwrap();
            let best = (0..n).max_by(|&a, &b| out.prob[a].total_cmp(&out.prob[b])).unwrap();
            assert_eq!(best, pos);
        }
    }

    #[test]
    fn config_validation() {
        let cfg = SamplerConfig::new(60, 1.0);
        assert!(matches!(cfg.validate(50), Err(Error::Config(_))));
        let mut cfg = SamplerConfig::new(10, 1.0);
        cfg.ddim_eta = 1.5;
        assert!(cfg.validate(50).is_err());
        cfg.ddim_eta = 0.0;
        cfg.strategy = SamplingStrategy::Ddpm;
        assert_eq!(cfg.timesteps(50).unwrap().len(), 50);
    }
}
