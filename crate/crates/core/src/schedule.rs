//! Noise schedules and the closed-form forward (noising) process.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{bail, Error, Result};

pub const LINEAR_BETA_START: f64 = 1e-4;
pub const LINEAR_BETA_END: f64 = 0.02;
pub const COSINE_OFFSET: f64 = 0.008;
pub const MAX_BETA: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Linear,
    Cosine,
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScheduleKind::Linear => "linear",
            ScheduleKind::Cosine => "cosine",
        })
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Self::Linear),
            "cosine" => Ok(Self::Cosine),
            other => bail!(Config, "unknown schedule kind {other:?} (linear | cosine)"),
        }
    }
}

/// Per-step variances and their cumulative products. Index `k` in the public
/// accessors is the noise level `1..=K`; level 0 is the clean signal.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    kind: ScheduleKind,
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
    signal_scale: f64,
}

fn cosine_f(k: f64, steps: f64) -> f64 {
    let u = (k / steps + COSINE_OFFSET) / (1.0 + COSINE_OFFSET) * std::f64::consts::FRAC_PI_2;
    u.cos().powi(2)
}

impl NoiseSchedule {
    pub fn new(kind: ScheduleKind, steps: usize, signal_scale: f64) -> Result<Self> {
        if steps == 0 {
            bail!(Config, "schedule needs at least one diffusion step");
        }
        if !(signal_scale > 0.0 && signal_scale.is_finite()) {
            bail!(Config, "signal scale must be positive, got {signal_scale}");
        }
        let betas: Vec<f64> = match kind {
            ScheduleKind::Linear => {
                if steps == 1 {
                    vec![LINEAR_BETA_START]
                } else {
                    let span = LINEAR_BETA_END - LINEAR_BETA_START;
                    (0..steps)
                        .map(|i| LINEAR_BETA_START + span * i as f64 / (steps - 1) as f64)
                        .collect()
                }
            }
            ScheduleKind::Cosine => {
                let k_total = steps as f64;
                let f0 = cosine_f(0.0, k_total);
                (1..=steps)
                    .map(|k| {
                        let prev = cosine_f((k - 1) as f64, k_total) / f0;
                        let cur = cosine_f(k as f64, k_total) / f0;
                        (1.0 - cur / prev).min(MAX_BETA)
                    })
                    .collect()
            }
        };
        Self::from_betas(kind, betas, signal_scale)
    }

    /// Builds a schedule from explicit betas; alphas and cumulative products
    /// are always derived, never stored independently.
    pub fn from_betas(kind: ScheduleKind, betas: Vec<f64>, signal_scale: f64) -> Result<Self> {
        if betas.is_empty() {
            bail!(Config, "empty beta sequence");
        }
        if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            bail!(Config, "beta {b} outside (0, 1)");
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let alpha_bars: Vec<f64> = alphas
            .iter()
            .scan(1.0, |acc, a| {
                *acc *= a;
                Some(*acc)
            })
            .collect();
        Ok(Self {
            kind,
            betas,
            alphas,
            alpha_bars,
            signal_scale,
        })
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn signal_scale(&self) -> f64 {
        self.signal_scale
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    fn check_level(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.steps() {
            bail!(Contract, "noise level {k} outside 1..={}", self.steps());
        }
        Ok(())
    }

    pub fn beta(&self, k: usize) -> Result<f64> {
        self.check_level(k)?;
        Ok(self.betas[k - 1])
    }

    pub fn alpha(&self, k: usize) -> Result<f64> {
        self.check_level(k)?;
        Ok(self.alphas[k - 1])
    }

    /// ᾱ at level `k`, with ᾱ₀ = 1.
    pub fn alpha_bar(&self, k: usize) -> Result<f64> {
        if k == 0 {
            return Ok(1.0);
        }
        self.check_level(k)?;
        Ok(self.alpha_bars[k - 1])
    }

    /// `x_k = sqrt(ᾱ_k)·x0 + sqrt(1 − ᾱ_k)·noise`.
    pub fn forward_diffuse(&self, x0: &[f64], k: usize, noise: &[f64]) -> Result<Vec<f64>> {
        let ab = self.alpha_bar(k)?;
        if k == 0 {
            bail!(Contract, "forward_diffuse needs k >= 1");
        }
        if noise.len() != x0.len() {
            bail!(Contract, "noise length {} vs signal length {}", noise.len(), x0.len());
        }
        let (s, n) = (ab.sqrt(), (1.0 - ab).sqrt());
        Ok(x0.iter().zip(noise).map(|(x, e)| s * x + n * e).collect())
    }

    /// One Markov step `x_k = sqrt(α_k)·x_{k−1} + sqrt(β_k)·noise`.
    pub fn forward_step(&self, x_prev: &[f64], k: usize, noise: &[f64]) -> Result<Vec<f64>> {
        let (a, b) = (self.alpha(k)?, self.beta(k)?);
        if noise.len() != x_prev.len() {
            bail!(Contract, "noise length {} vs signal length {}", noise.len(), x_prev.len());
        }
        let (s, n) = (a.sqrt(), b.sqrt());
        Ok(x_prev.iter().zip(noise).map(|(x, e)| s * x + n * e).collect())
    }
}

/// Evenly spaced, strictly decreasing timesteps from `steps` down to 1.
pub fn ddim_subsequence(steps: usize, eval_steps: usize) -> Result<Vec<usize>> {
    if eval_steps == 0 {
        bail!(Config, "eval_steps must be at least 1");
    }
    if eval_steps > steps {
        bail!(
            Config,
            "cannot evaluate with {eval_steps} sampling steps on a model trained with {steps}"
        );
    }
    if eval_steps == 1 {
        return Ok(vec![steps]);
    }
    let stride = (steps - 1) as f64 / (eval_steps - 1) as f64;
    Ok((0..eval_steps)
        .map(|i| (steps as f64 - stride * i as f64).round() as usize)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_linear_step_takes_range_start() {
        let s = NoiseSchedule::new(ScheduleKind::Linear, 1, 1.0).unwrap();
        assert_eq!(s.betas(), &[1e-4]);
        assert!((s.alpha_bar(1).unwrap() - 0.9999).abs() < 1e-15);
    }

    #[test]
    fn linear_endpoints() {
        let s = NoiseSchedule::new(ScheduleKind::Linear, 1000, 1.0).unwrap();
        assert_eq!(s.beta(1).unwrap(), 1e-4);
        assert!((s.beta(1000).unwrap() - 0.02).abs() < 1e-15);
    }

    #[test]
    fn cosine_matches_closed_form() {
        let k_total = 50usize;
        let s = NoiseSchedule::new(ScheduleKind::Cosine, k_total, 1.0).unwrap();
        let f = |k: f64| {
            ((k / 50.0 + 0.008) / 1.008 * std::f64::consts::PI / 2.0)
                .cos()
                .powi(2)
        };
        for k in 1..k_total {
            let direct = f(k as f64) / f(0.0);
            assert!((s.alpha_bar(k).unwrap() - direct).abs() < 1e-12, "k={k}");
        }
        // the last step is clipped
        assert_eq!(s.beta(50).unwrap(), MAX_BETA);
        let ab = |k| s.alpha_bar(k).unwrap();
        assert!(ab(50) < ab(25) && ab(25) < ab(1) && ab(1) < 1.0);
    }

    #[test]
    fn alpha_bars_are_derived_from_betas() {
        for kind in [ScheduleKind::Linear, ScheduleKind::Cosine] {
            for steps in [1, 10, 50, 1000] {
                let s = NoiseSchedule::new(kind, steps, 1.0).unwrap();
                let mut acc = 1.0;
                for k in 1..=steps {
                    acc *= 1.0 - s.beta(k).unwrap();
                    assert!((acc - s.alpha_bar(k).unwrap()).abs() <= 1e-12);
                    assert!(s.beta(k).unwrap() > 0.0 && s.beta(k).unwrap() < 1.0);
                    if k > 1 {
                        assert!(s.alpha_bar(k).unwrap() < s.alpha_bar(k - 1).unwrap());
                    }
                }
                assert!(s.alpha_bar(steps).unwrap() < 1.0);
            }
        }
    }

    #[test]
    fn config_errors() {
        assert!(matches!(
            NoiseSchedule::new(ScheduleKind::Linear, 0, 1.0),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            NoiseSchedule::new(ScheduleKind::Cosine, 10, 0.0),
            Err(Error::Config(_))
        ));
        assert!("sigmoid".parse::<ScheduleKind>().is_err());
    }

    #[test]
    fn forward_diffuse_edge_cases() {
        let s = NoiseSchedule::new(ScheduleKind::Linear, 1000, 1.0).unwrap();
        let x0 = [1.0, -1.0, 0.5];
        let zero = [0.0; 3];
        let xk = s.forward_diffuse(&x0, 10, &zero).unwrap();
        let r = s.alpha_bar(10).unwrap().sqrt();
        for (a, b) in xk.iter().zip(&x0) {
            assert!((a - r * b).abs() < 1e-15);
        }
        let eps = [0.3, -1.2, 2.0];
        let late = s.forward_diffuse(&x0, 1000, &eps).unwrap();
        for (a, e) in late.iter().zip(&eps) {
            assert!((a - e).abs() < 1e-2);
        }
        assert!(matches!(s.forward_diffuse(&x0, 0, &eps), Err(Error::Contract(_))));
        assert!(matches!(s.forward_diffuse(&x0, 1001, &eps), Err(Error::Contract(_))));
        assert!(s.forward_diffuse(&x0, 1, &eps[..2]).is_err());
    }

    #[test]
    fn subsequences() {
        assert_eq!(ddim_subsequence(50, 50).unwrap(), (1..=50).rev().collect::<Vec<_>>());
        assert_eq!(ddim_subsequence(10, 1).unwrap(), vec![10]);
        // 50 down to 1 in 9 strides of 49/9, rounded by hand
        assert_eq!(
            ddim_subsequence(50, 10).unwrap(),
            vec![50, 45, 39, 34, 28, 23, 17, 12, 6, 1]
        );
        assert!(matches!(ddim_subsequence(10, 50), Err(Error::Config(_))));
        assert!(ddim_subsequence(10, 0).is_err());
    }
}
