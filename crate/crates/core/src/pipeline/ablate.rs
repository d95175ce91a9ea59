//! One-factor sweeps over training and sampling choices.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::{EvalConfig, RunConfig, Strategy, TrainConfig};
use super::eval::{evaluate_encoded, EncodedCorpus, EvalReport};
use super::train::train;
use crate::corpus::Corpus;
use crate::denoiser::Direction;
use crate::error::{bail, Error, Result};
use crate::objectives::LossKind;
use crate::sampler::SamplingStrategy;
use crate::schedule::ScheduleKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Axis {
    LossType,
    Sampling,
    Schedule,
    Strategy,
    Steps,
    Scale,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::LossType => "loss-type",
            Axis::Sampling => "sampling",
            Axis::Schedule => "schedule",
            Axis::Strategy => "strategy",
            Axis::Steps => "steps",
            Axis::Scale => "scale",
        })
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "loss-type" => Ok(Self::LossType),
            "sampling" => Ok(Self::Sampling),
            "schedule" => Ok(Self::Schedule),
            "strategy" => Ok(Self::Strategy),
            "steps" => Ok(Self::Steps),
            "scale" => Ok(Self::Scale),
            other => bail!(
                Config,
                "unknown ablation axis {other:?} (loss-type | sampling | schedule | strategy | steps | scale)"
            ),
        }
    }
}

/// Values swept on the axes that take numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepValues {
    pub train_steps: Vec<usize>,
    pub eval_steps: Vec<usize>,
    pub scales: Vec<f64>,
}

impl Default for SweepValues {
    fn default() -> Self {
        Self {
            train_steps: vec![10, 50, 100],
            eval_steps: vec![10, 50, 100],
            scales: vec![0.1, 0.5, 1.0, 1.5, 2.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationCell {
    pub label: String,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

/// Every sweep point of `axis`, each a full train and eval configuration.
pub fn plan(axis: Axis, base: &RunConfig, values: &SweepValues) -> Vec<AblationCell> {
    let cell = |label: String, train: TrainConfig, eval: EvalConfig| AblationCell { label, train, eval };
    let (t, e) = (&base.train, &base.eval);
    match axis {
        Axis::LossType => [LossKind::Kl, LossKind::Mse]
            .into_iter()
            .map(|loss| cell(loss.to_string(), TrainConfig { loss, ..t.clone() }, e.clone()))
            .collect(),
        Axis::Sampling => [SamplingStrategy::Ddpm, SamplingStrategy::Ddim]
            .into_iter()
            .map(|sampling| cell(sampling.to_string(), t.clone(), EvalConfig { sampling, ..e.clone() }))
            .collect(),
        Axis::Schedule => [ScheduleKind::Linear, ScheduleKind::Cosine]
            .into_iter()
            .map(|schedule| cell(schedule.to_string(), TrainConfig { schedule, ..t.clone() }, e.clone()))
            .collect(),
        Axis::Strategy => Strategy::ALL
            .into_iter()
            .map(|strategy| cell(strategy.to_string(), TrainConfig { strategy, ..t.clone() }, e.clone()))
            .collect(),
        Axis::Steps => values
            .train_steps
            .iter()
            .flat_map(|&k| {
                values.eval_steps.iter().map(move |&s| {
                    cell(
                        format!("train{k}-eval{s}"),
                        TrainConfig { steps: k, ..t.clone() },
                        EvalConfig {
                            eval_steps: Some(s),
                            ..e.clone()
                        },
                    )
                })
            })
            .collect(),
        Axis::Scale => values
            .scales
            .iter()
            .map(|&signal_scale| {
                cell(
                    format!("{signal_scale}"),
                    TrainConfig {
                        signal_scale,
                        ..t.clone()
                    },
                    e.clone(),
                )
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationOutcome {
    pub axis: Axis,
    pub label: String,
    pub train_steps: usize,
    pub eval_steps: Option<usize>,
    pub report: Option<EvalReport>,
    /// Why the cell could not be evaluated (infeasible grid cells).
    pub error: Option<String>,
}

/// Trains each distinct configuration once and evaluates every cell on
/// `test`. Cells that fail with a configuration error are reported, not
/// propagated.
pub fn ablate(
    axis: Axis,
    base: &RunConfig,
    values: &SweepValues,
    train_set: &Corpus,
    test_set: &Corpus,
    direction: Direction,
) -> Result<Vec<AblationOutcome>> {
    let cells = plan(axis, base, values);
    let mut trained: Vec<(TrainConfig, super::model::Model, EncodedCorpus)> = Vec::new();
    let mut out = Vec::with_capacity(cells.len());
    for c in cells {
        let idx = match trained.iter().position(|(cfg, ..)| *cfg == c.train) {
            Some(i) => i,
            None => {
                log::info!("ablate {axis}: training {}", c.label);
                let model = train(train_set, &c.train)?.model;
                let enc = EncodedCorpus::new(&model, test_set)?;
                trained.push((c.train.clone(), model, enc));
                trained.len() - 1
            }
        };
        let (_, model, enc) = &trained[idx];
        let (report, error) = match evaluate_encoded(model, enc, direction, &c.eval) {
            Ok(r) => (Some(r), None),
            Err(Error::Config(msg)) => (None, Some(msg)),
            Err(e) => return Err(e),
        };
        out.push(AblationOutcome {
            axis,
            label: c.label,
            train_steps: c.train.steps,
            eval_steps: c.eval.eval_steps,
            report,
            error,
        });
    }
    Ok(out)
}
