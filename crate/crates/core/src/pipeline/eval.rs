use serde::{Deserialize, Serialize};

use super::config::EvalConfig;
use super::metrics::{auroc, fuse_scores, rank_of, Histogram, RetrievalMetrics};
use super::model::Model;
use crate::corpus::Corpus;
use crate::denoiser::Direction;
use crate::encoders::{encode_text, encode_video, text_frame_attention, EncodedText, EncodedVideo};
use crate::error::{bail, Result};
use crate::numerics::{SeededRng, Tensor};
use crate::objectives::{text_view, video_view, weighted_max_alignment};
use crate::sampler::{sample, SamplerConfig, SamplingStrategy, X0Predictor};
use crate::schedule::NoiseSchedule;

/// A corpus pushed through the encoders, with its full similarity matrix.
#[derive(Debug, Clone)]
pub struct EncodedCorpus {
    pub texts: Vec<EncodedText>,
    pub videos: Vec<EncodedVideo>,
    /// Entry `(t, v)`: text `t` against video `v`.
    pub similarity: Tensor,
}

impl EncodedCorpus {
    pub fn new(model: &Model, corpus: &Corpus) -> Result<Self> {
        if corpus.is_empty() {
            bail!(Input, "cannot evaluate on an empty corpus");
        }
        if corpus.input_dim() != model.input_dim() {
            bail!(
                Input,
                "corpus feature width {} does not match the model's {}",
                corpus.input_dim(),
                model.input_dim()
            );
        }
        let p = &model.encoder;
        let texts = corpus.texts.iter().map(|t| encode_text(t, p)).collect::<Result<Vec<_>>>()?;
        let videos = corpus.videos.iter().map(|v| encode_video(v, p)).collect::<Result<Vec<_>>>()?;
        let tv = texts.iter().map(|t| text_view(t, p)).collect::<Result<Vec<_>>>()?;
        let vv = videos.iter().map(|v| video_view(v, p)).collect::<Result<Vec<_>>>()?;
        let mut similarity = Tensor::zeros(tv.len(), vv.len());
        for (i, t) in tv.iter().enumerate() {
            for (j, v) in vv.iter().enumerate() {
                similarity.set(i, j, weighted_max_alignment(t, v)?);
            }
        }
        Ok(Self {
            texts,
            videos,
            similarity,
        })
    }

    pub fn len(&self) -> usize {
        self.texts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.texts.is_empty()
    }

    /// Query representation and candidate matrix for query `q`.
    pub fn gallery(&self, q: usize, direction: Direction, text_frame_tau: f64) -> Result<(Vec<f64>, Tensor)> {
        let d = self.texts[0].pooled.len();
        match direction {
            Direction::TextToVideo => {
                let query = self.texts[q].pooled.clone();
                let mut rows = Vec::with_capacity(self.videos.len() * d);
                for v in &self.videos {
                    rows.extend(text_frame_attention(&query, &v.frames, text_frame_tau)?);
                }
                Ok((query, Tensor::from_rows(self.videos.len(), d, rows)))
            }
            Direction::VideoToText => {
                let query = self.videos[q].pooled();
                let rows = self.texts.iter().flat_map(|t| t.pooled.iter().copied()).collect();
                Ok((query, Tensor::from_rows(self.texts.len(), d, rows)))
            }
        }
    }

    /// Similarities of query `q` to every candidate.
    pub fn similarity_row(&self, q: usize, direction: Direction) -> Vec<f64> {
        match direction {
            Direction::TextToVideo => self.similarity.row(q).to_vec(),
            Direction::VideoToText => (0..self.similarity.rows()).map(|t| self.similarity.get(t, q)).collect(),
        }
    }
}

fn query_rng(seed: u64, q: usize, direction: Direction) -> SeededRng {
    let side = match direction {
        Direction::TextToVideo => 0,
        Direction::VideoToText => 1,
    };
    SeededRng::new(seed).fork(2 * q as u64 + side)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub direction: Direction,
    pub queries: usize,
    #[serde(flatten)]
    pub metrics: RetrievalMetrics,
    pub fusion_weight: f64,
    pub sampling: SamplingStrategy,
    pub eval_steps: usize,
    /// Positive-pair vs negative-pair separation of the fused scores.
    pub auroc: f64,
    /// 1-based rank of the ground truth, per query in corpus order.
    pub ranks: Vec<usize>,
    pub positive_hist: Histogram,
    pub negative_hist: Histogram,
}

impl EvalReport {
    pub fn r1(&self) -> f64 {
        self.metrics.r1
    }
}

/// Fused score rows for every query, in corpus order.
pub fn fused_scores(model: &Model, enc: &EncodedCorpus, direction: Direction, cfg: &EvalConfig) -> Result<Vec<Vec<f64>>> {
    let sampler = cfg.sampler(model.config.steps, model.config.signal_scale)?;
    let w = cfg.weight(model.config.strategy)?;
    let n = enc.len();
    let mut out = Vec::with_capacity(n);
    for q in 0..n {
        let sim = enc.similarity_row(q, direction);
        let prob = if w > 0.0 {
            let (query, cands) = enc.gallery(q, direction, model.encoder.text_frame_tau)?;
            let prepared = model.denoiser.prepare(&query, &cands, direction)?;
            let mut rng = query_rng(cfg.eval_seed, q, direction);
            sample(&prepared, &model.schedule, &sampler, &mut rng, false)?.prob
        } else {
            vec![1.0 / n as f64; n]
        };
        out.push(fuse_scores(&sim, &prob, w)?);
    }
    Ok(out)
}

/// Builds a report from per-query score rows whose ground truth sits on
/// the diagonal.
pub fn report_from_scores(
    rows: &[Vec<f64>],
    direction: Direction,
    fusion_weight: f64,
    sampler: &SamplerConfig,
    bins: usize,
) -> Result<EvalReport> {
    let ranks = rows
        .iter()
        .enumerate()
        .map(|(q, r)| rank_of(r, q))
        .collect::<Result<Vec<_>>>()?;
    let metrics = RetrievalMetrics::from_ranks(&ranks)?;
    metrics.check()?;
    let mut pos = Vec::with_capacity(rows.len());
    let mut neg = Vec::new();
    for (q, r) in rows.iter().enumerate() {
        for (j, &s) in r.iter().enumerate() {
            if j == q {
                pos.push(s);
            } else {
                neg.push(s);
            }
        }
    }
    let separation = if neg.is_empty() { 0.5 } else { auroc(&pos, &neg)? };
    let lo = pos.iter().chain(&neg).copied().fold(f64::INFINITY, f64::min);
    let hi = pos.iter().chain(&neg).copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(EvalReport {
        direction,
        queries: rows.len(),
        metrics,
        fusion_weight,
        sampling: sampler.strategy,
        eval_steps: sampler.eval_steps,
        auroc: separation,
        ranks,
        positive_hist: Histogram::new(&pos, lo, hi, bins)?,
        negative_hist: Histogram::new(&neg, lo, hi, bins)?,
    })
}

/// Ranks the whole corpus as the gallery for every query.
pub fn evaluate(model: &Model, corpus: &Corpus, direction: Direction, cfg: &EvalConfig) -> Result<EvalReport> {
    let enc = EncodedCorpus::new(model, corpus)?;
    evaluate_encoded(model, &enc, direction, cfg)
}

pub fn evaluate_encoded(model: &Model, enc: &EncodedCorpus, direction: Direction, cfg: &EvalConfig) -> Result<EvalReport> {
    let sampler = cfg.sampler(model.config.steps, model.config.signal_scale)?;
    let w = cfg.weight(model.config.strategy)?;
    let rows = fused_scores(model, enc, direction, cfg)?;
    report_from_scores(&rows, direction, w, &sampler, cfg.histogram_bins)
}

/// The same frozen model on an in-domain and an out-of-domain test set.
pub fn out_domain_eval(
    model: &Model,
    in_domain: &Corpus,
    out_domain: &Corpus,
    direction: Direction,
    cfg: &EvalConfig,
) -> Result<(EvalReport, EvalReport)> {
    if in_domain.input_dim() != out_domain.input_dim() {
        bail!(
            Input,
            "domains differ in feature width: {} vs {}",
            in_domain.input_dim(),
            out_domain.input_dim()
        );
    }
    Ok((
        evaluate(model, in_domain, direction, cfg)?,
        evaluate(model, out_domain, direction, cfg)?,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    /// Noise level of the state the row was read from.
    pub level: usize,
    pub prob: Vec<f64>,
}

/// Per-step distributions of one sampling chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceTable {
    pub direction: Direction,
    pub query_id: u32,
    pub positive: usize,
    pub rows: Vec<TraceRow>,
}

/// Samples one chain and tabulates `softmax(x_K)` followed by each
/// `softmax(x̂₀)`.
pub fn trace_with<P: X0Predictor + ?Sized>(
    model: &P,
    sched: &NoiseSchedule,
    cfg: &SamplerConfig,
    rng: &mut SeededRng,
    direction: Direction,
    query_id: u32,
    positive: usize,
) -> Result<TraceTable> {
    if positive >= model.gallery_size() {
        bail!(Contract, "positive {positive} outside gallery of {}", model.gallery_size());
    }
    let single = SamplerConfig { repeats: 1, ..*cfg };
    let out = sample(model, sched, &single, rng, true)?;
    let trace = out.trace.expect("trace requested");
    let rows = trace
        .rows()
        .into_iter()
        .enumerate()
        .map(|(step, (level, p))| TraceRow {
            step,
            level,
            prob: p.to_vec(),
        })
        .collect();
    Ok(TraceTable {
        direction,
        query_id,
        positive,
        rows,
    })
}

/// Trace for the query whose text (or video) id is `query_id`, against the
/// whole corpus as gallery.
pub fn diffusion_trace(
    model: &Model,
    corpus: &Corpus,
    query_id: u32,
    direction: Direction,
    cfg: &EvalConfig,
) -> Result<TraceTable> {
    let q = corpus
        .manifest
        .pairs
        .iter()
        .position(|p| match direction {
            Direction::TextToVideo => p.text_id == query_id,
            Direction::VideoToText => p.video_id == query_id,
        })
        .ok_or_else(|| crate::Error::Input(format!("no query with id {query_id} in the corpus")))?;
    let sampler = cfg.sampler(model.config.steps, model.config.signal_scale)?;
    let enc = EncodedCorpus::new(model, corpus)?;
    let (query, cands) = enc.gallery(q, direction, model.encoder.text_frame_tau)?;
    let prepared = model.denoiser.prepare(&query, &cands, direction)?;
    let mut rng = query_rng(cfg.eval_seed, q, direction);
    trace_with(&prepared, &model.schedule, &sampler, &mut rng, direction, query_id, q)
}

