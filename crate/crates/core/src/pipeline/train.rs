use serde::Serialize;

use super::config::TrainConfig;
use super::model::Model;
use crate::corpus::Corpus;
use crate::denoiser::{predict_x0_graph, split_decoder, timestep_embed_graph, BoundDenoiser, Direction};
use crate::encoders::{encode_text_batch, encode_video_batch, text_frame_attention_graph, BoundEncoder};
use crate::error::{bail, Result};
use crate::numerics::{Adam, Graph, SeededRng, Tensor, Var};
use crate::objectives::{contrastive_loss_graph, generation_loss_graph, joint_target, similarity_matrix_graph};
use crate::schedule::NoiseSchedule;

/// Noise levels and Gaussian draws for every query of one batch, fixed
/// before the graph is built.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNoise {
    pub text_to_video: Vec<(usize, Vec<f64>)>,
    pub video_to_text: Vec<(usize, Vec<f64>)>,
}

impl BatchNoise {
    pub fn draw(batch: usize, steps: usize, rng: &mut SeededRng) -> Self {
        let mut side = || -> Vec<(usize, Vec<f64>)> {
            (0..batch)
                .map(|_| (rng.int_inclusive(1, steps), rng.normals(batch)))
                .collect()
        };
        let text_to_video = side();
        let video_to_text = side();
        Self {
            text_to_video,
            video_to_text,
        }
    }

    fn side(&self, direction: Direction) -> &[(usize, Vec<f64>)] {
        match direction {
            Direction::TextToVideo => &self.text_to_video,
            Direction::VideoToText => &self.video_to_text,
        }
    }
}

/// Loss nodes of one batch.
#[derive(Debug, Clone, Copy)]
pub struct LossNodes {
    pub total: Var,
    pub discrimination: Option<Var>,
    pub generation: Option<Var>,
}

/// Builds `L = L_D + λ·L_G` for one batch of paired items. The gallery of
/// every query is the batch itself.
#[allow(clippy::too_many_arguments)]
pub fn hybrid_loss(
    g: &mut Graph,
    enc: &BoundEncoder,
    den: &BoundDenoiser,
    texts: &[&Tensor],
    videos: &[&Tensor],
    noise: &BatchNoise,
    cfg: &TrainConfig,
    sched: &NoiseSchedule,
) -> Result<LossNodes> {
    let b = texts.len();
    if b == 0 || videos.len() != b {
        bail!(Input, "batch needs matching non-empty texts and videos ({b} vs {})", videos.len());
    }
    let tb = encode_text_batch(g, enc, texts)?;
    let vb = encode_video_batch(g, enc, videos)?;

    let discrimination = if cfg.strategy.uses_discrimination() {
        let s = similarity_matrix_graph(g, enc, &tb, &vb)?;
        Some(contrastive_loss_graph(g, s, cfg.contrastive_tau)?)
    } else {
        None
    };

    let generation = if cfg.strategy.uses_generation() {
        for dir in Direction::BOTH {
            if noise.side(dir).len() != b {
                bail!(Contract, "{dir} noise covers {} queries, batch has {b}", noise.side(dir).len());
            }
        }
        // C_v(t, v_j) for every pair, row j·B + t
        let mut per_video = Vec::with_capacity(b);
        let mut start = 0;
        for &len in &vb.segments {
            let frames = g.row_slice(vb.frames, start, len)?;
            per_video.push(text_frame_attention_graph(g, tb.pooled, frames, enc.text_frame_tau)?);
            start += len;
        }
        let conditioned = g.concat_rows(&per_video)?;

        let levels: Vec<usize> = Direction::BOTH
            .iter()
            .flat_map(|&d| noise.side(d).iter().map(|(k, _)| *k))
            .collect();
        let temb = timestep_embed_graph(g, den, &levels)?;
        let d = den.model_dim;

        let mut sides = Vec::with_capacity(2);
        for (side, dir) in Direction::BOTH.into_iter().enumerate() {
            let branch = den.branch(dir);
            let split = split_decoder(g, &branch, d)?;
            let mut losses = Vec::with_capacity(b);
            for (q, (k, eps)) in noise.side(dir).iter().enumerate() {
                let (query, cands) = match dir {
                    Direction::TextToVideo => {
                        let cands = g.gather_rows(conditioned, (0..b).map(|j| j * b + q).collect())?;
                        (g.row(tb.pooled, q)?, cands)
                    }
                    Direction::VideoToText => (g.row(vb.pooled, q)?, tb.pooled),
                };
                let target = joint_target(q, b, cfg.signal_scale, cfg.smoothing)?;
                let x_k = sched.forward_diffuse(&target.signal, *k, eps)?;
                let t = g.row(temb, side * b + q)?;
                let x0 = predict_x0_graph(g, den, &branch, split, query, cands, t, &x_k)?;
                losses.push(generation_loss_graph(g, x0, &target, cfg.loss)?);
            }
            let stacked = g.concat_rows(&losses)?;
            sides.push(g.mean(stacked)?);
        }
        let both = g.add(sides[0], sides[1])?;
        Some(g.scale(both, 0.5)?)
    } else {
        None
    };

    let total = match (discrimination, generation) {
        (Some(ld), Some(lg)) => {
            let weighted = g.scale(lg, cfg.lambda)?;
            g.add(ld, weighted)?
        }
        (Some(ld), None) => ld,
        (None, Some(lg)) => g.scale(lg, cfg.lambda)?,
        (None, None) => unreachable!("every strategy trains at least one objective"),
    };
    Ok(LossNodes {
        total,
        discrimination,
        generation,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub total: f64,
    pub discrimination: f64,
    pub generation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: Model,
    pub losses: Vec<EpochLoss>,
}

/// Trains from a fresh initialization on every pair of `corpus`.
pub fn train(corpus: &Corpus, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let model = Model::init(cfg, corpus.input_dim())?;
    train_from(model, corpus, cfg.epochs)
}

/// Continues training `model` for `epochs` more epochs with its own config.
pub fn train_from(mut model: Model, corpus: &Corpus, epochs: usize) -> Result<TrainOutcome> {
    let cfg = model.config.clone();
    if corpus.is_empty() {
        bail!(Input, "cannot train on an empty corpus");
    }
    if corpus.len() < 2 {
        bail!(Input, "training needs at least 2 pairs, got {}", corpus.len());
    }
    if cfg.batch_size > corpus.len() {
        bail!(Config, "batch size {} exceeds corpus size {}", cfg.batch_size, corpus.len());
    }
    if corpus.input_dim() != model.input_dim() {
        bail!(Input, "corpus width {} vs model width {}", corpus.input_dim(), model.input_dim());
    }
    corpus.validate()?;

    let root = SeededRng::new(cfg.seed);
    let mut order_rng = root.fork(1);
    let mut noise_rng = SeededRng::from_state_string(&model.rng_state)?;
    let mut adam = Adam::new(cfg.learning_rate);
    let mut losses = Vec::with_capacity(epochs);

    for epoch in 0..epochs {
        let mut order: Vec<usize> = (0..corpus.len()).collect();
        order_rng.shuffle(&mut order);
        let (mut sum_t, mut sum_d, mut sum_g, mut batches) = (0.0, 0.0, 0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let texts: Vec<&Tensor> = chunk.iter().map(|&i| &corpus.texts[i]).collect();
            let videos: Vec<&Tensor> = chunk.iter().map(|&i| &corpus.videos[i]).collect();
            let noise = BatchNoise::draw(chunk.len(), cfg.steps, &mut noise_rng);

            let mut g = Graph::new();
            let enc = model.encoder.bind(&mut g, true);
            let den = model.denoiser.bind(&mut g, true);
            let nodes = hybrid_loss(&mut g, &enc, &den, &texts, &videos, &noise, &cfg, &model.schedule)?;
            let total = g.value(nodes.total).item();
            if !total.is_finite() {
                bail!(Numeric, "loss became {total} at epoch {epoch}, batch {batches}");
            }
            let grads = g.backward(nodes.total)?;
            let vars: Vec<Var> = enc.vars().into_iter().chain(den.vars()).collect();
            let grad_list: Vec<Tensor> = vars.iter().map(|&v| grads.get_or_zeros(v)).collect();
            adam.step(&mut model.tensors_mut(), &grad_list)?;

            sum_t += total;
            sum_d += nodes.discrimination.map(|v| g.value(v).item()).unwrap_or(0.0);
            sum_g += nodes.generation.map(|v| g.value(v).item()).unwrap_or(0.0);
            batches += 1;
        }
        let n = batches as f64;
        let row = EpochLoss {
            epoch,
            total: sum_t / n,
            discrimination: sum_d / n,
            generation: sum_g / n,
        };
        log::info!(
            "epoch {epoch}: loss {:.4} (disc {:.4}, gen {:.4})",
            row.total,
            row.discrimination,
            row.generation
        );
        losses.push(row);
    }
    model.rng_state = noise_rng.state_string();
    Ok(TrainOutcome { model, losses })
}
