//! Query-candidate attention denoiser.
//!
//! Given a query representation, `N` candidate representations, the noisy
//! joint-distribution signal `x_k` and the noise level `k`, the network
//! predicts the clean signal `x̂₀` as one logit per candidate:
//!
//! ```text
//! Q = W_Q(query + Proj(k))      K, V = W_K, W_V(candidate_j + Proj(k))
//! E = Softmax(Q Kᵀ + x_k) V
//! x̂₀_j = Decoder([candidate_j, E])
//! ```
//!
//! Query and candidate representations are scaled to unit length on entry.
//! Each retrieval direction owns its projections and decoder; the
//! timestep embedding `Proj` is shared.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::encoders::sinusoidal;
use crate::error::{bail, Error, Result};
use crate::numerics::params::{init_matrix, param_group};
use crate::numerics::{softmax, Graph, SeededRng, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "t2v")]
    TextToVideo,
    #[serde(rename = "v2t")]
    VideoToText,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::TextToVideo, Direction::VideoToText];
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::TextToVideo => "t2v",
            Direction::VideoToText => "v2t",
        })
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "t2v" | "text-to-video" => Ok(Self::TextToVideo),
            "v2t" | "video-to-text" => Ok(Self::VideoToText),
            other => bail!(Config, "unknown direction {other:?} (t2v | v2t)"),
        }
    }
}

param_group! {
    /// Projections and decoder for one retrieval direction. `dec_w1` is
    /// `2D×H`: its first `D` rows read the candidate, the rest read `E`.
    BranchParams => BoundBranch {
        wq, wk, wv, dec_w1, dec_b1, dec_w2, dec_b2,
    }
}

param_group! {
    /// `Proj(k)`: sinusoidal features through a two-layer perceptron.
    TimestepParams => BoundTimestep {
        w1, b1, w2, b2,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserParams {
    pub text_to_video: BranchParams,
    pub video_to_text: BranchParams,
    pub timestep: TimestepParams,
    /// Number of training noise levels `K`.
    pub steps: usize,
    /// Divide `Q Kᵀ` by `sqrt(D)` before adding `x_k`. Off by default.
    pub scaled_attention: bool,
}

#[derive(Debug, Clone)]
pub struct BoundDenoiser {
    pub text_to_video: BoundBranch,
    pub video_to_text: BoundBranch,
    pub timestep: BoundTimestep,
    pub steps: usize,
    pub scaled_attention: bool,
    pub model_dim: usize,
}

impl BoundDenoiser {
    /// Handles in the order of [`DenoiserParams::tensors_mut`].
    pub fn vars(&self) -> Vec<Var> {
        let mut out = self.text_to_video.vars();
        out.extend(self.video_to_text.vars());
        out.extend(self.timestep.vars());
        out
    }

    pub fn branch(&self, direction: Direction) -> BoundBranch {
        match direction {
            Direction::TextToVideo => self.text_to_video,
            Direction::VideoToText => self.video_to_text,
        }
    }
}

impl BranchParams {
    fn init(d: usize, hidden: usize, rng: &mut SeededRng) -> Self {
        Self {
            wq: init_matrix(rng, d, d),
            wk: init_matrix(rng, d, d),
            wv: init_matrix(rng, d, d),
            dec_w1: init_matrix(rng, 2 * d, hidden),
            dec_b1: Tensor::zeros(1, hidden),
            dec_w2: init_matrix(rng, hidden, 1),
            dec_b2: Tensor::zeros(1, 1),
        }
    }
}

impl DenoiserParams {
    pub fn init(model_dim: usize, hidden: usize, steps: usize, rng: &mut SeededRng) -> Self {
        let timestep = TimestepParams {
            w1: init_matrix(rng, model_dim, model_dim),
            b1: Tensor::zeros(1, model_dim),
            w2: init_matrix(rng, model_dim, model_dim),
            b2: Tensor::zeros(1, model_dim),
        };
        Self {
            text_to_video: BranchParams::init(model_dim, hidden, rng),
            video_to_text: BranchParams::init(model_dim, hidden, rng),
            timestep,
            steps,
            scaled_attention: false,
        }
    }

    pub fn model_dim(&self) -> usize {
        self.timestep.w1.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.text_to_video.dec_w1.cols()
    }

    pub fn branch(&self, direction: Direction) -> &BranchParams {
        match direction {
            Direction::TextToVideo => &self.text_to_video,
            Direction::VideoToText => &self.video_to_text,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.model_dim();
        let h = self.hidden_dim();
        for (name, b) in [("t2v", &self.text_to_video), ("v2t", &self.video_to_text)] {
            for (field, t) in [("wq", &b.wq), ("wk", &b.wk), ("wv", &b.wv)] {
                if t.shape() != [d, d] {
                    bail!(Config, "{name}.{field} has shape {:?}, expected {d}x{d}", t.shape());
                }
            }
            if b.dec_w1.shape() != [2 * d, h] || b.dec_w2.shape() != [h, 1] {
                bail!(Config, "{name} decoder shapes inconsistent with D={d}, H={h}");
            }
        }
        if self.steps == 0 {
            bail!(Config, "denoiser trained with zero steps");
        }
        Ok(())
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> BoundDenoiser {
        BoundDenoiser {
            text_to_video: self.text_to_video.bind(g, trainable),
            video_to_text: self.video_to_text.bind(g, trainable),
            timestep: self.timestep.bind(g, trainable),
            steps: self.steps,
            scaled_attention: self.scaled_attention,
            model_dim: self.model_dim(),
        }
    }

    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (prefix, b) in [("t2v", &self.text_to_video), ("v2t", &self.video_to_text)] {
            out.extend(b.named().into_iter().map(|(n, t)| (format!("{prefix}.{n}"), t)));
        }
        out.extend(self.timestep.named().into_iter().map(|(n, t)| (format!("timestep.{n}"), t)));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        out.extend(self.text_to_video.named_mut().into_iter().map(|(_, t)| t));
        out.extend(self.video_to_text.named_mut().into_iter().map(|(_, t)| t));
        out.extend(self.timestep.named_mut().into_iter().map(|(_, t)| t));
        out
    }

    /// `Proj(k)` for `0 <= k <= K`.
    pub fn timestep_embed(&self, k: usize) -> Result<Vec<f64>> {
        if k > self.steps {
            bail!(Contract, "noise level {k} exceeds trained steps {}", self.steps);
        }
        let t = &self.timestep;
        let s = sinusoidal(k as f64, self.model_dim());
        let h = affine(&s, &t.w1, &t.b1);
        let h: Vec<f64> = h.into_iter().map(|v| v.max(0.0)).collect();
        Ok(affine(&h, &t.w2, &t.b2))
    }

    /// Caches everything about one query and its gallery that does not
    /// depend on `k` or `x_k`, for repeated calls during sampling.
    pub fn prepare(
        &self,
        query: &[f64],
        candidates: &Tensor,
        direction: Direction,
    ) -> Result<PreparedQuery<'_>> {
        let d = self.model_dim();
        if candidates.rows() == 0 {
            bail!(Input, "empty candidate gallery");
        }
        if query.len() != d || candidates.cols() != d {
            bail!(
                Dimension,
                "query width {} / candidate width {} vs model width {d}",
                query.len(),
                candidates.cols()
            );
        }
        let branch = self.branch(direction);
        let query = unit(query);
        let mut candidates = candidates.clone();
        for r in 0..candidates.rows() {
            let u = unit(candidates.row(r));
            candidates.row_mut(r).copy_from_slice(&u);
        }
        let candidates = &candidates;
        let dec_top = Tensor::from_rows(d, branch.dec_w1.cols(), branch.dec_w1.data()[..d * branch.dec_w1.cols()].to_vec());
        let mut cand_dec = candidates.matmul(&dec_top)?;
        for r in 0..cand_dec.rows() {
            for (o, b) in cand_dec.row_mut(r).iter_mut().zip(branch.dec_b1.data()) {
                *o += b;
            }
        }
        Ok(PreparedQuery {
            params: self,
            branch,
            query,
            cand_keys: candidates.matmul(&branch.wk)?,
            cand_values: candidates.matmul(&branch.wv)?,
            cand_dec,
        })
    }
}

/// Row norm floor when scaling inputs to unit length.
pub const INPUT_EPS: f64 = 1e-12;

fn unit(x: &[f64]) -> Vec<f64> {
    let n = x.iter().map(|v| v * v).sum::<f64>().sqrt().max(INPUT_EPS);
    x.iter().map(|v| v / n).collect()
}

fn affine(x: &[f64], w: &Tensor, b: &Tensor) -> Vec<f64> {
    let mut out = b.data().to_vec();
    for (k, xv) in x.iter().enumerate() {
        if *xv == 0.0 {
            continue;
        }
        for (o, wv) in out.iter_mut().zip(w.row(k)) {
            *o += xv * wv;
        }
    }
    out
}

/// A query bound to its gallery, ready for repeated `x̂₀` predictions.
#[derive(Debug, Clone)]
pub struct PreparedQuery<'a> {
    params: &'a DenoiserParams,
    branch: &'a BranchParams,
    query: Vec<f64>,
    cand_keys: Tensor,
    cand_values: Tensor,
    cand_dec: Tensor,
}

impl PreparedQuery<'_> {
    pub fn gallery_size(&self) -> usize {
        self.cand_keys.rows()
    }

    pub fn predict_x0(&self, x_k: &[f64], k: usize) -> Result<Vec<f64>> {
        let n = self.gallery_size();
        if x_k.len() != n {
            bail!(Contract, "x_k has length {} but the gallery has {n}", x_k.len());
        }
        if k == 0 {
            bail!(Contract, "predict_x0 needs a noise level k >= 1");
        }
        let b = self.branch;
        let d = self.query.len();
        let temb = self.params.timestep_embed(k)?;
        let q_in: Vec<f64> = self.query.iter().zip(&temb).map(|(a, t)| a + t).collect();
        let zeros = Tensor::zeros(1, d);
        let q = affine(&q_in, &b.wq, &zeros);
        let tk = affine(&temb, &b.wk, &zeros);
        let tv = affine(&temb, &b.wv, &zeros);

        let scale = if self.params.scaled_attention {
            1.0 / (d as f64).sqrt()
        } else {
            1.0
        };
        let q_tk = crate::numerics::dot(&q, &tk);
        let logits: Vec<f64> = (0..n)
            .map(|j| (crate::numerics::dot(&q, self.cand_keys.row(j)) + q_tk) * scale + x_k[j])
            .collect();
        let attn = softmax(&logits);
        let mut e = tv;
        for (j, a) in attn.iter().enumerate() {
            for (o, v) in e.iter_mut().zip(self.cand_values.row(j)) {
                *o += a * v;
            }
        }

        let h_dim = b.dec_w1.cols();
        let dec_bottom = Tensor::from_rows(d, h_dim, b.dec_w1.data()[d * h_dim..].to_vec());
        let ctx = affine(&e, &dec_bottom, &Tensor::zeros(1, h_dim));
        let w2 = b.dec_w2.data();
        let b2 = b.dec_b2.item();
        let out: Vec<f64> = (0..n)
            .map(|j| {
                self.cand_dec
                    .row(j)
                    .iter()
                    .zip(&ctx)
                    .zip(w2)
                    .map(|((c, x), w)| (c + x).max(0.0) * w)
                    .sum::<f64>()
                    + b2
            })
            .collect();
        if out.iter().any(|v| !v.is_finite()) {
            bail!(Numeric, "denoiser produced a non-finite logit at k={k}");
        }
        Ok(out)
    }
}

/// One-shot `x̂₀` prediction for a query against its gallery.
pub fn predict_x0(
    params: &DenoiserParams,
    query: &[f64],
    candidates: &Tensor,
    x_k: &[f64],
    k: usize,
    direction: Direction,
) -> Result<Vec<f64>> {
    params.prepare(query, candidates, direction)?.predict_x0(x_k, k)
}

/// Noisy joint-distribution signal over a gallery at one noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistState {
    pub signal: Vec<f64>,
    pub level: usize,
    pub direction: Direction,
}

impl JointDistState {
    /// Probability-space readout `softmax(signal)`.
    pub fn prob(&self) -> Vec<f64> {
        softmax(&self.signal)
    }
}

/// Sinusoidal features of a batch of noise levels through `Proj`, on a graph.
pub fn timestep_embed_graph(g: &mut Graph, den: &BoundDenoiser, levels: &[usize]) -> Result<Var> {
    let d = den.model_dim;
    let mut data = Vec::with_capacity(levels.len() * d);
    for &k in levels {
        if k > den.steps {
            bail!(Contract, "noise level {k} exceeds trained steps {}", den.steps);
        }
        data.extend(sinusoidal(k as f64, d));
    }
    let s = g.constant(Tensor::from_rows(levels.len(), d, data));
    let t = &den.timestep;
    let h = g.matmul(s, t.w1)?;
    let h = g.add_row(h, t.b1)?;
    let h = g.relu(h)?;
    let h = g.matmul(h, t.w2)?;
    g.add_row(h, t.b2)
}

/// Decoder weight halves, sliced once per graph and shared across queries.
#[derive(Debug, Clone, Copy)]
pub struct DecoderSplit {
    pub candidate: Var,
    pub context: Var,
}

pub fn split_decoder(g: &mut Graph, branch: &BoundBranch, model_dim: usize) -> Result<DecoderSplit> {
    Ok(DecoderSplit {
        candidate: g.row_slice(branch.dec_w1, 0, model_dim)?,
        context: g.row_slice(branch.dec_w1, model_dim, model_dim)?,
    })
}

/// Graph version of [`PreparedQuery::predict_x0`] for training: returns
/// the `1×N` logit row.
#[allow(clippy::too_many_arguments)]
pub fn predict_x0_graph(
    g: &mut Graph,
    den: &BoundDenoiser,
    branch: &BoundBranch,
    split: DecoderSplit,
    query: Var,
    candidates: Var,
    temb: Var,
    x_k: &[f64],
) -> Result<Var> {
    let n = g.value(candidates).rows();
    if x_k.len() != n {
        bail!(Contract, "x_k has length {} but the gallery has {n}", x_k.len());
    }
    let query = g.normalize_rows(query, INPUT_EPS)?;
    let candidates = g.normalize_rows(candidates, INPUT_EPS)?;
    let q_in = g.add(query, temb)?;
    let q = g.matmul(q_in, branch.wq)?;
    let c_in = g.add_row(candidates, temb)?;
    let keys = g.matmul(c_in, branch.wk)?;
    let values = g.matmul(c_in, branch.wv)?;
    let mut logits = g.matmul_t(q, keys)?;
    if den.scaled_attention {
        logits = g.scale(logits, 1.0 / (den.model_dim as f64).sqrt())?;
    }
    let bias = g.constant(Tensor::row_vector(x_k.to_vec()));
    let logits = g.add(logits, bias)?;
    let attn = g.softmax_rows(logits)?;
    let e = g.matmul(attn, values)?;

    let ctx = g.matmul(e, split.context)?;
    let ctx = g.add(ctx, branch.dec_b1)?;
    let h = g.matmul(candidates, split.candidate)?;
    let h = g.add_row(h, ctx)?;
    let h = g.relu(h)?;
    let out = g.matmul(h, branch.dec_w2)?;
    let out = g.add_row(out, branch.dec_b2)?;
    g.transpose(out)
}
