//! Trainable token encoders and text-conditioned frame pooling.
//!
//! Words and frames arrive as rows of precomputed features (`D_in` wide).
//! Words get a linear projection; frames get a projection followed by a
//! small self-attention aggregator. Items in a batch are stored stacked,
//! with a segment length per item instead of padding, so reductions never
//! see filler rows.

use crate::error::{bail, Result};
use crate::numerics::params::{init_matrix, param_group};
use crate::numerics::{Graph, SeededRng, Tensor, Var};

param_group! {
    /// Linear maps from input features into the model width.
    TokenProjections => BoundProjections {
        word_w, word_b, frame_w, frame_b,
    }
}

param_group! {
    /// One residual self-attention block plus a residual feed-forward layer
    /// over the frames of a single video.
    AggregatorLayer => BoundAggregator {
        wq, wk, wv, ff_w1, ff_b1, ff_w2, ff_b2,
    }
}

param_group! {
    /// Token weighting heads: a two-layer perceptron per modality emitting
    /// one logit per token.
    WeightingHeads => BoundHeads {
        text_w1, text_b1, text_w2, text_b2,
        video_w1, video_b1, video_w2, video_b2,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub projections: TokenProjections,
    pub aggregator: Vec<AggregatorLayer>,
    pub heads: WeightingHeads,
    /// Temperature of the text-frame attention pooling.
    pub text_frame_tau: f64,
    /// Temperature of the contrastive objective.
    pub contrastive_tau: f64,
    /// Add sinusoidal frame positions before aggregation.
    pub frame_positions: bool,
    /// Bypass the weighting heads and average token alignments uniformly.
    pub uniform_token_weights: bool,
}

#[derive(Debug, Clone)]
pub struct BoundEncoder {
    pub projections: BoundProjections,
    pub aggregator: Vec<BoundAggregator>,
    pub heads: BoundHeads,
    pub text_frame_tau: f64,
    pub frame_positions: bool,
    pub uniform_token_weights: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderShape {
    pub input_dim: usize,
    pub model_dim: usize,
    pub aggregator_depth: usize,
}

impl EncoderParams {
    pub fn init(shape: EncoderShape, rng: &mut SeededRng) -> Self {
        let (di, d) = (shape.input_dim, shape.model_dim);
        let projections = TokenProjections {
            word_w: init_matrix(rng, di, d),
            word_b: Tensor::zeros(1, d),
            frame_w: init_matrix(rng, di, d),
            frame_b: Tensor::zeros(1, d),
        };
        let aggregator = (0..shape.aggregator_depth)
            .map(|_| AggregatorLayer {
                wq: init_matrix(rng, d, d),
                wk: init_matrix(rng, d, d),
                wv: init_matrix(rng, d, d),
                ff_w1: init_matrix(rng, d, d),
                ff_b1: Tensor::zeros(1, d),
                ff_w2: init_matrix(rng, d, d),
                ff_b2: Tensor::zeros(1, d),
            })
            .collect();
        let heads = WeightingHeads {
            text_w1: init_matrix(rng, d, d),
            text_b1: Tensor::zeros(1, d),
            text_w2: init_matrix(rng, d, 1),
            text_b2: Tensor::zeros(1, 1),
            video_w1: init_matrix(rng, d, d),
            video_b1: Tensor::zeros(1, d),
            video_w2: init_matrix(rng, d, 1),
            video_b2: Tensor::zeros(1, 1),
        };
        Self {
            projections,
            aggregator,
            heads,
            text_frame_tau: 1.0,
            contrastive_tau: 0.01,
            frame_positions: false,
            uniform_token_weights: false,
        }
    }

    pub fn shape(&self) -> EncoderShape {
        EncoderShape {
            input_dim: self.projections.word_w.rows(),
            model_dim: self.projections.word_w.cols(),
            aggregator_depth: self.aggregator.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.text_frame_tau > 0.0) {
            bail!(Config, "text-frame temperature must be positive, got {}", self.text_frame_tau);
        }
        if !(self.contrastive_tau > 0.0) {
            bail!(Config, "contrastive temperature must be positive, got {}", self.contrastive_tau);
        }
        if !self.named().iter().all(|(_, t)| t.is_finite()) {
            bail!(Numeric, "encoder weights contain non-finite values");
        }
        Ok(())
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> BoundEncoder {
        BoundEncoder {
            projections: self.projections.bind(g, trainable),
            aggregator: self.aggregator.iter().map(|l| l.bind(g, trainable)).collect(),
            heads: self.heads.bind(g, trainable),
            text_frame_tau: self.text_frame_tau,
            frame_positions: self.frame_positions,
            uniform_token_weights: self.uniform_token_weights,
        }
    }

    /// Every tensor with a stable dotted name, in binding order.
    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = self
            .projections
            .named()
            .into_iter()
            .map(|(n, t)| (format!("proj.{n}"), t))
            .collect();
        for (i, layer) in self.aggregator.iter().enumerate() {
            out.extend(layer.named().into_iter().map(|(n, t)| (format!("agg{i}.{n}"), t)));
        }
        out.extend(self.heads.named().into_iter().map(|(n, t)| (format!("heads.{n}"), t)));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> =
            self.projections.named_mut().into_iter().map(|(_, t)| t).collect();
        for layer in &mut self.aggregator {
            out.extend(layer.named_mut().into_iter().map(|(_, t)| t));
        }
        out.extend(self.heads.named_mut().into_iter().map(|(_, t)| t));
        out
    }
}

impl BoundEncoder {
    pub fn vars(&self) -> Vec<Var> {
        let mut out = self.projections.vars();
        for layer in &self.aggregator {
            out.extend(layer.vars());
        }
        out.extend(self.heads.vars());
        out
    }
}

/// A batch of encoded texts on a graph.
#[derive(Debug, Clone)]
pub struct TextBatch {
    /// Word-level features, all texts stacked (`ΣN_t × D`).
    pub words: Var,
    /// Pooled text representations `C_t`, one row per text.
    pub pooled: Var,
    pub segments: Vec<usize>,
}

/// A batch of encoded videos on a graph.
#[derive(Debug, Clone)]
pub struct VideoBatch {
    /// Aggregated frame features `F`, all videos stacked (`ΣN_v × D`).
    pub frames: Var,
    /// Mean frame feature per video; the video-side query representation.
    pub pooled: Var,
    pub segments: Vec<usize>,
}

fn stack_tokens(items: &[&Tensor], what: &str) -> Result<(Tensor, Vec<usize>)> {
    if items.is_empty() {
        bail!(Input, "no {what} to encode");
    }
    let cols = items[0].cols();
    let mut data = Vec::new();
    let mut segments = Vec::with_capacity(items.len());
    for (i, t) in items.iter().enumerate() {
        if t.rows() == 0 || t.is_empty() {
            bail!(Input, "{what} {i} has no tokens");
        }
        if t.cols() != cols {
            bail!(Dimension, "{what} {i} has width {} (expected {cols})", t.cols());
        }
        data.extend_from_slice(t.data());
        segments.push(t.rows());
    }
    let rows = segments.iter().sum();
    Ok((Tensor::from_rows(rows, cols, data), segments))
}

/// Sinusoidal features: `sin(p·ω_i)` in the first half, `cos(p·ω_i)` in the
/// second, `ω_i = 10000^(−i/half)`.
pub fn sinusoidal(position: f64, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for i in 0..half {
        let freq = (-(10000f64).ln() * i as f64 / half as f64).exp();
        out[i] = (position * freq).sin();
        out[half + i] = (position * freq).cos();
    }
    out
}

pub fn encode_text_batch(g: &mut Graph, enc: &BoundEncoder, texts: &[&Tensor]) -> Result<TextBatch> {
    let (stacked, segments) = stack_tokens(texts, "text")?;
    let x = g.constant(stacked);
    let p = &enc.projections;
    let h = g.matmul(x, p.word_w)?;
    let words = g.add_row(h, p.word_b)?;
    let pooled = g.segment_mean_rows(words, segments.clone())?;
    Ok(TextBatch {
        words,
        pooled,
        segments,
    })
}

pub fn encode_video_batch(
    g: &mut Graph,
    enc: &BoundEncoder,
    videos: &[&Tensor],
) -> Result<VideoBatch> {
    let (stacked, segments) = stack_tokens(videos, "video")?;
    let x = g.constant(stacked);
    let p = &enc.projections;
    let h = g.matmul(x, p.frame_w)?;
    let mut h = g.add_row(h, p.frame_b)?;
    let d = g.value(h).cols();

    if enc.frame_positions {
        let mut pos = Vec::with_capacity(g.value(h).len());
        for &len in &segments {
            for j in 0..len {
                pos.extend(sinusoidal(j as f64, d));
            }
        }
        let rows = g.value(h).rows();
        let pos = g.constant(Tensor::from_rows(rows, d, pos));
        h = g.add(h, pos)?;
    }

    let scale = 1.0 / (d as f64).sqrt();
    for layer in &enc.aggregator {
        let q = g.matmul(h, layer.wq)?;
        let k = g.matmul(h, layer.wk)?;
        let v = g.matmul(h, layer.wv)?;
        let mut outs = Vec::with_capacity(segments.len());
        let mut start = 0;
        for &len in &segments {
            let qs = g.row_slice(q, start, len)?;
            let ks = g.row_slice(k, start, len)?;
            let vs = g.row_slice(v, start, len)?;
            let logits = g.matmul_t(qs, ks)?;
            let logits = g.scale(logits, scale)?;
            let attn = g.softmax_rows(logits)?;
            outs.push(g.matmul(attn, vs)?);
            start += len;
        }
        let mixed = g.concat_rows(&outs)?;
        h = g.add(h, mixed)?;

        let f = g.matmul(h, layer.ff_w1)?;
        let f = g.add_row(f, layer.ff_b1)?;
        let f = g.relu(f)?;
        let f = g.matmul(f, layer.ff_w2)?;
        let f = g.add_row(f, layer.ff_b2)?;
        h = g.add(h, f)?;
    }
    let pooled = g.segment_mean_rows(h, segments.clone())?;
    Ok(VideoBatch {
        frames: h,
        pooled,
        segments,
    })
}

/// `Softmax(C_t Fᵀ / τ′) F` for every text row of `texts` against one
/// video's frames: `Q×D` in, `Q×D` out.
pub fn text_frame_attention_graph(g: &mut Graph, texts: Var, frames: Var, tau: f64) -> Result<Var> {
    if !(tau > 0.0) {
        bail!(Config, "text-frame temperature must be positive, got {tau}");
    }
    let logits = g.matmul_t(texts, frames)?;
    let logits = g.scale(logits, 1.0 / tau)?;
    let weights = g.softmax_rows(logits)?;
    g.matmul(weights, frames)
}

/// Plain-value text encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedText {
    /// `C_t`, length `D`.
    pub pooled: Vec<f64>,
    /// `N_t × D` word features.
    pub words: Tensor,
}

/// Plain-value video encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedVideo {
    /// `N_v × D` aggregated frame features (both `F` and the frame-level
    /// features used for token alignment).
    pub frames: Tensor,
}

impl EncodedVideo {
    pub fn pooled(&self) -> Vec<f64> {
        let (r, c) = (self.frames.rows(), self.frames.cols());
        (0..c)
            .map(|j| (0..r).map(|i| self.frames.get(i, j)).sum::<f64>() / r as f64)
            .collect()
    }
}

pub fn encode_text(tokens: &Tensor, params: &EncoderParams) -> Result<EncodedText> {
    let mut g = Graph::new();
    let enc = params.bind(&mut g, false);
    let batch = encode_text_batch(&mut g, &enc, &[tokens])?;
    Ok(EncodedText {
        pooled: g.value(batch.pooled).data().to_vec(),
        words: g.value(batch.words).clone(),
    })
}

pub fn encode_video(frames: &Tensor, params: &EncoderParams) -> Result<EncodedVideo> {
    let mut g = Graph::new();
    let enc = params.bind(&mut g, false);
    let batch = encode_video_batch(&mut g, &enc, &[frames])?;
    Ok(EncodedVideo {
        frames: g.value(batch.frames).clone(),
    })
}

/// Attention weights `Softmax(C_t Fᵀ / τ′)` over the rows of `frames`.
pub fn text_frame_weights(text: &[f64], frames: &Tensor, tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0) {
        bail!(Config, "text-frame temperature must be positive, got {tau}");
    }
    if text.len() != frames.cols() {
        bail!(Dimension, "text width {} vs frame width {}", text.len(), frames.cols());
    }
    if frames.rows() == 0 {
        bail!(Input, "no frames to attend over");
    }
    let logits: Vec<f64> = (0..frames.rows())
        .map(|j| crate::numerics::dot(text, frames.row(j)) / tau)
        .collect();
    Ok(crate::numerics::softmax(&logits))
}

/// Text-conditioned video representation `C_v`.
pub fn text_frame_attention(text: &[f64], frames: &Tensor, tau: f64) -> Result<Vec<f64>> {
    let w = text_frame_weights(text, frames, tau)?;
    let d = frames.cols();
    let mut out = vec![0.0; d];
    for (j, wj) in w.iter().enumerate() {
        for (o, f) in out.iter_mut().zip(frames.row(j)) {
            *o += wj * f;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(di: usize, d: usize, seed: u64) -> EncoderParams {
        EncoderParams::init(
            EncoderShape {
                input_dim: di,
                model_dim: d,
                aggregator_depth: 1,
            },
            &mut SeededRng::new(seed),
        )
    }

    #[test]
    fn single_token_pools_to_its_projection() {
        let p = params(4, 3, 1);
        let tok = Tensor::from_rows(1, 4, vec![0.5, -1.0, 2.0, 0.1]);
        let enc = encode_text(&tok, &p).unwrap();
        let proj = tok.matmul(&p.projections.word_w).unwrap();
        for (a, b) in enc.pooled.iter().zip(proj.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn duplicate_tokens_pool_like_one() {
        let p = params(4, 3, 2);
        let one = Tensor::from_rows(1, 4, vec![0.5, -1.0, 2.0, 0.1]);
        let three = Tensor::from_rows(3, 4, one.data().repeat(3));
        let a = encode_text(&one, &p).unwrap().pooled;
        let b = encode_text(&three, &p).unwrap().pooled;
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn pooled_text_matches_loop_mean() {
        let p = params(6, 4, 3);
        let mut rng = SeededRng::new(30);
        let toks = rng.gaussian(5, 6).unwrap();
        let enc = encode_text(&toks, &p).unwrap();
        let w = &p.projections.word_w;
        let mut expected = vec![0.0; 4];
        for i in 0..5 {
            for j in 0..4 {
                let mut acc = 0.0;
                for k in 0..6 {
                    acc += toks.get(i, k) * w.get(k, j);
                }
                expected[j] += acc / 5.0;
            }
        }
        for (a, b) in enc.pooled.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_inputs_are_rejected() {
        let p = params(4, 3, 1);
        let empty = Tensor::new(vec![0, 4], vec![]).unwrap();
        assert!(matches!(encode_text(&empty, &p), Err(crate::Error::Input(_))));
        assert!(matches!(encode_video(&empty, &p), Err(crate::Error::Input(_))));
    }

    fn linear(x: &[f64], w: &Tensor) -> Vec<f64> {
        (0..w.cols())
            .map(|j| x.iter().enumerate().map(|(k, v)| v * w.get(k, j)).sum())
            .collect()
    }

    fn hand_video(frames: &Tensor, p: &EncoderParams) -> Vec<Vec<f64>> {
        let layer = &p.aggregator[0];
        let d = p.shape().model_dim;
        let h: Vec<Vec<f64>> = (0..frames.rows())
            .map(|i| linear(frames.row(i), &p.projections.frame_w))
            .collect();
        let q: Vec<Vec<f64>> = h.iter().map(|r| linear(r, &layer.wq)).collect();
        let k: Vec<Vec<f64>> = h.iter().map(|r| linear(r, &layer.wk)).collect();
        let v: Vec<Vec<f64>> = h.iter().map(|r| linear(r, &layer.wv)).collect();
        let n = h.len();
        let mut out = Vec::new();
        for i in 0..n {
            let logits: Vec<f64> = (0..n)
                .map(|j| q[i].iter().zip(&k[j]).map(|(a, b)| a * b).sum::<f64>() / (d as f64).sqrt())
                .collect();
            let mx = logits.iter().cloned().fold(f64::MIN, f64::max);
            let e: Vec<f64> = logits.iter().map(|l| (l - mx).exp()).collect();
            let z: f64 = e.iter().sum();
            let mut row = h[i].clone();
            for j in 0..n {
                for c in 0..d {
                    row[c] += e[j] / z * v[j][c];
                }
            }
            let mid: Vec<f64> = linear(&row, &layer.ff_w1).into_iter().map(|x| x.max(0.0)).collect();
            let ff = linear(&mid, &layer.ff_w2);
            out.push(row.iter().zip(&ff).map(|(a, b)| a + b).collect());
        }
        out
    }

    #[test]
    fn video_aggregator_matches_hand_attention() {
        let p = params(5, 4, 4);
        let frames = SeededRng::new(40).gaussian(3, 5).unwrap();
        let enc = encode_video(&frames, &p).unwrap();
        let expected = hand_video(&frames, &p);
        for (i, row) in expected.iter().enumerate() {
            for (a, b) in enc.frames.row(i).iter().zip(row) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn single_frame_uses_unit_attention() {
        let p = params(5, 4, 5);
        let frame = SeededRng::new(41).gaussian(1, 5).unwrap();
        let enc = encode_video(&frame, &p).unwrap();
        let expected = hand_video(&frame, &p);
        for (a, b) in enc.frames.row(0).iter().zip(&expected[0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn frame_permutation_permutes_output() {
        let p = params(5, 4, 6);
        let frames = SeededRng::new(42).gaussian(4, 5).unwrap();
        let perm = [2usize, 0, 3, 1];
        let mut permuted = Vec::new();
        for &i in &perm {
            permuted.extend_from_slice(frames.row(i));
        }
        let permuted = Tensor::from_rows(4, 5, permuted);
        let a = encode_video(&frames, &p).unwrap().frames;
        let b = encode_video(&permuted, &p).unwrap().frames;
        for (out_row, &src) in perm.iter().enumerate() {
            for (x, y) in b.row(out_row).iter().zip(a.row(src)) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn text_frame_attention_limits() {
        let frames = Tensor::from_rows(3, 2, vec![1.0, 0.0, 0.0, 1.0, -1.0, 0.5]);
        let text = [0.3, 0.9];
        // single frame
        let one = Tensor::from_rows(1, 2, vec![0.4, -0.2]);
        assert_eq!(text_frame_attention(&text, &one, 1.0).unwrap(), vec![0.4, -0.2]);
        // identical frames
        let same = Tensor::from_rows(3, 2, [0.4, -0.2].repeat(3));
        for (a, b) in text_frame_attention(&text, &same, 1.0).unwrap().iter().zip([0.4, -0.2]) {
            assert!((a - b).abs() < 1e-15);
        }
        // sharp temperature picks the argmax frame
        let best = (0..3)
            .max_by(|&a, &b| {
                crate::numerics::dot(&text, frames.row(a))
                    .partial_cmp(&crate::numerics::dot(&text, frames.row(b)))
                    .unwrap()
            })
            .unwrap();
        let sharp = text_frame_attention(&text, &frames, 1e-6).unwrap();
        for (a, b) in sharp.iter().zip(frames.row(best)) {
            assert!((a - b).abs() < 1e-6);
        }
        // flat temperature is uniform
        let w = text_frame_weights(&text, &frames, 1e6).unwrap();
        for wi in w {
            assert!((wi - 1.0 / 3.0).abs() < 1e-6);
        }
        assert!(matches!(
            text_frame_attention(&text, &frames, 0.0),
            Err(crate::Error::Config(_))
        ));
    }

    #[test]
    fn graph_and_plain_text_frame_attention_agree() {
        let mut rng = SeededRng::new(7);
        let texts = rng.gaussian(3, 4).unwrap();
        let frames = rng.gaussian(5, 4).unwrap();
        let mut g = Graph::new();
        let t = g.constant(texts.clone());
        let f = g.constant(frames.clone());
        let out = text_frame_attention_graph(&mut g, t, f, 0.7).unwrap();
        for r in 0..3 {
            let plain = text_frame_attention(texts.row(r), &frames, 0.7).unwrap();
            for (a, b) in g.value(out).row(r).iter().zip(&plain) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
