//! Training objectives: the generation loss over joint distributions, the
//! weighted token-alignment similarity with its contrastive loss, and the
//! discriminant posterior used as a baseline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::encoders::{BoundEncoder, EncodedText, EncodedVideo, EncoderParams, TextBatch, VideoBatch};
use crate::error::{bail, Error, Result};
use crate::numerics::{dot, log_softmax, softmax, Graph, Tensor, Var};

/// Floor applied to token norms before cosine alignment.
pub const NORM_EPS: f64 = 1e-12;

/// Ground truth for one query: the signal-space `x₀` that the forward
/// process diffuses and the probability-space `p₀` the decoder is scored
/// against.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTarget {
    pub signal: Vec<f64>,
    pub prob: Vec<f64>,
    pub positive: usize,
}

pub fn joint_target(positive: usize, n: usize, signal_scale: f64, smoothing: f64) -> Result<JointTarget> {
    if positive >= n {
        bail!(Contract, "positive index {positive} outside gallery of {n}");
    }
    if !(0.0..1.0).contains(&smoothing) {
        bail!(Contract, "smoothing {smoothing} outside [0, 1)");
    }
    let signal = (0..n)
        .map(|i| if i == positive { signal_scale } else { -signal_scale })
        .collect();
    let floor = smoothing / n as f64;
    let prob = (0..n)
        .map(|i| if i == positive { 1.0 - smoothing + floor } else { floor })
        .collect();
    Ok(JointTarget {
        signal,
        prob,
        positive,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// `KL(p₀ ‖ softmax(x̂₀))`.
    Kl,
    /// `KL(softmax(x̂₀) ‖ p₀)`; needs a smoothed target.
    KlReverse,
    /// Mean squared error between `x̂₀` and the signal `x₀`.
    Mse,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Kl => "kl",
            LossKind::KlReverse => "kl-reverse",
            LossKind::Mse => "mse",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kl" => Ok(Self::Kl),
            "kl-reverse" => Ok(Self::KlReverse),
            "mse" => Ok(Self::Mse),
            other => bail!(Config, "unknown loss kind {other:?} (kl | kl-reverse | mse)"),
        }
    }
}

fn check_target(len: usize, target: &JointTarget, kind: LossKind) -> Result<()> {
    if len != target.prob.len() {
        bail!(Contract, "prediction length {len} vs target length {}", target.prob.len());
    }
    if kind == LossKind::KlReverse && target.prob.iter().any(|&p| p <= 0.0) {
        bail!(Config, "reverse KL needs a smoothed target with every entry positive");
    }
    Ok(())
}

pub fn generation_loss(x0_hat: &[f64], target: &JointTarget, kind: LossKind) -> Result<f64> {
    check_target(x0_hat.len(), target, kind)?;
    let loss = match kind {
        LossKind::Kl => {
            let lq = log_softmax(x0_hat);
            target
                .prob
                .iter()
                .zip(&lq)
                .filter(|(p, _)| **p > 0.0)
                .map(|(p, l)| p * (p.ln() - l))
                .sum()
        }
        LossKind::KlReverse => {
            let lq = log_softmax(x0_hat);
            lq.iter()
                .zip(&target.prob)
                .map(|(l, p)| l.exp() * (l - p.ln()))
                .sum()
        }
        LossKind::Mse => {
            x0_hat
                .iter()
                .zip(&target.signal)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                / x0_hat.len() as f64
        }
    };
    Ok(loss)
}

/// Graph form of [`generation_loss`] on a `1×N` logit row.
pub fn generation_loss_graph(g: &mut Graph, x0_hat: Var, target: &JointTarget, kind: LossKind) -> Result<Var> {
    check_target(g.value(x0_hat).len(), target, kind)?;
    match kind {
        LossKind::Kl => {
            let entropy: f64 = target.prob.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum();
            let lq = g.log_softmax_rows(x0_hat)?;
            let p = g.constant(Tensor::row_vector(target.prob.clone()));
            let cross = g.mul(lq, p)?;
            let cross = g.sum(cross)?;
            let neg = g.scale(cross, -1.0)?;
            let c = g.constant(Tensor::scalar(entropy));
            g.add(neg, c)
        }
        LossKind::KlReverse => {
            let lq = g.log_softmax_rows(x0_hat)?;
            let q = g.softmax_rows(x0_hat)?;
            let lp = g.constant(Tensor::row_vector(target.prob.iter().map(|p| p.ln()).collect()));
            let diff = g.sub(lq, lp)?;
            let terms = g.mul(q, diff)?;
            g.sum(terms)
        }
        LossKind::Mse => {
            let x0 = g.constant(Tensor::row_vector(target.signal.clone()));
            let d = g.sub(x0_hat, x0)?;
            let sq = g.mul(d, d)?;
            g.mean(sq)
        }
    }
}

/// In-batch score matrix: entry `(t, v)` scores text `t` against video `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub scores: Tensor,
    pub tau: f64,
}

/// Unit-norm tokens and their softmax weights for one item.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenView {
    pub unit: Tensor,
    pub weights: Vec<f64>,
}

fn normalize(tokens: &Tensor) -> Tensor {
    let mut out = tokens.clone();
    let mut clamped = 0;
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        let d = if n > NORM_EPS {
            n
        } else {
            clamped += 1;
            NORM_EPS
        };
        row.iter_mut().for_each(|v| *v /= d);
    }
    if clamped > 0 {
        log::warn!("{clamped} token(s) with norm below {NORM_EPS:e} were clamped");
    }
    out
}

fn head_logits(x: &Tensor, w1: &Tensor, b1: &Tensor, w2: &Tensor, b2: &Tensor) -> Result<Vec<f64>> {
    let mut h = x.matmul(w1)?;
    for r in 0..h.rows() {
        for (v, b) in h.row_mut(r).iter_mut().zip(b1.data()) {
            *v = (*v + b).max(0.0);
        }
    }
    Ok(h.matmul(w2)?.data().iter().map(|v| v + b2.item()).collect())
}

fn token_view(tokens: &Tensor, head: [&Tensor; 4], uniform: bool) -> Result<TokenView> {
    if tokens.rows() == 0 || tokens.is_empty() {
        bail!(Input, "item has no tokens");
    }
    let weights = if uniform {
        vec![1.0 / tokens.rows() as f64; tokens.rows()]
    } else {
        softmax(&head_logits(tokens, head[0], head[1], head[2], head[3])?)
    };
    Ok(TokenView {
        unit: normalize(tokens),
        weights,
    })
}

pub fn text_view(text: &EncodedText, params: &EncoderParams) -> Result<TokenView> {
    let h = &params.heads;
    token_view(
        &text.words,
        [&h.text_w1, &h.text_b1, &h.text_w2, &h.text_b2],
        params.uniform_token_weights,
    )
}

pub fn video_view(video: &EncodedVideo, params: &EncoderParams) -> Result<TokenView> {
    let h = &params.heads;
    token_view(
        &video.frames,
        [&h.video_w1, &h.video_b1, &h.video_w2, &h.video_b2],
        params.uniform_token_weights,
    )
}

/// `½(Σᵢ g_tⁱ maxⱼ aᵢⱼ + Σⱼ g_vʲ maxᵢ aᵢⱼ)` with `aᵢⱼ` the cosine between
/// word `i` and frame `j`.
pub fn weighted_max_alignment(text: &TokenView, video: &TokenView) -> Result<f64> {
    if text.unit.cols() != video.unit.cols() {
        bail!(Dimension, "word width {} vs frame width {}", text.unit.cols(), video.unit.cols());
    }
    let (nt, nv) = (text.unit.rows(), video.unit.rows());
    let mut col_max = vec![f64::NEG_INFINITY; nv];
    let mut text_part = 0.0;
    for i in 0..nt {
        let mut row_max = f64::NEG_INFINITY;
        for (j, cm) in col_max.iter_mut().enumerate() {
            let a = dot(text.unit.row(i), video.unit.row(j));
            row_max = row_max.max(a);
            *cm = cm.max(a);
        }
        text_part += text.weights[i] * row_max;
    }
    let video_part: f64 = video.weights.iter().zip(&col_max).map(|(w, m)| w * m).sum();
    Ok(0.5 * (text_part + video_part))
}

pub fn token_similarity(text: &EncodedText, video: &EncodedVideo, params: &EncoderParams) -> Result<f64> {
    weighted_max_alignment(&text_view(text, params)?, &video_view(video, params)?)
}

pub fn similarity_matrix(
    texts: &[EncodedText],
    videos: &[EncodedVideo],
    params: &EncoderParams,
) -> Result<SimilarityMatrix> {
    let tv = texts.iter().map(|t| text_view(t, params)).collect::<Result<Vec<_>>>()?;
    let vv = videos.iter().map(|v| video_view(v, params)).collect::<Result<Vec<_>>>()?;
    let mut scores = Tensor::zeros(tv.len(), vv.len());
    for (i, t) in tv.iter().enumerate() {
        for (j, v) in vv.iter().enumerate() {
            scores.set(i, j, weighted_max_alignment(t, v)?);
        }
    }
    Ok(SimilarityMatrix {
        scores,
        tau: params.contrastive_tau,
    })
}

fn head_weights_graph(
    g: &mut Graph,
    tokens: Var,
    segments: &[usize],
    head: [Var; 4],
    uniform: bool,
) -> Result<Var> {
    if uniform {
        let w: Vec<f64> = segments
            .iter()
            .flat_map(|&n| std::iter::repeat_n(1.0 / n as f64, n))
            .collect();
        return Ok(g.constant(Tensor::col_vector(w)));
    }
    let h = g.matmul(tokens, head[0])?;
    let h = g.add_row(h, head[1])?;
    let h = g.relu(h)?;
    let l = g.matmul(h, head[2])?;
    let l = g.add_row(l, head[3])?;
    g.segment_softmax(l, segments.to_vec())
}

/// Every text of `texts` scored against every video of `videos`:
/// a `B_t×B_v` node.
pub fn similarity_matrix_graph(
    g: &mut Graph,
    enc: &BoundEncoder,
    texts: &TextBatch,
    videos: &VideoBatch,
) -> Result<Var> {
    let h = &enc.heads;
    let wt = head_weights_graph(
        g,
        texts.words,
        &texts.segments,
        [h.text_w1, h.text_b1, h.text_w2, h.text_b2],
        enc.uniform_token_weights,
    )?;
    let wv = head_weights_graph(
        g,
        videos.frames,
        &videos.segments,
        [h.video_w1, h.video_b1, h.video_w2, h.video_b2],
        enc.uniform_token_weights,
    )?;
    let wn = g.normalize_rows(texts.words, NORM_EPS)?;
    let fnorm = g.normalize_rows(videos.frames, NORM_EPS)?;
    let a = g.matmul_t(wn, fnorm)?;

    let best_frame = g.segment_max_cols(a, &videos.segments)?;
    let weighted = g.mul_col(best_frame, wt)?;
    let text_part = g.segment_sum_rows(weighted, texts.segments.clone())?;

    let at = g.transpose(a)?;
    let best_word = g.segment_max_cols(at, &texts.segments)?;
    let weighted = g.mul_col(best_word, wv)?;
    let video_part = g.segment_sum_rows(weighted, videos.segments.clone())?;
    let video_part = g.transpose(video_part)?;

    let s = g.add(text_part, video_part)?;
    g.scale(s, 0.5)
}

fn check_square(r: usize, c: usize) -> Result<()> {
    if r != c || r == 0 {
        bail!(Contract, "contrastive loss needs a non-empty square matrix, got {r}x{c}");
    }
    Ok(())
}

/// Symmetric InfoNCE over `S/τ̂` with positives on the diagonal.
pub fn contrastive_loss(s: &SimilarityMatrix) -> Result<f64> {
    let (r, c) = (s.scores.rows(), s.scores.cols());
    check_square(r, c)?;
    if !(s.tau > 0.0) {
        bail!(Config, "contrastive temperature must be positive, got {}", s.tau);
    }
    let logits = s.scores.map(|v| v / s.tau);
    let cols = logits.transpose();
    let mut total = 0.0;
    for b in 0..r {
        total += log_softmax(logits.row(b))[b] + log_softmax(cols.row(b))[b];
    }
    Ok(-total / (2.0 * r as f64))
}

pub fn contrastive_loss_graph(g: &mut Graph, scores: Var, tau: f64) -> Result<Var> {
    let (r, c) = (g.value(scores).rows(), g.value(scores).cols());
    check_square(r, c)?;
    if !(tau > 0.0) {
        bail!(Config, "contrastive temperature must be positive, got {tau}");
    }
    let logits = g.scale(scores, 1.0 / tau)?;
    let eye = g.constant(Tensor::identity(r));
    let rows = g.log_softmax_rows(logits)?;
    let rows = g.mul(rows, eye)?;
    let rows = g.sum(rows)?;
    let lt = g.transpose(logits)?;
    let cols = g.log_softmax_rows(lt)?;
    let cols = g.mul(cols, eye)?;
    let cols = g.sum(cols)?;
    let total = g.add(rows, cols)?;
    g.scale(total, -1.0 / (2.0 * r as f64))
}

/// Discriminant posterior `softmax(⟨query, c_j⟩ / τ)` over the gallery rows.
pub fn baseline_posterior(query: &[f64], gallery: &Tensor, tau: f64) -> Result<Vec<f64>> {
    if gallery.rows() == 0 || gallery.is_empty() {
        bail!(Input, "empty gallery");
    }
    if !(tau > 0.0) {
        bail!(Config, "posterior temperature must be positive, got {tau}");
    }
    if query.len() != gallery.cols() {
        bail!(Dimension, "query width {} vs gallery width {}", query.len(), gallery.cols());
    }
    let logits: Vec<f64> = (0..gallery.rows()).map(|j| dot(query, gallery.row(j)) / tau).collect();
    Ok(softmax(&logits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::{encode_text_batch, encode_video_batch, EncoderShape};
    use crate::numerics::SeededRng;

    #[test]
    fn targets() {
        let t = joint_target(0, 2, 1.0, 0.0).unwrap();
        assert_eq!(t.signal, vec![1.0, -1.0]);
        assert_eq!(t.prob, vec![1.0, 0.0]);
        let t = joint_target(3, 10, 2.0, 0.1).unwrap();
        assert!((t.prob[3] - 0.91).abs() < 1e-15);
        assert!((t.prob[0] - 0.01).abs() < 1e-15);
        assert!((t.prob.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(t.signal.iter().all(|v| v.abs() == 2.0));
        assert!(matches!(joint_target(2, 2, 1.0, 0.0), Err(Error::Contract(_))));
    }

    #[test]
    fn kl_zero_at_target_and_log_n_at_uniform() {
        let t = joint_target(1, 4, 1.0, 0.1).unwrap();
        let logits: Vec<f64> = t.prob.iter().map(|p| p.ln() + 0.3).collect();
        assert!(generation_loss(&logits, &t, LossKind::Kl).unwrap().abs() < 1e-12);
        assert!(generation_loss(&logits, &t, LossKind::KlReverse).unwrap().abs() < 1e-12);
        let t = joint_target(1, 7, 1.0, 0.0).unwrap();
        let l = generation_loss(&[0.4; 7], &t, LossKind::Kl).unwrap();
        assert!((l - 7f64.ln()).abs() < 1e-12);
        assert!(generation_loss(&[0.0; 3], &t, LossKind::Kl).is_err());
        assert!(matches!(
            generation_loss(&[0.4; 7], &t, LossKind::KlReverse),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn kl_matches_direct_sum() {
        let mut rng = SeededRng::new(5);
        let x = rng.normals(5);
        let t = joint_target(2, 5, 1.0, 0.1).unwrap();
        let z: f64 = x.iter().map(|v| v.exp()).sum();
        let direct: f64 = (0..5).map(|i| t.prob[i] * (t.prob[i] / (x[i].exp() / z)).ln()).sum();
        assert!((generation_loss(&x, &t, LossKind::Kl).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn loss_graphs_match_plain() {
        let mut rng = SeededRng::new(9);
        let x = rng.normals(6);
        let t = joint_target(4, 6, 1.5, 0.1).unwrap();
        for kind in [LossKind::Kl, LossKind::KlReverse, LossKind::Mse] {
            let mut g = Graph::new();
            let v = g.param(Tensor::row_vector(x.clone()));
            let l = generation_loss_graph(&mut g, v, &t, kind).unwrap();
            let plain = generation_loss(&x, &t, kind).unwrap();
            assert!((g.value(l).item() - plain).abs() < 1e-12, "{kind}");
        }
    }

    fn single(v: &[f64]) -> Tensor {
        Tensor::row_vector(v.to_vec())
    }

    #[test]
    fn one_token_each_is_cosine() {
        let w = single(&[1.0, 2.0, 0.0]);
        let f = single(&[0.0, 1.0, 1.0]);
        let tv = token_view(&w, [&w, &w, &w, &w], true).unwrap();
        let vv = token_view(&f, [&f, &f, &f, &f], true).unwrap();
        let s = weighted_max_alignment(&tv, &vv).unwrap();
        assert!((s - 2.0 / (5f64.sqrt() * 2f64.sqrt())).abs() < 1e-12);
    }

    fn params(seed: u64) -> EncoderParams {
        EncoderParams::init(
            EncoderShape {
                input_dim: 4,
                model_dim: 4,
                aggregator_depth: 1,
            },
            &mut SeededRng::new(seed),
        )
    }

    #[test]
    fn identical_token_sets_score_one() {
        let p = params(2);
        let tokens = SeededRng::new(3).gaussian(3, 4).unwrap();
        let text = EncodedText {
            pooled: vec![0.0; 4],
            words: tokens.clone(),
        };
        let video = EncodedVideo { frames: tokens };
        assert!((token_similarity(&text, &video, &p).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn three_by_two_exhaustive() {
        let p = params(4);
        let mut rng = SeededRng::new(8);
        let words = rng.gaussian(3, 4).unwrap();
        let frames = rng.gaussian(2, 4).unwrap();
        let text = EncodedText {
            pooled: vec![0.0; 4],
            words: words.clone(),
        };
        let video = EncodedVideo {
            frames: frames.clone(),
        };
        let s = token_similarity(&text, &video, &p).unwrap();

        let cos = |a: &[f64], b: &[f64]| dot(a, b) / (dot(a, a).sqrt() * dot(b, b).sqrt());
        let mlp = |x: &[f64], w1: &Tensor, b1: &Tensor, w2: &Tensor, b2: &Tensor| {
            let mut out = b2.item();
            for k in 0..w1.cols() {
                let mut h = b1.data()[k];
                for (i, xi) in x.iter().enumerate() {
                    h += xi * w1.get(i, k);
                }
                out += h.max(0.0) * w2.get(k, 0);
            }
            out
        };
        let h = &p.heads;
        let lt: Vec<f64> = (0..3).map(|i| mlp(words.row(i), &h.text_w1, &h.text_b1, &h.text_w2, &h.text_b2)).collect();
        let lv: Vec<f64> = (0..2).map(|j| mlp(frames.row(j), &h.video_w1, &h.video_b1, &h.video_w2, &h.video_b2)).collect();
        let zt: f64 = lt.iter().map(|v| v.exp()).sum();
        let zv: f64 = lv.iter().map(|v| v.exp()).sum();
        let a = |i: usize, j: usize| cos(words.row(i), frames.row(j));
        let mut part1 = 0.0;
        for i in 0..3 {
            let m = if a(i, 0) >= a(i, 1) { a(i, 0) } else { a(i, 1) };
            part1 += lt[i].exp() / zt * m;
        }
        let mut part2 = 0.0;
        for j in 0..2 {
            let m = [a(0, j), a(1, j), a(2, j)].into_iter().fold(f64::MIN, f64::max);
            part2 += lv[j].exp() / zv * m;
        }
        assert!((s - 0.5 * (part1 + part2)).abs() < 1e-9);
    }

    #[test]
    fn graph_matrix_matches_plain() {
        for uniform in [false, true] {
            let mut p = params(6);
            p.uniform_token_weights = uniform;
            let mut rng = SeededRng::new(12);
            let texts: Vec<Tensor> = [2, 3, 1].iter().map(|&n| rng.gaussian(n, 4).unwrap()).collect();
            let videos: Vec<Tensor> = [3, 1, 2].iter().map(|&n| rng.gaussian(n, 4).unwrap()).collect();
            let mut g = Graph::new();
            let enc = p.bind(&mut g, true);
            let tb = encode_text_batch(&mut g, &enc, &texts.iter().collect::<Vec<_>>()).unwrap();
            let vb = encode_video_batch(&mut g, &enc, &videos.iter().collect::<Vec<_>>()).unwrap();
            let s = similarity_matrix_graph(&mut g, &enc, &tb, &vb).unwrap();

            let et: Vec<EncodedText> = texts.iter().map(|t| crate::encoders::encode_text(t, &p).unwrap()).collect();
            let ev: Vec<EncodedVideo> = videos.iter().map(|v| crate::encoders::encode_video(v, &p).unwrap()).collect();
            let plain = similarity_matrix(&et, &ev, &p).unwrap();
            for (a, b) in g.value(s).data().iter().zip(plain.scores.data()) {
                assert!((a - b).abs() < 1e-12);
                assert!((-1.0..=1.0).contains(a));
            }
        }
    }

    #[test]
    fn contrastive_cases() {
        let one = SimilarityMatrix {
            scores: Tensor::scalar(0.3),
            tau: 0.01,
        };
        assert!(contrastive_loss(&one).unwrap().abs() < 1e-12);
        let flat = SimilarityMatrix {
            scores: Tensor::filled(5, 5, 0.2),
            tau: 0.01,
        };
        assert!((contrastive_loss(&flat).unwrap() - 5f64.ln()).abs() < 1e-12);
        let bad = SimilarityMatrix {
            scores: Tensor::zeros(2, 3),
            tau: 0.01,
        };
        assert!(matches!(contrastive_loss(&bad), Err(Error::Contract(_))));
    }

    #[test]
    fn contrastive_matches_two_softmaxes() {
        let mut rng = SeededRng::new(21);
        let s = rng.gaussian(4, 4).unwrap().map(|v| v * 0.1);
        let tau = 0.05;
        let mut direct = 0.0;
        for b in 0..4 {
            let rz: f64 = (0..4).map(|j| (s.get(b, j) / tau).exp()).sum();
            let cz: f64 = (0..4).map(|i| (s.get(i, b) / tau).exp()).sum();
            let e = (s.get(b, b) / tau).exp();
            direct += (e / rz).ln() + (e / cz).ln();
        }
        direct *= -1.0 / 8.0;
        let m = SimilarityMatrix { scores: s.clone(), tau };
        assert!((contrastive_loss(&m).unwrap() - direct).abs() < 1e-12);

        let mut g = Graph::new();
        let v = g.param(s);
        let l = contrastive_loss_graph(&mut g, v, tau).unwrap();
        assert!((g.value(l).item() - direct).abs() < 1e-12);
    }

    #[test]
    fn posterior_cases() {
        assert_eq!(baseline_posterior(&[1.0, 2.0], &single(&[3.0, 4.0]), 0.01).unwrap(), vec![1.0]);
        let gal = Tensor::from_rows(3, 3, vec![0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0]);
        let p = baseline_posterior(&[1.0, 0.0, 0.0], &gal, 0.01).unwrap();
        assert!(p.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-12));
        let q = [0.2, -0.1, 0.05];
        let p = baseline_posterior(&q, &gal, 0.5).unwrap();
        let e: Vec<f64> = (0..3).map(|j| (dot(&q, gal.row(j)) / 0.5).exp()).collect();
        let z: f64 = e.iter().sum();
        for (a, b) in p.iter().zip(&e) {
            assert!((a - b / z).abs() < 1e-12);
        }
        assert!(matches!(
            baseline_posterior(&q, &Tensor::new(vec![0, 3], vec![]).unwrap(), 0.5),
            Err(Error::Input(_))
        ));
    }
}
