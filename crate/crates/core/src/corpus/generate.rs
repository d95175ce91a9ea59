use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusManifest, PairEntry, Split};
use crate::error::{bail, Result};
use crate::numerics::{SeededRng, Tensor};

/// Affine distortion applied to every feature of a shifted domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainShift {
    /// Size of the Gaussian perturbation of the identity that is
    /// orthogonalized into the rotation.
    pub strength: f64,
    /// Standard deviation of the translation vector.
    pub translation: f64,
    /// Multiplier on the modality noise.
    pub noise_inflation: f64,
    pub seed: u64,
}

impl Default for DomainShift {
    fn default() -> Self {
        Self {
            strength: 0.5,
            translation: 0.5,
            noise_inflation: 1.5,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub classes: usize,
    pub pairs_per_class: usize,
    pub input_dim: usize,
    pub words: usize,
    pub frames: usize,
    pub sigma_within: f64,
    pub sigma_modal: f64,
    pub shift: Option<DomainShift>,
}

impl Default for DomainSpec {
    fn default() -> Self {
        Self {
            classes: 16,
            pairs_per_class: 40,
            input_dim: 32,
            words: 8,
            frames: 8,
            sigma_within: 0.3,
            sigma_modal: 0.3,
            shift: None,
        }
    }
}

impl DomainSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            bail!(Config, "need at least 2 classes, got {}", self.classes);
        }
        if self.pairs_per_class == 0 || self.input_dim == 0 {
            bail!(Config, "pairs per class and feature width must be positive");
        }
        if self.words == 0 || self.frames == 0 {
            bail!(Config, "texts and videos need at least one token each");
        }
        if !(self.sigma_within >= 0.0 && self.sigma_modal >= 0.0) {
            bail!(Config, "noise levels must be non-negative");
        }
        if let Some(s) = &self.shift {
            if !(s.strength >= 0.0 && s.translation >= 0.0 && s.noise_inflation >= 1.0) {
                bail!(Config, "domain shift needs strength, translation >= 0 and inflation >= 1");
            }
        }
        Ok(())
    }

    pub fn pairs(&self) -> usize {
        self.classes * self.pairs_per_class
    }
}

struct Affine {
    rotation: DMatrix<f64>,
    translation: Vec<f64>,
}

impl Affine {
    fn new(shift: &DomainShift, d: usize) -> Self {
        let mut rng = SeededRng::new(shift.seed);
        let scale = shift.strength / (d as f64).sqrt();
        let g = rng.normals(d * d);
        let m = DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { 0.0 } + scale * g[i * d + j]);
        let translation = rng.normals(d).into_iter().map(|v| v * shift.translation).collect();
        Self {
            rotation: m.qr().q(),
            translation,
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let d = x.len();
        (0..d)
            .map(|i| (0..d).map(|j| self.rotation[(i, j)] * x[j]).sum::<f64>() + self.translation[i])
            .collect()
    }
}

fn as_f32(v: f64) -> f64 {
    v as f32 as f64
}

/// Draws a corpus from the latent-class model. Each pair gets a latent
/// point near its class centroid; every word and frame is that latent point
/// plus independent modality noise.
pub fn generate(spec: &DomainSpec, seed: u64) -> Result<Corpus> {
    spec.validate()?;
    let root = SeededRng::new(seed);
    let mut class_rng = root.fork(0);
    let mut pair_rng = root.fork(1);
    let mut shift_rng = root.fork(2);
    let d = spec.input_dim;

    let centroids: Vec<Vec<f64>> = (0..spec.classes).map(|_| class_rng.normals(d)).collect();
    let mut order: Vec<u32> = (0..spec.pairs() as u32).map(|i| i % spec.classes as u32).collect();
    pair_rng.shuffle(&mut order);

    let affine = spec.shift.as_ref().map(|s| Affine::new(s, d));
    let extra_sd = spec
        .shift
        .map(|s| spec.sigma_modal * (s.noise_inflation * s.noise_inflation - 1.0).sqrt())
        .unwrap_or(0.0);

    let mut draw_tokens = |latent: &[f64], n: usize, rng: &mut SeededRng| -> Tensor {
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n {
            let noise = rng.normals(d);
            let token: Vec<f64> = latent.iter().zip(&noise).map(|(l, e)| l + spec.sigma_modal * e).collect();
            let token = match &affine {
                Some(a) => {
                    let extra = shift_rng.normals(d);
                    a.apply(&token).into_iter().zip(extra).map(|(v, e)| v + extra_sd * e).collect()
                }
                None => token,
            };
            data.extend(token.into_iter().map(as_f32));
        }
        Tensor::from_rows(n, d, data)
    };

    let mut texts = Vec::with_capacity(order.len());
    let mut videos = Vec::with_capacity(order.len());
    let mut pairs = Vec::with_capacity(order.len());
    for (i, &class) in order.iter().enumerate() {
        let offset = pair_rng.normals(d);
        let latent: Vec<f64> = centroids[class as usize]
            .iter()
            .zip(&offset)
            .map(|(c, o)| c + spec.sigma_within * o)
            .collect();
        texts.push(draw_tokens(&latent, spec.words, &mut pair_rng));
        videos.push(draw_tokens(&latent, spec.frames, &mut pair_rng));
        pairs.push(PairEntry {
            text_id: i as u32,
            video_id: i as u32,
            class: Some(class),
            split: Split::Train,
        });
    }
    Ok(Corpus {
        manifest: CorpusManifest {
            input_dim: d,
            pairs,
            offsets: Vec::new(),
            seed: Some(seed),
            spec: Some(*spec),
        },
        texts,
        videos,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::dot;

    #[test]
    fn deterministic_per_seed() {
        let spec = DomainSpec {
            pairs_per_class: 3,
            ..DomainSpec::default()
        };
        assert_eq!(generate(&spec, 9).unwrap(), generate(&spec, 9).unwrap());
        assert_ne!(generate(&spec, 9).unwrap(), generate(&spec, 10).unwrap());
    }

    #[test]
    fn zero_noise_collapses_to_centroid() {
        let spec = DomainSpec {
            pairs_per_class: 2,
            sigma_within: 0.0,
            sigma_modal: 0.0,
            ..DomainSpec::default()
        };
        let c = generate(&spec, 1).unwrap();
        for (t, v) in c.texts.iter().zip(&c.videos) {
            for r in 0..t.rows() {
                assert_eq!(t.row(r), v.row(0));
            }
        }
    }

    #[test]
    fn invalid_specs() {
        for bad in [
            DomainSpec { classes: 1, ..DomainSpec::default() },
            DomainSpec { words: 0, ..DomainSpec::default() },
            DomainSpec { sigma_modal: -0.1, ..DomainSpec::default() },
        ] {
            assert!(matches!(generate(&bad, 0), Err(crate::Error::Config(_))));
        }
    }

    #[test]
    fn rotation_is_orthogonal() {
        let a = Affine::new(&DomainShift::default(), 6);
        let qtq = a.rotation.transpose() * &a.rotation;
        for i in 0..6 {
            for j in 0..6 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((qtq[(i, j)] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn classes_are_separated() {
        for seed in 0..3 {
            let c = generate(&DomainSpec::default(), seed).unwrap();
            let means: Vec<Vec<f64>> = c
                .texts
                .iter()
                .map(|t| (0..t.cols()).map(|j| (0..t.rows()).map(|i| t.get(i, j)).sum::<f64>() / t.rows() as f64).collect())
                .collect();
            let cos = |a: &[f64], b: &[f64]| dot(a, b) / (dot(a, a).sqrt() * dot(b, b).sqrt());
            let (mut within, mut nw, mut across, mut na) = (0.0, 0, 0.0, 0);
            for i in 0..means.len() {
                for j in i + 1..means.len() {
                    let s = cos(&means[i], &means[j]);
                    if c.manifest.pairs[i].class == c.manifest.pairs[j].class {
                        within += s;
                        nw += 1;
                    } else {
                        across += s;
                        na += 1;
                    }
                }
            }
            assert!(within / nw as f64 - across / na as f64 >= 0.2);
        }
    }
}
