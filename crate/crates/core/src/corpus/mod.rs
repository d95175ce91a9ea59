//! Paired text-video token-feature corpora: a latent-class generator with an
//! optional domain shift, the `DFCX` file format, splits and CSV import.

mod csv_import;
mod generate;
mod io;

use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::numerics::{SeededRng, Tensor};

pub use csv_import::import_csv_dir;
pub use generate::{generate, DomainShift, DomainSpec};
pub use io::{load, read_corpus, save, write_corpus, CORPUS_MAGIC, CORPUS_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairEntry {
    pub text_id: u32,
    pub video_id: u32,
    /// Latent class, when the corpus is synthetic.
    pub class: Option<u32>,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub input_dim: usize,
    pub pairs: Vec<PairEntry>,
    /// Byte offset of every record (texts first, then videos), counted from
    /// the end of the manifest. Filled in by the writer.
    #[serde(default)]
    pub offsets: Vec<u64>,
    pub seed: Option<u64>,
    pub spec: Option<DomainSpec>,
}

impl CorpusManifest {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Pair `i` is the text `texts[i]` with the video `videos[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub manifest: CorpusManifest,
    pub texts: Vec<Tensor>,
    pub videos: Vec<Tensor>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.manifest.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.manifest.input_dim
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.texts.len() != n || self.videos.len() != n {
            bail!(
                Input,
                "manifest lists {n} pairs but {} texts and {} videos are present",
                self.texts.len(),
                self.videos.len()
            );
        }
        let mut seen_t = std::collections::HashSet::new();
        let mut seen_v = std::collections::HashSet::new();
        for p in &self.manifest.pairs {
            if !seen_t.insert(p.text_id) || !seen_v.insert(p.video_id) {
                bail!(Input, "pairing is not one-to-one at text {} / video {}", p.text_id, p.video_id);
            }
        }
        let d = self.input_dim();
        for (i, t) in self.texts.iter().chain(&self.videos).enumerate() {
            if t.rows() == 0 || t.is_empty() || t.cols() != d {
                bail!(Input, "record {i} has shape {:?}, expected N×{d} with N ≥ 1", t.shape());
            }
        }
        Ok(())
    }

    /// Pairs at the given indices, in that order.
    pub fn select(&self, idx: &[usize]) -> Corpus {
        let mut manifest = self.manifest.clone();
        manifest.pairs = idx.iter().map(|&i| self.manifest.pairs[i].clone()).collect();
        manifest.offsets.clear();
        Corpus {
            manifest,
            texts: idx.iter().map(|&i| self.texts[i].clone()).collect(),
            videos: idx.iter().map(|&i| self.videos[i].clone()).collect(),
        }
    }

    /// Pairs carrying the given split label.
    pub fn subset(&self, split: Split) -> Corpus {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.manifest.pairs[i].split == split).collect();
        self.select(&idx)
    }

    pub fn position_of_text(&self, text_id: u32) -> Option<usize> {
        self.manifest.pairs.iter().position(|p| p.text_id == text_id)
    }
}

/// Pair-respecting random split. Labels in the returned corpora are
/// rewritten to match.
pub fn split(corpus: &Corpus, train_fraction: f64, seed: u64) -> Result<(Corpus, Corpus)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        bail!(Config, "train fraction {train_fraction} outside (0, 1)");
    }
    let n = corpus.len();
    let n_train = (n as f64 * train_fraction).round() as usize;
    if n_train == 0 || n_train == n {
        bail!(Config, "fraction {train_fraction} of {n} pairs leaves an empty split");
    }
    let mut order: Vec<usize> = (0..n).collect();
    SeededRng::new(seed).shuffle(&mut order);
    let (mut tr, mut te) = (order[..n_train].to_vec(), order[n_train..].to_vec());
    tr.sort_unstable();
    te.sort_unstable();
    let mut train = corpus.select(&tr);
    let mut test = corpus.select(&te);
    train.manifest.pairs.iter_mut().for_each(|p| p.split = Split::Train);
    test.manifest.pairs.iter_mut().for_each(|p| p.split = Split::Test);
    Ok((train, test))
}

/// Relabels `corpus` in place with a random split and returns it.
pub fn label_split(mut corpus: Corpus, train_fraction: f64, seed: u64) -> Result<Corpus> {
    let (train, _) = split(&corpus, train_fraction, seed)?;
    let train_ids: std::collections::HashSet<u32> = train.manifest.pairs.iter().map(|p| p.text_id).collect();
    for p in corpus.manifest.pairs.iter_mut() {
        p.split = if train_ids.contains(&p.text_id) {
            Split::Train
        } else {
            Split::Test
        };
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(n: usize) -> Corpus {
        let spec = DomainSpec {
            classes: 2,
            pairs_per_class: n / 2,
            ..DomainSpec::default()
        };
        generate(&spec, 4).unwrap()
    }

    #[test]
    fn split_sizes_and_disjointness() {
        let c = tiny(10);
        let (a, b) = split(&c, 0.5, 1).unwrap();
        assert_eq!((a.len(), b.len()), (5, 5));
        let ta: std::collections::HashSet<_> = a.manifest.pairs.iter().map(|p| p.text_id).collect();
        let tb: std::collections::HashSet<_> = b.manifest.pairs.iter().map(|p| p.text_id).collect();
        assert!(ta.is_disjoint(&tb));
        assert_eq!(ta.len() + tb.len(), 10);
        assert_eq!(split(&c, 0.5, 1).unwrap(), (a, b));
        assert!(split(&c, 0.01, 1).is_err());
        assert!(split(&c, 1.0, 1).is_err());
    }

    #[test]
    fn labels_match_split() {
        let c = label_split(tiny(10), 0.8, 3).unwrap();
        assert_eq!(c.subset(Split::Train).len(), 8);
        assert_eq!(c.subset(Split::Test).len(), 2);
        let (train, _) = split(&c, 0.8, 3).unwrap();
        assert_eq!(train.manifest.pairs, c.subset(Split::Train).manifest.pairs);
    }
}
