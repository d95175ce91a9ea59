use std::path::Path;

use serde::Deserialize;

use super::{Corpus, CorpusManifest, PairEntry, Split};
use crate::error::{bail, Result};
use crate::numerics::Tensor;

#[derive(Debug, Deserialize)]
struct PairRow {
    text: String,
    video: String,
    split: Split,
    #[serde(default)]
    class: Option<u32>,
}

fn read_matrix(path: &Path) -> Result<Tensor> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| crate::Error::Input(format!("{}: {e}", path.display())))?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| crate::Error::Input(format!("{}: {e}", path.display())))?;
        let vals = rec
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| crate::Error::Input(format!("{} row {i}: {e}", path.display())))?;
        match cols {
            None => cols = Some(vals.len()),
            Some(c) if c != vals.len() => {
                bail!(Input, "{} row {i} has {} values, expected {c}", path.display(), vals.len())
            }
            _ => {}
        }
        data.extend(vals.into_iter().map(|v| v as f32 as f64));
        rows += 1;
    }
    match cols {
        Some(c) if c > 0 => Ok(Tensor::from_rows(rows, c, data)),
        _ => bail!(Input, "{} holds no feature rows", path.display()),
    }
}

/// Imports `dir/pairs.csv` (columns `text,video,split[,class]`, paths
/// relative to `dir`) whose entries point at headerless CSV matrices with one
/// token per row. Features are stored at 32-bit precision, as on disk.
pub fn import_csv_dir(dir: impl AsRef<Path>) -> Result<Corpus> {
    let dir = dir.as_ref();
    let index = dir.join("pairs.csv");
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(&index)
        .map_err(|e| crate::Error::Input(format!("{}: {e}", index.display())))?;
    let mut pairs = Vec::new();
    let mut texts = Vec::new();
    let mut videos = Vec::new();
    for (i, row) in rdr.deserialize::<PairRow>().enumerate() {
        let row = row.map_err(|e| crate::Error::Input(format!("{} entry {i}: {e}", index.display())))?;
        texts.push(read_matrix(&dir.join(&row.text))?);
        videos.push(read_matrix(&dir.join(&row.video))?);
        pairs.push(PairEntry {
            text_id: i as u32,
            video_id: i as u32,
            class: row.class,
            split: row.split,
        });
    }
    let Some(first) = texts.first() else {
        bail!(Input, "{} lists no pairs", index.display());
    };
    let corpus = Corpus {
        manifest: CorpusManifest {
            input_dim: first.cols(),
            pairs,
            offsets: Vec::new(),
            seed: None,
            spec: None,
        },
        texts,
        videos,
    };
    corpus.validate()?;
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    #[test]
    fn imports_a_directory() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("pairs.csv"), "text,video,split,class\nt0.csv,v0.csv,train,1\nt1.csv,v1.csv,test,\n").unwrap();
        fs::write(dir.path().join("t0.csv"), "1,2,3\n4,5,6\n").unwrap();
        fs::write(dir.path().join("v0.csv"), "0.5,0.25,0\n").unwrap();
        fs::write(dir.path().join("t1.csv"), "1,0,0\n").unwrap();
        fs::write(dir.path().join("v1.csv"), "0,1,0\n0,0,1\n").unwrap();
        let c = import_csv_dir(dir.path()).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.input_dim(), 3);
        assert_eq!(c.texts[0].shape(), &[2, 3]);
        assert_eq!(c.manifest.pairs[0].class, Some(1));
        assert_eq!(c.manifest.pairs[1].split, Split::Test);

        fs::write(dir.path().join("v1.csv"), "0,1\n").unwrap();
        assert!(matches!(import_csv_dir(dir.path()), Err(crate::Error::Input(_))));
    }
}
