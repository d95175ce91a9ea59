use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Corpus, CorpusManifest};
use crate::container::{record_len, Precision, Reader, Writer};
use crate::error::{FormatError, Result};

pub const CORPUS_MAGIC: [u8; 4] = *b"DFCX";
pub const CORPUS_VERSION: u32 = 1;

fn record_names(m: &CorpusManifest) -> Vec<String> {
    let texts = m.pairs.iter().map(|p| format!("text/{}", p.text_id));
    let videos = m.pairs.iter().map(|p| format!("video/{}", p.video_id));
    texts.chain(videos).collect()
}

pub fn write_corpus<W: Write>(corpus: &Corpus, out: W) -> Result<W> {
    corpus.validate()?;
    let names = record_names(&corpus.manifest);
    let records: Vec<_> = corpus.texts.iter().chain(&corpus.videos).collect();
    let mut manifest = corpus.manifest.clone();
    let mut at = 0;
    manifest.offsets = names
        .iter()
        .zip(&records)
        .map(|(n, t)| {
            let here = at;
            at += record_len(n, t, Precision::F32);
            here
        })
        .collect();
    let header = serde_json::to_vec(&manifest).map_err(|e| FormatError::Malformed(e.to_string()))?;
    let mut w = Writer::new(out, CORPUS_MAGIC, CORPUS_VERSION, &header)?;
    for (name, t) in names.iter().zip(records) {
        w.tensor(name, t, Precision::F32)?;
    }
    w.finish()
}

pub fn read_corpus(buf: &[u8]) -> Result<Corpus> {
    let (mut r, _, header) = Reader::open(buf, CORPUS_MAGIC, CORPUS_VERSION)?;
    let manifest: CorpusManifest =
        serde_json::from_slice(header).map_err(|e| FormatError::Malformed(format!("manifest: {e}")))?;
    let names = record_names(&manifest);
    if manifest.offsets.len() != names.len() {
        return Err(FormatError::Malformed(format!(
            "manifest has {} offsets for {} records",
            manifest.offsets.len(),
            names.len()
        ))
        .into());
    }
    let mut records = Vec::with_capacity(names.len());
    for (want, &offset) in names.iter().zip(&manifest.offsets) {
        if r.body_offset() != offset {
            return Err(FormatError::Malformed(format!(
                "record {want} at offset {} but the manifest says {offset}",
                r.body_offset()
            ))
            .into());
        }
        let (name, t) = r.tensor(Precision::F32)?;
        if &name != want {
            return Err(FormatError::Malformed(format!("expected record {want}, found {name}")).into());
        }
        records.push(t);
    }
    if !r.at_end() {
        return Err(FormatError::Malformed("trailing bytes after the last record".into()).into());
    }
    let videos = records.split_off(manifest.pairs.len());
    let corpus = Corpus {
        manifest,
        texts: records,
        videos,
    };
    corpus.validate()?;
    Ok(corpus)
}

pub fn save(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let buf = write_corpus(corpus, Vec::new())?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Corpus> {
    read_corpus(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate, DomainShift, DomainSpec};
    use crate::Error;

    fn small() -> Corpus {
        let spec = DomainSpec {
            classes: 3,
            pairs_per_class: 4,
            shift: Some(DomainShift::default()),
            ..DomainSpec::default()
        };
        generate(&spec, 2).unwrap()
    }

    #[test]
    fn roundtrip_is_exact() {
        let c = small();
        let buf = write_corpus(&c, Vec::new()).unwrap();
        let back = read_corpus(&buf).unwrap();
        assert_eq!(back.texts, c.texts);
        assert_eq!(back.videos, c.videos);
        assert_eq!(back.manifest.pairs, c.manifest.pairs);
        assert_eq!(write_corpus(&back, Vec::new()).unwrap(), buf);
    }

    #[test]
    fn corruption_is_reported() {
        let c = small();
        let mut buf = write_corpus(&c, Vec::new()).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_corpus(&bad), Err(Error::Format(FormatError::BadMagic { .. }))));
        let mut bad = buf.clone();
        bad[4] = 9;
        assert!(matches!(
            read_corpus(&bad),
            Err(Error::Format(FormatError::UnsupportedVersion { found: 9, .. }))
        ));
        buf.truncate(buf.len() - 10);
        assert!(matches!(read_corpus(&buf), Err(Error::Format(FormatError::Truncated(_)))));
    }
}
