//! `DFRT` checkpoints: a TOML header echoing the training config, then
//! every parameter as a named 64-bit tensor.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::model::Model;
use crate::container::{Precision, Reader, Writer};
use crate::error::{Error, FormatError, Result};
use crate::numerics::RNG_ALGORITHM;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"DFRT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    input_dim: usize,
    parameters: usize,
    rng_algorithm: String,
    rng_state: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    checkpoint: Meta,
    config: TrainConfig,
}

pub fn encode_checkpoint(model: &Model) -> Result<Vec<u8>> {
    let header = Header {
        checkpoint: Meta {
            input_dim: model.input_dim(),
            parameters: model.parameter_count(),
            rng_algorithm: RNG_ALGORITHM.to_string(),
            rng_state: model.rng_state.clone(),
        },
        config: model.config.clone(),
    };
    let text = toml::to_string(&header).map_err(|e| FormatError::Malformed(e.to_string()))?;
    let mut w = Writer::new(Vec::new(), CHECKPOINT_MAGIC, CHECKPOINT_VERSION, text.as_bytes())?;
    for (name, t) in model.named() {
        w.tensor(&name, t, Precision::F64)?;
    }
    w.finish()
}

pub fn decode_checkpoint(buf: &[u8]) -> Result<Model> {
    let (mut r, _, header) = Reader::open(buf, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)?;
    let text = std::str::from_utf8(header).map_err(|_| FormatError::Malformed("config echo is not UTF-8".into()))?;
    let header: Header = toml::from_str(text).map_err(|e| FormatError::Malformed(format!("config echo: {e}")))?;
    if header.checkpoint.rng_algorithm != RNG_ALGORITHM {
        return Err(FormatError::Malformed(format!(
            "checkpoint uses rng {:?}, this build uses {RNG_ALGORITHM:?}",
            header.checkpoint.rng_algorithm
        ))
        .into());
    }
    let mut stored = HashMap::new();
    while !r.at_end() {
        let (name, t) = r.tensor(Precision::F64)?;
        if stored.insert(name.clone(), t).is_some() {
            return Err(FormatError::Malformed(format!("parameter {name} stored twice")).into());
        }
    }

    let mut model = Model::init(&header.config, header.checkpoint.input_dim)?;
    model.rng_state = header.checkpoint.rng_state;
    let names: Vec<String> = model.named().into_iter().map(|(n, _)| n).collect();
    for (name, slot) in names.iter().zip(model.tensors_mut()) {
        let t = stored
            .remove(name)
            .ok_or_else(|| Error::Config(format!("checkpoint lacks parameter {name}")))?;
        if t.shape() != slot.shape() {
            return Err(FormatError::Malformed(format!(
                "parameter {name} has shape {:?}, config implies {:?}",
                t.shape(),
                slot.shape()
            ))
            .into());
        }
        *slot = t;
    }
    if let Some(extra) = stored.keys().next() {
        return Err(FormatError::Malformed(format!("unexpected parameter {extra}")).into());
    }
    Ok(model)
}

pub fn save_checkpoint(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_checkpoint(model)?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model> {
    decode_checkpoint(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::container::Writer;

    fn model() -> Model {
        let cfg = TrainConfig {
            model_dim: 4,
            hidden_dim: 6,
            steps: 10,
            ..TrainConfig::default()
        };
        Model::init(&cfg, 5).unwrap()
    }

    #[test]
    fn roundtrip_is_exact() {
        let m = model();
        let buf = encode_checkpoint(&m).unwrap();
        assert_eq!(&buf[..4], b"DFRT");
        assert_eq!(decode_checkpoint(&buf).unwrap(), m);
    }

    #[test]
    fn missing_branch_is_a_config_error() {
        let m = model();
        let header = {
            let buf = encode_checkpoint(&m).unwrap();
            let (_, _, h) = Reader::open(&buf, CHECKPOINT_MAGIC, CHECKPOINT_VERSION).unwrap();
            h.to_vec()
        };
        let mut w = Writer::new(Vec::new(), CHECKPOINT_MAGIC, CHECKPOINT_VERSION, &header).unwrap();
        for (name, t) in m.named() {
            if !name.starts_with("denoiser.v2t") {
                w.tensor(&name, t, Precision::F64).unwrap();
            }
        }
        let buf = w.finish().unwrap();
        assert!(matches!(decode_checkpoint(&buf), Err(Error::Config(_))));
    }

    #[test]
    fn corrupt_files_fail_cleanly() {
        let mut buf = encode_checkpoint(&model()).unwrap();
        buf[1] = b'!';
        assert!(matches!(decode_checkpoint(&buf), Err(Error::Format(FormatError::BadMagic { .. }))));
        let buf = encode_checkpoint(&model()).unwrap();
        assert!(matches!(
            decode_checkpoint(&buf[..buf.len() - 1]),
            Err(Error::Format(FormatError::Truncated(_)))
        ));
    }
}
