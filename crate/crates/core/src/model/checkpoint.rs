//! Binary checkpoint: magic, a length-prefixed JSON header (config, RNG
//! state, tensor table), then every tensor as little-endian f64.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, Params, QaModel, RngState};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"QADAPT\x00\x01";

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    rng: RngState,
    tensors: Vec<(String, usize)>,
}

fn io_err(e: std::io::Error) -> Error {
    Error::Checkpoint(e.to_string())
}

pub fn write_checkpoint<W: Write>(model: &QaModel, mut out: W) -> Result<()> {
    let named = model.params.named();
    let header = Header {
        config: model.config.clone(),
        rng: model.rng,
        tensors: named.iter().map(|(n, t)| (n.clone(), t.len())).collect(),
    };
    let json = serde_json::to_vec(&header)?;
    out.write_all(MAGIC).map_err(io_err)?;
    out.write_all(&(json.len() as u64).to_le_bytes()).map_err(io_err)?;
    out.write_all(&json).map_err(io_err)?;
    for (_, t) in named {
        for x in t {
            out.write_all(&x.to_le_bytes()).map_err(io_err)?;
        }
    }
    out.flush().map_err(io_err)
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<QaModel> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len).map_err(io_err)?;
    let len = u64::from_le_bytes(len) as usize;
    if len > 1 << 30 {
        return Err(Error::Checkpoint("header too large".into()));
    }
    let mut json = vec![0u8; len];
    input.read_exact(&mut json).map_err(io_err)?;
    let header: Header = serde_json::from_slice(&json)?;
    header.config.validate()?;

    let mut params = Params::zeros(&header.config);
    let expected: Vec<(String, usize)> = params.named().iter().map(|(n, t)| (n.clone(), t.len())).collect();
    if expected != header.tensors {
        return Err(Error::Checkpoint("tensor table does not match config".into()));
    }
    let mut buf = [0u8; 8];
    for t in params.tensors_mut() {
        for x in t.iter_mut() {
            input.read_exact(&mut buf).map_err(io_err)?;
            *x = f64::from_le_bytes(buf);
        }
    }
    if input.read(&mut buf).map_err(io_err)? != 0 {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    if !params.is_finite() {
        return Err(Error::Checkpoint("non-finite parameter".into()));
    }
    Ok(QaModel {
        config: header.config,
        params,
        rng: header.rng,
    })
}

pub fn save_checkpoint(model: &QaModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(model, BufWriter::new(file))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<QaModel> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Vocab;

    fn model() -> QaModel {
        let mut cfg = ModelConfig::new(Vocab::new(["a", "b", "ü"]));
        cfg.d_model = 8;
        cfg.n_heads = 2;
        cfg.ffn_dim = 12;
        cfg.max_seq_len = 16;
        cfg.seed = 5;
        let mut m = QaModel::init(cfg).unwrap();
        m.params.out_b = vec![0.1 + 0.2, -1e-300];
        m
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = model();
        let mut buf = Vec::new();
        write_checkpoint(&m, &mut buf).unwrap();
        let back = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(back, m);
        for ((_, a), (_, b)) in m.params.named().iter().zip(back.params.named()) {
            assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn rejects_corruption() {
        let m = model();
        let mut buf = Vec::new();
        write_checkpoint(&m, &mut buf).unwrap();
        assert!(read_checkpoint(&buf[..buf.len() - 3]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(read_checkpoint(extra.as_slice()).is_err());
        buf[0] = b'X';
        assert!(matches!(read_checkpoint(buf.as_slice()), Err(Error::Checkpoint(_))));
    }
}
