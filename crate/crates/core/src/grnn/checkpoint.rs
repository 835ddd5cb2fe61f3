// SPDX-License-Identifier: Apache-2.0

//! Versioned binary checkpoints.
//!
//! Layout (little endian): 8-byte magic, `u32` version, `u32` scalar count
//! then `(u16 name length, name, u64 value)` per scalar, `u32` tensor count
//! then `(u16 name length, name, u64 rows, u64 cols, rows*cols f64)` per
//! tensor. The model config travels in a JSON sidecar.

use std::io::{Cursor, Read};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{GrnnModel, ModelConfig, TrainState};
use crate::tensor::Tensor2;

const MODEL_MAGIC: &[u8; 8] = b"NFZMODEL";
const STATE_MAGIC: &[u8; 8] = b"NFZTRAIN";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint of the expected kind")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("truncated or corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("missing entry `{0}`")]
    Missing(String),
    #[error("checkpoint does not match its sidecar: {0}")]
    Inconsistent(String),
    #[error("sidecar: {0}")]
    Sidecar(#[from] serde_json::Error),
}

impl From<std::io::Error> for CheckpointError {
    fn from(e: std::io::Error) -> Self {
        CheckpointError::Corrupt(e.to_string())
    }
}

struct Container {
    scalars: Vec<(String, u64)>,
    tensors: Vec<(String, Tensor2)>,
}

impl Container {
    fn scalar(&self, name: &str) -> Result<u64, CheckpointError> {
        self.scalars
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| CheckpointError::Missing(name.into()))
    }

    fn take(&mut self, name: &str) -> Result<Tensor2, CheckpointError> {
        let i =
            self.tensors.iter().position(|(n, _)| n == name).ok_or_else(|| CheckpointError::Missing(name.into()))?;
        Ok(self.tensors.remove(i).1)
    }
}

fn write_name(out: &mut Vec<u8>, name: &str) {
    out.write_u16::<LittleEndian>(name.len() as u16).expect("vec write");
    out.extend_from_slice(name.as_bytes());
}

fn encode(magic: &[u8; 8], scalars: &[(String, u64)], tensors: &[(String, &Tensor2)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(magic);
    out.write_u32::<LittleEndian>(VERSION).expect("vec write");
    out.write_u32::<LittleEndian>(scalars.len() as u32).expect("vec write");
    for (name, v) in scalars {
        write_name(&mut out, name);
        out.write_u64::<LittleEndian>(*v).expect("vec write");
    }
    out.write_u32::<LittleEndian>(tensors.len() as u32).expect("vec write");
    for (name, t) in tensors {
        write_name(&mut out, name);
        out.write_u64::<LittleEndian>(t.rows() as u64).expect("vec write");
        out.write_u64::<LittleEndian>(t.cols() as u64).expect("vec write");
        for &v in t.data() {
            out.write_f64::<LittleEndian>(v).expect("vec write");
        }
    }
    out
}

fn read_name(cur: &mut Cursor<&[u8]>) -> Result<String, CheckpointError> {
    let len = cur.read_u16::<LittleEndian>()? as usize;
    let mut buf = vec![0; len];
    cur.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| CheckpointError::Corrupt(e.to_string()))
}

fn decode(magic: &[u8; 8], bytes: &[u8]) -> Result<Container, CheckpointError> {
    if bytes.len() < 8 || &bytes[..8] != magic {
        return Err(CheckpointError::BadMagic);
    }
    let mut cur = Cursor::new(&bytes[8..]);
    let version = cur.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let mut scalars = Vec::new();
    for _ in 0..cur.read_u32::<LittleEndian>()? {
        let name = read_name(&mut cur)?;
        scalars.push((name, cur.read_u64::<LittleEndian>()?));
    }
    let mut tensors = Vec::new();
    for _ in 0..cur.read_u32::<LittleEndian>()? {
        let name = read_name(&mut cur)?;
        let rows = cur.read_u64::<LittleEndian>()? as usize;
        let cols = cur.read_u64::<LittleEndian>()? as usize;
        let len = rows.checked_mul(cols).ok_or_else(|| CheckpointError::Corrupt("tensor size overflow".into()))?;
        if len > (bytes.len() / 8) {
            return Err(CheckpointError::Corrupt(format!("tensor `{name}` larger than file")));
        }
        let mut data = vec![0.0; len];
        cur.read_f64_into::<LittleEndian>(&mut data)?;
        tensors.push((name, Tensor2::from_vec(rows, cols, data)));
    }
    if (cur.position() as usize) != bytes.len() - 8 {
        return Err(CheckpointError::Corrupt("trailing bytes".into()));
    }
    Ok(Container { scalars, tensors })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorInfo {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

/// JSON description stored next to a model checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSidecar {
    pub format_version: u32,
    pub model: ModelConfig,
    pub nodes: usize,
    pub tensors: Vec<TensorInfo>,
    #[serde(default)]
    pub netlist_digest: Option<String>,
    #[serde(default)]
    pub config_digest: Option<String>,
    #[serde(default)]
    pub prng_seed: Option<u64>,
}

/// Binary payload and sidecar for a model.
pub fn save_model(model: &GrnnModel) -> (Vec<u8>, ModelSidecar) {
    let names = model.param_names();
    let tensors: Vec<(String, &Tensor2)> = names.iter().cloned().zip(&model.params).collect();
    let bytes = encode(MODEL_MAGIC, &[("nodes".into(), model.nodes() as u64)], &tensors);
    let sidecar = ModelSidecar {
        format_version: VERSION,
        model: model.config.clone(),
        nodes: model.nodes(),
        tensors: tensors.iter().map(|(n, t)| TensorInfo { name: n.clone(), rows: t.rows(), cols: t.cols() }).collect(),
        netlist_digest: None,
        config_digest: None,
        prng_seed: None,
    };
    (bytes, sidecar)
}

pub fn load_model(bytes: &[u8], sidecar: &ModelSidecar) -> Result<GrnnModel, CheckpointError> {
    let mut c = decode(MODEL_MAGIC, bytes)?;
    let nodes = c.scalar("nodes")? as usize;
    if nodes != sidecar.nodes {
        return Err(CheckpointError::Inconsistent(format!("{nodes} nodes vs sidecar {}", sidecar.nodes)));
    }
    let probe = GrnnModel { config: sidecar.model.clone(), params: Vec::new(), nodes };
    let params = probe.param_names().iter().map(|n| c.take(n)).collect::<Result<Vec<_>, _>>()?;
    if !c.tensors.is_empty() {
        return Err(CheckpointError::Inconsistent(format!("unexpected tensor `{}`", c.tensors[0].0)));
    }
    GrnnModel::from_parts(sidecar.model.clone(), params, nodes)
        .map_err(|e| CheckpointError::Inconsistent(e.to_string()))
}

/// Training state as a binary container; `model` supplies tensor names.
pub fn save_train_state(model: &GrnnModel, state: &TrainState) -> Vec<u8> {
    let names = model.param_names();
    let seed = state.rng.get_seed();
    let word_pos = state.rng.get_word_pos();
    let mut scalars: Vec<(String, u64)> = vec![
        ("epoch".into(), state.epoch as u64),
        ("epochs_since_best".into(), state.epochs_since_best as u64),
        ("best_val_loss".into(), state.best_val_loss.to_bits()),
        ("rng.stream".into(), state.rng.get_stream()),
        ("rng.word_pos.lo".into(), word_pos as u64),
        ("rng.word_pos.hi".into(), (word_pos >> 64) as u64),
    ];
    for (i, chunk) in seed.chunks(8).enumerate() {
        scalars.push((format!("rng.seed.{i}"), u64::from_le_bytes(chunk.try_into().expect("8 bytes"))));
    }
    let mut tensors: Vec<(String, &Tensor2)> = Vec::new();
    for (n, t) in names.iter().zip(&state.rms) {
        tensors.push((format!("rms.{n}"), t));
    }
    for (n, t) in names.iter().zip(&state.best_params) {
        tensors.push((format!("best.{n}"), t));
    }
    encode(STATE_MAGIC, &scalars, &tensors)
}

pub fn load_train_state(model: &GrnnModel, bytes: &[u8]) -> Result<TrainState, CheckpointError> {
    let mut c = decode(STATE_MAGIC, bytes)?;
    let mut seed = [0u8; 32];
    for i in 0..4 {
        seed[i * 8..(i + 1) * 8].copy_from_slice(&c.scalar(&format!("rng.seed.{i}"))?.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(c.scalar("rng.stream")?);
    rng.set_word_pos(c.scalar("rng.word_pos.lo")? as u128 | (c.scalar("rng.word_pos.hi")? as u128) << 64);
    let names = model.param_names();
    let rms = names.iter().map(|n| c.take(&format!("rms.{n}"))).collect::<Result<Vec<_>, _>>()?;
    let best_params = names.iter().map(|n| c.take(&format!("best.{n}"))).collect::<Result<Vec<_>, _>>()?;
    for ((r, b), p) in rms.iter().zip(&best_params).zip(&model.params) {
        if r.shape() != p.shape() || b.shape() != p.shape() {
            return Err(CheckpointError::Inconsistent("training state shapes differ from the model".into()));
        }
    }
    Ok(TrainState {
        epoch: c.scalar("epoch")? as usize,
        rms,
        rng,
        best_val_loss: f64::from_bits(c.scalar("best_val_loss")?),
        best_params,
        epochs_since_best: c.scalar("epochs_since_best")? as usize,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grnn::tests::tiny_config;
    use rand::Rng;

    #[test]
    fn model_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = GrnnModel::new(tiny_config(true), 7, &mut rng).unwrap();
        let (bytes, sidecar) = save_model(&model);
        let json = serde_json::to_string(&sidecar).unwrap();
        let back = load_model(&bytes, &serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, model);
        assert_eq!(save_model(&back).0, bytes);
        assert!(matches!(load_model(&bytes[..bytes.len() - 3], &sidecar), Err(CheckpointError::Corrupt(_))));
        assert!(matches!(load_model(b"garbage!garbage!", &sidecar), Err(CheckpointError::BadMagic)));
    }

    #[test]
    fn train_state_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = GrnnModel::new(tiny_config(false), 3, &mut rng).unwrap();
        let mut state = TrainState::new(&model, ChaCha8Rng::seed_from_u64(77));
        let _: u64 = state.rng.gen();
        state.epoch = 12;
        state.best_val_loss = 0.123456789;
        state.rms[0].data_mut()[0] = 1e-300;
        let bytes = save_train_state(&model, &state);
        let mut back = load_train_state(&model, &bytes).unwrap();
        assert_eq!(back, state);
        assert_eq!(back.rng.gen::<u64>(), state.rng.gen::<u64>());
    }
}
