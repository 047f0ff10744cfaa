//! Binary checkpoint container.
//!
//! Layout (little endian): magic `CTCOCRCK`, `u32` format version, `u64`
//! metadata length followed by the metadata as JSON, `u32` array count, then
//! per array: `u32` name length, UTF-8 name, `u32` rank, `u64` per
//! dimension, and the `f64` values in row-major order.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use super::model::{Model, ModelConfig};
use super::param::{ParamArray, Parameterized};
use crate::ctc::Alphabet;
use crate::dataset::Unit;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"CTCOCRCK";

/// Training metadata stored next to the parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub config: ModelConfig,
    pub alphabet: Alphabet,
    pub unit: Unit,
    /// Epoch (1-based) the parameters come from; 0 for an untrained model.
    pub epoch: usize,
    pub val_char_accuracy: Option<f64>,
    pub val_seq_accuracy: Option<f64>,
    /// How per-sample losses are combined within a batch.
    pub loss_reduction: String,
    pub learning_rate: f64,
    pub seed: u64,
}

impl CheckpointMeta {
    pub fn new(config: ModelConfig, alphabet: Alphabet, unit: Unit) -> Self {
        CheckpointMeta {
            format_version: CHECKPOINT_VERSION,
            learning_rate: config.kind.default_learning_rate(),
            config,
            alphabet,
            unit,
            epoch: 0,
            val_char_accuracy: None,
            val_seq_accuracy: None,
            loss_reduction: "mean".into(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub values: ArrayD<f64>,
}

/// Named parameter arrays plus metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub arrays: Vec<NamedArray>,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    /// Snapshot of every parameter and buffer of `model`.
    pub fn capture(model: &Model, meta: CheckpointMeta) -> Self {
        let mut arrays = Vec::new();
        model.visit_params(&mut |p: &ParamArray| {
            arrays.push(NamedArray {
                name: p.name.clone(),
                values: p.values.clone(),
            })
        });
        Checkpoint { meta, arrays }
    }

    /// Rebuilds the model, checking that names and shapes match its config.
    pub fn restore(&self) -> Result<Model> {
        if self.meta.config.num_classes != self.meta.alphabet.num_classes() {
            return Err(corrupt("alphabet size disagrees with model config"));
        }
        let mut model = Model::new(self.meta.config.clone(), 0)?;
        let mut expected = 0;
        let mut err = None;
        model.visit_params_mut(&mut |p: &mut ParamArray| {
            expected += 1;
            if err.is_some() {
                return;
            }
            match self.arrays.iter().find(|a| a.name == p.name) {
                Some(a) if a.values.shape() == p.values.shape() => p.values.assign(&a.values),
                Some(a) => {
                    err = Some(corrupt(format!(
                        "{}: shape {:?} != expected {:?}",
                        p.name,
                        a.values.shape(),
                        p.values.shape()
                    )))
                }
                None => err = Some(corrupt(format!("missing array {}", p.name))),
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        if expected != self.arrays.len() {
            return Err(corrupt(format!("{} arrays stored, model has {expected}", self.arrays.len())));
        }
        Ok(model)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = serde_json::to_vec(&self.meta).map_err(|e| corrupt(e.to_string()))?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.meta.format_version.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(self.arrays.len() as u32).to_le_bytes());
        for a in &self.arrays {
            out.extend_from_slice(&(a.name.len() as u32).to_le_bytes());
            out.extend_from_slice(a.name.as_bytes());
            out.extend_from_slice(&(a.values.ndim() as u32).to_le_bytes());
            for &d in a.values.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in a.values.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(corrupt("not a checkpoint file"));
        }
        let version = read_u32(&mut r)?;
        if version != CHECKPOINT_VERSION {
            return Err(corrupt(format!(
                "format version {version} unsupported (expected {CHECKPOINT_VERSION})"
            )));
        }
        let meta_len = read_u64(&mut r)? as usize;
        if meta_len > r.len() {
            return Err(corrupt("truncated metadata"));
        }
        let meta: CheckpointMeta = serde_json::from_slice(&r[..meta_len]).map_err(|e| corrupt(e.to_string()))?;
        r = &r[meta_len..];
        if meta.format_version != version {
            return Err(corrupt("header and metadata versions differ"));
        }
        let count = read_u32(&mut r)?;
        let mut arrays = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let name_len = read_u32(&mut r)? as usize;
            if name_len > r.len() {
                return Err(corrupt("truncated array name"));
            }
            let name = std::str::from_utf8(&r[..name_len])
                .map_err(|_| corrupt("array name is not UTF-8"))?
                .to_owned();
            r = &r[name_len..];
            let rank = read_u32(&mut r)? as usize;
            let shape = (0..rank).map(|_| read_u64(&mut r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let len: usize = shape.iter().product();
            if len.checked_mul(8).is_none_or(|b| b > r.len()) {
                return Err(corrupt(format!("truncated data for {name}")));
            }
            let data: Vec<f64> = r[..len * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            r = &r[len * 8..];
            let values = ArrayD::from_shape_vec(IxDyn(&shape), data).map_err(|e| corrupt(e.to_string()))?;
            arrays.push(NamedArray { name, values });
        }
        if !r.is_empty() {
            return Err(corrupt("trailing bytes"));
        }
        Ok(Checkpoint { meta, arrays })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_bytes()?;
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(&bytes))
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|_| corrupt("unexpected end of file"))
}

fn read_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut &[u8]) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::ModelKind;

    fn sample() -> (Model, Checkpoint) {
        let alphabet = Alphabet::new("0123".chars()).unwrap();
        let config = ModelConfig::tiny(ModelKind::Crnn, alphabet.num_classes(), 4);
        let model = Model::new(config.clone(), 3).unwrap();
        let ckpt = Checkpoint::capture(&model, CheckpointMeta::new(config, alphabet, Unit::Word));
        (model, ckpt)
    }

    #[test]
    fn bytes_round_trip() {
        let (_, ckpt) = sample();
        let back = Checkpoint::from_bytes(&ckpt.to_bytes().unwrap()).unwrap();
        assert_eq!(back, ckpt);
    }

    #[test]
    fn restore_reproduces_parameters() {
        let (model, ckpt) = sample();
        let restored = ckpt.restore().unwrap();
        let mut a = Vec::new();
        model.visit_params(&mut |p| a.push(p.values.clone()));
        let mut b = Vec::new();
        restored.visit_params(&mut |p| b.push(p.values.clone()));
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_other_versions_and_garbage() {
        let (_, ckpt) = sample();
        let mut bytes = ckpt.to_bytes().unwrap();
        bytes[8..12].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Checkpoint(_))));
        assert!(Checkpoint::from_bytes(b"CTCOCRCK").is_err());
        let good = ckpt.to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&good[..good.len() - 3]).is_err());
    }

    #[test]
    fn restore_detects_shape_mismatch() {
        let (_, mut ckpt) = sample();
        ckpt.arrays[0].values = ArrayD::zeros(IxDyn(&[1]));
        assert!(ckpt.restore().is_err());
    }
}
