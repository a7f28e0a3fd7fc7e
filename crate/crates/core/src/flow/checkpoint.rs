//! Binary checkpoint container.
//!
//! ```text
//! magic   4 bytes  "KSCK"
//! version u32 LE   1
//! hlen    u64 LE   length of the JSON header in bytes
//! header  hlen     UTF-8 JSON, see `Header`
//! payload          little-endian scalars ("f32" or "f64" per header):
//!                  every tensor listed in `tensors`, in order, row-major;
//!                  then, if `optimizer_step` is present, the first-moment
//!                  and second-moment tensors in the same order
//! ```
//!
//! Loading rebuilds the model from the stored config and checks every
//! tensor name and shape against it.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::optim::AdamState;
use super::train::TrainConfig;
use crate::error::{ensure, Error, Result};
use crate::model::{ModelConfig, VelocityModel};
use crate::{Mat, Scalar};

pub const MAGIC: &[u8; 4] = b"KSCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub scalar: String,
    pub model: ModelConfig,
    pub train: Option<TrainConfig>,
    /// Free-form run settings (codec, window, data paths, ...).
    #[serde(default)]
    pub run: serde_json::Value,
    pub optimizer_step: Option<u64>,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint<S> {
    pub model: VelocityModel<S>,
    pub train: Option<TrainConfig>,
    pub run: serde_json::Value,
    pub optimizer: Option<AdamState<S>>,
}

fn push_scalar<S: Scalar>(out: &mut Vec<u8>, x: S, wide: bool) {
    if wide {
        out.extend_from_slice(&x.as_f64().to_le_bytes());
    } else {
        out.extend_from_slice(&(x.as_f64() as f32).to_le_bytes());
    }
}

impl<S: Scalar> Checkpoint<S> {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let params = self.model.params();
        let header = Header {
            scalar: S::NAME.to_string(),
            model: *self.model.config(),
            train: self.train,
            run: self.run.clone(),
            optimizer_step: self.optimizer.as_ref().map(|o| o.step),
            tensors: params
                .iter()
                .map(|(name, m)| TensorEntry {
                    name: name.to_string(),
                    rows: m.rows(),
                    cols: m.cols(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let wide = S::NAME == "f64";
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        let mut mats: Vec<&Mat<S>> = params.iter().map(|(_, m)| m).collect();
        if let Some(o) = &self.optimizer {
            mats.extend(o.m.iter());
            mats.extend(o.v.iter());
        }
        for m in mats {
            for &x in m.data() {
                push_scalar(&mut out, x, wide);
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        ensure!(bytes.len() >= 16, Format, "checkpoint truncated");
        ensure!(&bytes[..4] == MAGIC, Format, "not a checkpoint (bad magic)");
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        ensure!(version == VERSION, Format, "unsupported checkpoint version {version}");
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        ensure!(bytes.len() >= 16 + hlen, Format, "checkpoint header truncated");
        let header: Header = serde_json::from_slice(&bytes[16..16 + hlen])?;
        let width = match header.scalar.as_str() {
            "f32" => 4,
            "f64" => 8,
            other => return Err(Error::Format(format!("unknown scalar type `{other}`"))),
        };
        let mut payload = bytes[16 + hlen..].chunks_exact(width).map(|b| match width {
            4 => S::lit(f32::from_le_bytes(b.try_into().unwrap()) as f64),
            _ => S::lit(f64::from_le_bytes(b.try_into().unwrap())),
        });
        let copies = if header.optimizer_step.is_some() { 3 } else { 1 };
        let expected: usize = header.tensors.iter().map(|t| t.rows * t.cols).sum::<usize>() * copies;
        ensure!(
            bytes.len() - 16 - hlen == expected * width,
            Format,
            "checkpoint payload has {} bytes, header implies {}",
            bytes.len() - 16 - hlen,
            expected * width
        );
        let mut read = |t: &TensorEntry| Mat::from_vec(t.rows, t.cols, payload.by_ref().take(t.rows * t.cols).collect());
        let values: Vec<(String, Mat<S>)> = header.tensors.iter().map(|t| (t.name.clone(), read(t))).collect();
        let mut model = VelocityModel::<S>::new(header.model)?;
        model.load_values(values)?;
        let optimizer = match header.optimizer_step {
            Some(step) => {
                let m = header.tensors.iter().map(&mut read).collect();
                let v = header.tensors.iter().map(&mut read).collect();
                Some(AdamState { step, m, v })
            }
            None => None,
        };
        Ok(Self {
            model,
            train: header.train,
            run: header.run,
            optimizer,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
