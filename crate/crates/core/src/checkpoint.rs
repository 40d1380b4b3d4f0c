//! Binary model checkpoints.
//!
//! Layout (little-endian): magic `TPAC`, `u32` version, `u64` header length,
//! UTF-8 JSON header, `u32` tensor count, then per tensor a `u32` name
//! length, the name, a `u32` rank, `u64` dims and `f64` values. The tensor
//! named [`PROMPT_TENSOR`] holds the fixed prompt embeddings and is not trained.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::config::Config;
use crate::dataio::Reader;
use crate::metrics::CalibrationReport;
use crate::model::TpaModel;
use crate::params::rng_stream;
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"TPAC";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const PROMPT_TENSOR: &str = "prompt_embeddings";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config: Config,
    pub input_dim: usize,
    pub num_classes: usize,
    pub fold: Option<usize>,
    pub best_epoch: Option<usize>,
    /// Validation records of the fold, by id.
    pub val_ids: Vec<String>,
    pub metrics: Option<CalibrationReport>,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub model: TpaModel,
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let header = serde_json::to_vec(&self.header).expect("header serialises");
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        let params = &self.model.params;
        put_u32(&mut out, params.len() + 1);
        let tensors = params.iter().chain(std::iter::once((PROMPT_TENSOR, &self.model.prompts)));
        for (name, t) in tensors {
            put_u32(&mut out, name.len());
            out.extend_from_slice(name.as_bytes());
            put_u32(&mut out, t.rank());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = Reader { bytes, pos: 0 };
        if rd.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::Format("bad magic, expected TPAC".into()));
        }
        let version = rd.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}"
            )));
        }
        let header_len = rd.u64()? as usize;
        let header: CheckpointHeader = serde_json::from_slice(rd.take(header_len)?)
            .map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
        let count = rd.u32()? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = rd.u32()? as usize;
            let name = std::str::from_utf8(rd.take(name_len)?)
                .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
                .to_owned();
            let rank = rd.u32()? as usize;
            let shape = (0..rank).map(|_| rd.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let raw = rd.take(n.checked_mul(8).ok_or_else(|| Error::Format("tensor too large".into()))?)?;
            let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            let t = Tensor::new(shape, data).map_err(|e| Error::Format(format!("tensor {name}: {e}")))?;
            tensors.push((name, t));
        }
        if rd.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes in checkpoint", bytes.len() - rd.pos)));
        }

        let prompts = tensors
            .iter()
            .position(|(n, _)| n == PROMPT_TENSOR)
            .map(|i| tensors.remove(i).1)
            .ok_or_else(|| Error::Format(format!("checkpoint lacks {PROMPT_TENSOR}")))?;
        let cfg = &header.config;
        // initialisation values are overwritten below; only the layout matters
        let mut model = TpaModel::init(
            &cfg.extractor,
            &cfg.classifier,
            &cfg.cvaesm,
            prompts,
            header.input_dim,
            &mut rng_stream(0, 0),
        )?;
        if model.num_classes != header.num_classes || tensors.len() != model.params.len() {
            return Err(Error::Format("checkpoint tensors do not match its config".into()));
        }
        for (name, t) in tensors {
            let id = model
                .params
                .find(&name)
                .ok_or_else(|| Error::Format(format!("unexpected tensor {name}")))?;
            if model.params.get(id).shape() != t.shape() {
                return Err(Error::Format(format!(
                    "tensor {name}: shape {:?}, expected {:?}",
                    t.shape(),
                    model.params.get(id).shape()
                )));
            }
            *model.params.get_mut(id) = t;
        }
        Ok(Self { header, model })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
