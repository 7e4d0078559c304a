//! Binary checkpoints.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "DVTC" | u32 version | u64 header length | JSON header | f64 payload
//! ```
//!
//! The header lists every tensor by name and shape in payload order. When
//! optimizer state is stored, each parameter's first and second moments
//! follow the parameters, in the same order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_file, write_file};
use crate::error::{Error, Result};
use crate::model::{ArchConfig, Model, VariantConfig};
use crate::optim::{AdamConfig, AdamState};
use crate::params::ModelParams;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DVTC";
pub const CHECKPOINT_VERSION: u32 = 1;
const PREFIX_LEN: usize = 16;

/// A model plus optional optimizer state and the seed that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub seed: u64,
    pub adam: Option<AdamState>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct AdamHeader {
    config: AdamConfig,
    step: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    variant: VariantConfig,
    arch: ArchConfig,
    d_c: usize,
    d_w: usize,
    seed: u64,
    tensors: Vec<TensorEntry>,
    adam: Option<AdamHeader>,
}

fn push_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let model = &ckpt.model;
    let header = Header {
        variant: model.variant,
        arch: model.arch.clone(),
        d_c: model.d_c,
        d_w: model.d_w,
        seed: ckpt.seed,
        tensors: model
            .params
            .iter()
            .map(|(name, t)| TensorEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
            })
            .collect(),
        adam: ckpt.adam.as_ref().map(|a| AdamHeader {
            config: a.config,
            step: a.step,
        }),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in model.params.iter() {
        push_f64s(&mut out, t.data());
    }
    if let Some(adam) = &ckpt.adam {
        for moments in [&adam.m, &adam.v] {
            for (name, t) in model.params.iter() {
                let m = moments
                    .get(name)
                    .filter(|m| m.len() == t.len())
                    .ok_or_else(|| Error::Validation(format!("optimizer state for `{name}` missing or mis-sized")))?;
                push_f64s(&mut out, m);
            }
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            offset: self.pos as u64,
            msg: msg.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err(format!(
                "truncated {what}: expected {n} bytes, found {}",
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = self.take(n * 8, what)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(4, "magic")? != CHECKPOINT_MAGIC {
        r.pos = 0;
        return Err(r.err("bad magic"));
    }
    let version = u32::from_le_bytes(r.take(4, "version")?.try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(r.err(format!("unsupported checkpoint version {version}")));
    }
    let len = u64::from_le_bytes(r.take(8, "header length")?.try_into().expect("8 bytes"));
    debug_assert_eq!(r.pos, PREFIX_LEN);
    let len = usize::try_from(len).map_err(|_| r.err("header length overflows"))?;
    let header: Header = serde_json::from_slice(r.take(len, "header")?)
        .map_err(|e| Error::Validation(format!("{}: checkpoint header: {e}", path.display())))?;

    header.arch.validate()?;
    // The tensor list must match what this architecture and variant build.
    let expected = Model::init(header.arch.clone(), header.variant, header.d_c, header.d_w, 0)?;
    let names: Vec<&str> = header.tensors.iter().map(|t| t.name.as_str()).collect();
    let want: Vec<&str> = expected.params.names().collect();
    if names != want {
        let missing: Vec<&&str> = want.iter().filter(|n| !names.contains(n)).collect();
        let extra: Vec<&&str> = names.iter().filter(|n| !want.contains(n)).collect();
        return Err(Error::Validation(format!(
            "{}: tensor list mismatch, missing {missing:?}, unexpected {extra:?}",
            path.display()
        )));
    }
    let mut params = ModelParams::new();
    for entry in &header.tensors {
        let want_shape = expected.params.require(&entry.name)?.shape();
        if entry.shape != want_shape {
            return Err(Error::Validation(format!(
                "{}: tensor `{}` has shape {:?}, expected {:?}",
                path.display(),
                entry.name,
                entry.shape,
                want_shape
            )));
        }
        let n = entry.shape.iter().product();
        let data = r.f64s(n, &format!("tensor `{}`", entry.name))?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "{}: tensor `{}` holds non-finite values",
                path.display(),
                entry.name
            )));
        }
        params.insert(entry.name.clone(), Tensor::new(entry.shape.clone(), data)?);
    }
    let adam = match header.adam {
        None => None,
        Some(h) => {
            let mut state = AdamState::new(h.config, &params);
            state.step = h.step;
            for moments in [&mut state.m, &mut state.v] {
                for entry in &header.tensors {
                    let n = entry.shape.iter().product();
                    let data = r.f64s(n, &format!("optimizer moment for `{}`", entry.name))?;
                    if data.iter().any(|v| !v.is_finite()) {
                        return Err(Error::Validation(format!(
                            "{}: optimizer moment for `{}` holds non-finite values",
                            path.display(),
                            entry.name
                        )));
                    }
                    moments.insert(entry.name.clone(), data);
                }
            }
            Some(state)
        }
    };
    if r.pos != bytes.len() {
        return Err(r.err(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(Checkpoint {
        model: Model {
            arch: header.arch,
            variant: header.variant,
            d_c: header.d_c,
            d_w: header.d_w,
            params,
        },
        seed: header.seed,
        adam,
    })
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    write_file(path, &encode_checkpoint(ckpt)?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&read_file(path)?, path)
}
