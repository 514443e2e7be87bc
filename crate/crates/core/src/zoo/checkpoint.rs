//! Binary checkpoint format.
//!
//! ```text
//! b"MPRUNE01"
//! u64 little-endian: header length in bytes
//! header: UTF-8 JSON {format_version, architecture, params: [{name, shape}], groups}
//! f64 little-endian parameter data, parameters in header order, each row-major
//! ```
//! The file carries no timestamps, so equal inputs give equal bytes.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::groups::GroupTable;
use super::model::{Architecture, Model};
use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"MPRUNE01";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ParamHeader {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    architecture: Architecture,
    params: Vec<ParamHeader>,
    groups: GroupTable,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub params: ParamSet,
    pub groups: GroupTable,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            format_version: FORMAT_VERSION,
            architecture: self.model.arch.clone(),
            params: self
                .params
                .iter()
                .map(|(n, t)| ParamHeader { name: n.to_string(), shape: t.shape().to_vec() })
                .collect(),
            groups: self.groups.clone(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(16 + json.len() + 8 * self.params.numel());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in self.params.iter() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| Error::Checkpoint("truncated magic".into()))?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len).map_err(|_| Error::Checkpoint("truncated header length".into()))?;
        let len = u64::from_le_bytes(len) as usize;
        if r.len() < len {
            return Err(Error::Checkpoint("truncated header".into()));
        }
        let header: Header =
            serde_json::from_slice(&r[..len]).map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", header.format_version)));
        }
        let mut data = &r[len..];
        let mut params = ParamSet::new();
        for p in header.params {
            let n: usize = p.shape.iter().product();
            if data.len() < 8 * n {
                return Err(Error::Checkpoint(format!("truncated data for '{}'", p.name)));
            }
            let values = data[..8 * n].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            data = &data[8 * n..];
            params.insert(p.name, Tensor::new(p.shape, values)?)?;
        }
        if !data.is_empty() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", data.len())));
        }
        header.groups.validate(&params)?;
        Ok(Checkpoint { model: Model { arch: header.architecture }, params, groups: header.groups })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| Error::Config(format!("cannot read checkpoint {}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}
