//! Binary model container: a JSON header followed by raw matrix blocks.
//!
//! ```text
//! "AVMF" | u8 version=1 | u32 header_len | header JSON (UTF-8)
//! for each block listed in the header: rows*cols f64 little-endian, row-major
//! trailer bytes (optional, whatever remains)
//! ```

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"AVMF";
pub const VERSION: u8 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    kind: String,
    meta: serde_json::Value,
    blocks: Vec<BlockInfo>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BlockInfo {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub kind: String,
    pub meta: serde_json::Value,
    pub blocks: Vec<(String, DMatrix<f64>)>,
    pub trailer: Vec<u8>,
}

impl Container {
    pub fn new(kind: impl Into<String>, meta: serde_json::Value) -> Self {
        Self {
            kind: kind.into(),
            meta,
            blocks: Vec::new(),
            trailer: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, m: &DMatrix<f64>) {
        self.blocks.push((name.into(), m.clone()));
    }

    pub fn push_vector(&mut self, name: impl Into<String>, v: &DVector<f64>) {
        self.blocks
            .push((name.into(), DMatrix::from_row_slice(1, v.len(), v.as_slice())));
    }

    pub fn matrix(&self, name: &str) -> Result<DMatrix<f64>> {
        self.blocks
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m.clone())
            .ok_or_else(|| Error::Format(format!("{} file lacks block {name}", self.kind)))
    }

    pub fn vector(&self, name: &str) -> Result<DVector<f64>> {
        let m = self.matrix(name)?;
        if m.nrows() != 1 {
            return Err(Error::Format(format!("block {name} is not a row vector")));
        }
        Ok(DVector::from_iterator(m.ncols(), m.iter().cloned()))
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Format(format!("expected a {kind} file, found {}", self.kind)));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            blocks: self
                .blocks
                .iter()
                .map(|(name, m)| BlockInfo {
                    name: name.clone(),
                    rows: m.nrows(),
                    cols: m.ncols(),
                })
                .collect(),
        };
        let header = serde_json::to_vec(&header)?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, m) in &self.blocks {
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    out.extend_from_slice(&m[(i, j)].to_le_bytes());
                }
            }
        }
        out.extend_from_slice(&self.trailer);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(Error::Format("missing AVMF magic".into()));
        }
        if bytes.len() < 9 {
            return Err(Error::Corruption("truncated container header".into()));
        }
        if bytes[4] != VERSION {
            return Err(Error::Format(format!("unsupported container version {}", bytes[4])));
        }
        let header_len = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
        let header_end = 9 + header_len;
        if bytes.len() < header_end {
            return Err(Error::Corruption("truncated container header".into()));
        }
        let header: Header = serde_json::from_slice(&bytes[9..header_end])
            .map_err(|e| Error::Format(format!("container header: {e}")))?;
        let mut pos = header_end;
        let mut blocks = Vec::with_capacity(header.blocks.len());
        for info in header.blocks {
            let len = info.rows * info.cols * 8;
            if bytes.len() < pos + len {
                return Err(Error::Corruption(format!("block {} is truncated", info.name)));
            }
            let values: Vec<f64> = bytes[pos..pos + len]
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect();
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("block {} has non-finite values", info.name)));
            }
            blocks.push((info.name, DMatrix::from_row_slice(info.rows, info.cols, &values)));
            pos += len;
        }
        Ok(Self {
            kind: header.kind,
            meta: header.meta,
            blocks,
            trailer: bytes[pos..].to_vec(),
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
