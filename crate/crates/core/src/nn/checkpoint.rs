//! Versioned binary container for named tensors.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic    8 bytes  "SCARCKPT"
//! version  u32      currently 1
//! hdr_len  u64      length of the JSON header
//! header   hdr_len  {"kind": .., "meta": .., "tensors": [{"name", "shape"}, ..]}
//! payload           raw f64 values of each tensor, in header order
//! ```
//!
//! Values are stored as raw IEEE-754 bits so a reload is bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::model::{Architecture, Model};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SCARCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    kind: String,
    meta: Value,
    tensors: Vec<Entry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
}

/// In-memory form of a container file.
#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub kind: String,
    pub meta: Value,
    pub tensors: Vec<(String, Tensor)>,
}

impl Container {
    pub fn new(kind: impl Into<String>, meta: Value) -> Self {
        Container { kind: kind.into(), meta, tensors: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.push((name.into(), t));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let header = Header {
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|(name, t)| Entry { name: name.clone(), shape: t.shape().to_vec() })
                .collect(),
        };
        let hdr = serde_json::to_vec(&header)?;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(hdr.len() as u64).to_le_bytes())?;
        w.write_all(&hdr)?;
        for (_, t) in &self.tensors {
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut offset = 0u64;
        let mut magic = [0u8; 8];
        read_exact(r, &mut magic, &mut offset)?;
        if &magic != MAGIC {
            return Err(Error::Format { offset: 0, message: "not a checkpoint container".into() });
        }
        let mut b4 = [0u8; 4];
        read_exact(r, &mut b4, &mut offset)?;
        let version = u32::from_le_bytes(b4);
        if version != VERSION {
            return Err(Error::Format { offset: 8, message: format!("unsupported container version {version}") });
        }
        let mut b8 = [0u8; 8];
        read_exact(r, &mut b8, &mut offset)?;
        let hdr_len = u64::from_le_bytes(b8) as usize;
        let mut hdr = vec![0u8; hdr_len];
        read_exact(r, &mut hdr, &mut offset)?;
        let header: Header = serde_json::from_slice(&hdr)
            .map_err(|e| Error::Format { offset: 20, message: format!("bad header: {e}") })?;
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for e in header.tensors {
            let n: usize = e.shape.iter().product();
            let mut raw = vec![0u8; n * 8];
            read_exact(r, &mut raw, &mut offset)?;
            let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
            tensors.push((e.name, Tensor::new(e.shape, data)?));
        }
        Ok(Container { kind: header.kind, meta: header.meta, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        Container::read_from(&mut BufReader::new(File::open(path)?))
    }
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], offset: &mut u64) -> Result<()> {
    r.read_exact(buf).map_err(|e| Error::Format { offset: *offset, message: format!("truncated container: {e}") })?;
    *offset += buf.len() as u64;
    Ok(())
}

const MODEL_KIND: &str = "model";

impl Model {
    pub fn to_container(&self) -> Container {
        let meta = serde_json::to_value(self.architecture()).expect("architecture serialises");
        let mut c = Container::new(MODEL_KIND, meta);
        for (i, p) in self.params().iter().enumerate() {
            let mut t = p.clone();
            t.clear_grad();
            c.push(format!("param.{i}"), t);
        }
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        if c.kind != MODEL_KIND {
            return Err(Error::Format {
                offset: 0,
                message: format!("expected a model container, found {:?}", c.kind),
            });
        }
        let arch: Architecture = serde_json::from_value(c.meta.clone())?;
        let mut model = Model::new(arch, 0)?;
        model.load_params(c.tensors.iter().map(|(_, t)| t.clone()).collect())?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Model::from_container(&Container::load(path)?)
    }
}
