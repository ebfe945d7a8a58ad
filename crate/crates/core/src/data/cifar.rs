//! Reader for the CIFAR-10 binary batch layout.

use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{InputShape, Tensor};

use super::Dataset;

pub const CIFAR_CLASSES: usize = 10;
pub const CIFAR_SIDE: usize = 32;
pub const CIFAR_PIXELS: usize = 3 * CIFAR_SIDE * CIFAR_SIDE;
/// One label byte followed by the R, G and B planes.
pub const CIFAR_RECORD: usize = 1 + CIFAR_PIXELS;

/// Parses records from memory. Pixels are scaled to `[0, 1]`.
pub fn parse_cifar_binary(bytes: &[u8], name: &str) -> Result<Dataset> {
    if !bytes.len().is_multiple_of(CIFAR_RECORD) {
        let offset = (bytes.len() / CIFAR_RECORD * CIFAR_RECORD) as u64;
        return Err(Error::Format {
            offset,
            message: format!(
                "incomplete record: {} trailing bytes, expected {CIFAR_RECORD}",
                bytes.len() % CIFAR_RECORD
            ),
        });
    }
    let n = bytes.len() / CIFAR_RECORD;
    let mut labels = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * CIFAR_PIXELS);
    for (i, rec) in bytes.chunks_exact(CIFAR_RECORD).enumerate() {
        let label = rec[0] as usize;
        if label >= CIFAR_CLASSES {
            return Err(Error::Format {
                offset: (i * CIFAR_RECORD) as u64,
                message: format!("label {label} out of range"),
            });
        }
        labels.push(label);
        data.extend(rec[1..].iter().map(|&b| b as f64 / 255.0));
    }
    if n == 0 {
        return Err(Error::Format { offset: 0, message: "no records".into() });
    }
    let shape = InputShape::Image { channels: 3, height: CIFAR_SIDE, width: CIFAR_SIDE };
    Dataset::new(name, Tensor::matrix(n, CIFAR_PIXELS, data)?, labels, CIFAR_CLASSES, shape)
}

pub fn load_cifar_binary(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "cifar".into());
    parse_cifar_binary(&bytes, &name)
}
