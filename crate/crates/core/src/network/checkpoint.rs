use std::io::{Read, Write};
use std::path::Path;

use super::{LayerParams, NetworkDims, NetworkParams};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DAENETP1";

/// Header: five little-endian `u32` counts (input, latent, hidden, output,
/// layers). Body: every tensor of [`NetworkParams::tensors`] as `f64` LE.
pub fn write_checkpoint(path: &Path, params: &NetworkParams) -> Result<()> {
    let d = params.dims;
    let mut buf = Vec::with_capacity(8 + 20 + 8 * params.num_parameters());
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    for count in [d.input, d.latent, d.hidden, d.output, d.layers] {
        let count = u32::try_from(count).map_err(|_| {
            Error::invalid("checkpoint", format!("dimension {count} overflows u32"))
        })?;
        buf.extend_from_slice(&count.to_le_bytes());
    }
    for t in params.tensors() {
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<NetworkParams> {
    let format = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingInput(path.to_path_buf()),
            _ => Error::Io(e),
        })?
        .read_to_end(&mut bytes)?;
    if bytes.len() < 28 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(format("missing DAENETP1 header".into()));
    }
    let count = |i: usize| {
        let at = 8 + 4 * i;
        u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize
    };
    let dims = NetworkDims {
        input: count(0),
        latent: count(1),
        hidden: count(2),
        output: count(3),
        layers: count(4),
    };
    let mut params = NetworkParams::zeros(dims, 1.0).map_err(|e| format(e.to_string()))?;
    let body = &bytes[28..];
    if body.len() != 8 * params.num_parameters() {
        return Err(format(format!(
            "expected {} parameter bytes, found {}",
            8 * params.num_parameters(),
            body.len()
        )));
    }
    let mut values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    for t in params.tensors_mut() {
        for v in t.data_mut() {
            *v = values.next().expect("length checked");
        }
    }
    if !params.is_finite() {
        return Err(format("non-finite parameter".into()));
    }
    Ok(params)
}

impl LayerParams {
    pub fn zeros(latent: usize, hidden: usize) -> Self {
        Self {
            w1: Tensor::zeros(&[hidden, latent]),
            b1: Tensor::zeros(&[hidden]),
            w2: Tensor::zeros(&[latent, hidden]),
            b2: Tensor::zeros(&[latent]),
        }
    }
}
