//! Model checkpoint serialization.
//!
//! Single binary file: 8-byte magic `DMASUM01`, a little-endian u32 length
//! prefix, a UTF-8 JSON header (model config, run metadata, parameter
//! name/shape table), then the raw little-endian 64-bit floats of every
//! parameter in header order. Save -> load -> save reproduces the file
//! byte for byte.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::ParameterVector;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::tensor::Matrix;

pub const MAGIC: &[u8; 8] = b"DMASUM01";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ParamShape {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    seed: u64,
    /// Run configuration echoed verbatim so every artifact is traceable.
    config_echo: serde_json::Value,
    params: Vec<ParamShape>,
}

/// A loaded checkpoint: model configuration, parameters, and run metadata.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ParameterVector,
    pub seed: u64,
    pub config_echo: serde_json::Value,
}

pub fn save_checkpoint(
    path: &Path,
    config: &ModelConfig,
    params: &ParameterVector,
    seed: u64,
    config_echo: serde_json::Value,
) -> Result<()> {
    let header = Header {
        config: config.clone(),
        seed,
        config_echo,
        params: params
            .entries()
            .iter()
            .map(|p| ParamShape {
                name: p.name.clone(),
                rows: p.value.rows(),
                cols: p.value.cols(),
            })
            .collect(),
    };
    let header_json = serde_json::to_vec(&header)?;

    let mut bytes = Vec::with_capacity(16 + header_json.len() + params.total_elements() * 8);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&header_json);
    for p in params.entries() {
        for v in p.value.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }

    let display = path.display().to_string();
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(&display, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(&display, e))?;
    file.sync_all().map_err(|e| Error::io(&display, e))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let display = path.display().to_string();
    let mut file = std::fs::File::open(path).map_err(|e| Error::io(&display, e))?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)
        .map_err(|e| Error::io(&display, e))?;

    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(Error::Input(format!(
            "'{}' is not a checkpoint (bad magic)",
            display
        )));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if bytes.len() < 12 + header_len {
        return Err(Error::Input(format!(
            "'{}' is truncated inside the header",
            display
        )));
    }
    let header: Header = serde_json::from_slice(&bytes[12..12 + header_len])?;

    let total: usize = header.params.iter().map(|p| p.rows * p.cols).sum();
    let payload = &bytes[12 + header_len..];
    if payload.len() != total * 8 {
        return Err(Error::Input(format!(
            "'{}' payload is {} bytes, expected {}",
            display,
            payload.len(),
            total * 8
        )));
    }

    let mut params = ParameterVector::new();
    let mut offset = 0;
    for shape in &header.params {
        let n = shape.rows * shape.cols;
        let mut data = Vec::with_capacity(n);
        for k in 0..n {
            let start = (offset + k) * 8;
            let v = f64::from_le_bytes(payload[start..start + 8].try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::Numeric(format!(
                    "checkpoint parameter '{}' has non-finite value at element {}",
                    shape.name, k
                )));
            }
            data.push(v);
        }
        params.push(
            shape.name.clone(),
            Matrix::from_vec(shape.rows, shape.cols, data)?,
        );
        offset += n;
    }

    Ok(Checkpoint {
        config: header.config,
        params,
        seed: header.seed,
        config_echo: header.config_echo,
    })
}
