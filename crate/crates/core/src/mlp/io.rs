//! Binary model file.
//!
//! All integers and floats are little-endian; floats are IEEE-754 binary64.
//!
//! ```text
//! magic            8 bytes  "NBMMLP\0\x01" (last byte is the format version)
//! training_seed    u64
//! input_dim        u32
//! output_dim       u32
//! dropout_rate     f64
//! activation       u8       0 = relu, 1 = identity
//! n_hidden         u32
//! n_hidden ×       { width u32, batch_norm u8 }
//! per affine layer (hidden layers in order, then output), with fan_in/fan_out from the header:
//!   weights        f64 × fan_out·fan_in, row-major (row = output unit)
//!   bias           f64 × fan_out
//!   if batch_norm (hidden layers only):
//!     scale, shift, running_mean, running_var   f64 × width each
//! ```
//!
//! The file ends exactly after the last tensor; trailing bytes are an error.

use std::path::Path;

use super::arch::{Activation, HiddenLayer, MlpArchitecture};
use super::model::{BatchNormState, Dense, MlpModel};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"NBMMLP\0\x01";

pub fn encode_model(model: &MlpModel) -> Vec<u8> {
    let arch = model.architecture();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&model.training_seed().to_le_bytes());
    out.extend_from_slice(&(arch.input_dim as u32).to_le_bytes());
    out.extend_from_slice(&(arch.output_dim as u32).to_le_bytes());
    out.extend_from_slice(&arch.dropout_rate.to_le_bytes());
    out.push(match arch.activation {
        Activation::Relu => 0,
        Activation::Identity => 1,
    });
    out.extend_from_slice(&(arch.hidden_layers.len() as u32).to_le_bytes());
    for h in &arch.hidden_layers {
        out.extend_from_slice(&(h.width as u32).to_le_bytes());
        out.push(h.batch_norm as u8);
    }
    let put = |out: &mut Vec<u8>, xs: &[f64]| {
        for x in xs {
            out.extend_from_slice(&x.to_le_bytes());
        }
    };
    for (l, layer) in model.layers().iter().enumerate() {
        put(&mut out, &layer.weights);
        put(&mut out, &layer.bias);
        if let Some(Some(bn)) = model.norms().get(l) {
            put(&mut out, &bn.scale);
            put(&mut out, &bn.shift);
            put(&mut out, &bn.running_mean);
            put(&mut out, &bn.running_var);
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::ModelFormat(format!("truncated at byte {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<MlpModel> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(Error::ModelFormat("bad magic or unsupported version".into()));
    }
    let seed = c.u64()?;
    let input_dim = c.u32()?;
    let output_dim = c.u32()?;
    let dropout_rate = c.f64()?;
    let activation = match c.u8()? {
        0 => Activation::Relu,
        1 => Activation::Identity,
        other => return Err(Error::ModelFormat(format!("unknown activation tag {other}"))),
    };
    let n_hidden = c.u32()?;
    if n_hidden > 1024 {
        return Err(Error::ModelFormat(format!("implausible layer count {n_hidden}")));
    }
    let mut hidden_layers = Vec::with_capacity(n_hidden);
    for _ in 0..n_hidden {
        let width = c.u32()?;
        let batch_norm = match c.u8()? {
            0 => false,
            1 => true,
            other => return Err(Error::ModelFormat(format!("bad batch-norm flag {other}"))),
        };
        hidden_layers.push(HiddenLayer { width, batch_norm });
    }
    let arch = MlpArchitecture {
        input_dim,
        hidden_layers,
        output_dim,
        dropout_rate,
        activation,
    };
    arch.validate()
        .map_err(|e| Error::ModelFormat(format!("invalid architecture: {e}")))?;

    let mut layers = Vec::new();
    let mut norms = Vec::new();
    for (l, (fan_in, fan_out)) in arch.layer_dims().into_iter().enumerate() {
        let weights = c.f64s(fan_in * fan_out)?;
        let bias = c.f64s(fan_out)?;
        layers.push(Dense {
            in_dim: fan_in,
            out_dim: fan_out,
            weights,
            bias,
        });
        if let Some(h) = arch.hidden_layers.get(l) {
            norms.push(if h.batch_norm {
                Some(BatchNormState {
                    scale: c.f64s(h.width)?,
                    shift: c.f64s(h.width)?,
                    running_mean: c.f64s(h.width)?,
                    running_var: c.f64s(h.width)?,
                })
            } else {
                None
            });
        }
    }
    if c.pos != bytes.len() {
        return Err(Error::ModelFormat(format!(
            "{} trailing bytes",
            bytes.len() - c.pos
        )));
    }
    MlpModel::from_parts(arch, layers, norms, seed)
        .map_err(|e| Error::ModelFormat(e.to_string()))
}

pub fn save_model(model: &MlpModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_model(model))
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MlpModel> {
    let path = path.as_ref();
    let bytes =
        std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    decode_model(&bytes)
}
