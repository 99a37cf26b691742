//! Binary network checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! b"SAFEMARL"  u32 version  u32 network count
//! per network: u32 layer count, (layers + 1) x u32 dims, layers x u8 activation codes
//! u64 metadata length, metadata bytes (UTF-8 JSON)
//! per network, per layer: weights row-major then bias, f64
//! ```

use std::io::{self, Read, Write};

use ndarray::{Array1, Array2};
use thiserror::Error;

use super::mlp::{Activation, Dense, Mlp};

pub const MAGIC: &[u8; 8] = b"SAFEMARL";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file")]
    BadMagic,
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { expected: u32, found: u32 },
    #[error("unknown activation code {0}")]
    Activation(u8),
    #[error("architecture mismatch: expected {expected:?}, found {found:?}")]
    Architecture {
        expected: Vec<Vec<usize>>,
        found: Vec<Vec<usize>>,
    },
    #[error("metadata is not valid UTF-8")]
    Metadata,
    #[error("trailing bytes after checkpoint")]
    Trailing,
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub metadata: String,
    pub networks: Vec<Mlp>,
}

impl Checkpoint {
    pub fn architecture(&self) -> Vec<Vec<usize>> {
        self.networks.iter().map(Mlp::dims).collect()
    }

    pub fn expect_architecture(&self, expected: &[Vec<usize>]) -> Result<(), CheckpointError> {
        let found = self.architecture();
        if found != expected {
            return Err(CheckpointError::Architecture {
                expected: expected.to_vec(),
                found,
            });
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), CheckpointError> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.networks.len() as u32).to_le_bytes())?;
        for net in &self.networks {
            w.write_all(&(net.layers.len() as u32).to_le_bytes())?;
            for d in net.dims() {
                w.write_all(&(d as u32).to_le_bytes())?;
            }
            for a in net.activations() {
                w.write_all(&[a.code()])?;
            }
        }
        w.write_all(&(self.metadata.len() as u64).to_le_bytes())?;
        w.write_all(self.metadata.as_bytes())?;
        for net in &self.networks {
            for layer in &net.layers {
                for x in layer.weights.iter().chain(layer.bias.iter()) {
                    w.write_all(&x.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to memory");
        out
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, CheckpointError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(CheckpointError::Version {
                expected: VERSION,
                found: version,
            });
        }
        let count = read_u32(&mut r)? as usize;
        let mut shapes = Vec::with_capacity(count);
        for _ in 0..count {
            let layers = read_u32(&mut r)? as usize;
            let dims = (0..=layers)
                .map(|_| read_u32(&mut r).map(|d| d as usize))
                .collect::<Result<Vec<_>, _>>()?;
            let mut acts = Vec::with_capacity(layers);
            for _ in 0..layers {
                let mut b = [0u8; 1];
                r.read_exact(&mut b)?;
                acts.push(Activation::from_code(b[0]).ok_or(CheckpointError::Activation(b[0]))?);
            }
            shapes.push((dims, acts));
        }
        let len = read_u64(&mut r)? as usize;
        let mut meta = vec![0u8; len];
        r.read_exact(&mut meta)?;
        let metadata = String::from_utf8(meta).map_err(|_| CheckpointError::Metadata)?;
        let mut networks = Vec::with_capacity(count);
        for (dims, acts) in shapes {
            let mut layers = Vec::with_capacity(acts.len());
            for (k, activation) in acts.into_iter().enumerate() {
                let (fan_in, fan_out) = (dims[k], dims[k + 1]);
                let w = read_f64s(&mut r, fan_in * fan_out)?;
                let b = read_f64s(&mut r, fan_out)?;
                layers.push(Dense {
                    weights: Array2::from_shape_vec((fan_out, fan_in), w).expect("sized by dims"),
                    bias: Array1::from(b),
                    activation,
                });
            }
            networks.push(Mlp { layers });
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(CheckpointError::Trailing);
        }
        Ok(Self { metadata, networks })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        Self::read_from(bytes)
    }
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> io::Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}
