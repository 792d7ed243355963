//! Binary checkpoint format.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic   4 bytes  "CAPN"
//! version u32      currently 1
//! config  u32 length + canonical config string (UTF-8)
//! tensors in parameter order, each:
//!         rank u32, dims (rank x u32), values (raw f32)
//! ```
//!
//! Parameter order is weight then bias per conv layer, routing transforms
//! last. Checkpoints always store f32; the embedded config string must
//! describe the exact architecture being loaded.

use std::fs;
use std::path::Path;

use crate::network::config::NetworkConfig;
use crate::network::net::Network;
use crate::network::NetworkError;
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"CAPN";
const VERSION: u32 = 1;

/// Serialize a network into the checkpoint byte format.
pub fn checkpoint_bytes(net: &Network<f32>) -> Vec<u8> {
    let config = net.config().canonical_string();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(config.len() as u32).to_le_bytes());
    out.extend_from_slice(config.as_bytes());
    for tensor in net.parameters() {
        out.extend_from_slice(&(tensor.shape().len() as u32).to_le_bytes());
        for &d in tensor.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NetworkError> {
        if self.pos + n > self.bytes.len() {
            return Err(NetworkError::Truncated(self.bytes.len()));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, NetworkError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Reconstruct a network from checkpoint bytes.
pub fn network_from_bytes(bytes: &[u8]) -> Result<Network<f32>, NetworkError> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(NetworkError::BadMagic);
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(NetworkError::BadVersion(version));
    }
    let config_len = cur.u32()? as usize;
    let config_str = std::str::from_utf8(cur.take(config_len)?)
        .map_err(|_| NetworkError::BadConfig("config string is not UTF-8".into()))?;
    let config = NetworkConfig::parse(config_str)?;
    let mut net = Network::<f32>::zeros(config)?;

    let expected: Vec<Vec<usize>> = net.parameters().iter().map(|t| t.shape().to_vec()).collect();
    let mut tensors = Vec::with_capacity(expected.len());
    for (slot, shape) in expected.iter().enumerate() {
        let rank = cur.u32()? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(cur.u32()? as usize);
        }
        if dims != *shape {
            return Err(NetworkError::ParameterMismatch {
                slot,
                detail: format!("stored shape {dims:?}, architecture wants {shape:?}"),
            });
        }
        let count: usize = dims.iter().product();
        let raw = cur.take(count * 4)?;
        let values: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        tensors.push(Tensor::new(dims, values)?);
    }
    if cur.pos != bytes.len() {
        return Err(NetworkError::TrailingBytes(bytes.len() - cur.pos));
    }
    net.load_parameters(tensors)?;
    Ok(net)
}

/// Write a checkpoint file.
pub fn save_checkpoint(net: &Network<f32>, path: &Path) -> Result<(), NetworkError> {
    fs::write(path, checkpoint_bytes(net))?;
    Ok(())
}

/// Load a checkpoint file.
pub fn load_checkpoint(path: &Path) -> Result<Network<f32>, NetworkError> {
    let bytes = fs::read(path)?;
    network_from_bytes(&bytes)
}
