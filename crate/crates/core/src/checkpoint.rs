//! Binary checkpoints: config, epoch and every parameter array, stored
//! little-endian so a restored model reproduces its outputs bit for bit.
//!
//! Layout: `TALIGNCK`, `u32` version, `u64`-length-prefixed TOML config,
//! `u64` epoch, `u64` array count, then per array a length-prefixed name,
//! `u64` rows, `u64` cols and `rows·cols` `f64` values in row-major order.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{AlignError, Result};
use crate::params::ParameterStore;
use crate::trainer::TrainConfig;

const MAGIC: &[u8; 8] = b"TALIGNCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub epoch: u64,
    pub params: ParameterStore,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        write_bytes(&mut out, self.config.to_toml().as_bytes());
        out.extend_from_slice(&self.epoch.to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for (name, array) in self.params.iter() {
            write_bytes(&mut out, name.as_bytes());
            out.extend_from_slice(&(array.nrows() as u64).to_le_bytes());
            out.extend_from_slice(&(array.ncols() as u64).to_le_bytes());
            for v in array.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(AlignError::Checkpoint("not a checkpoint file".into()));
        }
        let version = u32::from_le_bytes(read_array(&mut r)?);
        if version != VERSION {
            return Err(AlignError::Checkpoint(format!("unsupported version {version}")));
        }
        let text =
            String::from_utf8(read_bytes(&mut r)?).map_err(|_| AlignError::Checkpoint("config is not UTF-8".into()))?;
        let config = TrainConfig::from_toml(&text)?;
        let epoch = read_u64(&mut r)?;
        let count = read_u64(&mut r)?;
        let mut params = ParameterStore::new();
        for _ in 0..count {
            let name = String::from_utf8(read_bytes(&mut r)?)
                .map_err(|_| AlignError::Checkpoint("parameter name is not UTF-8".into()))?;
            let rows = read_u64(&mut r)? as usize;
            let cols = read_u64(&mut r)? as usize;
            let len = rows
                .checked_mul(cols)
                .filter(|&l| l.checked_mul(8).is_some_and(|b| b <= r.len()))
                .ok_or_else(|| AlignError::Checkpoint(format!("{name}: truncated array")))?;
            let mut values = Vec::with_capacity(len);
            for _ in 0..len {
                values.push(f64::from_le_bytes(read_array(&mut r)?));
            }
            let array =
                Array2::from_shape_vec((rows, cols), values).map_err(|e| AlignError::Checkpoint(e.to_string()))?;
            params.insert(name, array);
        }
        if !r.is_empty() {
            return Err(AlignError::Checkpoint(format!("{} trailing bytes", r.len())));
        }
        Ok(Checkpoint { config, epoch, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| AlignError::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| AlignError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| AlignError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn write_bytes(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(bytes);
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| AlignError::Checkpoint("unexpected end of file".into()))
}

fn read_array<const N: usize>(r: &mut &[u8]) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    read_exact(r, &mut buf)?;
    Ok(buf)
}

fn read_u64(r: &mut &[u8]) -> Result<u64> {
    Ok(u64::from_le_bytes(read_array(r)?))
}

fn read_bytes(r: &mut &[u8]) -> Result<Vec<u8>> {
    let len = read_u64(r)? as usize;
    if len > r.len() {
        return Err(AlignError::Checkpoint("unexpected end of file".into()));
    }
    let (head, tail) = r.split_at(len);
    *r = tail;
    Ok(head.to_vec())
}
