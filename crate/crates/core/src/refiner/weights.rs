//! Binary weights container.
//!
//! Layout, all integers little-endian:
//! magic (8 bytes), version (u32), tensor count (u32), then per tensor
//! name length (u16), UTF-8 name, rank (u32), dims (u32 each); after the
//! descriptor every tensor's values follow in the same order as row-major f32.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::network::{RefinerModel, TensorSpec};

pub const WEIGHTS_MAGIC: &[u8; 8] = b"RGBDREF\0";
pub const WEIGHTS_VERSION: u32 = 1;

pub fn write_weights<W: Write>(model: &RefinerModel, mut out: W) -> std::io::Result<()> {
    let tensors = model.tensors();
    let mut buf = Vec::with_capacity(16 + 4 * model.parameter_count());
    buf.extend_from_slice(WEIGHTS_MAGIC);
    buf.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (spec, _) in &tensors {
        buf.extend_from_slice(&(spec.name.len() as u16).to_le_bytes());
        buf.extend_from_slice(spec.name.as_bytes());
        buf.extend_from_slice(&(spec.shape.len() as u32).to_le_bytes());
        for &d in &spec.shape {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
    }
    for (_, values) in &tensors {
        for &v in *values {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out.write_all(&buf)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Weights(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn read_weights<R: Read>(mut input: R) -> Result<RefinerModel> {
    let mut bytes = Vec::new();
    input
        .read_to_end(&mut bytes)
        .map_err(|e| Error::Weights(format!("read failed: {e}")))?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };

    if cur.take(8)? != WEIGHTS_MAGIC {
        return Err(Error::Weights("not a refiner weights file".into()));
    }
    let version = cur.u32()?;
    if version != WEIGHTS_VERSION {
        return Err(Error::Weights(format!(
            "unsupported version {version}, expected {WEIGHTS_VERSION}"
        )));
    }
    let expected = RefinerModel::architecture();
    let count = cur.u32()? as usize;
    if count != expected.len() {
        return Err(Error::Weights(format!(
            "descriptor lists {count} tensors, expected {}",
            expected.len()
        )));
    }
    for want in &expected {
        let len = cur.u16()? as usize;
        let name = std::str::from_utf8(cur.take(len)?)
            .map_err(|_| Error::Weights("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = cur.u32()? as usize;
        if rank > 8 {
            return Err(Error::Weights(format!("tensor {name} has rank {rank}")));
        }
        let shape = (0..rank)
            .map(|_| cur.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let got = TensorSpec { name, shape };
        if &got != want {
            return Err(Error::Weights(format!(
                "descriptor mismatch: found {} {:?}, expected {} {:?}",
                got.name, got.shape, want.name, want.shape
            )));
        }
    }

    let mut model = RefinerModel::zeros();
    for (spec, dst) in model.tensors_mut() {
        let raw = cur.take(4 * dst.len())?;
        for (d, chunk) in dst.iter_mut().zip(raw.chunks_exact(4)) {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::Weights(format!("non-finite value in {}", spec.name)));
            }
            *d = v as f64;
        }
    }
    if cur.pos != bytes.len() {
        return Err(Error::Weights(format!(
            "{} trailing bytes after tensor data",
            bytes.len() - cur.pos
        )));
    }
    Ok(model)
}

pub fn save_weights(model: &RefinerModel, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_weights(model, &mut buf).map_err(|e| Error::io(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: &Path) -> Result<RefinerModel> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_weights(std::io::BufReader::new(file))
}
