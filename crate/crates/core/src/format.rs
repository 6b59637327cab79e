//! SYGT binary tensor files.
//!
//! Layout, all integers and floats little-endian:
//!
//! | offset      | size    | content                             |
//! |-------------|---------|-------------------------------------|
//! | 0           | 4       | magic `b"SYGT"`                     |
//! | 4           | 1       | version `0x01`                      |
//! | 5           | 4       | `K` as u32                          |
//! | 9           | 4K      | mode sizes as u32                   |
//! | 9 + 4K      | 8m      | values as f64, first index fastest  |

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

pub const MAGIC: [u8; 4] = *b"SYGT";
pub const VERSION: u8 = 0x01;

pub fn write_tensor<W: Write>(mut w: W, t: &DenseTensor) -> Result<()> {
    w.write_all(&encode(t)?)?;
    Ok(())
}

pub fn encode(t: &DenseTensor) -> Result<Vec<u8>> {
    let mut buf = Vec::with_capacity(9 + 4 * t.order() + 8 * t.len());
    buf.extend_from_slice(&MAGIC);
    buf.push(VERSION);
    buf.extend_from_slice(&to_u32(t.order())?.to_le_bytes());
    for &m in t.shape() {
        buf.extend_from_slice(&to_u32(m)?.to_le_bytes());
    }
    for v in t.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    Ok(buf)
}

pub fn read_tensor<R: Read>(mut r: R) -> Result<DenseTensor> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    decode(&bytes)
}

pub fn decode(bytes: &[u8]) -> Result<DenseTensor> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Format {
            offset: 0,
            reason: format!("bad magic {magic:?}, expected \"SYGT\""),
        });
    }
    let version = cur.take(1, "version")?[0];
    if version != VERSION {
        return Err(Error::Format {
            offset: 4,
            reason: format!("unsupported version {version:#04x}"),
        });
    }
    let order = cur.u32("mode count")? as usize;
    if order == 0 {
        return Err(Error::Format {
            offset: 5,
            reason: "mode count must be at least 1".into(),
        });
    }
    let mut shape = Vec::with_capacity(order.min(64));
    let mut len: usize = 1;
    for k in 0..order {
        let offset = cur.pos as u64;
        let m = cur.u32("mode size")? as usize;
        if m == 0 {
            return Err(Error::Format {
                offset,
                reason: format!("mode {k} has size 0"),
            });
        }
        len = len.checked_mul(m).ok_or_else(|| Error::Format {
            offset,
            reason: "element count overflows".into(),
        })?;
        shape.push(m);
    }
    let need = len.checked_mul(8).ok_or_else(|| Error::Format {
        offset: cur.pos as u64,
        reason: "payload size overflows".into(),
    })?;
    let payload = cur.take(need, "values")?;
    if cur.pos != bytes.len() {
        return Err(Error::Format {
            offset: cur.pos as u64,
            reason: format!("{} trailing bytes after payload", bytes.len() - cur.pos),
        });
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    DenseTensor::new(shape, values)
}

pub fn save(path: impl AsRef<Path>, t: &DenseTensor) -> Result<()> {
    fs::write(path, encode(t)?)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<DenseTensor> {
    decode(&fs::read(path)?)
}

fn to_u32(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::InvalidShape(format!("{v} does not fit in u32")))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.pos;
        if available < n {
            return Err(Error::Format {
                offset: self.pos as u64,
                reason: format!(
                    "truncated {what}: missing {} bytes (need {n}, have {available})",
                    n - available
                ),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }
}
