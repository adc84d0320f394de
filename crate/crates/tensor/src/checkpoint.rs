//! `FATW` checkpoint format.
//!
//! ```text
//! "FATW" | version: u16 | count: u32 |
//!   count × ( name_len: u16 | name: utf-8 | rank: u8 | dims: rank × u32 | data: numel × f32 )
//! ```
//! All integers and floats are little-endian. Values are stored as `f32`.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Result, TensorError};
use crate::optim::Module;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"FATW";
pub const VERSION: u16 = 1;

pub fn encode(entries: &[(String, Tensor)]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, t) in entries {
        let nb = name.as_bytes();
        let name_len = u16::try_from(nb.len())
            .map_err(|_| TensorError::Contract(format!("tensor name too long: {} bytes", nb.len())))?;
        let rank = u8::try_from(t.rank())
            .map_err(|_| TensorError::Contract(format!("rank {} too large for {name}", t.rank())))?;
        buf.extend_from_slice(&name_len.to_le_bytes());
        buf.extend_from_slice(nb);
        buf.push(rank);
        for &d in t.shape() {
            let d = u32::try_from(d).map_err(|_| TensorError::Contract(format!("extent {d} too large for {name}")))?;
            buf.extend_from_slice(&d.to_le_bytes());
        }
        for &v in t.data() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(buf)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(TensorError::Format {
                offset: self.pos as u64,
                msg: format!("truncated while reading {what}"),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4, "magic")? != MAGIC {
        return Err(TensorError::Format {
            offset: 0,
            msg: "bad magic, expected FATW".into(),
        });
    }
    let version = c.u16("version")?;
    if version != VERSION {
        return Err(TensorError::Format {
            offset: 4,
            msg: format!("unsupported version {version}"),
        });
    }
    let count = c.u32("tensor count")?;
    let mut out = Vec::with_capacity(count.min(4096) as usize);
    for _ in 0..count {
        let name_at = c.pos;
        let len = c.u16("name length")? as usize;
        let name = std::str::from_utf8(c.take(len, "name")?)
            .map_err(|_| TensorError::Format {
                offset: name_at as u64 + 2,
                msg: "tensor name is not utf-8".into(),
            })?
            .to_string();
        let rank = c.u8("rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(c.u32("dims")? as usize);
        }
        let numel: usize = shape.iter().product();
        let raw = c.take(numel * 4, "data")?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        out.push((name, Tensor::new(&shape, data)?));
    }
    if c.pos != bytes.len() {
        return Err(TensorError::Format {
            offset: c.pos as u64,
            msg: "trailing bytes after last tensor".into(),
        });
    }
    Ok(out)
}

pub fn write(path: impl AsRef<Path>, entries: &[(String, Tensor)]) -> Result<()> {
    let bytes = encode(entries)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read(path: impl AsRef<Path>) -> Result<Vec<(String, Tensor)>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}

/// Replaces every parameter of `module` with the same-named checkpoint entry.
pub fn load_into<M: Module + ?Sized>(module: &mut M, entries: &[(String, Tensor)]) -> Result<()> {
    let by_name: HashMap<&str, &Tensor> = entries.iter().map(|(n, t)| (n.as_str(), t)).collect();
    let mut err = None;
    module.visit_mut(&mut |name, t| {
        if err.is_some() {
            return;
        }
        match by_name.get(name) {
            Some(src) if src.shape() == t.shape() => {
                *t = Tensor::param(t.shape(), src.to_vec()).expect("shape checked");
            }
            Some(src) => {
                err = Some(TensorError::Contract(format!(
                    "checkpoint tensor {name} has shape {:?}, model expects {:?}",
                    src.shape(),
                    t.shape()
                )))
            }
            None => err = Some(TensorError::Contract(format!("checkpoint lacks tensor {name}"))),
        }
    });
    err.map_or(Ok(()), Err)
}
