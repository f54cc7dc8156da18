//! `BHRT` raw tensor files.
//!
//! Layout (all little-endian): magic `BHRT`, `u32` rank, `rank` × `u32`
//! extents, then the elements as `f32`. Tensors of rank below four are
//! read with leading unit extents.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"BHRT";

pub fn write_tensor<W: Write>(mut w: W, t: &Tensor) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&4u32.to_le_bytes())?;
    for e in t.shape() {
        w.write_all(&u32::try_from(e).map_err(|_| Error::Format("extent exceeds u32".into()))?.to_le_bytes())?;
    }
    for v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_tensor<R: Read>(mut r: R) -> Result<Tensor> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}, expected BHRT")));
    }
    let rank = read_u32(&mut r)? as usize;
    if rank == 0 || rank > 4 {
        return Err(Error::Format(format!("unsupported rank {rank}")));
    }
    let mut shape = [1usize; 4];
    for i in 0..rank {
        shape[4 - rank + i] = read_u32(&mut r)? as usize;
    }
    let len = shape
        .iter()
        .try_fold(1usize, |acc, &e| acc.checked_mul(e))
        .ok_or_else(|| Error::Format("extents overflow".into()))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != len * 4 {
        return Err(Error::Format(format!("expected {} data bytes, found {}", len * 4, bytes.len())));
    }
    let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    Tensor::new(shape, data)
}

pub fn save(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    let mut buf = Vec::with_capacity(24 + t.len() * 4);
    write_tensor(&mut buf, t)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Tensor> {
    read_tensor(fs::File::open(path)?)
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("unexpected end of file".into())
    } else {
        Error::Io(e)
    }
}
