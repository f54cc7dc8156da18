//! `BHRW` weight files.
//!
//! Layout (all little-endian): magic `BHRW`, `u32` version, `u32` entry
//! count, then per entry a `u32` name length, the UTF-8 name, a `u32` rank,
//! `rank` × `u32` extents and the elements as `f32`.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::Network;
use crate::blocks::Parameters;
use crate::error::{Error, Result};
use crate::tensor::raw::{read_u32, truncated};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"BHRW";
pub const WEIGHTS_VERSION: u32 = 1;

fn u32_of(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(format!("{v} exceeds u32")))
}

pub fn write_weights<W: Write>(mut w: W, net: &Network) -> Result<()> {
    let mut entries = Vec::new();
    net.visit("", &mut |n, s, d| entries.push((n.to_string(), s.to_vec(), d.to_vec())));
    w.write_all(WEIGHTS_MAGIC)?;
    w.write_all(&WEIGHTS_VERSION.to_le_bytes())?;
    w.write_all(&u32_of(entries.len())?.to_le_bytes())?;
    for (name, shape, data) in entries {
        w.write_all(&u32_of(name.len())?.to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&u32_of(shape.len())?.to_le_bytes())?;
        for e in shape {
            w.write_all(&u32_of(e)?.to_le_bytes())?;
        }
        for v in data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads a weight file into `net`, which must have exactly the same
/// parameter inventory (names and shapes; entry order is free).
pub fn read_weights<R: Read>(mut r: R, net: &mut Network) -> Result<()> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != WEIGHTS_MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}, expected BHRW")));
    }
    let version = read_u32(&mut r)?;
    if version != WEIGHTS_VERSION {
        return Err(Error::Format(format!("unsupported weight file version {version}")));
    }
    let count = read_u32(&mut r)? as usize;
    let expected: HashMap<String, Vec<usize>> = net.inventory().into_iter().collect();
    if count != expected.len() {
        return Err(Error::Format(format!("{count} entries, network has {} parameter arrays", expected.len())));
    }
    let mut loaded: HashMap<String, Vec<f32>> = HashMap::with_capacity(count);
    for _ in 0..count {
        let len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name).map_err(truncated)?;
        let name = String::from_utf8(name).map_err(|_| Error::Format("entry name is not UTF-8".into()))?;
        let rank = read_u32(&mut r)? as usize;
        let shape = (0..rank).map(|_| read_u32(&mut r).map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        match expected.get(&name) {
            None => return Err(Error::Format(format!("unexpected entry {name:?}"))),
            Some(s) if *s != shape => {
                return Err(Error::Format(format!("entry {name:?} has shape {shape:?}, network expects {s:?}")))
            }
            Some(_) => {}
        }
        let n: usize = shape.iter().product();
        let mut bytes = vec![0u8; n * 4];
        r.read_exact(&mut bytes).map_err(truncated)?;
        let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        if loaded.insert(name.clone(), data).is_some() {
            return Err(Error::Format(format!("duplicate entry {name:?}")));
        }
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after the last entry".into()));
    }
    net.visit_mut("", &mut |n, _, d| d.copy_from_slice(&loaded[n]));
    Ok(())
}

pub fn save_weights(path: impl AsRef<Path>, net: &Network) -> Result<()> {
    let mut buf = Vec::new();
    write_weights(&mut buf, net)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>, net: &mut Network) -> Result<()> {
    read_weights(fs::File::open(path)?, net)
}
