//! Binary instance container and its JSON parameter sidecar.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes   "BRGINST\0"
//! version      u32       1
//! flags        u32       bit 0: planted
//! p, k, n      u64 x 3
//! sigma2       f64
//! seed         u64
//! support_len  u64       k if planted, else 0
//! support      u64 x support_len
//! X            f64 x n*p (row-major)
//! W            f64 x n
//! Y            f64 x n
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::model::{Instance, ModelParams};
use crate::{Error, Result};

pub const MAGIC: [u8; 8] = *b"BRGINST\0";
pub const VERSION: u32 = 1;
const FLAG_PLANTED: u32 = 1;

pub fn write_instance<W: Write>(mut out: W, instance: &Instance) -> Result<()> {
    instance.validate()?;
    let ModelParams { p, k, n, sigma2, seed } = instance.params;
    let mut buf = Vec::with_capacity(64 + 8 * (instance.design.len() + 2 * n + k));
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let flags = if instance.is_planted() { FLAG_PLANTED } else { 0 };
    buf.extend_from_slice(&flags.to_le_bytes());
    for v in [p as u64, k as u64, n as u64] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&sigma2.to_le_bytes());
    buf.extend_from_slice(&seed.to_le_bytes());
    buf.extend_from_slice(&(instance.planted_support.len() as u64).to_le_bytes());
    for &j in &instance.planted_support {
        buf.extend_from_slice(&(j as u64).to_le_bytes());
    }
    for v in instance.design.iter().chain(&instance.noise).chain(&instance.response) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("instance file is truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Format("dimension overflows usize".into()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, len: usize) -> Result<Vec<f64>> {
        let bytes = self.take(len.checked_mul(8).ok_or_else(|| Error::Format("length overflow".into()))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}

pub fn read_instance<R: Read>(mut input: R) -> Result<Instance> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    decode_instance(&bytes)
}

pub fn decode_instance(bytes: &[u8]) -> Result<Instance> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(Error::Format("not an instance file (bad magic)".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported container version {version}")));
    }
    let flags = c.u32()?;
    let (p, k, n) = (c.usize()?, c.usize()?, c.usize()?);
    let sigma2 = c.f64()?;
    let seed = c.u64()?;
    let params = ModelParams { p, k, n, sigma2, seed };
    params.validate()?;
    let support_len = c.usize()?;
    let planted = flags & FLAG_PLANTED != 0;
    if support_len != if planted { k } else { 0 } {
        return Err(Error::Format(format!("support length {support_len} disagrees with flags")));
    }
    let support = (0..support_len).map(|_| c.usize()).collect::<Result<Vec<_>>>()?;
    let cells = n.checked_mul(p).ok_or_else(|| Error::Format("dimension overflow".into()))?;
    let design = c.f64s(cells)?;
    let noise = c.f64s(n)?;
    let response = c.f64s(n)?;
    if c.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after instance payload".into()));
    }
    let instance = Instance { params, design, planted_support: support, noise, response };
    instance.validate()?;
    Ok(instance)
}

/// Writes `<path>` (binary) and `<path>.json` (params).
pub fn save_instance(path: &Path, instance: &Instance) -> Result<()> {
    write_instance(std::io::BufWriter::new(std::fs::File::create(path)?), instance)?;
    std::fs::write(sidecar_path(path), params_json(instance)?)?;
    Ok(())
}

pub fn load_instance(path: &Path) -> Result<Instance> {
    let instance = decode_instance(&std::fs::read(path)?)?;
    let sidecar = sidecar_path(path);
    if sidecar.exists() {
        let meta: Sidecar = serde_json::from_slice(&std::fs::read(&sidecar)?)?;
        if meta.params != instance.params || meta.planted != instance.is_planted() {
            return Err(Error::Format(format!("{} disagrees with the instance header", sidecar.display())));
        }
    }
    Ok(instance)
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    name.into()
}

#[derive(serde::Serialize, serde::Deserialize)]
struct Sidecar {
    params: ModelParams,
    planted: bool,
    format_version: u32,
}

pub fn params_json(instance: &Instance) -> Result<String> {
    let meta = Sidecar { params: instance.params, planted: instance.is_planted(), format_version: VERSION };
    Ok(serde_json::to_string_pretty(&meta)? + "\n")
}
