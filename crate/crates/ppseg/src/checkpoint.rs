//! Binary checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "PPSEG1"
//! u32 config length, config text (UTF-8, may be empty)
//! u32 MLP count, per MLP: name, u32 layers + 1, u64 widths…, u8 activation per layer, u64 seed
//! u32 tensor count, per tensor: name, u32 rank, u64 dims…, f64 values…
//! ```
//!
//! Names are a `u32` byte length followed by UTF-8.

use std::fs;
use std::path::Path;

use ppseg_core::tensor::{Activation, MlpSpec, ParamSet};
use ppseg_core::{Model, Tensor};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 6] = b"PPSEG1";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: String,
    pub params: ParamSet,
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

pub fn encode(config: &str, params: &ParamSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + 8 * params.total_len());
    out.extend_from_slice(MAGIC);
    put_str(&mut out, config);
    out.extend_from_slice(&(params.specs().len() as u32).to_le_bytes());
    for (name, spec) in params.specs() {
        put_str(&mut out, name);
        out.extend_from_slice(&(spec.widths.len() as u32).to_le_bytes());
        for &w in &spec.widths {
            out.extend_from_slice(&(w as u64).to_le_bytes());
        }
        for &a in &spec.activations {
            out.push(match a {
                Activation::Relu => 1,
                Activation::None => 0,
            });
        }
        out.extend_from_slice(&spec.seed.to_le_bytes());
    }
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in params.iter() {
        put_str(&mut out, name);
        out.extend_from_slice(&(t.ndim() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    name: &'a str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(
                self.name,
                format!("checkpoint truncated at byte offset {}", self.pos),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn size(&mut self) -> Result<usize> {
        let at = self.pos;
        usize::try_from(self.u64()?).map_err(|_| Error::format(self.name, format!("size overflow at byte offset {at}")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()?;
        let at = self.pos;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::format(self.name, format!("invalid UTF-8 at byte offset {at}")))
    }
}

pub fn decode(bytes: &[u8], name: &str) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0, name };
    if r.take(MAGIC.len()).ok() != Some(&MAGIC[..]) {
        return Err(Error::format(name, "not a checkpoint (bad magic)"));
    }
    let config = r.string()?;
    let mut params = ParamSet::new();
    for _ in 0..r.u32()? {
        let prefix = r.string()?;
        let n = r.u32()?;
        let widths = (0..n).map(|_| r.size()).collect::<Result<Vec<_>>>()?;
        let mut activations = Vec::with_capacity(n.saturating_sub(1));
        for _ in 1..n {
            let at = r.pos;
            activations.push(match r.take(1)?[0] {
                0 => Activation::None,
                1 => Activation::Relu,
                b => return Err(Error::format(name, format!("bad activation tag {b} at byte offset {at}"))),
            });
        }
        let seed = r.u64()?;
        params.describe(&prefix, MlpSpec { widths, activations, seed });
    }
    for _ in 0..r.u32()? {
        let tname = r.string()?;
        let rank = r.u32()?;
        let shape = (0..rank).map(|_| r.size()).collect::<Result<Vec<_>>>()?;
        let len: usize = shape.iter().product();
        let raw = r.take(len.checked_mul(8).ok_or_else(|| Error::format(name, "tensor too large"))?)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        params.insert(&tname, Tensor::new(shape, data)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::format(name, format!("trailing bytes after offset {}", r.pos)));
    }
    Ok(Checkpoint { config, params })
}

pub fn save(path: &Path, config: &str, params: &ParamSet) -> Result<()> {
    // Write-then-rename so an interrupted save never clobbers a good file.
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, encode(config, params)).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, &path.display().to_string())
}

/// Copies checkpoint tensors into `model`; names, shapes and MLP layouts
/// must all match.
pub fn restore(model: &mut Model, ckpt: &Checkpoint, name: &str) -> Result<()> {
    if model.params.specs() != ckpt.params.specs() {
        return Err(Error::format(name, "checkpoint MLP layout does not match its configuration"));
    }
    if model.params.names() != ckpt.params.names() {
        return Err(Error::format(name, "checkpoint parameter names do not match its configuration"));
    }
    for (n, t) in ckpt.params.iter() {
        model.params.set(n, t.clone())?;
    }
    Ok(())
}
