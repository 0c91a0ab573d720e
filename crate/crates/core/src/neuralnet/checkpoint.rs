//! EMW1 model checkpoints.
//!
//! Little-endian layout: magic `EMW1`; `u32` config length followed by the
//! configuration as UTF-8 `key=value` lines; `u32` parameter count; then
//! per parameter a `u32` name length, the name, four `u32` dims and the
//! `f64` payload.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{Model, ModelConfig, Tensor4};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"EMW1";

pub fn encode(model: &Model) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    let cfg: String = model
        .config()
        .to_pairs()
        .into_iter()
        .map(|(k, v)| format!("{k}={v}\n"))
        .collect();
    out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
    out.extend_from_slice(cfg.as_bytes());
    out.extend_from_slice(&(model.params().len() as u32).to_le_bytes());
    for p in model.params() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        for d in p.value.dims() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.bytes.len())
            .ok_or_else(|| Error::Format("truncated EMW1 checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Format("checkpoint text is not UTF-8".into()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Format("bad magic, expected EMW1".into()));
    }
    let cfg_text = r.string()?;
    let pairs: BTreeMap<String, String> = cfg_text
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    let mut config = ModelConfig::default();
    config.apply_pairs(&pairs)?;
    let n = r.u32()?;
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        let name = r.string()?;
        let dims = [r.u32()?, r.u32()?, r.u32()?, r.u32()?];
        let len = dims.iter().product::<usize>();
        let data = r
            .take(len.checked_mul(8).ok_or_else(|| Error::Format("dims overflow".into()))?)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        values.push((name, Tensor4::new(dims, data)?));
    }
    if r.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after EMW1 parameters".into()));
    }
    Model::with_parameters(config, values)
}

pub fn save(model: &Model, path: &Path) -> Result<()> {
    fs::write(path, encode(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Model> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
