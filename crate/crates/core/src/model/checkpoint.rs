//! Binary weight files.
//!
//! Layout (all integers little-endian):
//! `"OSLR"`, version `u32`, config length `u32` + `key = value` text,
//! tensor count `u32`, then per tensor: name length `u16` + name bytes,
//! ndim `u8`, dims `u32` each, dtype tag `u8` (0 = f32, 1 = f64), raw data.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::autodiff::{DType, Scalar, Tensor};
use crate::error::{Error, Result};
use crate::kv;
use crate::model::{LogoNet, ModelConfig, Parameters};

pub const MAGIC: &[u8; 4] = b"OSLR";
pub const VERSION: u32 = 1;

/// Serializes a config block and named tensors.
pub fn encode_container<T: Scalar>(meta: &[(String, String)], tensors: &[(String, &Tensor<T>)]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let text = kv::render(meta);
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        let name_len = u16::try_from(name.len())
            .map_err(|_| Error::format(format!("tensor name too long: {name}")))?;
        out.extend_from_slice(&name_len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        let ndim = u8::try_from(t.shape().len()).map_err(|_| Error::format("too many dims"))?;
        out.push(ndim);
        for &d in t.shape() {
            let d = u32::try_from(d).map_err(|_| Error::format("dimension exceeds u32"))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.push(T::DTYPE.tag());
        for &v in t.data() {
            v.write_le(&mut out);
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::format(format!("truncated file at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub type Container<T> = (Vec<(String, String)>, Vec<(String, Tensor<T>)>);

pub fn decode_container<T: Scalar>(bytes: &[u8]) -> Result<Container<T>> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4).map_err(|_| Error::format("file too short for magic"))? != MAGIC {
        return Err(Error::format("bad magic: not an OSLR checkpoint"));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::format(format!("unsupported checkpoint version {version}")));
    }
    let len = c.u32()? as usize;
    let text = std::str::from_utf8(c.take(len)?)
        .map_err(|_| Error::format("config block is not UTF-8"))?;
    let meta = kv::parse(text)?;
    let count = c.u32()? as usize;
    let mut tensors = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let name_len = c.u16()? as usize;
        let name = String::from_utf8(c.take(name_len)?.to_vec())
            .map_err(|_| Error::format("tensor name is not UTF-8"))?;
        let ndim = c.u8()? as usize;
        let dims = (0..ndim)
            .map(|_| c.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let dtype = DType::from_tag(c.u8()?)
            .ok_or_else(|| Error::format(format!("{name}: unknown dtype tag")))?;
        if dtype != T::DTYPE {
            return Err(Error::format(format!(
                "{name}: stored as {dtype:?}, requested {:?}",
                T::DTYPE
            )));
        }
        let n: usize = dims.iter().product();
        let raw = c.take(n * dtype.size())?;
        let data = raw.chunks_exact(dtype.size()).map(T::read_le).collect();
        tensors.push((name, Tensor::new(dims, data)?));
    }
    if c.pos != bytes.len() {
        return Err(Error::format("trailing bytes after last tensor"));
    }
    Ok((meta, tensors))
}

/// Fills a parameter layout from named tensors, rejecting unknown, missing and
/// mis-shaped entries.
pub fn fill_parameters<T: Scalar>(cfg: &ModelConfig, tensors: Vec<(String, Tensor<T>)>) -> Result<Parameters<T>> {
    let mut params = Parameters::<T>::zeros(cfg)?;
    let mut by_name: HashMap<String, Tensor<T>> = HashMap::new();
    for (name, t) in tensors {
        if by_name.insert(name.clone(), t).is_some() {
            return Err(Error::format(format!("duplicate tensor {name}")));
        }
    }
    for (name, layer) in params.layers_mut() {
        for (suffix, slot) in [("weight", &mut layer.weight), ("bias", &mut layer.bias)] {
            let key = format!("{name}.{suffix}");
            let t = by_name
                .remove(&key)
                .ok_or_else(|| Error::format(format!("missing tensor {key}")))?;
            if t.shape() != slot.shape() {
                return Err(Error::ShapeMismatch {
                    op: "load_checkpoint",
                    expected: slot.shape().to_vec(),
                    actual: t.shape().to_vec(),
                });
            }
            slot.data_mut().copy_from_slice(t.data());
        }
    }
    if let Some(name) = by_name.keys().min() {
        return Err(Error::format(format!("unknown tensor name {name}")));
    }
    Ok(params)
}

pub fn encode_checkpoint<T: Scalar>(net: &LogoNet<T>, iteration: Option<u64>) -> Result<Vec<u8>> {
    let mut meta = net.config.to_pairs();
    if let Some(it) = iteration {
        meta.push(("iteration".into(), it.to_string()));
    }
    encode_container(&meta, &net.params.named_tensors())
}

/// Decodes a checkpoint; also returns the stored iteration counter, if any.
pub fn decode_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<(LogoNet<T>, Option<u64>)> {
    let (meta, tensors) = decode_container::<T>(bytes)?;
    let mut iteration = None;
    let mut model_pairs = Vec::new();
    for (k, v) in meta {
        if k == "iteration" {
            iteration = Some(kv::parse_value(&k, &v)?);
        } else {
            model_pairs.push((k, v));
        }
    }
    let config = ModelConfig::from_pairs(&model_pairs)?;
    let params = fill_parameters(&config, tensors)?;
    Ok((LogoNet { config, params }, iteration))
}

pub fn save_checkpoint<T: Scalar>(net: &LogoNet<T>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_checkpoint(net, None)?)?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<LogoNet<T>> {
    Ok(decode_checkpoint(&fs::read(path)?)?.0)
}

/// Reads only the config block, so callers can pick the element type.
pub fn peek_config(bytes: &[u8]) -> Result<ModelConfig> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(Error::format("bad magic: not an OSLR checkpoint"));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::format(format!("unsupported checkpoint version {version}")));
    }
    let len = c.u32()? as usize;
    let text = std::str::from_utf8(c.take(len)?).map_err(|_| Error::format("config block is not UTF-8"))?;
    let pairs: Vec<_> = kv::parse(text)?
        .into_iter()
        .filter(|(k, _)| k != "iteration")
        .collect();
    ModelConfig::from_pairs(&pairs)
}
