//! Named parameter storage and its binary container.
//!
//! Container layout, all integers little-endian `u32`:
//!
//! ```text
//! "RGAN" | version | entry count | entries...
//! entry: name length | UTF-8 name | rank | extents... | f32 values (LE)
//! ```

use std::io::{Read, Write};

use indexmap::IndexMap;
use rand::Rng;

use super::tensor::{Shape, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"RGAN";
pub const FORMAT_VERSION: u32 = 1;

const BUFFER_SUFFIXES: [&str; 2] = [".running_mean", ".running_var"];

/// Whether the optimizer updates an entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Trainable,
    /// Running statistics and other state that backward never touches.
    Buffer,
}

#[derive(Clone, Debug)]
pub struct ParamEntry<T> {
    /// Natural extents as serialized, e.g. `[C]` for a bias.
    pub dims: Vec<usize>,
    pub tensor: Tensor<T>,
    pub kind: ParamKind,
}

impl<T: Scalar> ParamEntry<T> {
    pub fn numel(&self) -> usize {
        self.tensor.numel()
    }
}

/// Ordered map from parameter name to tensor.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    entries: IndexMap<String, ParamEntry<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            entries: IndexMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, name: &str, dims: &[usize], data: Vec<T>, kind: ParamKind) -> Result<()> {
        let shape = Shape::from_dims(dims)?;
        let tensor = Tensor::from_vec(shape, data)?;
        if self.entries.contains_key(name) {
            return Err(Error::Invalid(format!("parameter {name} registered twice")));
        }
        self.entries.insert(
            name.to_string(),
            ParamEntry {
                dims: dims.to_vec(),
                tensor,
                kind,
            },
        );
        Ok(())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Result<&ParamEntry<T>> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::Invalid(format!("unknown parameter {name}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut ParamEntry<T>> {
        self.entries
            .get_mut(name)
            .ok_or_else(|| Error::Invalid(format!("unknown parameter {name}")))
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor<T>> {
        Ok(&self.get(name)?.tensor)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamEntry<T>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut ParamEntry<T>)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn trainable_names(&self) -> Vec<String> {
        self.iter()
            .filter(|(_, e)| e.kind == ParamKind::Trainable)
            .map(|(k, _)| k.to_string())
            .collect()
    }

    /// Count of trainable scalars whose name starts with `prefix`.
    pub fn count_trainable(&self, prefix: &str) -> usize {
        self.iter()
            .filter(|(k, e)| e.kind == ParamKind::Trainable && k.starts_with(prefix))
            .map(|(_, e)| e.numel())
            .sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|(k, e)| {
                    (
                        k.clone(),
                        ParamEntry {
                            dims: e.dims.clone(),
                            tensor: e.tensor.cast(),
                            kind: e.kind,
                        },
                    )
                })
                .collect(),
        }
    }

    // ---- initializers ----------------------------------------------------------

    /// Kaiming-uniform: `U(-b, b)` with `b = √(6 / fan_in)`.
    pub fn init_kaiming<R: Rng>(
        &mut self,
        name: &str,
        dims: &[usize],
        fan_in: usize,
        rng: &mut R,
    ) -> Result<()> {
        let bound = (6.0 / fan_in.max(1) as f64).sqrt();
        let n: usize = dims.iter().product();
        let data = (0..n).map(|_| T::lit(rng.gen_range(-bound..bound))).collect();
        self.insert(name, dims, data, ParamKind::Trainable)
    }

    pub fn init_const(&mut self, name: &str, dims: &[usize], value: f64, kind: ParamKind) -> Result<()> {
        let n: usize = dims.iter().product();
        self.insert(name, dims, vec![T::lit(value); n], kind)
    }

    // ---- container -------------------------------------------------------------

    /// Writes every entry, then `extra` raw entries, in one container.
    pub fn write_to<W: Write>(&self, out: &mut W, extra: &[RawEntry]) -> std::io::Result<()> {
        out.write_all(MAGIC)?;
        write_u32(out, FORMAT_VERSION)?;
        write_u32(out, (self.entries.len() + extra.len()) as u32)?;
        for (name, e) in &self.entries {
            let values: Vec<f32> = e.tensor.data().iter().map(|v| v.as_f32()).collect();
            write_entry(out, name, &e.dims, &values)?;
        }
        for raw in extra {
            write_entry(out, &raw.name, &raw.dims, &raw.values)?;
        }
        Ok(())
    }

    /// Reads a container. Entries named in `skip` are returned raw instead of
    /// being stored.
    pub fn read_from<R: Read>(input: &mut R, skip: &[&str]) -> Result<(Self, Vec<RawEntry>)> {
        let mut store = ParamStore::new();
        let mut raw = Vec::new();
        for entry in read_container(input)? {
            if skip.contains(&entry.name.as_str()) {
                raw.push(entry);
                continue;
            }
            let kind = if BUFFER_SUFFIXES.iter().any(|s| entry.name.ends_with(s)) {
                ParamKind::Buffer
            } else {
                ParamKind::Trainable
            };
            let data = entry.values.iter().map(|&v| T::lit(v as f64)).collect();
            store.insert(&entry.name, &entry.dims, data, kind)?;
        }
        Ok((store, raw))
    }

    /// Copies values from `other` into matching entries; names and extents must
    /// agree exactly.
    pub fn assign_from(&mut self, other: &ParamStore<T>) -> Result<()> {
        for (name, e) in &mut self.entries {
            let src = other
                .entries
                .get(name)
                .ok_or_else(|| Error::Format(format!("checkpoint lacks parameter {name}")))?;
            if src.dims != e.dims {
                return Err(Error::Format(format!(
                    "parameter {name}: checkpoint extents {:?}, model expects {:?}",
                    src.dims, e.dims
                )));
            }
            e.tensor = src.tensor.clone();
        }
        if let Some(extra) = other.entries.keys().find(|k| !self.entries.contains_key(*k)) {
            return Err(Error::Format(format!("checkpoint has unexpected parameter {extra}")));
        }
        Ok(())
    }
}

/// A container entry outside the typed store, e.g. an embedded text header.
#[derive(Clone, Debug, PartialEq)]
pub struct RawEntry {
    pub name: String,
    pub dims: Vec<usize>,
    pub values: Vec<f32>,
}

impl RawEntry {
    /// Encodes text one byte per value so it survives the f32 container.
    pub fn from_text(name: &str, text: &str) -> Self {
        RawEntry {
            name: name.to_string(),
            dims: vec![text.len()],
            values: text.bytes().map(f32::from).collect(),
        }
    }

    pub fn to_text(&self) -> Result<String> {
        let bytes: Vec<u8> = self
            .values
            .iter()
            .map(|&v| {
                if (0.0..=255.0).contains(&v) && v.fract() == 0.0 {
                    Ok(v as u8)
                } else {
                    Err(Error::Format(format!("entry {} is not text", self.name)))
                }
            })
            .collect::<Result<_>>()?;
        String::from_utf8(bytes).map_err(|e| Error::Format(format!("entry {}: {e}", self.name)))
    }
}

fn write_u32<W: Write>(out: &mut W, v: u32) -> std::io::Result<()> {
    out.write_all(&v.to_le_bytes())
}

fn write_entry<W: Write>(out: &mut W, name: &str, dims: &[usize], values: &[f32]) -> std::io::Result<()> {
    write_u32(out, name.len() as u32)?;
    out.write_all(name.as_bytes())?;
    write_u32(out, dims.len() as u32)?;
    for &d in dims {
        write_u32(out, d as u32)?;
    }
    for v in values {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    input
        .read_exact(&mut b)
        .map_err(|e| Error::Format(format!("truncated container: {e}")))?;
    Ok(u32::from_le_bytes(b))
}

/// Reads exactly `len` bytes; memory grows with what the stream delivers, not
/// with the declared length.
fn read_bytes<R: Read>(input: &mut R, len: u64) -> std::io::Result<Vec<u8>> {
    let mut buf = Vec::new();
    input.take(len).read_to_end(&mut buf)?;
    if (buf.len() as u64) < len {
        return Err(std::io::ErrorKind::UnexpectedEof.into());
    }
    Ok(buf)
}

pub fn read_container<R: Read>(input: &mut R) -> Result<Vec<RawEntry>> {
    let mut magic = [0u8; 4];
    input
        .read_exact(&mut magic)
        .map_err(|e| Error::Format(format!("truncated container: {e}")))?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic, not a parameter container".into()));
    }
    let version = read_u32(input)?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported container version {version}")));
    }
    let count = read_u32(input)?;
    let mut entries = Vec::new();
    for _ in 0..count {
        let len = read_u32(input)? as u64;
        let name = read_bytes(input, len).map_err(|e| Error::Format(format!("truncated entry name: {e}")))?;
        let name = String::from_utf8(name).map_err(|e| Error::Format(format!("entry name: {e}")))?;
        let rank = read_u32(input)? as usize;
        if rank > 4 {
            return Err(Error::Format(format!("entry {name}: rank {rank} exceeds 4")));
        }
        let dims = (0..rank)
            .map(|_| read_u32(input).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n = dims
            .iter()
            .try_fold(4u64, |acc, &d| acc.checked_mul(d as u64))
            .ok_or_else(|| Error::Format(format!("entry {name}: extents {dims:?} overflow")))?;
        let bytes = read_bytes(input, n)
            .map_err(|e| Error::Format(format!("entry {name}: truncated values: {e}")))?;
        let values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        entries.push(RawEntry { name, dims, values });
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn container_layout_is_bit_exact() {
        let mut store = ParamStore::<f32>::new();
        store
            .insert("a.b", &[2], vec![1.0, -2.5], ParamKind::Trainable)
            .unwrap();
        let mut buf = Vec::new();
        store.write_to(&mut buf, &[]).unwrap();

        let mut want = Vec::new();
        want.extend_from_slice(b"RGAN");
        want.extend_from_slice(&1u32.to_le_bytes());
        want.extend_from_slice(&1u32.to_le_bytes());
        want.extend_from_slice(&3u32.to_le_bytes());
        want.extend_from_slice(b"a.b");
        want.extend_from_slice(&1u32.to_le_bytes());
        want.extend_from_slice(&2u32.to_le_bytes());
        want.extend_from_slice(&1.0f32.to_le_bytes());
        want.extend_from_slice(&(-2.5f32).to_le_bytes());
        assert_eq!(buf, want);
    }

    #[test]
    fn roundtrip_keeps_kinds_and_text() {
        let mut store = ParamStore::<f32>::new();
        store.insert("bn.gamma", &[3], vec![1.0; 3], ParamKind::Trainable).unwrap();
        store
            .insert("bn.running_var", &[3], vec![0.5; 3], ParamKind::Buffer)
            .unwrap();
        let header = RawEntry::from_text("__config__", "model.k = 15\n");
        let mut buf = Vec::new();
        store.write_to(&mut buf, &[header.clone()]).unwrap();
        let (back, raw) = ParamStore::<f32>::read_from(&mut buf.as_slice(), &["__config__"]).unwrap();
        assert_eq!(back.get("bn.running_var").unwrap().kind, ParamKind::Buffer);
        assert_eq!(back.get("bn.gamma").unwrap().kind, ParamKind::Trainable);
        assert_eq!(raw, vec![header]);
        assert_eq!(raw[0].to_text().unwrap(), "model.k = 15\n");
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_container(&mut b"NOPE\x01\0\0\0".as_slice()).is_err());
        assert!(read_container(&mut b"RGAN\x02\0\0\0\0\0\0\0".as_slice()).is_err());
        assert!(read_container(&mut b"RGAN\x01\0\0\0\x01\0\0\0".as_slice()).is_err());
    }
}
