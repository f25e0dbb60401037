use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use super::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// Named trainable tensors with gradient slots, iterated in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    grads: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Argument(format!("duplicate parameter name `{name}`")));
        }
        let id = self.values.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.grads.push(Tensor::zeros(value.rows(), value.cols()));
        self.values.push(value);
        Ok(ParamId(id))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grads {
            g.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub(crate) fn accumulate_grad(&mut self, id: ParamId, g: &Tensor) {
        self.grads[id.0].add_assign(g);
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// `(name, tensor)` pairs in insertion order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }
}

const MAGIC: &[u8; 8] = b"ROMECKPT";
const VERSION: u32 = 1;

/// Versioned binary container of named `f64` tensors plus a text header.
///
/// Layout (little endian): magic `ROMECKPT`, `u32` version, `u32` header
/// length, header bytes (UTF-8), `u32` entry count, then per entry: `u32` name
/// length, name bytes, `u32` rows, `u32` cols, `rows * cols` raw `f64`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub header: String,
    pub entries: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn from_store(header: impl Into<String>, store: &ParamStore) -> Self {
        Checkpoint {
            header: header.into(),
            entries: store.entries().map(|(n, t)| (n.to_string(), t.clone())).collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Copies matching entries into `store`; every store parameter must be
    /// present with the same shape.
    pub fn restore_into(&self, store: &mut ParamStore) -> Result<()> {
        for id in store.ids().collect::<Vec<_>>() {
            let name = store.name(id).to_string();
            let t = self
                .get(&name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{name}`")))?;
            if t.shape() != store.value(id).shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter `{name}` has shape {:?}, expected {:?}",
                    t.shape(),
                    store.value(id).shape()
                )));
            }
            *store.value_mut(id) = t.clone();
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.header.len() as u32).to_le_bytes());
        out.extend_from_slice(self.header.as_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, t) in &self.entries {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(t.cols() as u32).to_le_bytes());
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Checkpoint(msg.to_string());
        let mut magic = [0u8; 8];
        bytes.read_exact(&mut magic).map_err(|_| bad("truncated magic"))?;
        if &magic != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let u32_of = |what: &str, b: &mut &[u8]| -> Result<u32> {
            let mut buf = [0u8; 4];
            b.read_exact(&mut buf).map_err(|_| Error::Checkpoint(format!("truncated {what}")))?;
            Ok(u32::from_le_bytes(buf))
        };
        let version = u32_of("version", &mut bytes)?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let hlen = u32_of("header length", &mut bytes)? as usize;
        if bytes.len() < hlen {
            return Err(bad("truncated header"));
        }
        let header = String::from_utf8(bytes[..hlen].to_vec()).map_err(|_| bad("header is not UTF-8"))?;
        bytes = &bytes[hlen..];
        let count = u32_of("entry count", &mut bytes)? as usize;
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let nlen = u32_of("name length", &mut bytes)? as usize;
            if bytes.len() < nlen {
                return Err(bad("truncated name"));
            }
            let name = String::from_utf8(bytes[..nlen].to_vec()).map_err(|_| bad("name is not UTF-8"))?;
            bytes = &bytes[nlen..];
            let rows = u32_of("rows", &mut bytes)? as usize;
            let cols = u32_of("cols", &mut bytes)? as usize;
            let len = rows * cols;
            if bytes.len() < len * 8 {
                return Err(Error::Checkpoint(format!("truncated payload of `{name}`")));
            }
            let data = bytes[..len * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            bytes = &bytes[len * 8..];
            entries.push((name, Tensor::from_vec(rows, cols, data)?));
        }
        if !bytes.is_empty() {
            return Err(bad("trailing bytes"));
        }
        Ok(Checkpoint { header, entries })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_names_rejected() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::zeros(1, 1)).unwrap();
        assert!(s.insert("w", Tensor::zeros(1, 1)).is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let mut s = ParamStore::new();
        s.insert("a", Tensor::from_vec(2, 2, vec![0.1, -0.0, f64::MIN_POSITIVE, 1e300]).unwrap()).unwrap();
        s.insert("b", Tensor::row(&[std::f64::consts::PI])).unwrap();
        let ck = Checkpoint::from_store("d=2\n", &s);
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
        let mut s2 = s.clone();
        s2.value_mut(ParamId(0)).data_mut()[0] = 9.0;
        back.restore_into(&mut s2).unwrap();
        for (a, b) in s.entries().zip(s2.entries()) {
            let bits_a: Vec<u64> = a.1.data().iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u64> = b.1.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
        }
    }

    #[test]
    fn corrupt_checkpoint_rejected() {
        let ck = Checkpoint { header: "x".into(), entries: vec![("w".into(), Tensor::scalar(1.0))] };
        let bytes = ck.to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(Checkpoint::from_bytes(b"NOTACKPT").is_err());
    }
}
