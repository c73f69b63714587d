use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Result, StssError};

use super::tensor::Tensor;

const MAGIC: &[u8; 8] = b"STSSPARM";
const VERSION: u32 = 1;

/// Named parameter tensors, iterated in name order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(StssError::Config(format!("duplicate parameter `{name}`")));
        }
        self.entries.insert(name, value);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .get(name)
            .ok_or_else(|| StssError::Config(format!("unknown parameter `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Total number of scalar parameters.
    pub fn total_count(&self) -> usize {
        self.entries.values().map(Tensor::len).sum()
    }

    /// Scalar parameters whose name starts with `prefix`.
    pub fn count_with_prefix(&self, prefix: &str) -> usize {
        self.entries
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(_, v)| v.len())
            .sum()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(16 + 4 * self.total_count());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, t) in &self.entries {
            let len =
                u16::try_from(name.len()).map_err(|_| StssError::Config(format!("parameter name too long: {name}")))?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.shape().len() as u8);
            for &e in t.shape() {
                out.extend_from_slice(&(e as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, origin };
        if r.take(8)? != MAGIC {
            return Err(StssError::format(origin, "bad magic"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(StssError::format(origin, format!("unsupported version {version}")));
        }
        let count = r.u32()?;
        let mut store = ParamStore::new();
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| StssError::format(origin, "parameter name is not UTF-8"))?
                .to_string();
            let rank = r.take(1)?[0] as usize;
            let shape = (0..rank)
                .map(|_| r.u32().map(|v| v as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let data = r
                .take(4 * n)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            store
                .insert(name, Tensor::new(&shape, data)?)
                .map_err(|e| StssError::format(origin, e.to_string()))?;
        }
        if r.pos != bytes.len() {
            return Err(StssError::format(origin, "trailing bytes"));
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| StssError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| StssError::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    origin: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(StssError::format(self.origin, "unexpected end of file"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn duplicate_names_rejected() {
        let mut p = ParamStore::new();
        p.insert("a", Tensor::zeros(&[2])).unwrap();
        assert!(p.insert("a", Tensor::zeros(&[3])).is_err());
    }

    #[test]
    fn header_layout() {
        let mut p = ParamStore::new();
        p.insert("w", Tensor::new(&[1, 2], vec![1.0, -2.0]).unwrap()).unwrap();
        let b = p.to_bytes().unwrap();
        assert_eq!(&b[..8], b"STSSPARM");
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[12..16].try_into().unwrap()), 1);
        assert_eq!(u16::from_le_bytes(b[16..18].try_into().unwrap()), 1);
        assert_eq!(b[18], b'w');
        assert_eq!(b[19], 2);
        assert_eq!(&b[20..28], &[1, 0, 0, 0, 2, 0, 0, 0]);
        assert_eq!(&b[28..32], &1.0f32.to_le_bytes());
        assert_eq!(b.len(), 36);
    }

    #[test]
    fn truncated_file_is_an_error() {
        let mut p = ParamStore::new();
        p.insert("w", Tensor::zeros(&[4])).unwrap();
        let b = p.to_bytes().unwrap();
        let err = ParamStore::from_bytes(&b[..b.len() - 1], Path::new("x")).unwrap_err();
        assert!(matches!(err, StssError::Format { .. }));
    }

    proptest! {
        #[test]
        fn bytes_roundtrip(values in proptest::collection::vec(-1e6f32..1e6, 1..40), split in 1usize..5) {
            let mut p = ParamStore::new();
            let n = values.len();
            p.insert("layer.weight", Tensor::new(&[n], values.clone()).unwrap()).unwrap();
            p.insert("layer.bias", Tensor::new(&[1, 1, split], vec![0.5; split]).unwrap()).unwrap();
            let back = ParamStore::from_bytes(&p.to_bytes().unwrap(), Path::new("mem")).unwrap();
            prop_assert_eq!(back, p);
        }
    }
}
