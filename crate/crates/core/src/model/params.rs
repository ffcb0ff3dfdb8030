//! Flat named parameter storage.
//!
//! All trainable arrays live in one contiguous `Vec<f64>` with a name/shape
//! registry. The optimizer, checkpoints, and finite-difference probes all
//! address parameters through this single flat view.

use crate::error::{Result, SgnoError};

/// Offset and length of one named segment inside the flat store.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seg {
    pub offset: usize,
    pub len: usize,
}

impl Seg {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

#[derive(Debug, Clone)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    seg: Seg,
}

/// Contiguous parameter vector with a named-segment registry.
#[derive(Debug, Clone)]
pub struct ParamStore {
    entries: Vec<Entry>,
    data: Vec<f64>,
}

impl ParamStore {
    pub fn builder() -> ParamStoreBuilder {
        ParamStoreBuilder {
            entries: Vec::new(),
            len: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Iterates `(name, shape, segment)` in registration order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &[usize], Seg)> {
        self.entries
            .iter()
            .map(|e| (e.name.as_str(), e.shape.as_slice(), e.seg))
    }

    pub fn seg(&self, name: &str) -> Result<Seg> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .map(|e| e.seg)
            .ok_or_else(|| SgnoError::Config(format!("unknown parameter segment '{name}'")))
    }

    pub fn slice(&self, seg: Seg) -> &[f64] {
        &self.data[seg.range()]
    }

    pub fn slice_mut(&mut self, seg: Seg) -> &mut [f64] {
        &mut self.data[seg.range()]
    }
}

pub struct ParamStoreBuilder {
    entries: Vec<Entry>,
    len: usize,
}

impl ParamStoreBuilder {
    /// Registers a named array; returns its segment handle.
    pub fn register(&mut self, name: &str, shape: &[usize]) -> Seg {
        let len: usize = shape.iter().product();
        let seg = Seg {
            offset: self.len,
            len,
        };
        self.entries.push(Entry {
            name: name.to_string(),
            shape: shape.to_vec(),
            seg,
        });
        self.len += len;
        seg
    }

    pub fn build(self) -> ParamStore {
        ParamStore {
            entries: self.entries,
            data: vec![0.0; self.len],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registers_and_addresses_segments() {
        let mut b = ParamStore::builder();
        let a = b.register("a", &[2, 3]);
        let c = b.register("c", &[4]);
        let mut store = b.build();
        assert_eq!(store.len(), 10);
        assert_eq!(a, Seg { offset: 0, len: 6 });
        assert_eq!(c, Seg { offset: 6, len: 4 });
        store.slice_mut(c)[0] = 7.0;
        assert_eq!(store.data()[6], 7.0);
        assert_eq!(store.seg("c").unwrap(), c);
        assert!(store.seg("missing").is_err());
    }
}
