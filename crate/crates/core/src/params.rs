//! Named parameter storage with binary serialization.
//!
//! Values are held as `f64` for 64-bit math but are always rounded to the
//! nearest `f32` on insert and update, so the on-disk format (little-endian
//! `f32`) round-trips bit-exactly and save/resume reproduces an
//! uninterrupted run.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use std::collections::BTreeMap;
use std::io::{Read, Write};

pub const STORE_FORMAT_VERSION: u8 = 1;

/// Rounds every value through `f32` precision.
pub fn quantize_f32(data: &mut [f64]) {
    for v in data.iter_mut() {
        *v = *v as f32 as f64;
    }
}

/// Map from parameter path to tensor. Iteration order is the sorted path
/// order, which keeps every parameter walk deterministic.
#[derive(Clone)]
pub struct ParameterStore {
    params: BTreeMap<String, Tensor>,
    trainable: bool,
}

impl ParameterStore {
    pub fn new(trainable: bool) -> Self {
        ParameterStore {
            params: BTreeMap::new(),
            trainable,
        }
    }

    pub fn trainable(&self) -> bool {
        self.trainable
    }

    /// Rebuilds every leaf with the given trainability. Used to freeze the
    /// backbone in the control phase.
    pub fn set_trainable(&mut self, trainable: bool) {
        self.trainable = trainable;
        let entries: Vec<(String, Tensor)> = self
            .params
            .iter()
            .map(|(k, v)| (k.clone(), v.detach()))
            .collect();
        self.params.clear();
        for (k, v) in entries {
            let leaf = if trainable { v.requires_grad() } else { v };
            self.params.insert(k, leaf);
        }
    }

    fn insert_tensor(&mut self, name: &str, shape: Vec<usize>, mut data: Vec<f64>) {
        assert!(
            !self.params.contains_key(name),
            "parameter path {name:?} already exists"
        );
        quantize_f32(&mut data);
        let t = Tensor::from_vec(shape, data);
        let t = if self.trainable { t.requires_grad() } else { t };
        self.params.insert(name.to_string(), t);
    }

    /// Inserts explicit values (f32-rounded like every other insert).
    pub fn insert(&mut self, name: &str, shape: Vec<usize>, data: Vec<f64>) {
        self.insert_tensor(name, shape, data);
    }

    pub fn insert_zero(&mut self, name: &str, shape: Vec<usize>) {
        let n = shape.iter().product();
        self.insert_tensor(name, shape, vec![0.0; n]);
    }

    pub fn insert_normal<R: rand::Rng>(&mut self, name: &str, shape: Vec<usize>, std: f64, rng: &mut R) {
        let t = Tensor::randn(shape.clone(), std, rng);
        self.insert_tensor(name, shape, t.data().to_vec());
    }

    pub fn get(&self, name: &str) -> Tensor {
        self.params
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter path {name:?}"))
            .clone()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    /// Replaces a parameter's values (shape preserved, f32-rounded).
    pub fn set_data(&mut self, name: &str, mut data: Vec<f64>) {
        let old = self
            .params
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter path {name:?}"));
        assert_eq!(old.len(), data.len(), "set_data: length mismatch for {name}");
        quantize_f32(&mut data);
        let t = Tensor::from_vec(old.shape().to_vec(), data);
        let t = if self.trainable { t.requires_grad() } else { t };
        self.params.insert(name.to_string(), t);
    }

    /// A shallow copy with one parameter replaced by the given tensor,
    /// inserted as-is (no rounding, grad tracking preserved). Used by
    /// gradient checks to treat a single parameter as the variable.
    pub fn substitute(&self, name: &str, t: Tensor) -> ParameterStore {
        assert!(self.params.contains_key(name), "unknown parameter path {name:?}");
        let mut params = self.params.clone();
        assert_eq!(params[name].shape(), t.shape(), "substitute: shape mismatch");
        params.insert(name.to_string(), t);
        ParameterStore {
            params,
            trainable: self.trainable,
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.params.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.params.iter()
    }

    pub fn num_values(&self) -> usize {
        self.params.values().map(|t| t.len()).sum()
    }

    /// Drops accumulated gradients by rebuilding the leaves.
    pub fn clear_grads(&mut self) {
        let trainable = self.trainable;
        self.set_trainable(trainable);
    }

    // ── serialization ─────────────────────────────────────────────────
    //
    // Layout: version byte, u32 count, then a name table of
    // (u16 length, utf8 bytes) entries, then per tensor (same order):
    // u8 ndim, ndim x u32 extents, product x f32 little-endian values.

    pub fn save<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(&[STORE_FORMAT_VERSION])?;
        w.write_all(&(self.params.len() as u32).to_le_bytes())?;
        for name in self.params.keys() {
            let bytes = name.as_bytes();
            w.write_all(&(bytes.len() as u16).to_le_bytes())?;
            w.write_all(bytes)?;
        }
        for t in self.params.values() {
            w.write_all(&[t.shape().len() as u8])?;
            for &e in t.shape() {
                w.write_all(&(e as u32).to_le_bytes())?;
            }
            for &v in t.data() {
                w.write_all(&(v as f32).to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn load<R: Read>(r: &mut R, trainable: bool) -> Result<Self> {
        let mut byte = [0u8; 1];
        r.read_exact(&mut byte)?;
        if byte[0] != STORE_FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported store format version {}",
                byte[0]
            )));
        }
        let mut u32buf = [0u8; 4];
        r.read_exact(&mut u32buf)?;
        let count = u32::from_le_bytes(u32buf) as usize;
        let mut names = Vec::with_capacity(count);
        for _ in 0..count {
            let mut lenbuf = [0u8; 2];
            r.read_exact(&mut lenbuf)?;
            let len = u16::from_le_bytes(lenbuf) as usize;
            let mut nbuf = vec![0u8; len];
            r.read_exact(&mut nbuf)?;
            names.push(String::from_utf8(nbuf).map_err(|e| Error::Parse(e.to_string()))?);
        }
        let mut store = ParameterStore::new(trainable);
        for name in names {
            r.read_exact(&mut byte)?;
            let ndim = byte[0] as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                r.read_exact(&mut u32buf)?;
                shape.push(u32::from_le_bytes(u32buf) as usize);
            }
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                r.read_exact(&mut u32buf)?;
                data.push(f32::from_le_bytes(u32buf) as f64);
            }
            store.insert_tensor(&name, shape, data);
        }
        Ok(store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParameterStore::new(true);
        store.insert_normal("a/w", vec![3, 4], 0.5, &mut rng);
        store.insert_zero("a/b", vec![4]);
        store.insert_normal("z/head", vec![2, 2, 2], 0.1, &mut rng);

        let mut buf = Vec::new();
        store.save(&mut buf).unwrap();
        assert_eq!(buf[0], STORE_FORMAT_VERSION);

        let loaded = ParameterStore::load(&mut buf.as_slice(), true).unwrap();
        for (name, t) in store.iter() {
            let l = loaded.get(name);
            assert_eq!(l.shape(), t.shape());
            assert_eq!(l.data(), t.data(), "values differ for {name}");
        }
        let mut buf2 = Vec::new();
        loaded.save(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn duplicate_path_panics() {
        let mut store = ParameterStore::new(false);
        store.insert_zero("x", vec![1]);
        let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
            store.insert_zero("x", vec![1])
        }));
        assert!(result.is_err());
    }

    #[test]
    fn frozen_store_has_no_grad_leaves() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParameterStore::new(true);
        store.insert_normal("w", vec![2, 2], 1.0, &mut rng);
        store.set_trainable(false);
        assert!(!store.get("w").is_leaf_requiring_grad());
        let loss = store.get("w").sum_all();
        assert!(loss.grad().is_none());
    }
}
