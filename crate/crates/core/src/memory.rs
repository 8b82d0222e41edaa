//! Two-level memory: addresses map to blocks, offsets map to values.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::carrier::CarrierValue;

/// Finite map from offset to value; absent offsets are uninitialized.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MemBlock(pub BTreeMap<usize, CarrierValue>);

impl MemBlock {
    pub fn new() -> Self {
        MemBlock(BTreeMap::new())
    }

    /// Block with cells `0..xs.len()` filled in order.
    pub fn dense(xs: &[CarrierValue]) -> Self {
        MemBlock(xs.iter().cloned().enumerate().collect())
    }

    pub fn lookup(&self, k: usize) -> Option<&CarrierValue> {
        self.0.get(&k)
    }

    pub fn insert(&mut self, k: usize, v: CarrierValue) {
        self.0.insert(k, v);
    }

    pub fn remove(&mut self, k: usize) -> Option<CarrierValue> {
        self.0.remove(&k)
    }

    pub fn keys(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &CarrierValue)> {
        self.0.iter().map(|(k, v)| (*k, v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Union of two blocks; `Err(k)` for the first offset present in both.
    pub fn merge(&self, other: &MemBlock) -> Result<MemBlock, usize> {
        let mut out = self.clone();
        for (k, v) in other.iter() {
            if out.0.insert(k, v.clone()).is_some() {
                return Err(k);
            }
        }
        Ok(out)
    }

    /// Values of cells `0..n`, or the first missing offset.
    pub fn to_dense(&self, n: usize) -> Result<Vec<CarrierValue>, usize> {
        (0..n).map(|k| self.lookup(k).cloned().ok_or(k)).collect()
    }
}

impl FromIterator<(usize, CarrierValue)> for MemBlock {
    fn from_iter<I: IntoIterator<Item = (usize, CarrierValue)>>(it: I) -> Self {
        MemBlock(it.into_iter().collect())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Memory(pub BTreeMap<usize, MemBlock>);

impl Memory {
    pub fn new() -> Self {
        Memory(BTreeMap::new())
    }

    /// First address above every allocated one.
    pub fn next_key(&self) -> usize {
        self.0.keys().next_back().map_or(0, |k| k + 1)
    }

    pub fn lookup(&self, a: usize) -> Option<&MemBlock> {
        self.0.get(&a)
    }

    pub fn lookup_mut(&mut self, a: usize) -> Option<&mut MemBlock> {
        self.0.get_mut(&a)
    }

    pub fn add(&mut self, a: usize, b: MemBlock) {
        self.0.insert(a, b);
    }

    pub fn remove(&mut self, a: usize) -> Option<MemBlock> {
        self.0.remove(&a)
    }

    pub fn addresses(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.keys().copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_rejects_overlap() {
        let a: MemBlock = [(0, CarrierValue::int(1)), (2, CarrierValue::int(3))]
            .into_iter()
            .collect();
        let b: MemBlock = [(1, CarrierValue::int(2)), (3, CarrierValue::int(4))]
            .into_iter()
            .collect();
        let m = a.merge(&b).unwrap();
        assert_eq!(m.keys().collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        assert_eq!(a.merge(&a), Err(0));
    }

    #[test]
    fn next_key_is_fresh() {
        let mut m = Memory::new();
        assert_eq!(m.next_key(), 0);
        m.add(3, MemBlock::new());
        assert_eq!(m.next_key(), 4);
        assert!(m.lookup(m.next_key()).is_none());
    }
}
