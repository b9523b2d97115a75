//! Factorized discrete domains and points in them.
//!
//! A [`DiscreteSpace`] is a product of `dim` identical coordinate supports:
//! binary `{0,1}`, ordinal `{0,..,N}`, or an `N`-way one-hot group per
//! coordinate. States store compact integer labels per coordinate; one-hot
//! groups are expanded to indicator vectors only where a real embedding is
//! needed.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Default cap on exhaustive enumeration.
pub const DEFAULT_ENUM_CAP: u64 = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpaceKind {
    /// Per-coordinate support {0,1}.
    Binary,
    /// Per-coordinate support {0,..,max_level}.
    Ordinal { max_level: u32 },
    /// Per-coordinate N-way indicator group, stored as a category label.
    OneHot { levels: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DiscreteSpace {
    kind: SpaceKind,
    dim: usize,
}

impl DiscreteSpace {
    pub fn binary(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dim", "must be at least 1"));
        }
        Ok(Self {
            kind: SpaceKind::Binary,
            dim,
        })
    }

    /// Ordinal-categorical space with support {0,..,max_level}.
    pub fn ordinal(dim: usize, max_level: u32) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dim", "must be at least 1"));
        }
        if max_level < 2 {
            return Err(Error::invalid("max_level", "must be at least 2"));
        }
        Ok(Self {
            kind: SpaceKind::Ordinal { max_level },
            dim,
        })
    }

    /// One-hot space with `levels` categories per coordinate.
    pub fn one_hot(dim: usize, levels: u32) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dim", "must be at least 1"));
        }
        if levels < 2 {
            return Err(Error::invalid("levels", "must be at least 2"));
        }
        Ok(Self {
            kind: SpaceKind::OneHot { levels },
            dim,
        })
    }

    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of admissible labels per coordinate.
    pub fn support_size(&self) -> usize {
        match self.kind {
            SpaceKind::Binary => 2,
            SpaceKind::Ordinal { max_level } => max_level as usize + 1,
            SpaceKind::OneHot { levels } => levels as usize,
        }
    }

    /// Length of the real embedding (and of gradients of the real relaxation).
    pub fn embedding_dim(&self) -> usize {
        match self.kind {
            SpaceKind::Binary | SpaceKind::Ordinal { .. } => self.dim,
            SpaceKind::OneHot { levels } => self.dim * levels as usize,
        }
    }

    /// Total number of states, or None on overflow.
    pub fn total_states(&self) -> Option<u128> {
        let base = self.support_size() as u128;
        let mut total: u128 = 1;
        for _ in 0..self.dim {
            total = total.checked_mul(base)?;
        }
        Some(total)
    }

    pub fn contains(&self, values: &[u32]) -> bool {
        values.len() == self.dim && values.iter().all(|&v| (v as usize) < self.support_size())
    }

    /// All states in lexicographic order (first coordinate most significant).
    pub fn enumerate(&self, cap: u64) -> Result<Vec<StateVector>> {
        let total = self.checked_count(cap)?;
        let mut out = Vec::with_capacity(total as usize);
        for index in 0..total {
            out.push(self.state_at(index as usize));
        }
        Ok(out)
    }

    /// Enumerated state count after checking it against `cap`.
    pub fn checked_count(&self, cap: u64) -> Result<u64> {
        let total = self.total_states().ok_or(Error::SpaceTooLarge {
            size: u128::MAX,
            cap,
        })?;
        if total > cap as u128 {
            return Err(Error::SpaceTooLarge { size: total, cap });
        }
        Ok(total as u64)
    }

    /// Lexicographic rank of a state; inverse of [`DiscreteSpace::state_at`].
    pub fn index_of(&self, state: &StateVector) -> usize {
        debug_assert_eq!(state.space(), self);
        let base = self.support_size();
        let mut idx = 0usize;
        for &v in &state.values {
            idx = idx * base + v as usize;
        }
        idx
    }

    pub fn state_at(&self, mut index: usize) -> StateVector {
        let base = self.support_size();
        let mut values = vec![0u32; self.dim];
        for slot in (0..self.dim).rev() {
            values[slot] = (index % base) as u32;
            index /= base;
        }
        StateVector {
            values,
            space: *self,
        }
    }

    /// State with every coordinate drawn uniformly from its support.
    pub fn uniform_state<R: rand::Rng>(&self, rng: &mut R) -> StateVector {
        let base = self.support_size() as u32;
        let values = (0..self.dim).map(|_| rng.gen_range(0..base)).collect();
        StateVector {
            values,
            space: *self,
        }
    }
}

/// A point of a [`DiscreteSpace`], stored as per-coordinate integer labels.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StateVector {
    values: Vec<u32>,
    space: DiscreteSpace,
}

impl StateVector {
    pub fn new(values: Vec<u32>, space: DiscreteSpace) -> Result<Self> {
        if values.len() != space.dim() {
            return Err(Error::DimensionMismatch {
                expected: space.dim(),
                got: values.len(),
            });
        }
        if !space.contains(&values) {
            return Err(Error::invalid("values", "coordinate outside support"));
        }
        Ok(Self { values, space })
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    pub fn space(&self) -> &DiscreteSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub(crate) fn set(&mut self, coord: usize, value: u32) {
        self.values[coord] = value;
    }

    /// Real embedding: labels as reals, or concatenated indicators for one-hot.
    pub fn to_real(&self) -> Vec<f64> {
        match self.space.kind() {
            SpaceKind::Binary | SpaceKind::Ordinal { .. } => {
                self.values.iter().map(|&v| v as f64).collect()
            }
            SpaceKind::OneHot { levels } => {
                let levels = levels as usize;
                let mut out = vec![0.0; self.values.len() * levels];
                for (i, &v) in self.values.iter().enumerate() {
                    out[i * levels + v as usize] = 1.0;
                }
                out
            }
        }
    }

    /// Compact text form used in trace files: digits joined without a
    /// separator for binary, `;`-joined labels otherwise.
    pub fn to_compact_string(&self) -> String {
        match self.space.kind() {
            SpaceKind::Binary => self
                .values
                .iter()
                .map(|&v| if v == 0 { '0' } else { '1' })
                .collect(),
            _ => self
                .values
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(";"),
        }
    }

    /// FNV-1a over the label sequence; used when states are too wide to store.
    pub fn hash64(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for &v in &self.values {
            for byte in v.to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        }
        h
    }
}

/// Enumerate all states of `space`, failing when the count exceeds `cap`.
pub fn enumerate_states(space: &DiscreteSpace, cap: u64) -> Result<Vec<StateVector>> {
    space.enumerate(cap)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_d2_enumeration() {
        let space = DiscreteSpace::binary(2).unwrap();
        let states = enumerate_states(&space, DEFAULT_ENUM_CAP).unwrap();
        let got: Vec<Vec<u32>> = states.iter().map(|s| s.values().to_vec()).collect();
        assert_eq!(got, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
    }

    #[test]
    fn ordinal_n2_d1_enumeration() {
        let space = DiscreteSpace::ordinal(1, 2).unwrap();
        let states = enumerate_states(&space, DEFAULT_ENUM_CAP).unwrap();
        let got: Vec<u32> = states.iter().map(|s| s.values()[0]).collect();
        assert_eq!(got, vec![0, 1, 2]);
    }

    #[test]
    fn cap_exceeded_is_an_error() {
        let space = DiscreteSpace::binary(21).unwrap();
        match enumerate_states(&space, 1 << 20) {
            Err(Error::SpaceTooLarge { size, cap }) => {
                assert_eq!(size, 1 << 21);
                assert_eq!(cap, 1 << 20);
            }
            other => panic!("expected SpaceTooLarge, got {other:?}"),
        }
    }

    #[test]
    fn one_hot_embedding_sums_to_one_per_group() {
        let space = DiscreteSpace::one_hot(3, 4).unwrap();
        let state = StateVector::new(vec![2, 0, 3], space).unwrap();
        let x = state.to_real();
        assert_eq!(x.len(), 12);
        for g in 0..3 {
            let s: f64 = x[g * 4..(g + 1) * 4].iter().sum();
            assert_eq!(s, 1.0);
        }
        assert_eq!(x[2], 1.0);
    }

    #[test]
    fn state_outside_support_rejected() {
        let space = DiscreteSpace::binary(2).unwrap();
        assert!(StateVector::new(vec![0, 2], space).is_err());
        assert!(StateVector::new(vec![0], space).is_err());
    }

    #[test]
    fn index_round_trip_all_kinds() {
        for space in [
            DiscreteSpace::binary(5).unwrap(),
            DiscreteSpace::ordinal(3, 3).unwrap(),
            DiscreteSpace::one_hot(2, 5).unwrap(),
        ] {
            let states = space.enumerate(DEFAULT_ENUM_CAP).unwrap();
            let expected: u128 = (space.support_size() as u128).pow(space.dim() as u32);
            assert_eq!(states.len() as u128, expected);
            for (i, s) in states.iter().enumerate() {
                assert_eq!(space.index_of(s), i);
                assert_eq!(&space.state_at(i), s);
            }
            // bijection: no duplicates
            let mut seen = std::collections::HashSet::new();
            for s in &states {
                assert!(seen.insert(s.values().to_vec()));
            }
        }
    }
}
