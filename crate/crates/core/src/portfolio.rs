//! Fixed-length bit-vector selections over a universe.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A selection of assets by index. Bit `i` set means asset `i` is held.
///
/// Ordering is lexicographic on the packed words, which gives solvers a
/// deterministic tie-break between equally scored selections.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Portfolio {
    len: usize,
    words: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SelectionParseError {
    #[error("hex mask is empty")]
    Empty,
    #[error("invalid hex digit {0:?}")]
    InvalidDigit(char),
    #[error("hex mask sets bit {bit} beyond length {len}")]
    OutOfRange { bit: usize, len: usize },
}

impl Portfolio {
    pub fn empty(len: usize) -> Self {
        Self { len, words: vec![0; len.div_ceil(64)] }
    }

    pub fn full(len: usize) -> Self {
        let mut p = Self::empty(len);
        for i in 0..len {
            p.insert(i);
        }
        p
    }

    /// Panics if an index is out of range.
    pub fn from_indices(len: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut p = Self::empty(len);
        for i in indices {
            p.insert(i);
        }
        p
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        Self::from_indices(bits.len(), bits.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i))
    }

    /// Reads spins in {-1, +1}; `+1` selects.
    pub fn from_spins(spins: &[i8]) -> Self {
        Self::from_indices(spins.len(), spins.iter().enumerate().filter(|(_, s)| **s > 0).map(|(i, _)| i))
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn cardinality(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    #[inline]
    pub fn contains(&self, i: usize) -> bool {
        i < self.len && (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    #[inline]
    pub fn insert(&mut self, i: usize) {
        assert!(i < self.len, "index {i} out of range for length {}", self.len);
        self.words[i / 64] |= 1 << (i % 64);
    }

    #[inline]
    pub fn remove(&mut self, i: usize) {
        assert!(i < self.len, "index {i} out of range for length {}", self.len);
        self.words[i / 64] &= !(1 << (i % 64));
    }

    pub fn toggle(&mut self, i: usize) {
        if self.contains(i) {
            self.remove(i)
        } else {
            self.insert(i)
        }
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(w, &word)| {
            let mut bits = word;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let tz = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(w * 64 + tz)
            })
        })
    }

    pub fn complement_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(|&i| !self.contains(i))
    }

    pub fn to_bools(&self) -> Vec<bool> {
        (0..self.len).map(|i| self.contains(i)).collect()
    }

    /// 0/1 as floats, the QUBO variable convention.
    pub fn to_binary(&self) -> Vec<f64> {
        (0..self.len).map(|i| if self.contains(i) { 1.0 } else { 0.0 }).collect()
    }

    /// `z = 2x - 1`.
    pub fn to_spins(&self) -> Vec<f64> {
        (0..self.len).map(|i| if self.contains(i) { 1.0 } else { -1.0 }).collect()
    }

    /// Hex bitmask, most significant nibble first; bit `i` of the number is
    /// asset `i`. Always `ceil(len / 4)` digits (at least one).
    pub fn to_hex(&self) -> String {
        let digits = self.len.div_ceil(4).max(1);
        let mut s = String::with_capacity(digits);
        for d in (0..digits).rev() {
            let mut nibble = 0u8;
            for b in 0..4 {
                if self.contains(d * 4 + b) {
                    nibble |= 1 << b;
                }
            }
            s.push(char::from_digit(nibble as u32, 16).unwrap());
        }
        s
    }

    pub fn from_hex(hex: &str, len: usize) -> Result<Self, SelectionParseError> {
        let hex = hex.trim();
        if hex.is_empty() {
            return Err(SelectionParseError::Empty);
        }
        if let Some(c) = hex.chars().find(|c| !c.is_ascii_hexdigit()) {
            return Err(SelectionParseError::InvalidDigit(c));
        }
        let mut p = Self::empty(len);
        for (d, c) in hex.chars().rev().enumerate() {
            let nibble = c.to_digit(16).ok_or(SelectionParseError::InvalidDigit(c))?;
            for b in 0..4 {
                if nibble >> b & 1 == 1 {
                    let bit = d * 4 + b;
                    if bit >= len {
                        return Err(SelectionParseError::OutOfRange { bit, len });
                    }
                    p.insert(bit);
                }
            }
        }
        Ok(p)
    }
}

impl fmt::Debug for Portfolio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Portfolio({}/{}: {})", self.cardinality(), self.len, self.to_hex())
    }
}

/// Serialized as `{"len": n, "hex": "..."}`.
impl Serialize for Portfolio {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = serializer.serialize_struct("Portfolio", 2)?;
        st.serialize_field("len", &self.len)?;
        st.serialize_field("hex", &self.to_hex())?;
        st.end()
    }
}

impl<'de> Deserialize<'de> for Portfolio {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            len: usize,
            hex: String,
        }
        let raw = Raw::deserialize(deserializer)?;
        Portfolio::from_hex(&raw.hex, raw.len).map_err(serde::de::Error::custom)
    }
}
