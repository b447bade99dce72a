use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported state dimension; the basis has `2^n` members per channel.
pub const MAX_STATE_DIM: usize = 12;

/// A subset `w` of the state coordinates, encoded as a little-endian bitmask:
/// bit `i` set means coordinate `i` (zero-based) belongs to `w`. The bitmask
/// value doubles as the basis column index.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SubsetIndex(u32);

impl SubsetIndex {
    pub const EMPTY: SubsetIndex = SubsetIndex(0);

    pub fn new(bits: u32, n: usize) -> Result<Self> {
        check_dim(n)?;
        if u64::from(bits) >= (1u64 << n) {
            return Err(Error::invalid(format!("subset bitmask {bits:#b} exceeds {n} coordinates")));
        }
        Ok(SubsetIndex(bits))
    }

    /// Builds a subset from zero-based coordinate indices.
    pub fn from_coords(coords: &[usize], n: usize) -> Result<Self> {
        let mut bits = 0u32;
        for &c in coords {
            if c >= n {
                return Err(Error::invalid(format!("coordinate {c} out of range for n = {n}")));
            }
            bits |= 1 << c;
        }
        Self::new(bits, n)
    }

    pub fn full(n: usize) -> Result<Self> {
        check_dim(n)?;
        Ok(SubsetIndex(((1u64 << n) - 1) as u32))
    }

    pub(crate) const fn from_bits_unchecked(bits: u32) -> Self {
        SubsetIndex(bits)
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn contains(self, coord: usize) -> bool {
        coord < 32 && self.0 & (1 << coord) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset_of(self, other: SubsetIndex) -> bool {
        self.0 & !other.0 == 0
    }

    /// All subsets of `self`, including `self` and the empty set, in
    /// decreasing bitmask order.
    pub fn subsets(self) -> impl Iterator<Item = SubsetIndex> {
        let w = self.0;
        let mut next = Some(w);
        std::iter::from_fn(move || {
            let cur = next?;
            next = if cur == 0 { None } else { Some((cur - 1) & w) };
            Some(SubsetIndex(cur))
        })
    }

    /// Subsets of `self` excluding `self`.
    pub fn proper_subsets(self) -> impl Iterator<Item = SubsetIndex> {
        self.subsets().skip(1)
    }
}

pub(crate) fn check_dim(n: usize) -> Result<()> {
    if n > MAX_STATE_DIM {
        return Err(Error::invalid(format!("state dimension {n} exceeds the supported maximum of {MAX_STATE_DIM}")));
    }
    Ok(())
}

/// Returns `(x, anchor)_w`: coordinates in `w` come from `x`, the rest from
/// the anchor.
pub fn mask_vector(x: &[f64], anchor: &[f64], w: SubsetIndex) -> Result<Vec<f64>> {
    if x.len() != anchor.len() {
        return Err(Error::invalid(format!("state length {} does not match anchor length {}", x.len(), anchor.len())));
    }
    if (w.bits() as u64) >> x.len() != 0 {
        return Err(Error::invalid("subset refers to coordinates beyond the state length"));
    }
    Ok(mask_unchecked(x, anchor, w))
}

pub(crate) fn mask_unchecked(x: &[f64], anchor: &[f64], w: SubsetIndex) -> Vec<f64> {
    x.iter().zip(anchor).enumerate().map(|(i, (&xi, &ai))| if w.contains(i) { xi } else { ai }).collect()
}
