//! Domain types shared by every routine: tagged element slots, bins, bin
//! matrices and the pipeline parameterization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What a slot holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Kind {
    Real = 0,
    Filler = 1,
    /// Placeholder that only lives inside bin placement.
    Temp = 2,
}

/// The payload moved by every oblivious routine.
///
/// `label` and `group` are routing scratch owned by whichever pipeline is
/// currently moving the element; callers should not expect them to survive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Element {
    pub kind: Kind,
    pub key: u64,
    pub value: u64,
    pub label: u64,
    pub group: u32,
    pub origin: u64,
}

/// Group id carried by elements that have none (fillers).
pub const NO_GROUP: u32 = u32::MAX;

/// The all-ones word used for ⊥ payloads.
pub const BOTTOM: u64 = u64::MAX;

impl Element {
    pub fn real(key: u64, value: u64, origin: u64) -> Self {
        Element {
            kind: Kind::Real,
            key,
            value,
            label: 0,
            group: 0,
            origin,
        }
    }

    /// Padding slot. Key and origin saturate so a filler sorts after every
    /// real element under `(key, origin)` order.
    pub const fn filler() -> Self {
        Element {
            kind: Kind::Filler,
            key: u64::MAX,
            value: BOTTOM,
            label: u64::MAX,
            group: NO_GROUP,
            origin: u64::MAX,
        }
    }

    pub(crate) fn temp(group: u32, origin: u64) -> Self {
        Element {
            kind: Kind::Temp,
            key: u64::MAX,
            value: BOTTOM,
            label: u64::MAX,
            group,
            origin,
        }
    }

    #[inline]
    pub fn is_real(&self) -> bool {
        self.kind == Kind::Real
    }

    #[inline]
    pub fn is_filler(&self) -> bool {
        self.kind == Kind::Filler
    }

    /// Composite `(key, origin)` sort key; fillers read as +∞.
    #[inline]
    pub fn sort_key(&self) -> (u64, u64) {
        if self.is_filler() {
            (u64::MAX, u64::MAX)
        } else {
            (self.key, self.origin)
        }
    }

    /// Fields a permutation must preserve.
    pub fn payload(&self) -> (Kind, u64, u64, u64) {
        (self.kind, self.key, self.value, self.origin)
    }
}

/// Pure two-slot ordering: `(min, max)` by `(key, origin)` when `ascending`,
/// `(max, min)` otherwise.
#[inline]
pub fn order_pair(a: Element, b: Element, ascending: bool) -> (Element, Element) {
    let swap = (a.sort_key() > b.sort_key()) == ascending;
    if swap {
        (b, a)
    } else {
        (a, b)
    }
}

/// Builds an element array from plain keys (`value = key`, `origin = index`).
pub fn elements_from_keys(keys: &[u64]) -> Vec<Element> {
    keys.iter()
        .enumerate()
        .map(|(i, &k)| Element::real(k, k, i as u64))
        .collect()
}

/// A fixed-capacity bin. `slots.len()` is always exactly the capacity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bin {
    pub slots: Vec<Element>,
}

impl Bin {
    pub fn empty(capacity: usize) -> Self {
        Bin {
            slots: vec![Element::filler(); capacity],
        }
    }

    pub fn capacity(&self) -> usize {
        self.slots.len()
    }

    pub fn real_count(&self) -> usize {
        self.slots.iter().filter(|e| e.is_real()).count()
    }

    pub fn reals(&self) -> impl Iterator<Item = &Element> {
        self.slots.iter().filter(|e| e.is_real())
    }
}

/// `rows × cols` bins of one shared capacity, stored row-major in one flat
/// buffer of `rows * cols * capacity` slots.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinMatrix {
    rows: usize,
    cols: usize,
    capacity: usize,
    slots: Vec<Element>,
}

impl BinMatrix {
    pub fn new(rows: usize, cols: usize, capacity: usize, slots: Vec<Element>) -> Result<Self> {
        if slots.len() != rows * cols * capacity {
            return Err(Error::Shape(format!(
                "{} slots for a {rows}x{cols} matrix of capacity {capacity}",
                slots.len()
            )));
        }
        Ok(BinMatrix {
            rows,
            cols,
            capacity,
            slots,
        })
    }

    pub fn filled(rows: usize, cols: usize, capacity: usize) -> Self {
        BinMatrix {
            rows,
            cols,
            capacity,
            slots: vec![Element::filler(); rows * cols * capacity],
        }
    }

    pub fn from_bins(rows: usize, cols: usize, bins: &[Bin]) -> Result<Self> {
        let capacity = bins.first().map_or(0, Bin::capacity);
        if bins.len() != rows * cols || bins.iter().any(|b| b.capacity() != capacity) {
            return Err(Error::Shape("bins do not form a uniform matrix".into()));
        }
        let slots = bins.iter().flat_map(|b| b.slots.iter().copied()).collect();
        Ok(BinMatrix {
            rows,
            cols,
            capacity,
            slots,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn bin_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn bin(&self, row: usize, col: usize) -> &[Element] {
        let start = (row * self.cols + col) * self.capacity;
        &self.slots[start..start + self.capacity]
    }

    /// Bin by flat row-major index.
    pub fn bin_at(&self, index: usize) -> &[Element] {
        &self.slots[index * self.capacity..(index + 1) * self.capacity]
    }

    pub fn bins(&self) -> impl Iterator<Item = &[Element]> {
        self.slots.chunks(self.capacity.max(1))
    }

    pub fn slots(&self) -> &[Element] {
        &self.slots
    }

    pub fn slots_mut(&mut self) -> &mut [Element] {
        &mut self.slots
    }

    pub fn into_slots(self) -> Vec<Element> {
        self.slots
    }

    /// Reinterprets the same slots with a different `rows × cols` split.
    pub fn reshape(self, rows: usize, cols: usize) -> Result<Self> {
        BinMatrix::new(rows, cols, self.capacity, self.slots)
    }

    pub fn real_loads(&self) -> Vec<usize> {
        self.bins()
            .map(|b| b.iter().filter(|e| e.is_real()).count())
            .collect()
    }
}

/// `⌈log₂ n⌉` for `n ≥ 1`.
#[inline]
pub fn ceil_log2(n: usize) -> u32 {
    if n <= 1 {
        0
    } else {
        usize::BITS - (n - 1).leading_zeros()
    }
}

/// Largest array the pipelines accept.
pub const MAX_LEN: usize = 1 << 30;

/// Concrete shape of one permutation / sorting pipeline run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineParams {
    /// Real input length before padding.
    pub n: usize,
    /// Bin capacity.
    pub z: usize,
    /// Butterfly branching factor.
    pub gamma: usize,
    /// Number of ORBA bins; `beta * z / 2 >= n`.
    pub beta: usize,
    /// Elements per initial Rec-SBA bin.
    pub sba_bin_size: usize,
    /// Rec-SBA bins are capped at `sba_cap_factor * sba_bin_size`.
    pub sba_cap_factor: usize,
    pub max_retries: u32,
}

impl PipelineParams {
    /// Default parameterization: `Z ≈ log²n`, `γ ≈ log n`, both rounded up to
    /// powers of two, with floors (`Z ≥ 64`, `γ ≥ 8`) below `n = 2^10`.
    pub fn for_len(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("pipeline needs at least one element".into()));
        }
        if n > MAX_LEN {
            return Err(Error::TooLarge { len: n, max: MAX_LEN });
        }
        let lg = (ceil_log2(n) as usize).max(1);
        let mut z = (lg * lg).next_power_of_two();
        let mut gamma = lg.next_power_of_two();
        if n < 1 << 10 {
            z = z.max(64);
            gamma = gamma.max(8);
        }
        let beta = (2 * n).div_ceil(z).next_power_of_two().max(2);
        let gamma = gamma.min(beta);
        let sba_bin_size = (lg * lg * lg).next_power_of_two().max(64);
        Ok(PipelineParams {
            n,
            z,
            gamma,
            beta,
            sba_bin_size,
            sba_cap_factor: 4,
            max_retries: 8,
        })
    }

    /// Explicit shape; `n` is derived as `beta * z / 2`.
    pub fn with_shape(z: usize, gamma: usize, beta: usize) -> Result<Self> {
        let p = PipelineParams {
            n: beta * z / 2,
            z,
            gamma,
            beta,
            sba_bin_size: 64,
            sba_cap_factor: 4,
            max_retries: 8,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("Z", self.z), ("gamma", self.gamma), ("beta", self.beta)] {
            if !v.is_power_of_two() {
                return Err(Error::NotPowerOfTwo { what: name, value: v });
            }
        }
        if self.z < 2 {
            return Err(Error::InvalidInput("bin capacity must be at least 2".into()));
        }
        if self.gamma < 2 || self.gamma > self.beta.max(2) {
            return Err(Error::InvalidInput(format!(
                "gamma {} must lie in [2, beta={}]",
                self.gamma, self.beta
            )));
        }
        if self.n > self.padded_len() {
            return Err(Error::InvalidInput(format!(
                "n = {} exceeds beta*Z/2 = {}",
                self.n,
                self.padded_len()
            )));
        }
        Ok(())
    }

    /// `beta * Z / 2`, the length after padding.
    pub fn padded_len(&self) -> usize {
        self.beta * self.z / 2
    }

    /// Number of label bits, `log₂ beta`.
    pub fn label_bits(&self) -> u32 {
        self.beta.trailing_zeros()
    }

    pub fn sba_cap(&self) -> usize {
        self.sba_cap_factor * self.sba_bin_size
    }
}

/// Appends fillers so the length becomes `params.padded_len()`. Returns the
/// number of fillers added.
pub fn pad_to_shape(input: &mut Vec<Element>, params: &PipelineParams) -> Result<usize> {
    if input.is_empty() {
        return Err(Error::InvalidInput("cannot pad an empty array".into()));
    }
    let target = params.padded_len();
    if target > MAX_LEN {
        return Err(Error::TooLarge {
            len: target,
            max: MAX_LEN,
        });
    }
    if input.len() > target {
        return Err(Error::InvalidInput(format!(
            "input of length {} exceeds target shape {target}",
            input.len()
        )));
    }
    let added = target - input.len();
    input.resize(target, Element::filler());
    Ok(added)
}

/// Drops every filler, keeping the real elements in order.
pub fn strip_fillers(input: Vec<Element>) -> Vec<Element> {
    input.into_iter().filter(|e| !e.is_filler()).collect()
}
