//! Permutation algebra and the restricted reference-order space.
//!
//! Rankings, orderings and reference orders are all permutations of
//! `{1..K}`. A ranking `pi` maps items to ranks; its inverse `pi^-1` (the
//! *ordering*) lists items by rank. A reference order `rho` maps stages of
//! the sequential ranking process to the rank assigned at that stage.
//!
//! The restricted space holds the reference orders reachable by a
//! "top-or-bottom" process: at every stage the rank chosen is either the
//! lowest or the highest one still available. Such a `rho` is equivalently
//! coded by a bit sequence `W` (1 = top pick) with `W_K = 1`, giving the
//! space size 2^(K-1).

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PermError {
    #[error("sequence has length {got}, expected {expected}")]
    WrongLength { expected: usize, got: usize },
    #[error("duplicate entry {0}")]
    DuplicateEntry(usize),
    #[error("entry {value} out of range 1..={k}")]
    OutOfRange { value: usize, k: usize },
    #[error("permutations need at least 2 entries")]
    TooShort,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("entry {value} at stage {stage} is neither the lowest nor the highest available rank")]
    NotTopOrBottom { stage: usize, value: usize },
    #[error("terminal bit of W must be 1")]
    BadTerminalBit,
    #[error("W entries must be 0 or 1, found {0}")]
    BadBit(u8),
    #[error("K = {0} outside the supported range 2..=20")]
    UnsupportedSize(usize),
    #[error("stage {0} is not an applicable swap")]
    SwapNotApplicable(usize),
    #[error("empty dataset")]
    EmptyData,
}

/// Checks that `seq` is a bijection of `{1..K}`.
pub fn validate_permutation(seq: &[usize], k: usize) -> Result<(), PermError> {
    if seq.len() != k {
        return Err(PermError::WrongLength {
            expected: k,
            got: seq.len(),
        });
    }
    let mut seen = vec![false; k];
    for &v in seq {
        if v < 1 || v > k {
            return Err(PermError::OutOfRange { value: v, k });
        }
        if seen[v - 1] {
            return Err(PermError::DuplicateEntry(v));
        }
        seen[v - 1] = true;
    }
    Ok(())
}

/// A permutation of `{1..K}`, stored with 1-based values.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Permutation {
    entries: Vec<usize>,
}

impl Permutation {
    pub fn new(entries: Vec<usize>) -> Result<Self, PermError> {
        if entries.len() < 2 {
            return Err(PermError::TooShort);
        }
        validate_permutation(&entries, entries.len())?;
        Ok(Self { entries })
    }

    pub fn from_slice(entries: &[usize]) -> Result<Self, PermError> {
        Self::new(entries.to_vec())
    }

    /// Forward order `rho_F = (1,2,...,K)`.
    pub fn identity(k: usize) -> Self {
        Self {
            entries: (1..=k).collect(),
        }
    }

    /// Backward order `rho_B = (K,K-1,...,1)`.
    pub fn reversed(k: usize) -> Self {
        Self {
            entries: (1..=k).rev().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Value at 1-based position `pos`.
    pub fn at(&self, pos: usize) -> usize {
        self.entries[pos - 1]
    }

    pub fn entries(&self) -> &[usize] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<usize> {
        self.entries
    }

    /// Functional inverse: converts between ranking and ordering formats.
    pub fn invert(&self) -> Permutation {
        let mut inv = vec![0usize; self.entries.len()];
        for (pos, &v) in self.entries.iter().enumerate() {
            inv[v - 1] = pos + 1;
        }
        Permutation { entries: inv }
    }
}

/// Composition `eta^-1 = pi^-1 . rho`: lists items in order of selection,
/// `eta^-1(t) = pi^-1(rho(t))`.
pub fn compose_with_reference(
    ordering: &Permutation,
    rho: &ReferenceOrder,
) -> Result<Permutation, PermError> {
    if ordering.len() != rho.k() {
        return Err(PermError::DimensionMismatch(ordering.len(), rho.k()));
    }
    let entries = rho
        .rho()
        .entries()
        .iter()
        .map(|&r| ordering.at(r))
        .collect();
    Ok(Permutation { entries })
}

/// A reference order in the restricted top-or-bottom space, together with
/// its binary code `W` and the counters `F` (tops assigned before each
/// stage) and `B` (bottoms assigned before each stage).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ReferenceOrder {
    rho: Permutation,
    w: Vec<u8>,
    f: Vec<usize>,
    b: Vec<usize>,
}

impl ReferenceOrder {
    /// Encodes `rho` into its `(W, F, B)` representation. Fails when some
    /// entry is neither the lowest nor the highest available rank.
    pub fn encode(rho: Permutation) -> Result<Self, PermError> {
        let k = rho.len();
        let mut w = vec![0u8; k];
        let mut f = vec![0usize; k];
        let mut b = vec![0usize; k];
        let mut tops = 0usize;
        let mut bottoms = 0usize;
        for t in 0..k {
            f[t] = tops;
            b[t] = bottoms;
            let top = tops + 1; // rho_F(F_t + 1)
            let bottom = k - bottoms; // rho_B(B_t + 1)
            let v = rho.entries[t];
            if v == top {
                // at the final stage top == bottom; W_K = 1 by convention
                w[t] = 1;
                tops += 1;
            } else if v == bottom {
                w[t] = 0;
                bottoms += 1;
            } else {
                return Err(PermError::NotTopOrBottom {
                    stage: t + 1,
                    value: v,
                });
            }
        }
        Ok(Self { rho, w, f, b })
    }

    /// Rebuilds `rho` from its bit sequence. `W` must end in 1.
    pub fn decode(w: &[u8]) -> Result<Self, PermError> {
        let k = w.len();
        if k < 2 {
            return Err(PermError::TooShort);
        }
        if let Some(&bad) = w.iter().find(|&&bit| bit > 1) {
            return Err(PermError::BadBit(bad));
        }
        if w[k - 1] != 1 {
            return Err(PermError::BadTerminalBit);
        }
        let mut entries = vec![0usize; k];
        let mut tops = 0usize;
        let mut bottoms = 0usize;
        for t in 0..k {
            if w[t] == 1 {
                entries[t] = tops + 1;
                tops += 1;
            } else {
                entries[t] = k - bottoms;
                bottoms += 1;
            }
        }
        let rho = Permutation { entries };
        Self::encode(rho)
    }

    pub fn forward(k: usize) -> Self {
        Self::encode(Permutation::identity(k)).expect("forward order is in the space")
    }

    pub fn backward(k: usize) -> Self {
        Self::encode(Permutation::reversed(k)).expect("backward order is in the space")
    }

    pub fn k(&self) -> usize {
        self.rho.len()
    }

    pub fn rho(&self) -> &Permutation {
        &self.rho
    }

    pub fn w(&self) -> &[u8] {
        &self.w
    }

    pub fn f(&self) -> &[usize] {
        &self.f
    }

    pub fn b(&self) -> &[usize] {
        &self.b
    }

    pub fn is_forward(&self) -> bool {
        self.w.iter().all(|&bit| bit == 1)
    }

    /// Stages `t` such that swapping `rho(t)` and `rho(t+1)` keeps the
    /// sequence in the restricted space. The terminal swap `t = K-1` is
    /// always applicable.
    pub fn applicable_swaps(&self) -> Vec<usize> {
        let k = self.k();
        (1..k)
            .filter(|&t| {
                let mut entries = self.rho.entries.clone();
                entries.swap(t - 1, t);
                Self::encode(Permutation { entries }).is_ok()
            })
            .collect()
    }

    /// Returns the reference order with entries `t` and `t+1` exchanged.
    pub fn swapped(&self, t: usize) -> Result<Self, PermError> {
        if t < 1 || t >= self.k() {
            return Err(PermError::SwapNotApplicable(t));
        }
        let mut entries = self.rho.entries.clone();
        entries.swap(t - 1, t);
        Self::encode(Permutation { entries }).map_err(|_| PermError::SwapNotApplicable(t))
    }
}

/// Enumerates the whole restricted space, one element per admissible bit
/// sequence. Capped at K = 20 (2^19 elements).
pub fn enumerate_restricted_space(k: usize) -> Result<Vec<ReferenceOrder>, PermError> {
    if !(2..=20).contains(&k) {
        return Err(PermError::UnsupportedSize(k));
    }
    let count = 1usize << (k - 1);
    let mut out = Vec::with_capacity(count);
    for mask in 0..count {
        let mut w = vec![0u8; k];
        for (t, bit) in w.iter_mut().enumerate().take(k - 1) {
            *bit = ((mask >> t) & 1) as u8;
        }
        w[k - 1] = 1;
        out.push(ReferenceOrder::decode(&w)?);
    }
    Ok(out)
}

/// Items sorted by ascending mean assigned rank, ties broken by item index.
/// Rows are orderings: the item at position `j` of a row holds rank `j`.
pub fn borda_ordering(orderings: &[Permutation]) -> Result<Permutation, PermError> {
    let first = orderings.first().ok_or(PermError::EmptyData)?;
    let k = first.len();
    let mut rank_sums = vec![0u64; k];
    for row in orderings {
        if row.len() != k {
            return Err(PermError::DimensionMismatch(row.len(), k));
        }
        for j in 1..=k {
            rank_sums[row.at(j) - 1] += j as u64;
        }
    }
    let mut items: Vec<usize> = (1..=k).collect();
    items.sort_by(|&a, &b| rank_sums[a - 1].cmp(&rank_sums[b - 1]).then(a.cmp(&b)));
    Ok(Permutation { entries: items })
}
