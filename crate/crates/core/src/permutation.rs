//! Factor-graph stage permutations and their bit-index realization.
//!
//! PE stage `s` couples indices that differ in binary digit `s`. Reordering
//! the stages of the graph is therefore the same as relabelling every index
//! by a permutation of its binary digits, which lets a permuted graph be
//! decoded on the original one.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// A bijection on `0..len`, applied as `out[map[i]] = v[i]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IndexMap(Vec<usize>);

impl IndexMap {
    pub fn identity(len: usize) -> Self {
        Self((0..len).collect())
    }

    pub fn new(map: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; map.len()];
        for &m in &map {
            if m >= map.len() || std::mem::replace(&mut seen[m], true) {
                return Err(Error::InvalidPermutation(format!("{map:?} is not a bijection")));
            }
        }
        Ok(Self(map))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(i, &m)| i == m)
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.0.len()];
        for (i, &m) in self.0.iter().enumerate() {
            inv[m] = i;
        }
        Self(inv)
    }

    /// `(self ∘ other)(i) = self(other(i))`.
    pub fn compose(&self, other: &Self) -> Self {
        Self(other.0.iter().map(|&i| self.0[i]).collect())
    }

    /// Returns `out` with `out[map[i]] = v[i]`.
    pub fn apply<T: Copy + Default>(&self, v: &[T]) -> Result<Vec<T>> {
        if v.len() != self.0.len() {
            return Err(Error::LengthMismatch {
                expected: self.0.len(),
                actual: v.len(),
            });
        }
        let mut out = vec![T::default(); v.len()];
        for (&m, &x) in self.0.iter().zip(v) {
            out[m] = x;
        }
        Ok(out)
    }
}

/// An ordering of the `n` PE stages: layer `l` of the permuted graph,
/// counted from the information side, runs stage `stage_order[l]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StagePermutation {
    order: Vec<usize>,
    bit_map: IndexMap,
    decode_map: IndexMap,
}

impl StagePermutation {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let n = order.len();
        if n == 0 || n > 24 {
            return Err(Error::InvalidPermutation(format!("{n} stages outside 1..=24")));
        }
        let mut seen = vec![false; n];
        for &s in &order {
            if s >= n || std::mem::replace(&mut seen[s], true) {
                return Err(Error::InvalidPermutation(format!("{order:?} is not a permutation of 0..{n}")));
            }
        }
        let bit_map = derive_bit_index_map(&order)?;
        let decode_map = bit_map.inverse();
        Ok(Self {
            order,
            bit_map,
            decode_map,
        })
    }

    /// `π_0`.
    pub fn identity(n: usize) -> Self {
        Self::new((0..n).collect()).expect("identity is valid")
    }

    pub fn stages(&self) -> usize {
        self.order.len()
    }

    pub fn stage_order(&self) -> &[usize] {
        &self.order
    }

    pub fn is_identity(&self) -> bool {
        self.order.iter().enumerate().all(|(i, &s)| i == s)
    }

    /// Moves binary digit `j` of every index to position `stage_order[j]`.
    pub fn bit_index_map(&self) -> &IndexMap {
        &self.bit_map
    }

    /// The relabelling under which decoding on the original graph is
    /// decoding on this permuted graph: digit `stage_order[l]` of an index
    /// moves to position `l`. This is the inverse of
    /// [`bit_index_map`](Self::bit_index_map).
    pub fn decode_map(&self) -> &IndexMap {
        &self.decode_map
    }

    /// Lexicographic rank of the stage order among all `n!` orders; the
    /// identity has rank 0.
    pub fn id(&self) -> u64 {
        let n = self.order.len();
        let mut rank = 0u64;
        for i in 0..n {
            let smaller = self.order[i + 1..].iter().filter(|&&s| s < self.order[i]).count() as u64;
            rank = rank * (n - i) as u64 + smaller;
        }
        rank
    }

    pub fn compose(&self, other: &Self) -> Result<Self> {
        if self.stages() != other.stages() {
            return Err(Error::InvalidPermutation("stage counts differ".into()));
        }
        Self::new(other.order.iter().map(|&j| self.order[j]).collect())
    }
}

impl fmt::Display for StagePermutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.order.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

impl FromStr for StagePermutation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let order = s
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::InvalidPermutation(format!("{s:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(order)
    }
}

/// `τ(i)`: the binary digit of `i` at position `j` moves to position
/// `stage_order[j]`.
pub fn derive_bit_index_map(stage_order: &[usize]) -> Result<IndexMap> {
    let n = stage_order.len();
    let mut seen = vec![false; n];
    for &s in stage_order {
        if s >= n || std::mem::replace(&mut seen[s], true) {
            return Err(Error::InvalidPermutation(format!(
                "{stage_order:?} is not a permutation of 0..{n}"
            )));
        }
    }
    let map = (0..1usize << n)
        .map(|i| {
            stage_order
                .iter()
                .enumerate()
                .fold(0, |acc, (j, &dest)| acc | (((i >> j) & 1) << dest))
        })
        .collect();
    Ok(IndexMap(map))
}

/// Uniform stage order by Fisher–Yates; with `exclude_identity` the
/// identity is rejected and redrawn.
pub fn random_stage_permutation<R: Rng + ?Sized>(
    n: usize,
    rng: &mut R,
    exclude_identity: bool,
) -> Result<StagePermutation> {
    if exclude_identity && n < 2 {
        return Err(Error::InvalidPermutation(format!(
            "no non-identity permutation of {n} stage(s)"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    loop {
        order.shuffle(rng);
        if !exclude_identity || order.iter().enumerate().any(|(i, &s)| i != s) {
            return StagePermutation::new(order);
        }
    }
}

/// The `n` cyclic rotations of the stages; rotation 0 is the identity.
pub fn cyclic_shift_set(n: usize) -> Vec<StagePermutation> {
    (0..n)
        .map(|shift| StagePermutation::new((0..n).map(|l| (l + shift) % n).collect()).expect("rotation is valid"))
        .collect()
}
