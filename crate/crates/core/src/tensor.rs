//! Dense multilinear kernels: latent vectors, core tensors, contractions.
//!
//! A memory model scores a symbol tuple by contracting one latent vector per
//! mode against a small dense core tensor. Everything here is plain `f64`
//! in row-major order with the first mode slowest, so the last mode's entries
//! are contiguous. Ranks stay small (tens, not thousands), which keeps the
//! naive dense representation the right one.

use crate::error::{Error, Result};

/// A dense latent representation. Entries are always finite; constructors
/// reject NaN and infinity so downstream arithmetic never has to re-check.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentVector {
    values: Vec<f64>,
}

impl LatentVector {
    /// Wraps a raw value buffer, rejecting non-finite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "latent vector".to_string(),
            });
        }
        Ok(Self { values })
    }

    /// All-zero vector of the given length.
    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![0.0; len],
        }
    }

    /// All-ones vector of the given length.
    pub fn ones(len: usize) -> Self {
        Self {
            values: vec![1.0; len],
        }
    }

    /// Standard basis vector `e_i`.
    ///
    /// Panics if `i >= len`.
    pub fn basis(len: usize, i: usize) -> Self {
        assert!(i < len, "basis index {i} out of range for length {len}");
        let mut values = vec![0.0; len];
        values[i] = 1.0;
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Mutable access for in-crate updaters (trainer, projection). Callers
    /// must keep entries finite; `fit` aborts on the first non-finite loss.
    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Inner product. Panics on length mismatch; public entry points validate
    /// lengths before any dot is taken.
    pub fn dot(&self, other: &Self) -> f64 {
        assert_eq!(self.len(), other.len(), "dot of unequal lengths");
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Euclidean norm.
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// True if every entry is >= 0.
    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|v| *v >= 0.0)
    }
}

impl std::ops::Index<usize> for LatentVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

impl AsRef<[f64]> for LatentVector {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// Dense core tensor of a factorized memory model.
///
/// Public constructors accept order 3 (subject, predicate, object) and
/// order 4 (subject, predicate, object, time). All modes share one rank.
/// Values are stored row-major with mode 0 slowest.
#[derive(Clone, Debug, PartialEq)]
pub struct CoreTensor {
    order: usize,
    rank: usize,
    values: Vec<f64>,
}

fn checked_volume(order: usize, rank: usize) -> Result<usize> {
    if rank == 0 {
        return Err(Error::InvalidRank {
            rank,
            reason: "rank must be at least 1".to_string(),
        });
    }
    let mut volume: usize = 1;
    for _ in 0..order {
        volume = volume.checked_mul(rank).ok_or_else(|| Error::InvalidRank {
            rank,
            reason: format!("rank^{order} overflows"),
        })?;
    }
    Ok(volume)
}

impl CoreTensor {
    /// Zero core of the given order and rank. Order must be 3 or 4.
    pub fn zeros(order: usize, rank: usize) -> Result<Self> {
        if order != 3 && order != 4 {
            return Err(Error::InvalidOrder { order });
        }
        let volume = checked_volume(order, rank)?;
        Ok(Self {
            order,
            rank,
            values: vec![0.0; volume],
        })
    }

    /// Builds a core from a flat row-major buffer of length `rank^order`.
    pub fn from_values(order: usize, rank: usize, values: Vec<f64>) -> Result<Self> {
        if order != 3 && order != 4 {
            return Err(Error::InvalidOrder { order });
        }
        let volume = checked_volume(order, rank)?;
        if values.len() != volume {
            return Err(Error::WrongValueCount {
                expected: volume,
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "core tensor".to_string(),
            });
        }
        Ok(Self {
            order,
            rank,
            values,
        })
    }

    /// Core with `value` on the superdiagonal and zero elsewhere. With basis
    /// vectors on every mode this scores `value` exactly when all indices
    /// agree, which makes it the standard fixture for exactness tests.
    pub fn superdiagonal(order: usize, rank: usize, value: f64) -> Result<Self> {
        let mut core = Self::zeros(order, rank)?;
        for r in 0..rank {
            let idx = vec![r; order];
            let lin = core.linear_index(&idx);
            core.values[lin] = value;
        }
        Ok(core)
    }

    /// Intermediate tensor of arbitrary order >= 1, used while folding
    /// contractions. Not exposed: model cores are always order 3 or 4.
    fn intermediate(order: usize, rank: usize, values: Vec<f64>) -> Self {
        debug_assert!(order >= 1);
        debug_assert_eq!(values.len(), rank.pow(order as u32));
        Self {
            order,
            rank,
            values,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Row-major offset of a multi-index; mode 0 is slowest.
    pub fn linear_index(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.order, "index arity != tensor order");
        let mut lin = 0;
        for (mode, &i) in index.iter().enumerate() {
            assert!(i < self.rank, "index {i} out of range in mode {mode}");
            lin = lin * self.rank + i;
        }
        lin
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.values[self.linear_index(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let lin = self.linear_index(index);
        self.values[lin] = value;
    }

    /// Multiplies every entry by `factor`.
    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.values {
            *v *= factor;
        }
    }

    fn check_vector(&self, mode: usize, vector: &LatentVector) -> Result<()> {
        if vector.len() != self.rank {
            return Err(Error::DimensionMismatch {
                mode,
                expected: self.rank,
                actual: vector.len(),
            });
        }
        Ok(())
    }

    /// Contracts one mode with a vector, producing a tensor of order - 1.
    /// `mode` is a position in the current tensor; remaining modes keep
    /// their relative order.
    pub(crate) fn contract_mode(&self, vector: &LatentVector, mode: usize) -> Result<CoreTensor> {
        assert!(self.order >= 2, "cannot reduce an order-1 tensor further");
        assert!(mode < self.order, "mode {mode} out of range");
        self.check_vector(mode, vector)?;
        let r = self.rank;
        let before = r.pow(mode as u32);
        let after = r.pow((self.order - 1 - mode) as u32);
        let mut out = vec![0.0; before * after];
        let v = vector.as_slice();
        for b in 0..before {
            for (j, &w) in v.iter().enumerate() {
                let src = (b * r + j) * after;
                let dst = b * after;
                for a in 0..after {
                    out[dst + a] += w * self.values[src + a];
                }
            }
        }
        Ok(CoreTensor::intermediate(self.order - 1, r, out))
    }

    /// Full contraction: one vector per mode, yielding the scalar
    /// `sum over all multi-indices of core[i] * prod_m vectors[m][i_m]`.
    pub fn contract(&self, vectors: &[&LatentVector]) -> Result<f64> {
        if vectors.len() != self.order {
            return Err(Error::InvalidPattern {
                reason: format!(
                    "contraction of an order-{} tensor needs {} vectors, got {}",
                    self.order,
                    self.order,
                    vectors.len()
                ),
            });
        }
        for (mode, v) in vectors.iter().enumerate() {
            self.check_vector(mode, v)?;
        }
        // Fold the leading mode repeatedly; each step shrinks the order by 1.
        let mut acc = self.contract_mode(vectors[0], 0)?;
        for v in &vectors[1..vectors.len() - 1] {
            acc = acc.contract_mode(v, 0)?;
        }
        let last = vectors[vectors.len() - 1].as_slice();
        Ok(acc
            .values
            .iter()
            .zip(last)
            .map(|(a, b)| a * b)
            .sum())
    }

    /// Three-way contraction of an order-3 core.
    pub fn contract3(
        &self,
        v1: &LatentVector,
        v2: &LatentVector,
        v3: &LatentVector,
    ) -> Result<f64> {
        if self.order != 3 {
            return Err(Error::InvalidOrder { order: self.order });
        }
        self.contract(&[v1, v2, v3])
    }

    /// Four-way contraction of an order-4 core.
    pub fn contract4(
        &self,
        v1: &LatentVector,
        v2: &LatentVector,
        v3: &LatentVector,
        v4: &LatentVector,
    ) -> Result<f64> {
        if self.order != 4 {
            return Err(Error::InvalidOrder { order: self.order });
        }
        self.contract(&[v1, v2, v3, v4])
    }

    /// Contracts every mode except `free_mode`, returning the query vector
    /// `h` with `h[r] = ` the contraction of all fixed vectors against the
    /// core slice at free index `r`. By multilinearity, the full contraction
    /// with any vector `v` in the free slot equals `dot(v, h)`.
    ///
    /// `fixed` lists vectors for the non-free modes in ascending mode order.
    pub fn contract_leave_one(
        &self,
        fixed: &[&LatentVector],
        free_mode: usize,
    ) -> Result<LatentVector> {
        if free_mode >= self.order {
            return Err(Error::InvalidPattern {
                reason: format!(
                    "free mode {free_mode} out of range for an order-{} tensor",
                    self.order
                ),
            });
        }
        if fixed.len() != self.order - 1 {
            return Err(Error::InvalidPattern {
                reason: format!(
                    "leave-one contraction of an order-{} tensor needs {} fixed vectors, got {}",
                    self.order,
                    self.order - 1,
                    fixed.len()
                ),
            });
        }
        for (slot, v) in fixed.iter().enumerate() {
            let mode = if slot < free_mode { slot } else { slot + 1 };
            self.check_vector(mode, v)?;
        }
        // Contract trailing fixed modes first (their positions are stable),
        // then the leading ones, leaving the free mode as the sole survivor.
        let mut acc: Option<CoreTensor> = None;
        for slot in (free_mode..self.order - 1).rev() {
            // slot indexes `fixed`; the original mode is slot + 1, and after
            // contracting everything behind it, its position is slot + 1
            // minus nothing (trailing contractions preserve leading positions).
            let position = slot + 1;
            let next = match &acc {
                Some(t) => t.contract_mode(fixed[slot], position)?,
                None => self.contract_mode(fixed[slot], position)?,
            };
            acc = Some(next);
        }
        for slot in (0..free_mode).rev() {
            let next = match &acc {
                Some(t) => t.contract_mode(fixed[slot], slot)?,
                None => self.contract_mode(fixed[slot], slot)?,
            };
            acc = Some(next);
        }
        let result = acc.expect("order >= 2 guarantees at least one contraction");
        debug_assert_eq!(result.order, 1);
        LatentVector::new(result.values)
    }
}
