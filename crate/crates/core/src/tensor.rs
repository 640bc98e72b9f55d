//! Dense and coordinate-list tensors, norms and mode contractions.
//!
//! Storage is row-major (last index fastest) and all indices and modes are
//! 0-based.

use crate::accum::{sum_of_squares, ExactSum};
use crate::error::{Error, Result};

pub type MultiIndex = Vec<usize>;

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn check_dims(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() {
        return Err(Error::InvalidShape("order must be at least 1".into()));
    }
    if dims.contains(&0) {
        return Err(Error::InvalidShape(format!("zero-length mode in {dims:?}")));
    }
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::InvalidShape(format!("dims {dims:?} overflow usize")))
}

/// Writes the multi-index of flat offset `flat` into `out`.
pub(crate) fn unravel_into(mut flat: usize, dims: &[usize], out: &mut [usize]) {
    for k in (0..dims.len()).rev() {
        out[k] = flat % dims[k];
        flat /= dims[k];
    }
}

pub(crate) fn ravel(index: &[usize], dims: &[usize]) -> usize {
    index.iter().zip(dims).fold(0, |acc, (&i, &d)| acc * d + i)
}

/// Advances `index` to its lexicographic successor; false once exhausted.
pub(crate) fn next_index(index: &mut [usize], dims: &[usize]) -> bool {
    for k in (0..dims.len()).rev() {
        index[k] += 1;
        if index[k] < dims[k] {
            return true;
        }
        index[k] = 0;
    }
    false
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    dims: Vec<usize>,
    values: Vec<f64>,
}

/// Outcome of contracting one or more modes.
#[derive(Debug, Clone, PartialEq)]
pub enum Contraction {
    Tensor(DenseTensor),
    Scalar(f64),
}

impl Contraction {
    pub fn scalar(&self) -> Option<f64> {
        match self {
            Contraction::Scalar(v) => Some(*v),
            Contraction::Tensor(_) => None,
        }
    }

    pub fn tensor(self) -> Option<DenseTensor> {
        match self {
            Contraction::Tensor(t) => Some(t),
            Contraction::Scalar(_) => None,
        }
    }
}

impl DenseTensor {
    pub fn new(dims: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let len = check_dims(&dims)?;
        if values.len() != len {
            return Err(Error::LengthMismatch {
                expected: len,
                actual: values.len(),
            });
        }
        Ok(Self { dims, values })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        let len = check_dims(&dims)?;
        Ok(Self {
            dims,
            values: vec![0.0; len],
        })
    }

    /// Builds a tensor by evaluating `f` at every multi-index in row-major order.
    pub fn from_fn(dims: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let len = check_dims(&dims)?;
        let mut values = Vec::with_capacity(len);
        let mut idx = vec![0; dims.len()];
        loop {
            values.push(f(&idx));
            if !next_index(&mut idx, &dims) {
                break;
            }
        }
        Ok(Self { dims, values })
    }

    pub fn cubic(n: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(vec![n; d], values)
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidShape("ragged rows".into()));
        }
        Self::new(vec![m, n], rows.concat())
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::from_fn(vec![n, n], |ix| if ix[0] == ix[1] { 1.0 } else { 0.0 })
    }

    /// Outer product `v_1 ⊗ … ⊗ v_d`.
    pub fn outer(factors: &[&[f64]]) -> Result<Self> {
        let dims: Vec<usize> = factors.iter().map(|f| f.len()).collect();
        Self::from_fn(dims, |ix| {
            ix.iter().zip(factors).map(|(&i, f)| f[i]).product()
        })
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Common mode length if every mode has the same size.
    pub fn cubic_dim(&self) -> Option<usize> {
        let n = self.dims[0];
        self.dims.iter().all(|&d| d == n).then_some(n)
    }

    pub fn require_cubic(&self) -> Result<usize> {
        self.cubic_dim()
            .ok_or_else(|| Error::NonCubic(self.dims.clone()))
    }

    pub fn get(&self, index: &[usize]) -> Option<f64> {
        if index.len() != self.dims.len() || index.iter().zip(&self.dims).any(|(i, d)| i >= d) {
            return None;
        }
        Some(self.values[ravel(index, &self.dims)])
    }

    pub fn set(&mut self, index: &[usize], value: f64) -> Result<()> {
        if index.len() != self.dims.len() || index.iter().zip(&self.dims).any(|(i, d)| i >= d) {
            return Err(Error::IndexOutOfRange {
                index: index.to_vec(),
                dims: self.dims.clone(),
            });
        }
        let k = ravel(index, &self.dims);
        self.values[k] = value;
        Ok(())
    }

    /// `Σ values²`, correctly rounded and independent of summation order.
    pub fn frobenius_sq(&self) -> f64 {
        sum_of_squares(&self.values)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn nnz(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0.0).count()
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            dims: self.dims.clone(),
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    pub fn sub(&self, other: &DenseTensor) -> Result<Self> {
        if self.dims != other.dims {
            return Err(Error::InvalidShape(format!(
                "dims {:?} and {:?} differ",
                self.dims, other.dims
            )));
        }
        Ok(Self {
            dims: self.dims.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    /// `T ×_mode x`: sums out `mode` against `x`, leaving an order-(d−1) tensor.
    pub fn mode_contract(&self, x: &[f64], mode: usize) -> Result<DenseTensor> {
        let d = self.order();
        if mode >= d {
            return Err(Error::ModeOutOfRange { mode, order: d });
        }
        if d == 1 {
            return Err(Error::ScalarResult);
        }
        if x.len() != self.dims[mode] {
            return Err(Error::LengthMismatch {
                expected: self.dims[mode],
                actual: x.len(),
            });
        }
        let outer: usize = self.dims[..mode].iter().product();
        let len = self.dims[mode];
        let inner: usize = self.dims[mode + 1..].iter().product();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            let dst = &mut out[o * inner..(o + 1) * inner];
            for (i, &xi) in x.iter().enumerate() {
                let src = &self.values[(o * len + i) * inner..(o * len + i + 1) * inner];
                for (t, s) in dst.iter_mut().zip(src) {
                    *t += s * xi;
                }
            }
        }
        let mut dims = self.dims.clone();
        dims.remove(mode);
        Ok(DenseTensor { dims, values: out })
    }

    /// Contracts each listed mode (original numbering) with its vector.
    ///
    /// Modes are applied from highest to lowest so the remaining mode numbers
    /// stay valid; contracting every mode yields a scalar.
    pub fn multi_contract(&self, xs: &[&[f64]], modes: &[usize]) -> Result<Contraction> {
        if xs.len() != modes.len() {
            return Err(Error::LengthMismatch {
                expected: modes.len(),
                actual: xs.len(),
            });
        }
        let d = self.order();
        let mut seen = vec![false; d];
        for (&m, x) in modes.iter().zip(xs) {
            if m >= d {
                return Err(Error::ModeOutOfRange { mode: m, order: d });
            }
            if std::mem::replace(&mut seen[m], true) {
                return Err(Error::RepeatedMode(m));
            }
            if x.len() != self.dims[m] {
                return Err(Error::LengthMismatch {
                    expected: self.dims[m],
                    actual: x.len(),
                });
            }
        }
        let mut order: Vec<usize> = (0..modes.len()).collect();
        order.sort_by(|&a, &b| modes[b].cmp(&modes[a]));
        let mut current = self.clone();
        for (step, &k) in order.iter().enumerate() {
            if current.order() == 1 {
                debug_assert_eq!(step + 1, order.len());
                return Ok(Contraction::Scalar(dot(&current.values, xs[k])));
            }
            current = current.mode_contract(xs[k], modes[k])?;
        }
        Ok(Contraction::Tensor(current))
    }

    /// Contracts every mode except `keep` with `xs[j]`, returning a vector of
    /// length `dims[keep]`. `xs[keep]` is ignored.
    pub fn contract_all_but(&self, xs: &[&[f64]], keep: usize) -> Vec<f64> {
        let d = self.order();
        debug_assert_eq!(xs.len(), d);
        let mut out = vec![0.0; self.dims[keep]];
        let mut idx = vec![0usize; d];
        for chunk in self.values.chunks_exact(*self.dims.last().unwrap()) {
            // Weight of all leading modes except `keep`.
            let mut w = 1.0;
            for j in 0..d - 1 {
                if j != keep {
                    w *= xs[j][idx[j]];
                }
            }
            if keep == d - 1 {
                for (o, v) in out.iter_mut().zip(chunk) {
                    *o += w * v;
                }
            } else {
                out[idx[keep]] += w * dot(chunk, xs[d - 1]);
            }
            // Advance leading index (all but last mode).
            for k in (0..d - 1).rev() {
                idx[k] += 1;
                if idx[k] < self.dims[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
        out
    }

    /// `T(x_1, …, x_d)`.
    pub fn full_contract(&self, xs: &[&[f64]]) -> f64 {
        let d = self.order();
        let v = self.contract_all_but(xs, d - 1);
        dot(&v, xs[d - 1])
    }

    pub fn to_sparse(&self) -> SparseTensor {
        let d = self.order();
        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut idx = vec![0; d];
        for (flat, &v) in self.values.iter().enumerate() {
            if v != 0.0 {
                unravel_into(flat, &self.dims, &mut idx);
                indices.extend_from_slice(&idx);
                values.push(v);
            }
        }
        SparseTensor {
            dims: self.dims.clone(),
            indices,
            values,
        }
    }
}

/// Coordinate-list tensor with strictly sorted, in-range, non-zero entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseTensor {
    dims: Vec<usize>,
    /// `nnz × order` index components, row by row.
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseTensor {
    pub fn empty(dims: Vec<usize>) -> Result<Self> {
        check_dims(&dims)?;
        Ok(Self {
            dims,
            indices: Vec::new(),
            values: Vec::new(),
        })
    }

    /// Validates already-sorted entries.
    pub fn from_sorted<I>(dims: Vec<usize>, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (MultiIndex, f64)>,
    {
        let mut s = Self::empty(dims)?;
        for (idx, v) in entries {
            s.push_checked(&idx, v)?;
        }
        Ok(s)
    }

    /// Sorts the entries first; duplicates are still rejected.
    pub fn from_entries(dims: Vec<usize>, mut entries: Vec<(MultiIndex, f64)>) -> Result<Self> {
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        if let Some(w) = entries.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::DuplicateIndex {
                index: w[0].0.clone(),
            });
        }
        Self::from_sorted(dims, entries)
    }

    fn push_checked(&mut self, idx: &[usize], v: f64) -> Result<()> {
        if idx.len() != self.dims.len() || idx.iter().zip(&self.dims).any(|(i, d)| i >= d) {
            return Err(Error::IndexOutOfRange {
                index: idx.to_vec(),
                dims: self.dims.clone(),
            });
        }
        if v == 0.0 || !v.is_finite() {
            return Err(Error::StoredZero {
                index: idx.to_vec(),
            });
        }
        if let Some(last) = self.nnz().checked_sub(1).and_then(|k| self.index(k)) {
            match last.cmp(idx) {
                std::cmp::Ordering::Less => {}
                std::cmp::Ordering::Equal => {
                    return Err(Error::DuplicateIndex {
                        index: idx.to_vec(),
                    })
                }
                std::cmp::Ordering::Greater => {
                    return Err(Error::Unsorted {
                        index: idx.to_vec(),
                    })
                }
            }
        }
        self.indices.extend_from_slice(idx);
        self.values.push(v);
        Ok(())
    }

    /// Appends an entry known to satisfy the invariants.
    pub(crate) fn push_unchecked(&mut self, idx: &[usize], v: f64) {
        debug_assert!(v != 0.0);
        self.indices.extend_from_slice(idx);
        self.values.push(v);
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn index(&self, k: usize) -> Option<&[usize]> {
        let d = self.dims.len();
        self.indices.get(k * d..(k + 1) * d)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[usize], f64)> + '_ {
        self.indices
            .chunks_exact(self.dims.len())
            .zip(self.values.iter().copied())
    }

    /// Value at `index`, zero if absent.
    pub fn get(&self, index: &[usize]) -> f64 {
        let d = self.dims.len();
        let mut lo = 0;
        let mut hi = self.nnz();
        while lo < hi {
            let mid = (lo + hi) / 2;
            match self.indices[mid * d..(mid + 1) * d].cmp(index) {
                std::cmp::Ordering::Less => lo = mid + 1,
                std::cmp::Ordering::Greater => hi = mid,
                std::cmp::Ordering::Equal => return self.values[mid],
            }
        }
        0.0
    }

    pub fn frobenius_sq(&self) -> f64 {
        sum_of_squares(&self.values)
    }

    pub fn to_dense(&self) -> DenseTensor {
        let mut values = vec![0.0; self.dims.iter().product()];
        for (idx, v) in self.iter() {
            values[ravel(idx, &self.dims)] = v;
        }
        DenseTensor {
            dims: self.dims.clone(),
            values,
        }
    }

    /// Adds the entries into a dense accumulator of matching shape.
    pub fn add_into(&self, dense: &mut [f64]) {
        for (idx, v) in self.iter() {
            dense[ravel(idx, &self.dims)] += v;
        }
    }

    /// Sparse-times-vector along one mode for matrices: `y = S x` (mode 1
    /// contracted). Cost is proportional to nnz.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.order() != 2 {
            return Err(Error::InvalidShape("matvec needs an order-2 tensor".into()));
        }
        if x.len() != self.dims[1] {
            return Err(Error::LengthMismatch {
                expected: self.dims[1],
                actual: x.len(),
            });
        }
        let mut y = vec![0.0; self.dims[0]];
        for (idx, v) in self.iter() {
            y[idx[0]] += v * x[idx[1]];
        }
        Ok(y)
    }
}

/// Exact `Σ v²` over the stored entries of several sparse pieces.
pub fn combined_frobenius_sq<'a>(parts: impl IntoIterator<Item = &'a SparseTensor>) -> f64 {
    let mut acc = ExactSum::new();
    for p in parts {
        for v in p.values() {
            acc.add(v * v);
        }
    }
    acc.value()
}
