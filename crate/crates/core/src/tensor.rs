//! Sparse N-way nonnegative tensors in coordinate format, plus the
//! contraction kernels shared by every algorithm in the crate: total
//! mass, mode marginals, all-mode tensor-vector products, MTTKRP, and
//! model-scaled entry construction.

use ndarray::{Array1, Array2, ArrayView1};

use crate::model::CpdModel;
use crate::{Error, Result};

/// Lower clamp for model reconstruction values used as denominators.
///
/// Keeps entry scaling and posterior computations finite when an iterate
/// reconstructs a supported cell as (numerically) zero.
pub const DENOM_FLOOR: f64 = 1e-300;

/// N-way nonnegative tensor stored as sorted coordinate entries.
///
/// Construction sums duplicate indices, drops explicit zeros, and sorts
/// entries lexicographically, so two tensors with the same content
/// compare equal entry-by-entry. Values are finite, strictly positive
/// reals; the tensor is immutable afterwards and safe to share across
/// threads.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseTensor {
    shape: Vec<usize>,
    /// Flattened index tuples, `ndim` consecutive components per entry.
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseTensor {
    /// Builds a tensor from `(index, value)` pairs.
    ///
    /// Duplicate indices are summed, zero values dropped. Errors on an
    /// empty shape, a zero mode size, out-of-range indices, and negative
    /// or non-finite values.
    pub fn new(shape: Vec<usize>, entries: Vec<(Vec<usize>, f64)>) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::EmptyShape);
        }
        if let Some(mode) = shape.iter().position(|&s| s == 0) {
            return Err(Error::ZeroModeSize { mode });
        }
        let ndim = shape.len();
        let mut checked: Vec<(Vec<usize>, f64)> = Vec::with_capacity(entries.len());
        for (index, value) in entries {
            if index.len() != ndim || index.iter().zip(&shape).any(|(&i, &s)| i >= s) {
                return Err(Error::IndexOutOfRange {
                    index,
                    shape: shape.clone(),
                });
            }
            if !value.is_finite() || value < 0.0 {
                return Err(Error::InvalidValue { value });
            }
            checked.push((index, value));
        }
        checked.sort_by(|a, b| a.0.cmp(&b.0));

        let mut indices = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        for (index, value) in checked {
            if !indices.is_empty() && indices[indices.len() - ndim..] == index[..] {
                let last = values.len() - 1;
                values[last] += value;
            } else {
                indices.extend_from_slice(&index);
                values.push(value);
            }
        }
        // Drop zeros after duplicate summation.
        let mut kept_indices = Vec::with_capacity(indices.len());
        let mut kept_values = Vec::with_capacity(values.len());
        for (pos, &v) in values.iter().enumerate() {
            if v > 0.0 {
                kept_indices.extend_from_slice(&indices[pos * ndim..(pos + 1) * ndim]);
                kept_values.push(v);
            }
        }
        Ok(Self {
            shape,
            indices: kept_indices,
            values: kept_values,
        })
    }

    /// Tensor with no stored entries.
    pub fn empty(shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, Vec::new())
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Number of stored (strictly positive) entries.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Index tuple of the entry at `pos` in sorted order.
    pub fn index_at(&self, pos: usize) -> &[usize] {
        let n = self.ndim();
        &self.indices[pos * n..(pos + 1) * n]
    }

    pub fn value_at(&self, pos: usize) -> f64 {
        self.values[pos]
    }

    /// Iterates entries as `(index, value)` in sorted index order.
    pub fn entries(&self) -> impl Iterator<Item = (&[usize], f64)> + '_ {
        let n = self.ndim();
        self.indices
            .chunks_exact(n)
            .zip(self.values.iter().copied())
    }

    /// Position of `index` in the sorted entry list, if stored.
    pub fn position_of(&self, index: &[usize]) -> Option<usize> {
        let n = self.ndim();
        if index.len() != n {
            return None;
        }
        let mut lo = 0usize;
        let mut hi = self.nnz();
        while lo < hi {
            let mid = (lo + hi) / 2;
            match self.index_at(mid).cmp(index) {
                std::cmp::Ordering::Less => lo = mid + 1,
                std::cmp::Ordering::Greater => hi = mid,
                std::cmp::Ordering::Equal => return Some(mid),
            }
        }
        None
    }

    /// Sum of all entry values, accumulated in entry order.
    pub fn total_mass(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Mode-`mode` marginal: component `j` sums every entry whose
    /// `mode`-th index equals `j`.
    pub fn marginal(&self, mode: usize) -> Result<Array1<f64>> {
        if mode >= self.ndim() {
            return Err(Error::ModeOutOfRange {
                mode,
                modes: self.ndim(),
            });
        }
        let mut out = Array1::zeros(self.shape[mode]);
        for (index, value) in self.entries() {
            out[index[mode]] += value;
        }
        Ok(out)
    }

    /// Contracts the tensor with one vector per mode:
    /// `Σ_entries value · Π_n vecs[n][i_n]`.
    pub fn ttv_all(&self, vecs: &[ArrayView1<f64>]) -> Result<f64> {
        if vecs.len() != self.ndim() {
            return Err(Error::LengthMismatch {
                mode: 0,
                expected: self.ndim(),
                got: vecs.len(),
            });
        }
        for (mode, v) in vecs.iter().enumerate() {
            if v.len() != self.shape[mode] {
                return Err(Error::LengthMismatch {
                    mode,
                    expected: self.shape[mode],
                    got: v.len(),
                });
            }
        }
        let mut acc = 0.0;
        for (index, value) in self.entries() {
            let mut term = value;
            for (mode, v) in vecs.iter().enumerate() {
                term *= v[index[mode]];
            }
            acc += term;
        }
        Ok(acc)
    }

    /// Matricized tensor times Khatri-Rao product for `mode`:
    /// `out[j, k] = Σ_{entries with i_mode = j} value · Π_{ν≠mode} factors[ν][i_ν, k]`.
    pub fn mttkrp(&self, factors: &[Array2<f64>], mode: usize) -> Result<Array2<f64>> {
        if mode >= self.ndim() {
            return Err(Error::ModeOutOfRange {
                mode,
                modes: self.ndim(),
            });
        }
        if factors.len() != self.ndim() {
            return Err(Error::LengthMismatch {
                mode: 0,
                expected: self.ndim(),
                got: factors.len(),
            });
        }
        let rank = factors[0].ncols();
        for (nu, f) in factors.iter().enumerate() {
            if f.nrows() != self.shape[nu] {
                return Err(Error::LengthMismatch {
                    mode: nu,
                    expected: self.shape[nu],
                    got: f.nrows(),
                });
            }
            if f.ncols() != rank {
                return Err(Error::RankMismatch {
                    expected: rank,
                    got: f.ncols(),
                });
            }
        }
        let mut out = Array2::zeros((self.shape[mode], rank));
        for (index, value) in self.entries() {
            for k in 0..rank {
                let mut prod = value;
                for (nu, f) in factors.iter().enumerate() {
                    if nu != mode {
                        prod *= f[[index[nu], k]];
                    }
                }
                out[[index[mode], k]] += prod;
            }
        }
        Ok(out)
    }

    /// Divides each entry by the model reconstruction at its index, with
    /// denominators clamped below by [`DENOM_FLOOR`]. The support is
    /// preserved exactly.
    pub fn scaled_by_model(&self, model: &CpdModel) -> Result<SparseTensor> {
        if model.shape() != self.shape() {
            return Err(Error::ShapeMismatch {
                expected: self.shape.clone(),
                got: model.shape().to_vec(),
            });
        }
        let mut values = Vec::with_capacity(self.nnz());
        for (index, value) in self.entries() {
            let denom = model.reconstruct_at(index)?.max(DENOM_FLOOR);
            values.push(value / denom);
        }
        Ok(SparseTensor {
            shape: self.shape.clone(),
            indices: self.indices.clone(),
            values,
        })
    }
}
