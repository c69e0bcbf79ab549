//! Canonical polyadic models with nonnegative weights and sum-to-one
//! factor columns, plus weight normalization and component alignment
//! between two models.

use ndarray::{Array1, Array2, ArrayView1};

use crate::{Error, Result};

/// Columns whose sums sit within this tolerance of 1 are accepted as-is.
pub const COLUMN_SUM_TOL: f64 = 1e-10;
/// Columns off by less than this are renormalized on construction;
/// anything worse is rejected as malformed input.
pub const COLUMN_FIX_TOL: f64 = 1e-6;
/// Tolerance for treating a weight vector as already normalized.
pub const WEIGHT_SUM_TOL: f64 = 1e-10;

/// Rank-K canonical polyadic model: component weights `λ` and one
/// `J_n × K` stochastic factor matrix per mode (every column sums to 1).
///
/// Each column of factor `n` is the distribution of mode `n` conditioned
/// on the latent component, so permuting components never changes the
/// reconstruction. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct CpdModel {
    shape: Vec<usize>,
    weights: Array1<f64>,
    factors: Vec<Array2<f64>>,
}

impl CpdModel {
    /// Validates and builds a model.
    ///
    /// Column sums within [`COLUMN_SUM_TOL`] of 1 are kept bitwise;
    /// deviations below [`COLUMN_FIX_TOL`] are treated as rounding drift
    /// and renormalized; larger deviations are an error.
    pub fn new(shape: Vec<usize>, weights: Array1<f64>, factors: Vec<Array2<f64>>) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::EmptyShape);
        }
        if let Some(mode) = shape.iter().position(|&s| s == 0) {
            return Err(Error::ZeroModeSize { mode });
        }
        let rank = weights.len();
        if rank == 0 {
            return Err(Error::ZeroRank);
        }
        if factors.len() != shape.len() {
            return Err(Error::LengthMismatch {
                mode: 0,
                expected: shape.len(),
                got: factors.len(),
            });
        }
        for (component, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::NegativeWeight {
                    component,
                    value: w,
                });
            }
        }
        let mut factors = factors;
        for (mode, factor) in factors.iter_mut().enumerate() {
            if factor.nrows() != shape[mode] {
                return Err(Error::LengthMismatch {
                    mode,
                    expected: shape[mode],
                    got: factor.nrows(),
                });
            }
            if factor.ncols() != rank {
                return Err(Error::RankMismatch {
                    expected: rank,
                    got: factor.ncols(),
                });
            }
            for component in 0..rank {
                let mut column = factor.column_mut(component);
                for &v in column.iter() {
                    if !v.is_finite() || v < 0.0 {
                        return Err(Error::InvalidFactorEntry {
                            mode,
                            component,
                            value: v,
                        });
                    }
                }
                let sum: f64 = column.iter().sum();
                let drift = (sum - 1.0).abs();
                if drift <= COLUMN_SUM_TOL {
                    continue;
                }
                if drift < COLUMN_FIX_TOL {
                    column.mapv_inplace(|v| v / sum);
                } else {
                    return Err(Error::ColumnNotStochastic {
                        mode,
                        component,
                        sum,
                    });
                }
            }
        }
        Ok(Self {
            shape,
            weights,
            factors,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn rank(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn factors(&self) -> &[Array2<f64>] {
        &self.factors
    }

    pub fn factor(&self, mode: usize) -> &Array2<f64> {
        &self.factors[mode]
    }

    /// Model value at one index: `Σ_k λ_k Π_n P⁽ⁿ⁾[i_n, k]`.
    pub fn reconstruct_at(&self, index: &[usize]) -> Result<f64> {
        if index.len() != self.ndim() || index.iter().zip(&self.shape).any(|(&i, &s)| i >= s) {
            return Err(Error::IndexOutOfRange {
                index: index.to_vec(),
                shape: self.shape.clone(),
            });
        }
        let mut acc = 0.0;
        for (k, &w) in self.weights.iter().enumerate() {
            let mut term = w;
            for (n, factor) in self.factors.iter().enumerate() {
                term *= factor[[index[n], k]];
            }
            acc += term;
        }
        Ok(acc)
    }

    /// Sum of the synthesized tensor over the full grid, which the
    /// sum-to-one columns collapse to `Σ_k λ_k`.
    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Scales the weights to a probability vector; factors are shared
    /// unchanged. Weight vectors already within [`WEIGHT_SUM_TOL`] of
    /// sum 1 are kept bitwise, so the operation is idempotent.
    pub fn normalize(&self) -> Result<NormalizedModel> {
        let sum = self.total_mass();
        if sum <= 0.0 {
            return Err(Error::ZeroWeightSum);
        }
        let weights = if (sum - 1.0).abs() <= WEIGHT_SUM_TOL {
            self.weights.clone()
        } else {
            self.weights.mapv(|w| w / sum)
        };
        Ok(NormalizedModel(Self {
            shape: self.shape.clone(),
            weights,
            factors: self.factors.clone(),
        }))
    }

    /// Reorders components so new component `k` is old `perm[k]`.
    pub fn permute_components(&self, perm: &[usize]) -> Result<CpdModel> {
        let rank = self.rank();
        if perm.len() != rank {
            return Err(Error::RankMismatch {
                expected: rank,
                got: perm.len(),
            });
        }
        let mut seen = vec![false; rank];
        for &p in perm {
            if p >= rank || seen[p] {
                return Err(Error::RankMismatch {
                    expected: rank,
                    got: p,
                });
            }
            seen[p] = true;
        }
        let weights = Array1::from_iter(perm.iter().map(|&p| self.weights[p]));
        let factors = self
            .factors
            .iter()
            .map(|f| {
                let mut out = Array2::zeros(f.dim());
                for (k, &p) in perm.iter().enumerate() {
                    out.column_mut(k).assign(&f.column(p));
                }
                out
            })
            .collect();
        Ok(Self {
            shape: self.shape.clone(),
            weights,
            factors,
        })
    }
}

/// A [`CpdModel`] whose weights form a probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedModel(CpdModel);

impl NormalizedModel {
    /// Wraps a model whose weights already sum to 1 within
    /// [`WEIGHT_SUM_TOL`].
    pub fn new(model: CpdModel) -> Result<Self> {
        let sum = model.total_mass();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::NotNormalized { sum });
        }
        Ok(Self(model))
    }

    pub fn as_model(&self) -> &CpdModel {
        &self.0
    }

    pub fn into_inner(self) -> CpdModel {
        self.0
    }
}

impl std::ops::Deref for NormalizedModel {
    type Target = CpdModel;

    fn deref(&self) -> &CpdModel {
        &self.0
    }
}

/// Total variation distance between two distributions: `½ ‖p − q‖₁`.
pub fn tv_distance(p: ArrayView1<f64>, q: ArrayView1<f64>) -> f64 {
    0.5 * p
        .iter()
        .zip(q.iter())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
}

/// Result of matching the components of two models.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    /// `permutation[k]` is the component of `b` matched to component
    /// `k` of `a`.
    pub permutation: Vec<usize>,
    /// Mean, over components and modes, of the total variation distance
    /// between matched factor columns.
    pub mean_tv: f64,
}

/// Finds the component permutation of `b` minimizing the mean TV
/// distance to `a` across all modes.
///
/// Exhaustive over all `K!` permutations for `K ≤ 8` (ties resolved to
/// the lexicographically smallest permutation), greedy row-by-row
/// matching above that.
pub fn align_components(a: &CpdModel, b: &CpdModel) -> Result<Alignment> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            expected: a.shape().to_vec(),
            got: b.shape().to_vec(),
        });
    }
    if a.rank() != b.rank() {
        return Err(Error::RankMismatch {
            expected: a.rank(),
            got: b.rank(),
        });
    }
    let rank = a.rank();
    let modes = a.ndim() as f64;
    // cost[k][j]: mean over modes of TV between a's column k and b's column j.
    let mut cost = vec![vec![0.0; rank]; rank];
    for (ka, row) in cost.iter_mut().enumerate() {
        for (kb, c) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for n in 0..a.ndim() {
                acc += tv_distance(a.factor(n).column(ka), b.factor(n).column(kb));
            }
            *c = acc / modes;
        }
    }

    let permutation = if rank <= 8 {
        let mut best: Option<(f64, Vec<usize>)> = None;
        let mut perm: Vec<usize> = (0..rank).collect();
        loop {
            let total: f64 = perm.iter().enumerate().map(|(k, &j)| cost[k][j]).sum();
            match &best {
                Some((b_total, _)) if total >= *b_total => {}
                _ => best = Some((total, perm.clone())),
            }
            if !next_permutation(&mut perm) {
                break;
            }
        }
        best.expect("rank >= 1").1
    } else {
        let mut used = vec![false; rank];
        let mut perm = Vec::with_capacity(rank);
        for row in cost.iter() {
            let mut pick = usize::MAX;
            let mut pick_cost = f64::INFINITY;
            for (j, &c) in row.iter().enumerate() {
                if !used[j] && c < pick_cost {
                    pick = j;
                    pick_cost = c;
                }
            }
            used[pick] = true;
            perm.push(pick);
        }
        perm
    };
    let mean_tv = permutation
        .iter()
        .enumerate()
        .map(|(k, &j)| cost[k][j])
        .sum::<f64>()
        / rank as f64;
    Ok(Alignment {
        permutation,
        mean_tv,
    })
}

/// Advances `perm` to the next permutation in lexicographic order;
/// returns false after the last one.
fn next_permutation(perm: &mut [usize]) -> bool {
    let n = perm.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && perm[i - 1] >= perm[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while perm[j] <= perm[i - 1] {
        j -= 1;
    }
    perm.swap(i - 1, j);
    perm[i..].reverse();
    true
}
