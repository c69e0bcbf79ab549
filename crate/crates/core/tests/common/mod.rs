//! Shared test support: dense brute-force oracles that re-derive every
//! kernel by literal grid enumeration, and seeded random instances.
//! Oracles deliberately avoid the sparse fast paths they check.

#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use klcp::model::CpdModel;
use klcp::tensor::SparseTensor;

/// All index tuples of a dense grid, in row-major order.
pub fn grid_indices(shape: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &size in shape {
        let mut next = Vec::with_capacity(out.len() * size);
        for prefix in &out {
            for i in 0..size {
                let mut index = prefix.clone();
                index.push(i);
                next.push(index);
            }
        }
        out = next;
    }
    out
}

/// Dense value lookup (zero off the support).
pub fn dense_value(tensor: &SparseTensor, index: &[usize]) -> f64 {
    tensor
        .position_of(index)
        .map(|p| tensor.value_at(p))
        .unwrap_or(0.0)
}

/// Literal CPD synthesis at one index.
pub fn dense_reconstruct(model: &CpdModel, index: &[usize]) -> f64 {
    let mut acc = 0.0;
    for k in 0..model.rank() {
        let mut term = model.weights()[k];
        for (n, factor) in model.factors().iter().enumerate() {
            term *= factor[[index[n], k]];
        }
        acc += term;
    }
    acc
}

/// Full-grid generalized KL loss of Problem form
/// `Σ_cells (−Y log ŷ + ŷ)` with `0·log 0 = 0`.
pub fn dense_gkl_full(tensor: &SparseTensor, model: &CpdModel) -> f64 {
    let mut acc = 0.0;
    for index in grid_indices(tensor.shape()) {
        let y = dense_value(tensor, &index);
        let recon = dense_reconstruct(model, &index);
        acc += recon;
        if y > 0.0 {
            acc -= y * recon.ln();
        }
    }
    acc
}

/// Full-grid negative log-likelihood `−Σ Y log ŷ`.
pub fn dense_nll(tensor: &SparseTensor, model: &CpdModel) -> f64 {
    let mut acc = 0.0;
    for index in grid_indices(tensor.shape()) {
        let y = dense_value(tensor, &index);
        if y > 0.0 {
            acc -= y * dense_reconstruct(model, &index).ln();
        }
    }
    acc
}

/// Triple-loop tensor-times-all-vectors over the dense grid.
pub fn dense_ttv(tensor: &SparseTensor, vecs: &[Array1<f64>]) -> f64 {
    let mut acc = 0.0;
    for index in grid_indices(tensor.shape()) {
        let mut term = dense_value(tensor, &index);
        for (n, v) in vecs.iter().enumerate() {
            term *= v[index[n]];
        }
        acc += term;
    }
    acc
}

/// MTTKRP via explicit matricization times an explicit Khatri-Rao
/// product, both materialized densely.
pub fn dense_mttkrp(tensor: &SparseTensor, factors: &[Array2<f64>], mode: usize) -> Array2<f64> {
    let shape = tensor.shape();
    let rank = factors[0].ncols();
    let rows = shape[mode];
    let other_modes: Vec<usize> = (0..shape.len()).filter(|&n| n != mode).collect();
    let cols: usize = other_modes.iter().map(|&n| shape[n]).product();

    // Mode-`mode` matricization Y_(n), columns indexed by the other
    // modes with the first of them varying slowest.
    let mut unfolded = Array2::zeros((rows, cols));
    for index in grid_indices(shape) {
        let mut col = 0;
        for &n in &other_modes {
            col = col * shape[n] + index[n];
        }
        unfolded[[index[mode], col]] = dense_value(tensor, &index);
    }

    // Khatri-Rao product of the remaining factors, rows ordered the same
    // way as the matricization columns.
    let mut khatri_rao = Array2::zeros((cols, rank));
    for (row, combo) in grid_indices(
        &other_modes
            .iter()
            .map(|&n| shape[n])
            .collect::<Vec<usize>>(),
    )
    .into_iter()
    .enumerate()
    {
        for k in 0..rank {
            let mut prod = 1.0;
            for (pos, &n) in other_modes.iter().enumerate() {
                prod *= factors[n][[combo[pos], k]];
            }
            khatri_rao[[row, k]] = prod;
        }
    }
    unfolded.dot(&khatri_rao)
}

/// Elementwise data-over-reconstruction on the support, computed from
/// dense reconstructions.
pub fn dense_scaled(tensor: &SparseTensor, model: &CpdModel) -> Vec<(Vec<usize>, f64)> {
    tensor
        .entries()
        .map(|(index, value)| {
            let recon = dense_reconstruct(model, index).max(1e-300);
            (index.to_vec(), value / recon)
        })
        .collect()
}

/// Reference EM step that materializes the full posterior tensor Ψ over
/// every grid cell and applies the textbook updates
/// `λ_k ← Σ Y Ψ_k` and `P⁽ⁿ⁾[j,k] ← (Σ_{i_n=j} Y Ψ_k) / λ_k`.
pub fn dense_em_step(tensor: &SparseTensor, model: &CpdModel) -> (Vec<f64>, Vec<Array2<f64>>) {
    let shape = tensor.shape();
    let rank = model.rank();
    let mut component_mass = vec![0.0; rank];
    let mut mode_sums: Vec<Array2<f64>> = shape.iter().map(|&j| Array2::zeros((j, rank))).collect();

    for index in grid_indices(shape) {
        let y = dense_value(tensor, &index);
        let mut psi = vec![0.0; rank];
        let mut denom = 0.0;
        for (k, slot) in psi.iter_mut().enumerate() {
            let mut term = model.weights()[k];
            for (n, factor) in model.factors().iter().enumerate() {
                term *= factor[[index[n], k]];
            }
            *slot = term;
            denom += term;
        }
        let denom = denom.max(1e-300);
        for (k, slot) in psi.iter_mut().enumerate() {
            *slot /= denom;
            let weighted = y * *slot;
            component_mass[k] += weighted;
            for (n, sums) in mode_sums.iter_mut().enumerate() {
                sums[[index[n], k]] += weighted;
            }
        }
    }

    let factors = mode_sums
        .into_iter()
        .map(|sums| {
            let mut factor = sums;
            for k in 0..rank {
                let mass = component_mass[k];
                if mass > 0.0 {
                    factor.column_mut(k).mapv_inplace(|v| v / mass);
                }
            }
            factor
        })
        .collect();
    (component_mass, factors)
}

/// Seeded random sparse tensor: 2–4 modes of size 2–4, around 40% of
/// cells occupied, at least one entry. Even seeds get integer counts,
/// odd seeds general positive reals.
pub fn random_tensor(seed: u64) -> SparseTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0xDA7A);
    let ndim = rng.random_range(2..=4usize);
    let shape: Vec<usize> = (0..ndim).map(|_| rng.random_range(2..=4usize)).collect();
    let integer_valued = seed % 2 == 0;
    let mut entries = Vec::new();
    for index in grid_indices(&shape) {
        if rng.random::<f64>() < 0.4 {
            let value = if integer_valued {
                rng.random_range(1..=5u32) as f64
            } else {
                rng.random_range(0.25..3.0)
            };
            entries.push((index, value));
        }
    }
    if entries.is_empty() {
        entries.push((vec![0; ndim], 1.0));
    }
    SparseTensor::new(shape, entries).unwrap()
}

/// Seeded random tensor with every cell strictly positive.
pub fn random_dense_tensor(seed: u64, shape: &[usize]) -> SparseTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0xF111);
    let entries = grid_indices(shape)
        .into_iter()
        .map(|index| (index, rng.random_range(0.25..3.0)))
        .collect();
    SparseTensor::new(shape.to_vec(), entries).unwrap()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

pub fn assert_rel_close(a: f64, b: f64, tol: f64, what: &str) {
    assert!(rel_close(a, b, tol), "{what}: {a} vs {b}");
}
