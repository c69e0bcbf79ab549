//! Rank-K generalized-KL CPD fitting by successive upper-bound
//! minimization. Each iteration scales the data by the current
//! reconstruction once, then updates every weight and every factor
//! simultaneously from that single pass: weights through all-mode
//! tensor-vector products, factors through MTTKRP followed by column
//! normalization. The per-entry component posterior is never
//! materialized.
//!
//! The loss is non-increasing at every step and the iterates converge to
//! a stationary point of the simplified objective; at any stationary
//! point the component weights sum to the data mass, which
//! [`FitReport::mass_residual`] tracks.

use ndarray::{Array1, Array2, ArrayView1};
use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::loss::{gkl_simplified_with, EvalMode};
use crate::model::CpdModel;
use crate::tensor::{SparseTensor, DENOM_FLOOR};
use crate::{Error, Result};

/// Components whose updated weight drops below `DEAD_EPS` relative to
/// the data mass are retired: weight zeroed, factor columns reset to
/// uniform, excluded from all later updates. This implements rank
/// reduction for components the data does not want.
pub const DEAD_EPS: f64 = 1e-12;

/// How [`fit`] chooses its starting point(s).
#[derive(Debug, Clone)]
pub enum InitStrategy {
    /// Random: weights uniform on (0.5, 1.5), factor columns symmetric
    /// Dirichlet(1), one independent stream per restart.
    Dirichlet,
    /// Start every run from this model; restarts collapse to one run.
    Provided(CpdModel),
}

/// Knobs for [`fit`].
#[derive(Debug, Clone)]
pub struct FitOptions {
    pub rank: usize,
    pub max_iters: usize,
    /// Stop once the per-step loss decrease falls below
    /// `rel_tol · (1 + |loss|)`.
    pub rel_tol: f64,
    pub restarts: usize,
    pub seed: u64,
    pub init: InitStrategy,
}

impl FitOptions {
    pub fn new(rank: usize) -> Self {
        Self {
            rank,
            max_iters: 500,
            rel_tol: 1e-9,
            restarts: 10,
            seed: 0,
            init: InitStrategy::Dirichlet,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::ZeroRank);
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidOptions {
                message: "max_iters must be positive".into(),
            });
        }
        if self.restarts == 0 {
            return Err(Error::InvalidOptions {
                message: "restarts must be positive".into(),
            });
        }
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(Error::InvalidOptions {
                message: "rel_tol must lie in (0, 1)".into(),
            });
        }
        Ok(())
    }
}

/// Outcome of one fitting run.
///
/// `losses` holds the clamped-evaluation simplified loss at the initial
/// model and after every step; it is non-increasing up to
/// `1e-12 · (1 + |loss|)` per step. `mass_residuals` tracks
/// `|Σλ − M| / M` alongside.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub losses: Vec<f64>,
    pub mass_residuals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `|Σλ − M| / M` at termination.
    pub mass_residual: f64,
    /// Which restart produced this model.
    pub restart_index: usize,
    /// Components retired during the run (weight exactly zero).
    pub dead_components: Vec<usize>,
}

/// Draws a random feasible model: weights uniform on (0.5, 1.5), factor
/// columns symmetric Dirichlet(1). Strictly positive with probability 1
/// and deterministic given the seed.
pub fn init_model(shape: &[usize], rank: usize, seed: u64) -> Result<CpdModel> {
    init_model_stream(shape, rank, seed, 0)
}

/// Seeded init on an explicit ChaCha stream; restart `r` of [`fit`] uses
/// stream `r`.
fn init_model_stream(shape: &[usize], rank: usize, seed: u64, stream: u64) -> Result<CpdModel> {
    if rank == 0 {
        return Err(Error::ZeroRank);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let weights = Array1::from_iter((0..rank).map(|_| rng.random_range(0.5..1.5)));
    let factors = shape
        .iter()
        .map(|&len| {
            let mut factor = Array2::zeros((len, rank));
            for k in 0..rank {
                let mut column = factor.column_mut(k);
                let mut sum = 0.0;
                for j in 0..len {
                    // -ln of an open-interval uniform is a strictly
                    // positive Exp(1) draw; normalized they are
                    // Dirichlet(1, ..., 1).
                    let u: f64 = rng.sample(Open01);
                    let e = -u.ln();
                    column[j] = e;
                    sum += e;
                }
                column.mapv_inplace(|v| v / sum);
            }
            factor
        })
        .collect();
    CpdModel::new(shape.to_vec(), weights, factors)
}

/// Posterior probability that each latent component generated the
/// observation at `index`: `Ψ_k = λ_k Π_n P⁽ⁿ⁾[i_n,k] / Σ_κ λ_κ Π_n P⁽ⁿ⁾[i_n,κ]`.
pub fn posterior_psi(
    tensor: &SparseTensor,
    model: &CpdModel,
    index: &[usize],
) -> Result<Array1<f64>> {
    if model.shape() != tensor.shape() {
        return Err(Error::ShapeMismatch {
            expected: tensor.shape().to_vec(),
            got: model.shape().to_vec(),
        });
    }
    if tensor.position_of(index).is_none() {
        return Err(Error::NotInSupport {
            index: index.to_vec(),
        });
    }
    let rank = model.rank();
    let mut numer = Array1::zeros(rank);
    for k in 0..rank {
        let mut term = model.weights()[k];
        for (n, factor) in model.factors().iter().enumerate() {
            term *= factor[[index[n], k]];
        }
        numer[k] = term;
    }
    let denom: f64 = numer.iter().sum::<f64>().max(DENOM_FLOOR);
    Ok(numer.mapv_into(|v| v / denom))
}

/// One majorization step. All weight and factor updates are computed
/// from the previous iterate and a single entry-scaling pass, so they
/// are simultaneous: evaluation order (or concurrency) across modes and
/// components cannot change the result.
pub fn em_step(tensor: &SparseTensor, model: &CpdModel) -> Result<CpdModel> {
    let scaled = tensor.scaled_by_model(model)?;
    let rank = model.rank();
    let dead_threshold = DEAD_EPS * tensor.total_mass();

    // Weight updates: λ_k ← λ_k · (Ỹ ×₁ p_k⁽¹⁾ ... ×_N p_k⁽ᴺ⁾).
    // Each contraction is sequential over entries; components are
    // independent.
    let ttv: Vec<f64> = (0..rank)
        .into_par_iter()
        .map(|k| {
            let columns: Vec<ArrayView1<f64>> =
                model.factors().iter().map(|f| f.column(k)).collect();
            scaled
                .ttv_all(&columns)
                .expect("columns match tensor shape by construction")
        })
        .collect();
    let mut weights =
        Array1::from_iter((0..rank).map(|k| model.weights()[k] * ttv[k]));

    // Factor updates: P⁽ⁿ⁾ ← P⁽ⁿ⁾ ∘ Mttkrp(Ỹ, {P}, n), column-normalized.
    // Modes are independent given the shared scaled tensor.
    let mut factors: Vec<Array2<f64>> = (0..model.ndim())
        .into_par_iter()
        .map(|n| {
            let mut grad = scaled
                .mttkrp(model.factors(), n)
                .expect("factors match tensor shape by construction");
            grad *= model.factor(n);
            grad
        })
        .collect();

    let dead: Vec<bool> = (0..rank)
        .map(|k| model.weights()[k] == 0.0 || weights[k] <= dead_threshold)
        .collect();
    for factor in factors.iter_mut() {
        let uniform = 1.0 / factor.nrows() as f64;
        for k in 0..rank {
            let mut column = factor.column_mut(k);
            if dead[k] {
                column.fill(uniform);
                continue;
            }
            let sum: f64 = column.iter().sum();
            if sum > 0.0 {
                column.mapv_inplace(|v| v / sum);
            } else {
                column.fill(uniform);
            }
        }
    }
    for (k, is_dead) in dead.iter().enumerate() {
        if *is_dead {
            weights[k] = 0.0;
        }
    }
    CpdModel::new(tensor.shape().to_vec(), weights, factors)
}

fn clamped_loss(tensor: &SparseTensor, model: &CpdModel) -> Result<f64> {
    Ok(gkl_simplified_with(tensor, model, EvalMode::Internal)?.value)
}

fn run_restart(
    tensor: &SparseTensor,
    opts: &FitOptions,
    restart_index: usize,
    init: CpdModel,
) -> Result<(CpdModel, FitReport)> {
    let data_mass = tensor.total_mass();
    let mut model = init;
    let mut losses = vec![clamped_loss(tensor, &model)?];
    let mut mass_residuals = vec![(model.total_mass() - data_mass).abs() / data_mass];
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..opts.max_iters {
        model = em_step(tensor, &model)?;
        iterations += 1;
        let loss = clamped_loss(tensor, &model)?;
        let prev = *losses.last().expect("seeded with the initial loss");
        losses.push(loss);
        mass_residuals.push((model.total_mass() - data_mass).abs() / data_mass);
        if prev - loss < opts.rel_tol * (1.0 + prev.abs()) {
            converged = true;
            break;
        }
    }
    let dead_components = model
        .weights()
        .iter()
        .enumerate()
        .filter(|(_, &w)| w == 0.0)
        .map(|(k, _)| k)
        .collect();
    let mass_residual = *mass_residuals.last().expect("non-empty");
    Ok((
        model,
        FitReport {
            losses,
            mass_residuals,
            iterations,
            converged,
            mass_residual,
            restart_index,
            dead_components,
        },
    ))
}

/// Runs every restart and returns all of them in restart order.
/// Restarts are independent and execute in parallel; each one is
/// internally sequential, so results do not depend on the thread count.
pub fn fit_restarts(
    tensor: &SparseTensor,
    opts: &FitOptions,
) -> Result<Vec<(CpdModel, FitReport)>> {
    opts.validate()?;
    if tensor.total_mass() <= 0.0 {
        return Err(Error::ZeroMass);
    }
    match &opts.init {
        InitStrategy::Provided(start) => {
            if start.shape() != tensor.shape() {
                return Err(Error::ShapeMismatch {
                    expected: tensor.shape().to_vec(),
                    got: start.shape().to_vec(),
                });
            }
            if start.rank() != opts.rank {
                return Err(Error::RankMismatch {
                    expected: opts.rank,
                    got: start.rank(),
                });
            }
            Ok(vec![run_restart(tensor, opts, 0, start.clone())?])
        }
        InitStrategy::Dirichlet => (0..opts.restarts)
            .into_par_iter()
            .map(|r| {
                let init = init_model_stream(tensor.shape(), opts.rank, opts.seed, r as u64)?;
                run_restart(tensor, opts, r, init)
            })
            .collect(),
    }
}

/// Fits a rank-K model: runs all restarts and returns the one with the
/// smallest final loss (ties broken by the smaller restart index).
pub fn fit(tensor: &SparseTensor, opts: &FitOptions) -> Result<(CpdModel, FitReport)> {
    let runs = fit_restarts(tensor, opts)?;
    let winner = runs
        .iter()
        .enumerate()
        .min_by(|(ia, (_, ra)), (ib, (_, rb))| {
            let la = *ra.losses.last().expect("non-empty");
            let lb = *rb.losses.last().expect("non-empty");
            la.partial_cmp(&lb)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(ia.cmp(ib))
        })
        .map(|(i, _)| i)
        .expect("restarts >= 1");
    Ok(runs.into_iter().nth(winner).expect("winner within range"))
}
