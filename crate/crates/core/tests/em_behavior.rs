//! Fitting behavior: the scaled-tensor fast path against the explicit
//! posterior reference, monotone losses, the rank-1 reduction, and the
//! mass/offset identities at convergence.

mod common;

use common::*;
use klcp::em::{em_step, fit, fit_restarts, init_model, FitOptions, InitStrategy};
use klcp::kl_principal_component;
use klcp::loss::{equivalence_offset_check, mle_nll};
use klcp::model::{CpdModel, NormalizedModel};
use klcp::tensor::SparseTensor;
use ndarray::{Array1, Array2};

#[test]
fn em_step_matches_explicit_posterior_reference() {
    // includes the 3×3, rank-2 configuration plus larger ones
    for seed in 0..20u64 {
        let t = random_tensor(seed);
        for rank in [1usize, 2, 3] {
            let model = init_model(t.shape(), rank, seed ^ 0xE3).unwrap();
            let fast = em_step(&t, &model).unwrap();
            let (ref_weights, ref_factors) = dense_em_step(&t, &model);
            for k in 0..rank {
                assert_rel_close(
                    fast.weights()[k],
                    ref_weights[k],
                    1e-12,
                    &format!("weight seed {seed} rank {rank} k {k}"),
                );
            }
            for n in 0..t.ndim() {
                for j in 0..t.shape()[n] {
                    for k in 0..rank {
                        assert_rel_close(
                            fast.factor(n)[[j, k]],
                            ref_factors[n][[j, k]],
                            1e-12,
                            &format!("factor seed {seed} mode {n}"),
                        );
                    }
                }
            }
        }
    }
}

#[test]
fn losses_are_monotone_for_every_restart() {
    for seed in 0..20u64 {
        let t = random_tensor(seed);
        let mut opts = FitOptions::new(1 + (seed as usize % 4));
        opts.seed = seed;
        opts.restarts = 2;
        for (_, report) in fit_restarts(&t, &opts).unwrap() {
            for w in report.losses.windows(2) {
                assert!(
                    w[1] <= w[0] + 1e-12 * (1.0 + w[0].abs()),
                    "seed {seed}: loss increased {} -> {}",
                    w[0],
                    w[1]
                );
            }
        }
    }
}

#[test]
fn converged_fits_satisfy_mass_and_offset_identities() {
    for seed in 0..12u64 {
        let t = random_tensor(seed);
        let mass = t.total_mass();
        let mut opts = FitOptions::new(2);
        opts.seed = seed ^ 0xA11;
        opts.restarts = 3;
        let (model, report) = fit(&t, &opts).unwrap();
        if !report.converged {
            continue;
        }
        assert!(
            report.mass_residual <= 1e-6,
            "seed {seed}: mass residual {}",
            report.mass_residual
        );
        let residual = equivalence_offset_check(&t, &model).unwrap();
        assert!(
            residual.abs() <= 1e-8 * mass,
            "seed {seed}: offset residual {residual}"
        );
    }
}

#[test]
fn offset_residual_shrinks_as_em_converges() {
    for seed in 0..6u64 {
        let t = random_tensor(seed);
        let mass = t.total_mass();
        let mut model = init_model(t.shape(), 2, seed ^ 0x0FF5).unwrap();
        let mut residuals = Vec::new();
        for _ in 0..40 {
            model = em_step(&t, &model).unwrap();
            // mass matches the data after the very first update, so the
            // precondition holds from here on
            residuals.push(equivalence_offset_check(&t, &model).unwrap().abs());
        }
        let tail = &residuals[residuals.len() - 10..];
        for pair in tail.windows(2) {
            assert!(
                pair[1] <= pair[0] + 1e-10 * (1.0 + mass),
                "seed {seed}: residual grew {} -> {}",
                pair[0],
                pair[1]
            );
        }
        assert!(tail[9] <= 1e-8 * mass);
    }
}

#[test]
fn rank_one_fit_is_the_closed_form() {
    for seed in 0..10u64 {
        let t = random_tensor(seed);
        let mut opts = FitOptions::new(1);
        opts.seed = seed;
        opts.restarts = 2;
        let (model, report) = fit(&t, &opts).unwrap();
        assert!(report.converged);
        assert!(report.iterations <= 2, "seed {seed}: {}", report.iterations);
        let closed = kl_principal_component(&t).unwrap();
        assert!(
            (model.weights()[0] - closed.weights()[0]).abs()
                <= 1e-14 * closed.weights()[0].max(1.0)
        );
        for n in 0..t.ndim() {
            for j in 0..t.shape()[n] {
                let got = model.factor(n)[[j, 0]];
                let want = closed.factor(n)[[j, 0]];
                assert!(
                    (got - want).abs() <= 1e-14 * want.max(1.0),
                    "seed {seed} mode {n} bin {j}: {got} vs {want}"
                );
            }
        }
    }
}

/// Exact low-rank data: scale a planted rank-2 joint distribution into
/// counts directly (the infinite-sample limit). The fitted model must
/// push the likelihood to the entropy bound, which is the planted
/// model's own loss.
#[test]
fn exact_rank_two_data_reaches_the_planted_loss() {
    let shape = vec![3usize, 3];
    let mut f0 = Array2::zeros((3, 2));
    f0.column_mut(0).assign(&ndarray::arr1(&[0.7, 0.2, 0.1]));
    f0.column_mut(1).assign(&ndarray::arr1(&[0.1, 0.2, 0.7]));
    let mut f1 = Array2::zeros((3, 2));
    f1.column_mut(0).assign(&ndarray::arr1(&[0.6, 0.3, 0.1]));
    f1.column_mut(1).assign(&ndarray::arr1(&[0.1, 0.1, 0.8]));
    let truth = CpdModel::new(shape.clone(), Array1::from(vec![0.5, 0.5]), vec![f0, f1]).unwrap();
    let truth = NormalizedModel::new(truth).unwrap();

    // M·Π as data, M a power of two so data/M is exact
    let mass = 1024.0;
    let entries = grid_indices(&shape)
        .into_iter()
        .map(|index| {
            let value = mass * dense_reconstruct(truth.as_model(), &index);
            (index, value)
        })
        .collect();
    let t = SparseTensor::new(shape, entries).unwrap();

    let mut opts = FitOptions::new(2);
    opts.restarts = 20;
    opts.seed = 3;
    opts.max_iters = 2000;
    opts.rel_tol = 1e-12;
    let (model, _) = fit(&t, &opts).unwrap();

    let bound = mle_nll(&t, &truth).unwrap().value;
    let fitted = mle_nll(&t, &model.normalize().unwrap()).unwrap().value;
    // Gibbs: nothing goes below the bound; the fit must reach it
    assert!(fitted >= bound - 1e-9 * mass);
    assert!(
        fitted - bound <= 1e-6 * mass,
        "fit stopped {fitted}, bound {bound}"
    );
}

#[test]
fn dead_components_are_retired_and_reported() {
    // rank 3 on exactly rank-1 data: surplus components can die; however
    // they end, the report and the model must agree.
    let t = SparseTensor::new(
        vec![2, 2],
        vec![
            (vec![0, 0], 8.0),
            (vec![0, 1], 8.0),
            (vec![1, 0], 2.0),
            (vec![1, 1], 2.0),
        ],
    )
    .unwrap();
    let mut opts = FitOptions::new(3);
    opts.seed = 5;
    opts.restarts = 4;
    let (model, report) = fit(&t, &opts).unwrap();
    for (k, &w) in model.weights().iter().enumerate() {
        assert_eq!(report.dead_components.contains(&k), w == 0.0);
    }
    for w in report.losses.windows(2) {
        assert!(w[1] <= w[0] + 1e-12 * (1.0 + w[0].abs()));
    }
}

#[test]
fn psi_matches_direct_formula_on_random_entries() {
    for seed in 0..10u64 {
        let t = random_tensor(seed);
        let model = init_model(t.shape(), 3, seed ^ 0x51).unwrap();
        for pos in 0..t.nnz().min(4) {
            let index = t.index_at(pos).to_vec();
            let psi = klcp::em::posterior_psi(&t, &model, &index).unwrap();
            // direct evaluation of the defining ratio
            let mut numer = vec![0.0; 3];
            for (k, slot) in numer.iter_mut().enumerate() {
                let mut term = model.weights()[k];
                for (n, factor) in model.factors().iter().enumerate() {
                    term *= factor[[index[n], k]];
                }
                *slot = term;
            }
            let denom: f64 = numer.iter().sum();
            let sum: f64 = psi.iter().sum();
            assert!((sum - 1.0).abs() <= 1e-12);
            for k in 0..3 {
                assert_rel_close(psi[k], numer[k] / denom, 1e-12, "psi component");
            }
        }
    }
}

#[test]
fn restart_winner_has_the_smallest_final_loss() {
    let t = random_tensor(9);
    let mut opts = FitOptions::new(3);
    opts.seed = 4;
    opts.restarts = 6;
    let runs = fit_restarts(&t, &opts).unwrap();
    let (_, winner_report) = fit(&t, &opts).unwrap();
    let winner_loss = *runs[winner_report.restart_index].1.losses.last().unwrap();
    for (_, report) in &runs {
        assert!(winner_loss <= *report.losses.last().unwrap());
    }
    assert_eq!(
        winner_report.restart_index,
        runs.iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                a.1.losses
                    .last()
                    .unwrap()
                    .partial_cmp(b.1.losses.last().unwrap())
                    .unwrap()
            })
            .unwrap()
            .0
    );
}

#[test]
fn provided_init_must_match_shape_and_rank() {
    let t = random_tensor(2);
    let wrong_shape: Vec<usize> = t.shape().iter().map(|&s| s + 1).collect();
    let foreign = init_model(&wrong_shape, 2, 0).unwrap();
    let mut opts = FitOptions::new(2);
    opts.init = InitStrategy::Provided(foreign);
    assert!(fit(&t, &opts).is_err());
}
