//! Generative sampler for the multinomial naive-Bayes model: each draw
//! picks a latent component from the weight distribution, then one
//! outcome per mode from that component's factor column; counts
//! accumulate into a sparse tensor.
//!
//! Randomness is counter-based: draw `d` runs on ChaCha stream `d` of a
//! generator keyed by the seed, so draws are reproducible individually
//! and can be sampled in parallel. Counts are integers, so merging
//! partial count maps is exact and order-independent.

use std::collections::BTreeMap;

use ndarray::ArrayView1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::model::NormalizedModel;
use crate::tensor::SparseTensor;
use crate::{Error, Result};

/// One sampled observation, for trace output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DrawTrace {
    pub draw: u64,
    pub component: usize,
    pub indices: Vec<usize>,
}

/// A ground-truth model together with data sampled from it.
#[derive(Debug, Clone)]
pub struct PlantedInstance {
    pub truth: NormalizedModel,
    pub draws: u64,
    pub data: SparseTensor,
    pub seed: u64,
}

/// Samples the truth model and keeps it alongside the data.
pub fn plant(truth: NormalizedModel, draws: u64, seed: u64) -> Result<PlantedInstance> {
    let data = sample_tensor(&truth, draws, seed)?;
    Ok(PlantedInstance {
        truth,
        draws,
        data,
        seed,
    })
}

/// Inverse-CDF draw from an unnormalized-free probability vector.
/// Zero-probability outcomes are never returned; accumulated rounding
/// at the top of the CDF falls back to the last positive outcome.
fn categorical<R: Rng>(rng: &mut R, probs: ArrayView1<f64>) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut fallback = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            fallback = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    fallback
}

fn sample_one(base: &ChaCha8Rng, truth: &NormalizedModel, draw: u64) -> (usize, Vec<usize>) {
    let mut rng = base.clone();
    rng.set_stream(draw);
    let component = categorical(&mut rng, truth.weights().view());
    let indices = truth
        .factors()
        .iter()
        .map(|factor| categorical(&mut rng, factor.column(component)))
        .collect();
    (component, indices)
}

/// Draws `draws` independent observations from the model and returns
/// the count tensor. Total mass equals `draws` exactly.
pub fn sample_tensor(truth: &NormalizedModel, draws: u64, seed: u64) -> Result<SparseTensor> {
    if draws == 0 {
        return Err(Error::ZeroDraws);
    }
    let base = ChaCha8Rng::seed_from_u64(seed);
    let counts = (0..draws)
        .into_par_iter()
        .fold(BTreeMap::<Vec<usize>, u64>::new, |mut acc, draw| {
            let (_, indices) = sample_one(&base, truth, draw);
            *acc.entry(indices).or_insert(0) += 1;
            acc
        })
        .reduce(BTreeMap::new, |mut a, b| {
            for (indices, count) in b {
                *a.entry(indices).or_insert(0) += count;
            }
            a
        });
    let entries = counts
        .into_iter()
        .map(|(indices, count)| (indices, count as f64))
        .collect();
    SparseTensor::new(truth.shape().to_vec(), entries)
}

/// As [`sample_tensor`], additionally returning the latent component and
/// outcome of every draw in draw order.
pub fn sample_tensor_traced(
    truth: &NormalizedModel,
    draws: u64,
    seed: u64,
) -> Result<(SparseTensor, Vec<DrawTrace>)> {
    if draws == 0 {
        return Err(Error::ZeroDraws);
    }
    let base = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = BTreeMap::<Vec<usize>, u64>::new();
    let mut trace = Vec::with_capacity(draws as usize);
    for draw in 0..draws {
        let (component, indices) = sample_one(&base, truth, draw);
        *counts.entry(indices.clone()).or_insert(0) += 1;
        trace.push(DrawTrace {
            draw,
            component,
            indices,
        });
    }
    let entries = counts
        .into_iter()
        .map(|(indices, count)| (indices, count as f64))
        .collect();
    Ok((SparseTensor::new(truth.shape().to_vec(), entries)?, trace))
}
