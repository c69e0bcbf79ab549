//! Objective functions for nonnegative CPD fitting: the generalized KL
//! loss in its full and simplified forms, the multinomial negative
//! log-likelihood, and the offset identity tying the two formulations
//! together at stationary points.

use crate::model::{CpdModel, NormalizedModel};
use crate::tensor::{SparseTensor, DENOM_FLOOR};
use crate::{Error, Result};

/// Relative mass-gap tolerance accepted by [`equivalence_offset_check`].
pub const MASS_GAP_TOL: f64 = 1e-6;

/// How zero reconstructions over the data support are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    /// The objective is genuinely `+∞` when a supported entry
    /// reconstructs below [`DENOM_FLOOR`]; report it as such.
    Reporting,
    /// Clamp denominators at [`DENOM_FLOOR`] so iterative fitting always
    /// sees finite values.
    Internal,
}

/// An objective value, possibly `+∞`.
///
/// `is_finite` is false exactly when some supported entry reconstructed
/// below [`DENOM_FLOOR`] under [`EvalMode::Reporting`]; clamped internal
/// evaluations are always finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub is_finite: bool,
}

impl LossValue {
    fn finite(value: f64) -> Self {
        Self {
            value,
            is_finite: true,
        }
    }

    fn infinite() -> Self {
        Self {
            value: f64::INFINITY,
            is_finite: false,
        }
    }
}

/// `−Σ_support Y · log ŷ`, the data-dependent part shared by all the
/// objectives. Entries with `Y = 0` never appear in the support, which
/// is exactly the `0·log 0 = 0` convention.
fn data_term(tensor: &SparseTensor, model: &CpdModel, mode: EvalMode) -> Result<Option<f64>> {
    if model.shape() != tensor.shape() {
        return Err(Error::ShapeMismatch {
            expected: tensor.shape().to_vec(),
            got: model.shape().to_vec(),
        });
    }
    let mut acc = 0.0;
    for (index, value) in tensor.entries() {
        let recon = model.reconstruct_at(index)?;
        if recon < DENOM_FLOOR {
            match mode {
                EvalMode::Reporting => return Ok(None),
                EvalMode::Internal => acc -= value * DENOM_FLOOR.ln(),
            }
        } else {
            acc -= value * recon.ln();
        }
    }
    Ok(Some(acc))
}

/// Generalized KL loss over the full grid,
/// `Σ (−Y log ŷ + ŷ)`, with the `Σ ŷ` term collapsed to `Σ λ` by the
/// sum-to-one factor columns.
pub fn gkl_full(tensor: &SparseTensor, model: &CpdModel) -> Result<LossValue> {
    gkl_full_with(tensor, model, EvalMode::Reporting)
}

pub fn gkl_full_with(
    tensor: &SparseTensor,
    model: &CpdModel,
    mode: EvalMode,
) -> Result<LossValue> {
    gkl_simplified_with(tensor, model, mode)
}

/// Simplified objective `−Σ_support Y log ŷ + Σ_k λ_k`; identical to
/// [`gkl_full`] for feasible models.
pub fn gkl_simplified(tensor: &SparseTensor, model: &CpdModel) -> Result<LossValue> {
    gkl_simplified_with(tensor, model, EvalMode::Reporting)
}

pub fn gkl_simplified_with(
    tensor: &SparseTensor,
    model: &CpdModel,
    mode: EvalMode,
) -> Result<LossValue> {
    match data_term(tensor, model, mode)? {
        Some(data) => Ok(LossValue::finite(data + model.total_mass())),
        None => Ok(LossValue::infinite()),
    }
}

/// Multinomial negative log-likelihood `−Σ_support Y log ŷ` for a model
/// whose weights form a probability vector.
pub fn mle_nll(tensor: &SparseTensor, model: &NormalizedModel) -> Result<LossValue> {
    mle_nll_with(tensor, model, EvalMode::Reporting)
}

pub fn mle_nll_with(
    tensor: &SparseTensor,
    model: &NormalizedModel,
    mode: EvalMode,
) -> Result<LossValue> {
    match data_term(tensor, model.as_model(), mode)? {
        Some(data) => Ok(LossValue::finite(data)),
        None => Ok(LossValue::infinite()),
    }
}

/// Residual of the identity
/// `gkl_simplified(λ) = mle_nll(λ / 1ᵀλ) − M log M + M` with
/// `M = Σ λ`, which holds whenever the model mass matches the data mass.
///
/// Valid only near a stationary point: errors when the model mass
/// deviates from the data mass by more than [`MASS_GAP_TOL`] relative.
pub fn equivalence_offset_check(tensor: &SparseTensor, model: &CpdModel) -> Result<f64> {
    let model_mass = model.total_mass();
    let data_mass = tensor.total_mass();
    if (model_mass - data_mass).abs() > MASS_GAP_TOL * data_mass {
        return Err(Error::MassGap {
            model_mass,
            data_mass,
        });
    }
    let simplified = gkl_simplified(tensor, model)?;
    let nll = mle_nll(tensor, &model.normalize()?)?;
    let mass = model_mass;
    // x·log x extends continuously to 0 at x = 0.
    let offset = if mass > 0.0 { mass * mass.ln() } else { 0.0 };
    Ok(simplified.value - (nll.value - offset + mass))
}
