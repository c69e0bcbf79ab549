//! Closed-form KL principal component: the rank-1 nonnegative CPD
//! minimizing generalized KL divergence is `λ = M` with each factor the
//! normalized mode marginal. Hidden convexity of the rank-1 problem
//! makes this the global optimum, not a stationary point.

use ndarray::{Array1, Array2};

use crate::model::CpdModel;
use crate::tensor::SparseTensor;
use crate::{Error, Result};

/// Computes the global rank-1 minimizer of the generalized KL loss:
/// weight `total_mass(T)`, factor `n` equal to `marginal(T, n) / M`.
///
/// Zero marginal components map to exactly-zero factor entries. A
/// zero-mass tensor is rejected: every factor choice is then optimal and
/// returning an arbitrary one would hide upstream data bugs.
pub fn kl_principal_component(tensor: &SparseTensor) -> Result<CpdModel> {
    let mass = tensor.total_mass();
    if mass <= 0.0 {
        return Err(Error::ZeroMass);
    }
    let factors = (0..tensor.ndim())
        .map(|mode| {
            let column = tensor.marginal(mode)?.mapv_into(|y| y / mass);
            let len = column.len();
            Ok(column.into_shape_with_order((len, 1)).expect("column reshape"))
        })
        .collect::<Result<Vec<Array2<f64>>>>()?;
    CpdModel::new(tensor.shape().to_vec(), Array1::from(vec![mass]), factors)
}
