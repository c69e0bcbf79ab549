//! Naive-Bayes training and prediction over discretized count tensors.
//! Supervised training takes the KL principal component of each class
//! tensor, so the class conditionals are exactly the normalized per-class
//! marginals; unsupervised training reinterprets a fitted CPD model's
//! components as latent classes.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};

use crate::ingest::BinSpec;
use crate::klpc::kl_principal_component;
use crate::model::{CpdModel, NormalizedModel};
use crate::tensor::SparseTensor;
use crate::{Error, Result};

/// Additive smoothing applied inside the log for unseen bins. With a few
/// hundred samples spread over tens of bins per feature, empty bins are
/// guaranteed; without smoothing any one of them would veto its class
/// outright.
pub const SMOOTH_EPS: f64 = 1e-9;

/// Per-class prior and per-class, per-feature bin distributions, plus
/// the grid that maps raw feature values to bins.
///
/// Structurally this is a normalized CPD model whose components are the
/// classes: `prior` is the weight vector and `conditionals(f)` column
/// `c` is class `c`'s distribution over feature `f`'s bins.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassConditionalModel {
    labels: Vec<String>,
    model: NormalizedModel,
    binspec: BinSpec,
}

impl ClassConditionalModel {
    /// Validates that labels, model components, and grid dimensions all
    /// agree.
    pub fn new(labels: Vec<String>, model: NormalizedModel, binspec: BinSpec) -> Result<Self> {
        if labels.len() != model.rank() {
            return Err(Error::RankMismatch {
                expected: model.rank(),
                got: labels.len(),
            });
        }
        if model.shape() != binspec.shape() {
            return Err(Error::ShapeMismatch {
                expected: binspec.shape(),
                got: model.shape().to_vec(),
            });
        }
        let mut seen = std::collections::BTreeSet::new();
        for label in &labels {
            if !seen.insert(label) {
                return Err(Error::DuplicateLabel {
                    label: label.clone(),
                });
            }
        }
        Ok(Self {
            labels,
            model,
            binspec,
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Class prior probabilities, in label order.
    pub fn prior(&self) -> &Array1<f64> {
        self.model.weights()
    }

    /// Bin distributions for one feature, one column per class.
    pub fn conditionals(&self, feature: usize) -> &Array2<f64> {
        self.model.factor(feature)
    }

    pub fn binspec(&self) -> &BinSpec {
        &self.binspec
    }

    /// The underlying normalized CPD view (weights = prior, factors =
    /// conditionals).
    pub fn as_cpd(&self) -> &CpdModel {
        self.model.as_model()
    }
}

/// Trains from per-class count tensors: each class's conditionals are
/// the factors of its KL principal component (its normalized marginals)
/// and priors are the class mass fractions.
pub fn train_supervised(
    per_class: &BTreeMap<String, SparseTensor>,
    spec: &BinSpec,
) -> Result<ClassConditionalModel> {
    if per_class.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let shape = spec.shape();
    let mut labels = Vec::with_capacity(per_class.len());
    let mut masses = Vec::with_capacity(per_class.len());
    let mut class_factors = Vec::with_capacity(per_class.len());
    for (label, tensor) in per_class {
        if tensor.shape() != shape {
            return Err(Error::ShapeMismatch {
                expected: shape.clone(),
                got: tensor.shape().to_vec(),
            });
        }
        let pc = kl_principal_component(tensor).map_err(|e| match e {
            Error::ZeroMass => Error::EmptyClass {
                label: label.clone(),
            },
            other => other,
        })?;
        labels.push(label.clone());
        masses.push(pc.total_mass());
        class_factors.push(pc);
    }
    let total: f64 = masses.iter().sum();
    let prior = Array1::from_iter(masses.iter().map(|&m| m / total));
    let factors = (0..spec.ndim())
        .map(|n| {
            let mut factor = Array2::zeros((shape[n], labels.len()));
            for (c, pc) in class_factors.iter().enumerate() {
                factor.column_mut(c).assign(&pc.factor(n).column(0));
            }
            factor
        })
        .collect();
    let model = NormalizedModel::new(CpdModel::new(shape, prior, factors)?)?;
    ClassConditionalModel::new(labels, model, spec.clone())
}

/// Reinterprets a fitted CPD model as a classifier: components become
/// classes named by their index, the normalized weights become the
/// prior, and the factor columns become the conditionals.
pub fn from_unsupervised(model: &CpdModel, spec: &BinSpec) -> Result<ClassConditionalModel> {
    if model.shape() != spec.shape() {
        return Err(Error::ShapeMismatch {
            expected: spec.shape(),
            got: model.shape().to_vec(),
        });
    }
    let labels = (0..model.rank()).map(|k| k.to_string()).collect();
    ClassConditionalModel::new(labels, model.normalize()?, spec.clone())
}

/// Classifies one sample: bins each feature, scores each class by
/// `log prior + Σ_f log(conditional[bin_f] + SMOOTH_EPS)`, and returns
/// the argmax label (ties broken by label order) with the softmax
/// posterior over all classes.
pub fn predict(model: &ClassConditionalModel, sample: &[f64]) -> Result<(String, Vec<f64>)> {
    let spec = model.binspec();
    if sample.len() != spec.ndim() {
        return Err(Error::ArityMismatch {
            row: 0,
            expected: spec.ndim(),
            got: sample.len(),
        });
    }
    let mut bins = Vec::with_capacity(sample.len());
    for (f, &value) in sample.iter().enumerate() {
        let bin = spec
            .bin_index(f, value)
            .ok_or_else(|| Error::SampleOutOfRange {
                feature: spec.features()[f].name.clone(),
                value,
            })?;
        bins.push(bin);
    }
    let classes = model.labels().len();
    let mut scores = vec![0.0f64; classes];
    for (c, score) in scores.iter_mut().enumerate() {
        let mut acc = model.prior()[c].ln();
        for (f, &bin) in bins.iter().enumerate() {
            acc += (model.conditionals(f)[[bin, c]] + SMOOTH_EPS).ln();
        }
        *score = acc;
    }
    // softmax via log-sum-exp; some prior is positive so the max is finite
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut posterior: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
    let z: f64 = posterior.iter().sum();
    for p in posterior.iter_mut() {
        *p /= z;
    }
    let argmax = scores
        .iter()
        .enumerate()
        .fold(0usize, |best, (i, &s)| if s > scores[best] { i } else { best });
    Ok((model.labels()[argmax].clone(), posterior))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::FeatureBins;

    fn spec2(counts: &[usize]) -> BinSpec {
        BinSpec::new(
            counts
                .iter()
                .enumerate()
                .map(|(i, &count)| FeatureBins {
                    name: format!("f{i}"),
                    min: 0.0,
                    width: 0.1,
                    count,
                })
                .collect(),
        )
        .unwrap()
    }

    fn class_tensor(shape: &[usize], cells: &[(Vec<usize>, f64)]) -> SparseTensor {
        SparseTensor::new(shape.to_vec(), cells.to_vec()).unwrap()
    }

    #[test]
    fn single_class_degenerates_to_that_class() {
        let spec = spec2(&[2, 2]);
        let mut per_class = BTreeMap::new();
        per_class.insert(
            "only".to_string(),
            class_tensor(&[2, 2], &[(vec![0, 0], 3.0), (vec![1, 1], 1.0)]),
        );
        let model = train_supervised(&per_class, &spec).unwrap();
        assert_eq!(model.prior().to_vec(), vec![1.0]);
        let (label, posterior) = predict(&model, &[0.0, 0.0]).unwrap();
        assert_eq!(label, "only");
        assert_eq!(posterior, vec![1.0]);
    }

    #[test]
    fn supervised_conditionals_are_normalized_marginals() {
        let spec = spec2(&[2, 2]);
        let t = class_tensor(&[2, 2], &[(vec![0, 0], 3.0), (vec![1, 0], 1.0)]);
        let mut per_class = BTreeMap::new();
        per_class.insert("c".to_string(), t.clone());
        let model = train_supervised(&per_class, &spec).unwrap();
        for n in 0..2 {
            let marg = t.marginal(n).unwrap();
            for j in 0..2 {
                assert_eq!(model.conditionals(n)[[j, 0]], marg[j] / t.total_mass());
            }
        }
    }

    #[test]
    fn disjoint_supports_separate_cleanly() {
        let spec = spec2(&[2, 2]);
        let mut per_class = BTreeMap::new();
        per_class.insert("a".to_string(), class_tensor(&[2, 2], &[(vec![0, 0], 5.0)]));
        per_class.insert("b".to_string(), class_tensor(&[2, 2], &[(vec![1, 1], 5.0)]));
        let model = train_supervised(&per_class, &spec).unwrap();
        let (label, posterior) = predict(&model, &[0.0, 0.0]).unwrap();
        assert_eq!(label, "a");
        assert!(posterior[0] > 1.0 - 1e-8);
        assert!(posterior[1] < 1e-8);
        let (label, _) = predict(&model, &[0.1, 0.1]).unwrap();
        assert_eq!(label, "b");
    }

    #[test]
    fn empty_class_is_an_error() {
        let spec = spec2(&[2, 2]);
        let mut per_class = BTreeMap::new();
        per_class.insert("empty".to_string(), SparseTensor::empty(vec![2, 2]).unwrap());
        match train_supervised(&per_class, &spec) {
            Err(Error::EmptyClass { label }) => assert_eq!(label, "empty"),
            other => panic!("expected empty-class error, got {other:?}"),
        }
    }

    #[test]
    fn unsupervised_labels_are_component_indices() {
        let spec = spec2(&[2, 2]);
        let t = class_tensor(&[2, 2], &[(vec![0, 0], 2.0), (vec![1, 1], 2.0)]);
        let pc = kl_principal_component(&t).unwrap();
        let model = from_unsupervised(&pc, &spec).unwrap();
        assert_eq!(model.labels(), &["0".to_string()]);
        assert_eq!(model.prior().to_vec(), vec![1.0]);
        for n in 0..2 {
            let marg = t.marginal(n).unwrap();
            for j in 0..2 {
                assert_eq!(model.conditionals(n)[[j, 0]], marg[j] / t.total_mass());
            }
        }
    }

    #[test]
    fn unsupervised_commutes_with_component_permutation() {
        let spec = spec2(&[3, 2]);
        let m = crate::em::init_model(&[3, 2], 3, 5).unwrap();
        let perm = [2, 0, 1];
        let direct = from_unsupervised(&m.permute_components(&perm).unwrap(), &spec).unwrap();
        let routed = from_unsupervised(&m, &spec).unwrap();
        for (k, &p) in perm.iter().enumerate() {
            assert_eq!(direct.prior()[k], routed.prior()[p]);
            for f in 0..2 {
                assert_eq!(
                    direct.conditionals(f).column(k),
                    routed.conditionals(f).column(p)
                );
            }
        }
    }

    #[test]
    fn argmax_invariant_under_joint_prior_rescaling() {
        // log-space scores shift by a constant, softmax argmax unchanged
        let spec = spec2(&[2, 2]);
        let mut per_class = BTreeMap::new();
        per_class.insert(
            "a".to_string(),
            class_tensor(&[2, 2], &[(vec![0, 0], 6.0), (vec![1, 1], 2.0)]),
        );
        per_class.insert(
            "b".to_string(),
            class_tensor(&[2, 2], &[(vec![1, 1], 4.0), (vec![0, 1], 4.0)]),
        );
        let model = train_supervised(&per_class, &spec).unwrap();
        for sample in [[0.0, 0.0], [0.1, 0.1], [0.0, 0.1]] {
            let (label, posterior) = predict(&model, &sample).unwrap();
            let best = posterior
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert_eq!(model.labels()[best], label);
        }
    }

    #[test]
    fn out_of_range_sample_is_an_error() {
        let spec = spec2(&[2, 2]);
        let mut per_class = BTreeMap::new();
        per_class.insert("a".to_string(), class_tensor(&[2, 2], &[(vec![0, 0], 1.0)]));
        let model = train_supervised(&per_class, &spec).unwrap();
        assert!(matches!(
            predict(&model, &[0.9, 0.0]),
            Err(Error::SampleOutOfRange { .. })
        ));
    }
}
