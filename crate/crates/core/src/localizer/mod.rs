//! Disturbance localization by L2-regularized multinomial logistic regression.
//!
//! Classes are `0` (no disturbance) and every bus `1..=B`. The model keeps one
//! coefficient row per class, intercept included, and the penalty covers all
//! of them, so the optimum is unique for λ > 0.

mod objective;

use std::cmp::Ordering;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::features::{FeatureConfig, FeatureVector, LabeledSample};
use crate::missing::MissingMask;
use crate::linalg::{gemm, max_abs, symmetric_eigen};
use crate::optim::{euclidean, minimize_with, OptimizerSettings};

pub(crate) use objective::Design;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ClassLabel {
    NoDisturbance,
    Bus(usize),
}

impl ClassLabel {
    pub fn from_index(index: usize) -> Self {
        if index == 0 {
            ClassLabel::NoDisturbance
        } else {
            ClassLabel::Bus(index)
        }
    }

    pub fn index(self) -> usize {
        match self {
            ClassLabel::NoDisturbance => 0,
            ClassLabel::Bus(b) => b,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    /// classes × L; row b is β^b.
    pub coefficients: DMatrix<f64>,
    pub class_labels: Vec<ClassLabel>,
    pub feature_config: FeatureConfig,
    pub missing_mask: MissingMask,
    pub lambda: f64,
}

impl LogisticModel {
    pub fn class_count(&self) -> usize {
        self.coefficients.nrows()
    }

    pub fn feature_len(&self) -> usize {
        self.coefficients.ncols()
    }

    pub fn bus_count(&self) -> usize {
        self.class_count() - 1
    }

    /// Checks shape and finiteness invariants, e.g. after loading from disk.
    pub fn validate(&self) -> Result<()> {
        if self.class_labels.len() != self.class_count() || self.class_count() < 2 {
            return Err(Error::Input(format!(
                "{} class labels for {} coefficient rows",
                self.class_labels.len(),
                self.class_count()
            )));
        }
        if self.class_labels.iter().enumerate().any(|(i, c)| c.index() != i) {
            return Err(Error::Input("class labels must be [none, 1, 2, ...]".into()));
        }
        if !self.coefficients.iter().all(|v| v.is_finite()) {
            return Err(Error::Input("non-finite coefficient".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationPrediction {
    pub probabilities: Vec<f64>,
    pub predicted_class: usize,
    /// Class indices by descending probability; ties in ascending index.
    pub ranking: Vec<usize>,
}

impl LocalizationPrediction {
    fn from_scores(scores: &[f64]) -> Self {
        let probabilities = softmax(scores);
        let mut ranking: Vec<usize> = (0..probabilities.len()).collect();
        ranking.sort_by(|&a, &b| match probabilities[b].total_cmp(&probabilities[a]) {
            Ordering::Equal => a.cmp(&b),
            o => o,
        });
        LocalizationPrediction {
            predicted_class: ranking[0],
            probabilities,
            ranking,
        }
    }

    pub fn predicted_label(&self) -> ClassLabel {
        ClassLabel::from_index(self.predicted_class)
    }
}

/// Max-subtracted softmax.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Outcome of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub iterations: usize,
    pub objective: f64,
    pub gradient_norm: f64,
    pub history: Vec<f64>,
}

fn check_samples(samples: &[LabeledSample], bus_count: usize) -> Result<(FeatureConfig, MissingMask, usize)> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Input("no training samples".into()))?;
    let cfg = first.features.config;
    let mask = first.features.mask.clone();
    let len = first.features.len();
    let mut seen = vec![false; bus_count + 1];
    for s in samples {
        let f = &s.features;
        if f.config.sampling_window != cfg.sampling_window
            || f.config.averaging_window != cfg.averaging_window
            || f.mask != mask
            || f.len() != len
        {
            return Err(Error::Input(format!(
                "scenario {} was featurized under a different configuration or mask",
                s.scenario_id
            )));
        }
        if s.label_index > bus_count {
            return Err(Error::Input(format!(
                "label {} outside classes 0..={bus_count}",
                s.label_index
            )));
        }
        seen[s.label_index] = true;
    }
    if seen.iter().filter(|&&b| b).count() < 2 {
        return Err(Error::Input(
            "training needs at least two distinct labels".into(),
        ));
    }
    Ok((cfg, mask, len))
}

pub(crate) fn design_for(samples: &[LabeledSample], features: usize, classes: usize) -> Design {
    Design::new(
        samples
            .iter()
            .map(|s| (s.features.values.as_slice(), s.label_index)),
        features,
        classes,
    )
}

/// Value and exact gradient of the regularized objective at `coefficients`
/// (classes × L), for `bus_count + 1 = coefficients.nrows()` classes.
pub fn objective_and_gradient(
    coefficients: &DMatrix<f64>,
    samples: &[LabeledSample],
    lambda: f64,
) -> Result<(f64, DMatrix<f64>)> {
    let (classes, features) = coefficients.shape();
    for s in samples {
        if s.features.len() != features {
            return Err(Error::Dimension {
                expected: features,
                actual: s.features.len(),
            });
        }
        if s.label_index >= classes {
            return Err(Error::Input(format!("label {} has no coefficient row", s.label_index)));
        }
    }
    let design = design_for(samples, features, classes);
    let mut grad = vec![0.0; classes * features];
    let value = design.evaluate(coefficients.as_slice(), lambda, &mut grad);
    Ok((value, DMatrix::from_vec(classes, features, grad)))
}

pub fn train_localizer(
    samples: &[LabeledSample],
    bus_count: usize,
    lambda: f64,
    opt: &OptimizerSettings,
) -> Result<LogisticModel> {
    fit_localizer(samples, bus_count, lambda, opt, None).map(|(m, _)| m)
}

/// Trains from `init` (zero when absent). Warm starts change only the path,
/// not the optimum, because the objective is strictly convex for λ > 0.
pub fn fit_localizer(
    samples: &[LabeledSample],
    bus_count: usize,
    lambda: f64,
    opt: &OptimizerSettings,
    init: Option<&DMatrix<f64>>,
) -> Result<(LogisticModel, FitReport)> {
    LocalizerProblem::new(samples, bus_count)?.fit(lambda, opt, init)
}

/// A training set prepared for repeated fits, e.g. along a λ path.
///
/// The samples are expressed in the eigenbasis V of XᵀX. The penalty ‖β‖² is
/// invariant under the orthogonal change β̃ = Vᵀβ, so the optimum is the same,
/// but curvature along the new coordinates is close to diagonal
/// (λ + p(1−p)·eigenvalue), which the optimizer uses as its preconditioner.
/// Features within a window are strongly correlated, and without this the
/// iteration count grows into the thousands at small λ.
pub struct LocalizerProblem {
    original: Design,
    rotated: Design,
    /// features × features, eigenvectors as columns.
    basis: Vec<f64>,
    eigenvalues: Vec<f64>,
    config: FeatureConfig,
    mask: MissingMask,
}

impl LocalizerProblem {
    pub fn new(samples: &[LabeledSample], bus_count: usize) -> Result<Self> {
        let (config, mask, features) = check_samples(samples, bus_count)?;
        let original = design_for(samples, features, bus_count + 1);
        let (eigenvalues, basis) = symmetric_eigen(&original.gram(), features)?;
        let rotated = original.rotated(&basis, features);
        Ok(LocalizerProblem {
            original,
            rotated,
            basis,
            eigenvalues,
            config,
            mask,
        })
    }

    pub fn feature_len(&self) -> usize {
        self.original.features
    }

    pub fn class_count(&self) -> usize {
        self.original.classes
    }

    /// Minimizes the objective at `lambda`. Iteration stops once the gradient
    /// 2-norm falls below the tolerance, which bounds its max-norm as well.
    pub fn fit(
        &self,
        lambda: f64,
        opt: &OptimizerSettings,
        init: Option<&DMatrix<f64>>,
    ) -> Result<(LogisticModel, FitReport)> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Input(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        let (l, c) = (self.feature_len(), self.class_count());
        let mut x0 = vec![0.0; l * c];
        match init {
            Some(m) if m.shape() == (c, l) => {
                gemm(l, l, c, 1.0, &self.basis, true, m.as_slice(), 0.0, &mut x0);
            }
            Some(m) => {
                return Err(Error::Input(format!(
                    "warm start has shape {:?}, expected ({c}, {l})",
                    m.shape()
                )))
            }
            None => {}
        }
        let precond = self.rotated.preconditioner(&self.eigenvalues, lambda);
        let min = minimize_with(
            |w, g| self.rotated.evaluate(w, lambda, g),
            x0,
            Some(&precond),
            euclidean,
            opt,
        )?;
        let mut w = vec![0.0; l * c];
        gemm(l, l, c, 1.0, &self.basis, false, &min.x, 0.0, &mut w);
        let mut grad = vec![0.0; l * c];
        let objective = self.original.evaluate(&w, lambda, &mut grad);
        let report = FitReport {
            iterations: min.iterations,
            objective,
            gradient_norm: max_abs(&grad),
            history: min.history,
        };
        let model = LogisticModel {
            coefficients: DMatrix::from_vec(c, l, w),
            class_labels: (0..c).map(ClassLabel::from_index).collect(),
            feature_config: self.config,
            missing_mask: self.mask.clone(),
            lambda,
        };
        Ok((model, report))
    }
}

pub fn predict(model: &LogisticModel, features: &FeatureVector) -> Result<LocalizationPrediction> {
    if features.len() != model.feature_len() {
        return Err(Error::Dimension {
            expected: model.feature_len(),
            actual: features.len(),
        });
    }
    if features.mask != model.missing_mask {
        return Err(Error::Input(format!(
            "features use mask {} but the model was trained with mask {}",
            features.mask, model.missing_mask
        )));
    }
    let c = &model.feature_config;
    if features.config.sampling_window != c.sampling_window
        || features.config.averaging_window != c.averaging_window
    {
        return Err(Error::Input("feature windows differ from the model's".into()));
    }
    Ok(predict_values(model, &features.values))
}

/// Prediction on a raw feature slice of the right length.
pub(crate) fn predict_values(model: &LogisticModel, x: &[f64]) -> LocalizationPrediction {
    let scores: Vec<f64> = model
        .coefficients
        .row_iter()
        .map(|row| row.iter().zip(x).map(|(b, v)| b * v).sum())
        .collect();
    LocalizationPrediction::from_scores(&scores)
}

pub fn top_k(prediction: &LocalizationPrediction, k: usize) -> Result<Vec<usize>> {
    let n = prediction.ranking.len();
    if k == 0 || k > n {
        return Err(Error::Input(format!("k must be in 1..={n}, got {k}")));
    }
    Ok(prediction.ranking[..k].to_vec())
}
