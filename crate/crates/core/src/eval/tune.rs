use crate::error::{Error, Result};
use crate::features::LabeledSample;
use crate::localizer::{predict, LocalizerProblem, LogisticModel};
use crate::optim::OptimizerSettings;

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaFit {
    pub lambda: f64,
    /// NaN when the fit did not converge.
    pub test_error: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct Tuned {
    pub lambda: f64,
    pub model: LogisticModel,
    /// One entry per grid value, in the order given.
    pub curve: Vec<LambdaFit>,
}

/// Fraction of samples whose predicted class differs from the label.
pub fn classification_error(model: &LogisticModel, samples: &[LabeledSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Input("no samples to evaluate".into()));
    }
    let mut wrong = 0usize;
    for s in samples {
        if predict(model, &s.features)?.predicted_class != s.label_index {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / samples.len() as f64)
}

/// Trains at every λ of `grid` and keeps the one with the lowest test error,
/// preferring the smaller λ on ties. A λ whose fit hits the iteration limit is
/// recorded as unconverged and not eligible; if none converges the last
/// failure is returned.
///
/// Fits run from the largest λ down, each warm-started at the previous
/// optimum. The objective is strictly convex for λ > 0, so the start point
/// affects only the iteration count.
pub fn tune_lambda(
    train: &[LabeledSample],
    test: &[LabeledSample],
    grid: &[f64],
    bus_count: usize,
    opt: &OptimizerSettings,
) -> Result<Tuned> {
    if grid.is_empty() {
        return Err(Error::config("lambda_grid", "must not be empty"));
    }
    let problem = LocalizerProblem::new(train, bus_count)?;
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid[b].total_cmp(&grid[a]));

    let mut curve: Vec<Option<LambdaFit>> = vec![None; grid.len()];
    let mut best: Option<(f64, f64, LogisticModel)> = None;
    let mut warm: Option<nalgebra::DMatrix<f64>> = None;
    let mut failure = None;
    for &i in &order {
        let lambda = grid[i];
        let (model, report) = match problem.fit(lambda, opt, warm.as_ref()) {
            Ok(fit) => fit,
            Err(e @ Error::NonConvergence { iterations, .. }) => {
                curve[i] = Some(LambdaFit {
                    lambda,
                    test_error: f64::NAN,
                    iterations,
                    converged: false,
                });
                failure = Some(e.context(format!("lambda {lambda}")));
                continue;
            }
            Err(e) => return Err(e.context(format!("lambda {lambda}"))),
        };
        let err = classification_error(&model, test)?;
        curve[i] = Some(LambdaFit {
            lambda,
            test_error: err,
            iterations: report.iterations,
            converged: true,
        });
        warm = Some(model.coefficients.clone());
        // descending order: an equal error at a smaller λ replaces the incumbent
        if best.as_ref().map_or(true, |(e, _, _)| err <= *e) {
            best = Some((err, lambda, model));
        }
    }
    let Some((_, lambda, model)) = best else {
        return Err(failure.expect("an empty search records a failure"));
    };
    Ok(Tuned {
        lambda,
        model,
        curve: curve.into_iter().map(|c| c.expect("every λ fitted")).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureConfig, FeatureVector};
    use crate::missing::MissingMask;

    fn sample(x: f64, label: usize) -> LabeledSample {
        LabeledSample {
            scenario_id: 0,
            features: FeatureVector {
                values: vec![x, 1.0],
                config: FeatureConfig::new(1, 1, 0.0, 0),
                mask: MissingMask::none(),
            },
            label_index: label,
            magnitude: 1.0,
        }
    }

    fn toy() -> (Vec<LabeledSample>, Vec<LabeledSample>) {
        let train = vec![sample(-2.0, 1), sample(-1.0, 1), sample(1.0, 2), sample(2.0, 2)];
        let test = vec![sample(-1.5, 1), sample(0.2, 1), sample(1.5, 2)];
        (train, test)
    }

    #[test]
    fn single_value_grid_returns_it() {
        let (train, test) = toy();
        let t = tune_lambda(&train, &test, &[3.0], 2, &OptimizerSettings::default()).unwrap();
        assert_eq!(t.lambda, 3.0);
        assert_eq!(t.curve.len(), 1);
    }

    #[test]
    fn curve_follows_grid_order_and_ties_go_to_smaller_lambda() {
        let (train, test) = toy();
        let grid = [0.1, 100.0, 0.01, 1.0];
        let t = tune_lambda(&train, &test, &grid, 2, &OptimizerSettings::default()).unwrap();
        let lambdas: Vec<f64> = t.curve.iter().map(|c| c.lambda).collect();
        assert_eq!(lambdas, grid);
        let best = t.curve.iter().map(|c| c.test_error).fold(f64::INFINITY, f64::min);
        let smallest_best = t
            .curve
            .iter()
            .filter(|c| c.test_error == best)
            .map(|c| c.lambda)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(t.lambda, smallest_best);
        for c in &t.curve {
            let direct = LocalizerProblem::new(&train, 2)
                .unwrap()
                .fit(c.lambda, &OptimizerSettings::default(), None)
                .unwrap()
                .0;
            assert_eq!(classification_error(&direct, &test).unwrap(), c.test_error);
        }
    }

    #[test]
    fn unconverged_lambda_is_skipped() {
        let (train, test) = toy();
        let opt = OptimizerSettings {
            max_iterations: 3,
            ..Default::default()
        };
        // separable data: tiny λ needs many iterations, huge λ converges at once
        let t = tune_lambda(&train, &test, &[1e6, 1e-8], 2, &opt).unwrap();
        assert_eq!(t.lambda, 1e6);
        assert!(!t.curve[1].converged && t.curve[1].test_error.is_nan());
        assert!(tune_lambda(&train, &test, &[1e-8], 2, &opt).is_err());
    }
}
