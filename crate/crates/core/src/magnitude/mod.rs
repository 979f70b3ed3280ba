//! Per-bus least-squares magnitude regression and the inertia-based baseline.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ResultExt};
use crate::features::{FeatureConfig, FeatureVector, LabeledSample};
use crate::grid::{FrequencyTrace, GridModel};
use crate::linalg::dot;
use crate::missing::MissingMask;
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    /// Factorize, falling back to the iterative path when rank-deficient.
    ClosedForm,
    /// Always iterate.
    Gradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolvePath {
    ClosedForm,
    Gradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MagnitudeSettings {
    pub method: FitMethod,
    /// Optional ridge penalty (ρ/2)‖α‖²; zero gives ordinary least squares.
    pub ridge: f64,
    /// Condition number of AᵀA above which the factorization is not trusted.
    pub condition_limit: f64,
    /// Gradient max-norm at which iteration stops, relative to ‖Aᵀq‖∞.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for MagnitudeSettings {
    fn default() -> Self {
        MagnitudeSettings {
            method: FitMethod::ClosedForm,
            ridge: 0.0,
            condition_limit: 1e12,
            tolerance: 1e-10,
            max_iterations: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeFit {
    pub coefficients: Vec<f64>,
    pub path: SolvePath,
    /// Condition estimate of AᵀA when a factorization was attempted.
    pub condition: Option<f64>,
    pub iterations: usize,
    /// Final ‖Aᵀ(q − Aα) − ρα‖∞.
    pub gradient_norm: f64,
    pub converged: bool,
}

fn design(samples: &[LabeledSample]) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Input("no samples for magnitude regression".into()))?;
    let l = first.features.len();
    for s in samples {
        if s.label_index != first.label_index {
            return Err(Error::Input(format!(
                "magnitude samples mix buses {} and {}",
                first.label_index, s.label_index
            )));
        }
        if s.features.len() != l
            || s.features.mask != first.features.mask
            || s.features.config.sampling_window != first.features.config.sampling_window
            || s.features.config.averaging_window != first.features.config.averaging_window
        {
            return Err(Error::Input(format!(
                "scenario {} was featurized differently",
                s.scenario_id
            )));
        }
    }
    let a = DMatrix::from_fn(samples.len(), l, |j, k| samples[j].features.values[k]);
    let q = DVector::from_iterator(samples.len(), samples.iter().map(|s| s.magnitude));
    Ok((a, q))
}

/// Fits α for one bus by least squares on (features, magnitude) pairs.
pub fn train_magnitude(samples: &[LabeledSample], settings: &MagnitudeSettings) -> Result<MagnitudeFit> {
    let (a, q) = design(samples)?;
    fit_least_squares(&a, &q, settings)
}

pub fn fit_least_squares(
    a: &DMatrix<f64>,
    q: &DVector<f64>,
    settings: &MagnitudeSettings,
) -> Result<MagnitudeFit> {
    if a.nrows() == 0 {
        return Err(Error::Input("empty design matrix".into()));
    }
    if settings.method == FitMethod::ClosedForm {
        if let Some(fit) = closed_form(a, q, settings) {
            return Ok(fit);
        }
    }
    let cond = if settings.method == FitMethod::ClosedForm {
        condition_estimate(a)
    } else {
        None
    };
    let mut fit = cgls(a, q, settings);
    fit.condition = cond;
    Ok(fit)
}

/// (σ_max / σ_min)² of A, i.e. the 2-norm condition of AᵀA. `None` when A has
/// fewer rows than columns (AᵀA is singular outright).
fn condition_estimate(a: &DMatrix<f64>) -> Option<f64> {
    if a.nrows() < a.ncols() {
        return None;
    }
    let sv = a.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    Some(if min > 0.0 { (max / min).powi(2) } else { f64::INFINITY })
}

fn closed_form(a: &DMatrix<f64>, q: &DVector<f64>, settings: &MagnitudeSettings) -> Option<MagnitudeFit> {
    let (m, l) = a.shape();
    if settings.ridge > 0.0 {
        let mut ata = a.tr_mul(a);
        for i in 0..l {
            ata[(i, i)] += settings.ridge;
        }
        let chol = ata.cholesky()?;
        let alpha = chol.solve(&a.tr_mul(q));
        return Some(finish(a, q, alpha, SolvePath::ClosedForm, None, 0, settings));
    }
    if m < l {
        return None;
    }
    let svd = a.clone().svd(true, true);
    let sv = &svd.singular_values;
    let (max, min) = (sv.max(), sv.min());
    let cond = if min > 0.0 { (max / min).powi(2) } else { f64::INFINITY };
    if !(cond <= settings.condition_limit) {
        return None;
    }
    let u = svd.u.as_ref()?;
    let vt = svd.v_t.as_ref()?;
    let mut coef = u.tr_mul(q);
    for (c, s) in coef.iter_mut().zip(sv.iter()) {
        *c /= s;
    }
    let alpha = vt.tr_mul(&coef);
    Some(finish(a, q, alpha, SolvePath::ClosedForm, Some(cond), 0, settings))
}

fn finish(
    a: &DMatrix<f64>,
    q: &DVector<f64>,
    alpha: DVector<f64>,
    path: SolvePath,
    condition: Option<f64>,
    iterations: usize,
    settings: &MagnitudeSettings,
) -> MagnitudeFit {
    let r = q - a * &alpha;
    let g = a.tr_mul(&r) - &alpha * settings.ridge;
    let gradient_norm = g.amax();
    let scale = a.tr_mul(q).amax().max(1.0);
    MagnitudeFit {
        converged: gradient_norm <= settings.tolerance * scale || path == SolvePath::ClosedForm,
        coefficients: alpha.iter().copied().collect(),
        path,
        condition,
        iterations,
        gradient_norm,
    }
}

/// Conjugate-gradient descent on the least-squares objective from zero
/// (CGLS). From a zero start the iterates stay in the row space of A, so on
/// rank-deficient problems they approach the minimum-norm solution.
fn cgls(a: &DMatrix<f64>, q: &DVector<f64>, settings: &MagnitudeSettings) -> MagnitudeFit {
    let (_, l) = a.shape();
    let rho = settings.ridge;
    let mut x = DVector::zeros(l);
    let mut r = q.clone();
    let mut s = a.tr_mul(&r);
    let stop = settings.tolerance * s.amax().max(1.0);
    let mut p = s.clone();
    let mut gamma = s.norm_squared();
    let mut iterations = 0;
    while iterations < settings.max_iterations && s.amax() > stop {
        let t = a * &p;
        let delta = t.norm_squared() + rho * p.norm_squared();
        if !(delta > 0.0) {
            break;
        }
        let step = gamma / delta;
        x.axpy(step, &p, 1.0);
        r.axpy(-step, &t, 1.0);
        iterations += 1;
        if iterations % 64 == 0 {
            // refresh the recursive residual
            r = q - a * &x;
        }
        s = a.tr_mul(&r);
        s.axpy(-rho, &x, 1.0);
        let gamma_new = s.norm_squared();
        p = &s + &p * (gamma_new / gamma);
        gamma = gamma_new;
    }
    finish(a, q, x, SolvePath::Gradient, None, iterations, settings)
}

/// Per-(bus, mask) coefficient vectors trained under one feature config.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModelBank {
    pub models: BTreeMap<(usize, MissingMask), Vec<f64>>,
    pub feature_config: FeatureConfig,
}

impl LinearModelBank {
    pub fn new(feature_config: FeatureConfig) -> Self {
        LinearModelBank {
            models: BTreeMap::new(),
            feature_config,
        }
    }

    pub fn get(&self, bus: usize, mask: &MissingMask) -> Option<&[f64]> {
        self.models.get(&(bus, mask.clone())).map(Vec::as_slice)
    }

    pub fn insert(&mut self, bus: usize, mask: MissingMask, coefficients: Vec<f64>) {
        self.models.insert((bus, mask), coefficients);
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    /// Every stored vector matches the length implied by its mask.
    pub fn validate(&self, generator_count: usize) -> Result<()> {
        for ((bus, mask), c) in &self.models {
            let want = self.feature_config.feature_len(mask.observed_count(generator_count));
            if c.len() != want {
                return Err(Error::Dimension {
                    expected: want,
                    actual: c.len(),
                })
                .with_context(|| format!("bank entry bus {bus} mask {mask}"));
            }
            if !c.iter().all(|v| v.is_finite()) {
                return Err(Error::Input(format!("non-finite coefficient for bus {bus} mask {mask}")));
            }
        }
        Ok(())
    }
}

/// Trains one regression per disturbed bus present in `samples` (label 0 is
/// skipped) and adds them to `bank` under the samples' mask.
pub fn train_bank(
    bank: &mut LinearModelBank,
    samples: &[LabeledSample],
    settings: &MagnitudeSettings,
) -> Result<()> {
    let mut by_bus: BTreeMap<usize, Vec<LabeledSample>> = BTreeMap::new();
    for s in samples.iter().filter(|s| s.label_index != 0) {
        by_bus.entry(s.label_index).or_default().push(s.clone());
    }
    let groups: Vec<(usize, Vec<LabeledSample>)> = by_bus.into_iter().collect();
    let fits = par::try_map(&groups, |(bus, group)| {
        train_magnitude(group, settings)
            .map(|f| (*bus, group[0].features.mask.clone(), f.coefficients))
            .with_context(|| format!("magnitude model for bus {bus}"))
    })?;
    for (bus, mask, c) in fits {
        bank.insert(bus, mask, c);
    }
    Ok(())
}

/// α̂·x for the stored (bus, mask) model. Negative values are returned as-is.
pub fn estimate_magnitude(
    bank: &LinearModelBank,
    bus: usize,
    mask: &MissingMask,
    features: &FeatureVector,
) -> Result<f64> {
    let alpha = bank
        .get(bus, mask)
        .ok_or_else(|| Error::Lookup(format!("bus {bus} with mask {mask}")))?;
    if alpha.len() != features.len() {
        return Err(Error::Dimension {
            expected: alpha.len(),
            actual: features.len(),
        });
    }
    Ok(dot(alpha, &features.values))
}

/// Default number of post-onset samples for the baseline slope fit (20 ms).
pub const DEFAULT_SLOPE_WINDOW: usize = 4;

/// Model-based estimate ΔP = −Σ_i (2H_iS_i/f_n)·df_i/dt, with each slope taken
/// from a least-squares line through samples 0..=`slope_window`.
pub fn baseline_estimate(trace: &FrequencyTrace, model: &GridModel, slope_window: usize) -> Result<f64> {
    if slope_window == 0 {
        return Err(Error::Input("slope window must be at least 1".into()));
    }
    if trace.sample_count() < slope_window + 1 {
        return Err(Error::TraceTooShort {
            window: slope_window,
            required: slope_window + 1,
            available: trace.sample_count(),
        });
    }
    if trace.generator_count() != model.generator_count() {
        return Err(Error::Input(format!(
            "trace has {} generators, model has {}",
            trace.generator_count(),
            model.generator_count()
        )));
    }
    let n = slope_window + 1;
    let times: Vec<f64> = (0..n).map(|k| k as f64 * trace.sample_period).collect();
    let t_mean = times.iter().sum::<f64>() / n as f64;
    let sxx: f64 = times.iter().map(|t| (t - t_mean).powi(2)).sum();
    let fnom = model.nominal_frequency();
    let mut total = 0.0;
    for (g, gen) in model.generators().iter().enumerate() {
        let f: Vec<f64> = (0..n).map(|k| trace.samples[(g, k)] - trace.samples[(g, 0)]).collect();
        let f_mean = f.iter().sum::<f64>() / n as f64;
        let sxy: f64 = times.iter().zip(&f).map(|(t, v)| (t - t_mean) * (v - f_mean)).sum();
        total -= gen.inertia_coefficient(fnom) * sxy / sxx;
    }
    Ok(total)
}
