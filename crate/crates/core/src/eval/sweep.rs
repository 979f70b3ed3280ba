use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::split::{run_split, Splits};
use super::tune::{tune_lambda, LambdaFit};
use super::{ExperimentConfig, WindowPoint};
use crate::error::{Error, Result, ResultExt};
use crate::features::{add_noise, featurize_dataset, trace_seed, FeatureConfig, LabeledSample};
use crate::grid::{build_ieee39, simulate, Dataset, DisturbanceScenario, GridModel};
use crate::localizer::{predict, LogisticModel};
use crate::magnitude::{baseline_estimate, estimate_magnitude, train_bank, LinearModelBank};
use crate::missing::{binomial, MissingMask};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Axis {
    Noise,
    Ws,
    Wa,
    Topk,
    Missing,
}

impl Axis {
    pub const ALL: [Axis; 5] = [Axis::Noise, Axis::Ws, Axis::Wa, Axis::Topk, Axis::Missing];

    pub fn name(self) -> &'static str {
        match self {
            Axis::Noise => "noise",
            Axis::Ws => "ws",
            Axis::Wa => "wa",
            Axis::Topk => "topk",
            Axis::Missing => "missing",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Axis::Noise => "classification and regression error under measurement noise",
            Axis::Ws => "classification and regression error against sampling window size",
            Axis::Wa => "classification error against averaging window size",
            Axis::Topk => "fraction of validation scenarios whose top-k candidates miss the true bus",
            Axis::Missing => "classification error with missing generator measurements",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Axis::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Input(format!("unknown sweep axis `{s}` (noise, ws, wa, topk, missing)")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BusMetrics {
    pub bus: usize,
    pub validation_error: f64,
    pub magnitude_error: f64,
}

/// Everything measured at one (window point, mask).
#[derive(Debug, Clone, PartialEq)]
pub struct PointMetrics {
    pub lambda: f64,
    pub curve: Vec<LambdaFit>,
    pub test_error: f64,
    pub validation_error: f64,
    /// (k, miss rate) on the validation split.
    pub topk_miss: Vec<(usize, f64)>,
    /// Mean |ΔP̂ − ΔP| / ΔP on disturbed validation scenarios, true bus given.
    pub magnitude_error: f64,
    /// Same metric for the inertia-based estimator; full-data points only.
    pub baseline_error: Option<f64>,
    pub per_bus: Vec<BusMetrics>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowMetrics {
    /// `None` when the row averages masks tuned separately.
    pub lambda: Option<f64>,
    pub test_error: f64,
    pub validation_error: f64,
    pub magnitude_error: f64,
    pub baseline_error: Option<f64>,
    /// Set on top-k rows.
    pub miss_rate: Option<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis: Axis,
    /// Axis value as printed: σ in mHz, a window size, k, or a missing count.
    pub value: String,
    pub point: WindowPoint,
    pub missing: usize,
    pub masks: usize,
    /// `Err` carries the message of the stage that failed.
    pub outcome: std::result::Result<RowMetrics, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskResult {
    pub mask: MissingMask,
    pub outcome: std::result::Result<PointMetrics, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub config_hash: String,
    pub model_hash: String,
    pub train_hash: String,
    pub test_hash: String,
    pub validation_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TracePlot {
    pub bus: usize,
    pub magnitude: f64,
    pub sigma: f64,
    pub sample_period: f64,
    /// (generator id, clean deviation Hz, noisy deviation Hz) per sample.
    pub series: Vec<(usize, Vec<f64>, Vec<f64>)>,
}

/// Results of a sweep. Runtimes are kept apart from the metrics so the
/// rendered tables depend only on the configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub rows: Vec<SweepRow>,
    /// λ curves of every full-data point, keyed by its label.
    pub curves: Vec<(String, f64, Vec<LambdaFit>)>,
    /// Validation top-k miss rates of every point that evaluated, labelled
    /// with point and mask.
    pub topk_curves: Vec<(String, Vec<(usize, f64)>)>,
    pub missing_masks: Vec<(usize, MaskResult)>,
    /// Per-bus profile at the base point.
    pub per_bus: Option<Vec<BusMetrics>>,
    pub traces: Option<TracePlot>,
    pub provenance: Provenance,
    pub runtime_seconds: f64,
    pub stage_seconds: Vec<(String, f64)>,
}

impl MetricsReport {
    pub fn rows_for(&self, axis: Axis) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(move |r| r.axis == axis)
    }

    pub fn failures(&self) -> Vec<String> {
        self.rows
            .iter()
            .filter_map(|r| r.outcome.as_ref().err().map(|e| format!("{} {}: {e}", r.axis, r.value)))
            .collect()
    }
}

/// A point of the sweep with its mask; the unit of caching.
#[derive(Debug, Clone, PartialEq)]
struct PointKey {
    point: WindowPoint,
    mask: MissingMask,
    lambda_grid: Vec<f64>,
}

type PointId = (usize, usize, u64, MissingMask, Vec<u64>);

impl PointKey {
    fn id(&self) -> PointId {
        (
            self.point.sampling_window,
            self.point.averaging_window,
            self.point.noise_sigma.to_bits(),
            self.mask.clone(),
            self.lambda_grid.iter().map(|l| l.to_bits()).collect(),
        )
    }
}

pub fn point_label(p: &WindowPoint) -> String {
    format!(
        "ws={} wa={} sigma_mhz={}",
        p.sampling_window,
        p.averaging_window,
        mhz(p.noise_sigma)
    )
}

fn mhz(hz: f64) -> f64 {
    // round-trip through the decimal form so 0.005 Hz prints as 5, not 5.000000000000001
    format!("{}", hz * 1000.0)
        .parse::<f64>()
        .map(|v| (v * 1e9).round() / 1e9)
        .unwrap_or(hz * 1000.0)
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    model: &'a GridModel,
    splits: &'a Splits,
    top_k: Vec<usize>,
}

fn feature_config(cfg: &ExperimentConfig, p: &WindowPoint) -> FeatureConfig {
    FeatureConfig::new(p.sampling_window, p.averaging_window, p.noise_sigma, cfg.noise_seed)
}

fn relative_error(estimate: f64, truth: f64) -> f64 {
    ((estimate - truth) / truth).abs()
}

fn evaluate_point(ctx: &Context, key: &PointKey) -> Result<PointMetrics> {
    let fc = feature_config(ctx.cfg, &key.point);
    let bus_count = ctx.model.bus_count();
    let train = featurize_dataset(&ctx.splits.train, &fc, &key.mask)?;
    let test = featurize_dataset(&ctx.splits.test, &fc, &key.mask)?;
    let val = featurize_dataset(&ctx.splits.validation, &fc, &key.mask)?;

    let tuned = tune_lambda(&train, &test, &key.lambda_grid, bus_count, &ctx.cfg.optimizer)?;
    let test_error = tuned
        .curve
        .iter()
        .find(|c| c.lambda == tuned.lambda)
        .map(|c| c.test_error)
        .unwrap_or(f64::NAN);

    let mut bank = LinearModelBank::new(fc);
    train_bank(&mut bank, &train, &ctx.cfg.magnitude).context("magnitude regression")?;

    let (validation_error, topk_miss, per_bus_loc) = localization_metrics(&tuned.model, &val, &ctx.top_k)?;
    let (magnitude_error, per_bus_mag) = magnitude_metrics(&bank, &key.mask, &val)?;
    let baseline_error = if key.mask.is_empty() {
        Some(baseline_metrics(ctx, &ctx.splits.validation, &fc).context("baseline estimator")?)
    } else {
        None
    };
    let per_bus = per_bus_loc
        .into_iter()
        .map(|(bus, e)| BusMetrics {
            bus,
            validation_error: e,
            magnitude_error: per_bus_mag.get(&bus).copied().unwrap_or(f64::NAN),
        })
        .collect();
    Ok(PointMetrics {
        lambda: tuned.lambda,
        curve: tuned.curve,
        test_error,
        validation_error,
        topk_miss,
        magnitude_error,
        baseline_error,
        per_bus,
    })
}

type LocMetrics = (f64, Vec<(usize, f64)>, Vec<(usize, f64)>);

fn localization_metrics(model: &LogisticModel, val: &[LabeledSample], ks: &[usize]) -> Result<LocMetrics> {
    let mut wrong = 0usize;
    let mut misses = vec![0usize; ks.len()];
    let mut by_bus: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for s in val {
        let p = predict(model, &s.features)?;
        let e = by_bus.entry(s.label_index).or_default();
        e.1 += 1;
        if p.predicted_class != s.label_index {
            wrong += 1;
            e.0 += 1;
        }
        let rank = p
            .ranking
            .iter()
            .position(|&c| c == s.label_index)
            .expect("ranking is a permutation of the classes");
        for (m, &k) in misses.iter_mut().zip(ks) {
            if rank >= k {
                *m += 1;
            }
        }
    }
    let n = val.len() as f64;
    Ok((
        wrong as f64 / n,
        ks.iter().zip(misses).map(|(&k, m)| (k, m as f64 / n)).collect(),
        by_bus
            .into_iter()
            .map(|(b, (w, c))| (b, w as f64 / c as f64))
            .collect(),
    ))
}

fn magnitude_metrics(
    bank: &LinearModelBank,
    mask: &MissingMask,
    val: &[LabeledSample],
) -> Result<(f64, BTreeMap<usize, f64>)> {
    let mut by_bus: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    let (mut total, mut count) = (0.0, 0usize);
    for s in val.iter().filter(|s| s.label_index != 0) {
        let est = estimate_magnitude(bank, s.label_index, mask, &s.features)?;
        let e = relative_error(est, s.magnitude);
        total += e;
        count += 1;
        let b = by_bus.entry(s.label_index).or_default();
        b.0 += e;
        b.1 += 1;
    }
    if count == 0 {
        return Err(Error::Input("validation split has no disturbed scenarios".into()));
    }
    Ok((
        total / count as f64,
        by_bus.into_iter().map(|(b, (t, c))| (b, t / c as f64)).collect(),
    ))
}

/// The inertia-based estimator sees the same noisy samples as the features.
fn baseline_metrics(ctx: &Context, ds: &Dataset, fc: &FeatureConfig) -> Result<f64> {
    let errors = par::try_map(&ds.traces, |t| {
        if t.scenario.bus().is_none() {
            return Ok(None);
        }
        let est = if fc.noise_sigma > 0.0 {
            let noisy = add_noise(t, fc.noise_sigma, trace_seed(fc.rng_seed, ds.seed, t.scenario_id));
            baseline_estimate(&noisy, ctx.model, ctx.cfg.baseline_slope_window)?
        } else {
            baseline_estimate(t, ctx.model, ctx.cfg.baseline_slope_window)?
        };
        Ok(Some(relative_error(est, t.scenario.magnitude())))
    })?;
    let errors: Vec<f64> = errors.into_iter().flatten().collect();
    if errors.is_empty() {
        return Err(Error::Input("validation split has no disturbed scenarios".into()));
    }
    Ok(errors.iter().sum::<f64>() / errors.len() as f64)
}

/// Masks evaluated for `count` missing generators: all of them when there are
/// at most `per_count`, otherwise `per_count` distinct masks drawn from a
/// stream seeded by (`seed`, `count`). Returned in canonical order.
pub fn missing_masks(generators: usize, count: usize, per_count: usize, seed: u64) -> Vec<MissingMask> {
    if count == 0 {
        return vec![MissingMask::none()];
    }
    if count >= generators {
        return Vec::new();
    }
    if binomial(generators, count) <= per_count {
        return MissingMask::enumerate(generators, count)
            .into_iter()
            .filter(|m| m.len() == count)
            .collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (count as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let mut chosen = std::collections::BTreeSet::new();
    while chosen.len() < per_count {
        let ids = sample(&mut rng, generators, count).into_iter().map(|i| i + 1);
        chosen.insert(MissingMask::new(ids));
    }
    chosen.into_iter().collect()
}

fn plan_points(cfg: &ExperimentConfig, axes: &[Axis], generators: usize) -> Vec<PointKey> {
    let w = &cfg.sweep;
    let grid = &cfg.lambda_grid;
    let mut keys: Vec<PointKey> = Vec::new();
    let mut push = |point: WindowPoint, mask: MissingMask, grid: &Vec<f64>| {
        let k = PointKey {
            point,
            mask,
            lambda_grid: grid.clone(),
        };
        if !keys.iter().any(|e| e.id() == k.id()) {
            keys.push(k);
        }
    };
    for &axis in axes {
        match axis {
            Axis::Noise => {
                for &ws in &w.noiseless_sampling_windows {
                    push(noiseless(ws), MissingMask::none(), &w.noiseless_lambda_grid);
                }
                for &s in &w.noise_sigmas {
                    push(WindowPoint { noise_sigma: s, ..w.noise_point }, MissingMask::none(), grid);
                }
            }
            Axis::Ws => {
                for &ws in &w.sampling_windows {
                    push(WindowPoint { sampling_window: ws, ..w.sampling_point }, MissingMask::none(), grid);
                }
            }
            Axis::Wa => {
                for &wa in &w.averaging_windows {
                    push(WindowPoint { averaging_window: wa, ..w.averaging_point }, MissingMask::none(), grid);
                }
            }
            Axis::Topk => push(w.base_point, MissingMask::none(), grid),
            Axis::Missing => {
                for &i in &w.missing_counts {
                    for m in missing_masks(generators, i, w.masks_per_count, w.mask_seed) {
                        push(w.base_point, m, grid);
                    }
                }
            }
        }
    }
    keys
}

fn noiseless(ws: usize) -> WindowPoint {
    WindowPoint {
        sampling_window: ws,
        averaging_window: 1,
        noise_sigma: 0.0,
    }
}

fn row_from(m: &PointMetrics) -> RowMetrics {
    RowMetrics {
        lambda: Some(m.lambda),
        test_error: m.test_error,
        validation_error: m.validation_error,
        magnitude_error: m.magnitude_error,
        baseline_error: m.baseline_error,
        miss_rate: None,
    }
}

/// Runs the requested axes (all when empty) and assembles the report.
pub fn sweep(cfg: &ExperimentConfig, axes: &[Axis]) -> Result<MetricsReport> {
    let start = Instant::now();
    cfg.validate()?;
    let axes: Vec<Axis> = if axes.is_empty() { Axis::ALL.to_vec() } else { axes.to_vec() };
    let model = build_ieee39(&cfg.model)?;
    let mut stages = Vec::new();

    let t = Instant::now();
    let splits = run_split(cfg, &model)?;
    stages.push(("simulate splits".to_string(), t.elapsed().as_secs_f64()));
    let [train_hash, test_hash, validation_hash] = splits.hashes();

    let classes = model.bus_count() + 1;
    let mut top_k: Vec<usize> = cfg.sweep.top_k.iter().copied().filter(|&k| k <= classes).collect();
    top_k.push(classes);
    top_k.sort_unstable();
    top_k.dedup();
    let ctx = Context {
        cfg,
        model: &model,
        splits: &splits,
        top_k: top_k.clone(),
    };

    let generators = model.generator_count();
    let keys = plan_points(cfg, &axes, generators);
    let t = Instant::now();
    let timed = par::map(&keys, |k| {
        let t = Instant::now();
        let r = evaluate_point(&ctx, k)
            .with_context(|| format!("{} mask {}", point_label(&k.point), k.mask))
            .map_err(|e| e.to_string());
        (r, t.elapsed().as_secs_f64())
    });
    stages.push(("evaluate points".to_string(), t.elapsed().as_secs_f64()));
    for (k, (_, secs)) in keys.iter().zip(&timed) {
        stages.push((format!("{} mask {}", point_label(&k.point), k.mask), *secs));
    }
    let results: Vec<std::result::Result<PointMetrics, String>> = timed.into_iter().map(|(r, _)| r).collect();
    let lookup = |point: WindowPoint, mask: &MissingMask, lambda_grid: &Vec<f64>| -> &std::result::Result<PointMetrics, String> {
        let id = PointKey {
            point,
            mask: mask.clone(),
            lambda_grid: lambda_grid.clone(),
        }
        .id();
        let i = keys.iter().position(|k| k.id() == id).expect("point was planned");
        &results[i]
    };

    let w = &cfg.sweep;
    let mut rows = Vec::new();
    let none = MissingMask::none();
    let grid = &cfg.lambda_grid;
    let simple_row = |axis: Axis, value: String, point: WindowPoint, g: &Vec<f64>| {
        let outcome = lookup(point, &none, g).as_ref().map(row_from).map_err(Clone::clone);
        SweepRow { axis, value, point, missing: 0, masks: 1, outcome }
    };
    for &axis in &axes {
        match axis {
            Axis::Noise => {
                for &ws in &w.noiseless_sampling_windows {
                    rows.push(simple_row(axis, "0".into(), noiseless(ws), &w.noiseless_lambda_grid));
                }
                for &s in &w.noise_sigmas {
                    let p = WindowPoint { noise_sigma: s, ..w.noise_point };
                    rows.push(simple_row(axis, mhz(s).to_string(), p, grid));
                }
            }
            Axis::Ws => {
                for &ws in &w.sampling_windows {
                    rows.push(simple_row(axis, ws.to_string(), WindowPoint { sampling_window: ws, ..w.sampling_point }, grid));
                }
            }
            Axis::Wa => {
                for &wa in &w.averaging_windows {
                    rows.push(simple_row(axis, wa.to_string(), WindowPoint { averaging_window: wa, ..w.averaging_point }, grid));
                }
            }
            Axis::Topk => {
                for &k in &top_k {
                    let outcome = lookup(w.base_point, &none, grid)
                        .as_ref()
                        .map(|m| RowMetrics {
                            miss_rate: m.topk_miss.iter().find(|(kk, _)| *kk == k).copied(),
                            ..row_from(m)
                        })
                        .map_err(Clone::clone);
                    rows.push(SweepRow {
                        axis,
                        value: k.to_string(),
                        point: w.base_point,
                        missing: 0,
                        masks: 1,
                        outcome,
                    });
                }
            }
            Axis::Missing => {
                for &i in &w.missing_counts {
                    let masks = missing_masks(generators, i, w.masks_per_count, w.mask_seed);
                    let outcome = average_masks(&masks, |m| lookup(w.base_point, m, grid), i);
                    rows.push(SweepRow {
                        axis,
                        value: i.to_string(),
                        point: w.base_point,
                        missing: i,
                        masks: masks.len(),
                        outcome,
                    });
                }
            }
        }
    }

    let mut curves = Vec::new();
    let mut topk_curves = Vec::new();
    let mut missing_masks_out = Vec::new();
    for (k, r) in keys.iter().zip(&results) {
        if let Ok(m) = r {
            topk_curves.push((format!("{} mask {}", point_label(&k.point), k.mask), m.topk_miss.clone()));
            if k.mask.is_empty() {
                curves.push((point_label(&k.point), m.lambda, m.curve.clone()));
            }
        }
        if axes.contains(&Axis::Missing) && k.point == w.base_point && k.lambda_grid == *grid {
            missing_masks_out.push((
                k.mask.len(),
                MaskResult {
                    mask: k.mask.clone(),
                    outcome: r.clone(),
                },
            ));
        }
    }
    missing_masks_out.sort_by(|a, b| (a.0, &a.1.mask).cmp(&(b.0, &b.1.mask)));

    let per_bus = if axes.contains(&Axis::Topk) || axes.contains(&Axis::Missing) {
        lookup(w.base_point, &none, grid).as_ref().ok().map(|m| m.per_bus.clone())
    } else {
        None
    };
    let traces = if axes.contains(&Axis::Noise) {
        Some(trace_plot(cfg, &model)?)
    } else {
        None
    };

    Ok(MetricsReport {
        rows,
        curves,
        topk_curves,
        missing_masks: missing_masks_out,
        per_bus,
        traces,
        provenance: Provenance {
            config_hash: cfg.hash(),
            model_hash: model.content_hash(),
            train_hash,
            test_hash,
            validation_hash,
        },
        runtime_seconds: start.elapsed().as_secs_f64(),
        stage_seconds: stages,
    })
}

fn average_masks<'a>(
    masks: &[MissingMask],
    get: impl Fn(&MissingMask) -> &'a std::result::Result<PointMetrics, String>,
    count: usize,
) -> std::result::Result<RowMetrics, String> {
    if masks.is_empty() {
        return Err(format!("no mask leaves a generator observed with {count} missing"));
    }
    let mut acc = [0.0; 3];
    let mut lambdas = Vec::new();
    for m in masks {
        let r = get(m).as_ref().map_err(|e| format!("mask {m}: {e}"))?;
        acc[0] += r.test_error;
        acc[1] += r.validation_error;
        acc[2] += r.magnitude_error;
        lambdas.push(r.lambda);
    }
    let n = masks.len() as f64;
    let single = lambdas.windows(2).all(|w| w[0] == w[1]);
    Ok(RowMetrics {
        lambda: if single { lambdas.first().copied() } else { None },
        test_error: acc[0] / n,
        validation_error: acc[1] / n,
        magnitude_error: acc[2] / n,
        baseline_error: None,
        miss_rate: None,
    })
}

/// Clean and noisy frequency deviation from nominal at the plotted
/// generators for one disturbance.
pub fn trace_plot(cfg: &ExperimentConfig, model: &GridModel) -> Result<TracePlot> {
    let p = &cfg.sweep.plot;
    let scenario = DisturbanceScenario::at_bus(p.bus, p.magnitude, cfg.sim.onset_time, cfg.sim.duration)?;
    let trace = simulate(model, &scenario, &cfg.sim).context("plot trace")?;
    let noisy = add_noise(&trace, p.noise_sigma, cfg.noise_seed);
    let samples = trace.sample_count().min(p.samples + 1);
    let fnom = model.nominal_frequency();
    let mut series = Vec::new();
    for &g in &p.generators {
        if g == 0 || g > trace.generator_count() {
            return Err(Error::config("sweep.plot.generators", format!("generator {g} does not exist")));
        }
        let clean = (0..samples).map(|k| trace.samples[(g - 1, k)] - fnom).collect();
        let dirty = (0..samples).map(|k| noisy.samples[(g - 1, k)] - fnom).collect();
        series.push((g, clean, dirty));
    }
    Ok(TracePlot {
        bus: p.bus,
        magnitude: p.magnitude,
        sigma: p.noise_sigma,
        sample_period: trace.sample_period,
        series,
    })
}
