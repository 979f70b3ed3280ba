//! Feature vectors from frequency traces.
//!
//! For every observed generator the deviations Δf̃_i(t_k) = f̃_i(t_k) − f̃_i(t_0),
//! k = 1..W_s, are passed through a length-W_a mean filter, giving
//! W_s − W_a + 1 coordinates per generator. Blocks are concatenated in
//! ascending generator id and a trailing 1 carries the intercept. Values are
//! in Hz.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ResultExt};
use crate::grid::{Dataset, FrequencyTrace};
use crate::missing::MissingMask;
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub sampling_window: usize,
    pub averaging_window: usize,
    /// Measurement noise standard deviation in Hz.
    pub noise_sigma: f64,
    pub rng_seed: u64,
}

impl FeatureConfig {
    pub fn new(sampling_window: usize, averaging_window: usize, noise_sigma: f64, rng_seed: u64) -> Self {
        FeatureConfig {
            sampling_window,
            averaging_window,
            noise_sigma,
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.averaging_window == 0 || self.averaging_window > self.sampling_window {
            return Err(Error::config(
                "averaging_window",
                format!(
                    "need 1 <= W_a <= W_s, got W_a = {}, W_s = {}",
                    self.averaging_window, self.sampling_window
                ),
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::config("noise_sigma", "must be finite and nonnegative"));
        }
        Ok(())
    }

    /// Coordinates contributed by each observed generator.
    pub fn block_len(&self) -> usize {
        self.sampling_window - self.averaging_window + 1
    }

    /// L for `observed` generators, intercept included.
    pub fn feature_len(&self, observed: usize) -> usize {
        self.block_len() * observed + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub config: FeatureConfig,
    pub mask: MissingMask,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub scenario_id: usize,
    pub features: FeatureVector,
    /// 0 for no disturbance, otherwise the disturbed bus.
    pub label_index: usize,
    /// Disturbance magnitude in MW.
    pub magnitude: f64,
}

/// Finalizer of splitmix64, used to derive independent stream seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the noise stream for one trace of a dataset.
pub fn trace_seed(config_seed: u64, dataset_seed: u64, scenario_id: usize) -> u64 {
    mix(mix(mix(config_seed) ^ dataset_seed) ^ scenario_id as u64)
}

/// First `count` noise draws for generator position `g`. Each generator has
/// its own stream so truncating a trace never shifts another generator's noise.
fn noise_stream(seed: u64, g: usize, sigma: f64, count: usize) -> impl Iterator<Item = f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed ^ mix(g as u64 + 1)));
    (0..count).map(move |_| {
        let z: f64 = StandardNormal.sample(&mut rng);
        sigma * z
    })
}

/// Adds independent N(0, σ²) noise to every sample, including t_0.
pub fn add_noise(trace: &FrequencyTrace, sigma: f64, seed: u64) -> FrequencyTrace {
    let mut out = trace.clone();
    if sigma == 0.0 {
        return out;
    }
    let cols = trace.sample_count();
    for g in 0..trace.generator_count() {
        for (k, e) in noise_stream(seed, g, sigma, cols).enumerate() {
            out.samples[(g, k)] += e;
        }
    }
    out
}

fn check_inputs(trace: &FrequencyTrace, config: &FeatureConfig, mask: &MissingMask) -> Result<()> {
    config.validate()?;
    mask.validate(trace.generator_count())?;
    let need = config.sampling_window + 1;
    if trace.sample_count() < need {
        return Err(Error::TraceTooShort {
            window: config.sampling_window,
            required: need,
            available: trace.sample_count(),
        });
    }
    Ok(())
}

/// Appends the mean-filtered deviation block of one generator to `out`.
fn push_block(out: &mut Vec<f64>, series: &[f64], config: &FeatureConfig) {
    let ws = config.sampling_window;
    let wa = config.averaging_window;
    let base = series[0];
    let dev: Vec<f64> = series[1..=ws].iter().map(|f| f - base).collect();
    let inv = 1.0 / wa as f64;
    for j in 0..config.block_len() {
        let s: f64 = dev[j..j + wa].iter().sum();
        out.push(if wa == 1 { s } else { s * inv });
    }
}

pub fn extract(
    trace: &FrequencyTrace,
    config: &FeatureConfig,
    mask: &MissingMask,
) -> Result<FeatureVector> {
    check_inputs(trace, config, mask)?;
    let observed = mask.observed_positions(trace.generator_count());
    let mut values = Vec::with_capacity(config.feature_len(observed.len()));
    let mut series = vec![0.0; config.sampling_window + 1];
    for &g in &observed {
        for (k, s) in series.iter_mut().enumerate() {
            *s = trace.samples[(g, k)];
        }
        push_block(&mut values, &series, config);
    }
    values.push(1.0);
    Ok(FeatureVector {
        values,
        config: *config,
        mask: mask.clone(),
    })
}

/// Noise then extraction, touching only the samples the window needs.
/// Equal to `extract(&add_noise(trace, σ, seed), config, mask)`.
pub fn noisy_extract(
    trace: &FrequencyTrace,
    config: &FeatureConfig,
    mask: &MissingMask,
    seed: u64,
) -> Result<FeatureVector> {
    check_inputs(trace, config, mask)?;
    let observed = mask.observed_positions(trace.generator_count());
    let mut values = Vec::with_capacity(config.feature_len(observed.len()));
    let count = config.sampling_window + 1;
    let mut series = vec![0.0; count];
    for &g in &observed {
        for (k, s) in series.iter_mut().enumerate() {
            *s = trace.samples[(g, k)];
        }
        if config.noise_sigma > 0.0 {
            for (s, e) in series.iter_mut().zip(noise_stream(seed, g, config.noise_sigma, count)) {
                *s += e;
            }
        }
        push_block(&mut values, &series, config);
    }
    values.push(1.0);
    Ok(FeatureVector {
        values,
        config: *config,
        mask: mask.clone(),
    })
}

/// Noisy features for every trace, in dataset order. Each trace draws noise
/// from a stream keyed by (config seed, dataset seed, scenario id).
pub fn featurize_dataset(
    dataset: &Dataset,
    config: &FeatureConfig,
    mask: &MissingMask,
) -> Result<Vec<LabeledSample>> {
    config.validate()?;
    par::try_map(&dataset.traces, |trace| {
        let seed = trace_seed(config.rng_seed, dataset.seed, trace.scenario_id);
        noisy_extract(trace, config, mask, seed)
            .map(|features| LabeledSample {
                scenario_id: trace.scenario_id,
                features,
                label_index: trace.scenario.label_index(),
                magnitude: trace.scenario.magnitude(),
            })
            .with_context(|| format!("scenario {}", trace.scenario_id))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::DisturbanceScenario;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn trace_from(devs: &[Vec<f64>]) -> FrequencyTrace {
        let n = devs.len();
        let t = devs[0].len() + 1;
        let samples = DMatrix::from_fn(n, t, |g, k| if k == 0 { 60.0 } else { 60.0 + devs[g][k - 1] });
        FrequencyTrace {
            scenario_id: 0,
            scenario: DisturbanceScenario::at_bus(1, 100.0, 0.0, 1.0).unwrap(),
            sample_period: 0.005,
            samples,
            pre_onset_frequency: vec![60.0; n],
        }
    }

    fn constant_trace(n: usize, t: usize) -> FrequencyTrace {
        FrequencyTrace {
            scenario_id: 3,
            scenario: DisturbanceScenario::none(0.0, 1.0).unwrap(),
            sample_period: 0.005,
            samples: DMatrix::from_element(n, t, 60.0),
            pre_onset_frequency: vec![60.0; n],
        }
    }

    #[test]
    fn hand_evaluated_mean_filter() {
        let tr = trace_from(&[vec![-1e-3, -2e-3, -3e-3], vec![-2e-3, -4e-3, -6e-3]]);
        let cfg = FeatureConfig::new(3, 2, 0.0, 0);
        let x = extract(&tr, &cfg, &MissingMask::none()).unwrap();
        let want = [-1.5e-3, -2.5e-3, -3e-3, -5e-3, 1.0];
        assert_eq!(x.len(), 5);
        for (a, b) in x.values.iter().zip(want) {
            assert!((a - b).abs() < 1e-12, "{:?}", x.values);
        }
    }

    #[test]
    fn constant_trace_gives_zero_features() {
        let cfg = FeatureConfig::new(20, 5, 0.0, 0);
        let x = extract(&constant_trace(4, 30), &cfg, &MissingMask::none()).unwrap();
        assert_eq!(x.len(), 16 * 4 + 1);
        assert!(x.values[..x.len() - 1].iter().all(|&v| v == 0.0));
        assert_eq!(*x.values.last().unwrap(), 1.0);
    }

    #[test]
    fn full_width_window_averages_everything() {
        let devs = vec![vec![-1.0, -3.0, -8.0, -4.0]];
        let x = extract(&trace_from(&devs), &FeatureConfig::new(4, 4, 0.0, 0), &MissingMask::none())
            .unwrap();
        assert_eq!(x.len(), 2);
        assert!((x.values[0] + 4.0).abs() < 1e-12);
    }

    #[test]
    fn short_trace_is_rejected() {
        let err = extract(&constant_trace(2, 10), &FeatureConfig::new(10, 1, 0.0, 0), &MissingMask::none())
            .unwrap_err();
        assert!(matches!(err, Error::TraceTooShort { required: 11, .. }), "{err}");
    }

    #[test]
    fn masked_generator_is_dropped() {
        let tr = trace_from(&[vec![-1.0; 3], vec![-2.0; 3], vec![-3.0; 3]]);
        let cfg = FeatureConfig::new(3, 1, 0.0, 0);
        let x = extract(&tr, &cfg, &MissingMask::new([2])).unwrap();
        assert_eq!(x.values, vec![-1.0, -1.0, -1.0, -3.0, -3.0, -3.0, 1.0]);
    }

    #[test]
    fn zero_sigma_leaves_trace_untouched() {
        let tr = constant_trace(3, 10);
        assert_eq!(add_noise(&tr, 0.0, 5), tr);
    }

    #[test]
    fn noise_has_requested_spread() {
        let tr = constant_trace(10, 10_000);
        let noisy = add_noise(&tr, 5e-3, 42);
        let n = 100_000.0;
        let mean: f64 = noisy.samples.iter().map(|f| f - 60.0).sum::<f64>() / n;
        let var: f64 = noisy.samples.iter().map(|f| (f - 60.0 - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let sd = var.sqrt();
        assert!((4.9e-3..=5.1e-3).contains(&sd), "sd {sd}");
        assert_ne!(add_noise(&tr, 5e-3, 43), noisy);
    }

    #[test]
    fn fast_path_matches_noise_then_extract() {
        let tr = trace_from(&[vec![-1e-3, -2e-3, -4e-3, -7e-3], vec![0.0, -1e-3, -1e-3, -2e-3]]);
        let cfg = FeatureConfig::new(3, 2, 5e-3, 0);
        let mask = MissingMask::none();
        let a = noisy_extract(&tr, &cfg, &mask, 77).unwrap();
        let b = extract(&add_noise(&tr, 5e-3, 77), &cfg, &mask).unwrap();
        assert_eq!(a.values, b.values);
    }

    proptest! {
        #[test]
        fn shift_invariance(c in -1.0f64..1.0, devs in prop::collection::vec(-0.1f64..0.1, 12)) {
            let tr = trace_from(&[devs[..6].to_vec(), devs[6..].to_vec()]);
            let mut shifted = tr.clone();
            for k in 0..shifted.sample_count() {
                shifted.samples[(1, k)] += c;
            }
            let cfg = FeatureConfig::new(6, 3, 0.0, 0);
            let a = extract(&tr, &cfg, &MissingMask::none()).unwrap();
            let b = extract(&shifted, &cfg, &MissingMask::none()).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn mean_filter_is_linear(a in -5.0f64..5.0, devs in prop::collection::vec(-0.1f64..0.1, 8)) {
            let scaled: Vec<f64> = devs.iter().map(|d| a * d).collect();
            let cfg = FeatureConfig::new(8, 3, 0.0, 0);
            let x = extract(&trace_from(&[devs.clone()]), &cfg, &MissingMask::none()).unwrap();
            let y = extract(&trace_from(&[scaled]), &cfg, &MissingMask::none()).unwrap();
            for (p, q) in x.values[..6].iter().zip(&y.values[..6]) {
                prop_assert!((a * p - q).abs() < 1e-12);
            }
        }

        #[test]
        fn unit_window_is_raw_deviation(devs in prop::collection::vec(-0.5f64..0.5, 5)) {
            let tr = trace_from(&[devs.clone()]);
            let x = extract(&tr, &FeatureConfig::new(5, 1, 0.0, 0), &MissingMask::none()).unwrap();
            for (k, v) in x.values[..5].iter().enumerate() {
                prop_assert_eq!(*v, tr.samples[(0, k + 1)] - tr.samples[(0, 0)]);
            }
        }

        #[test]
        fn length_formula(ws in 1usize..60, wa_frac in 0.0f64..1.0, missing in 0usize..4) {
            let wa = 1 + ((ws - 1) as f64 * wa_frac) as usize;
            let n = 5;
            let cfg = FeatureConfig::new(ws, wa, 0.0, 0);
            let mask = MissingMask::new(1..=missing);
            let x = extract(&constant_trace(n, ws + 1), &cfg, &mask).unwrap();
            prop_assert_eq!(x.len(), (ws - wa + 1) * (n - missing) + 1);
            prop_assert_eq!(x.len(), cfg.feature_len(n - missing));
        }
    }

    #[test]
    fn filtered_noise_variance() {
        // deviation = e_k - e_0, so a W_a-mean has variance σ²(1/W_a + 1)
        let (sigma, wa) = (1.0, 4);
        let tr = constant_trace(1, 5);
        let cfg = FeatureConfig::new(4, wa, sigma, 0);
        let trials = 20_000;
        let vals: Vec<f64> = (0..trials)
            .map(|s| noisy_extract(&tr, &cfg, &MissingMask::none(), s as u64).unwrap().values[0])
            .collect();
        let mean = vals.iter().sum::<f64>() / trials as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
        let want = sigma * sigma * (1.0 + 1.0 / wa as f64);
        assert!((var - want).abs() < 0.05 * want, "{var} vs {want}");
    }
}
