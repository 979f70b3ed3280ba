use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{MagnitudeSpec, ModelOverrides, SimConfig, DEFAULT_DISTURBANCE_BUSES};
use crate::io::sha256_hex;
use crate::magnitude::{MagnitudeSettings, DEFAULT_SLOPE_WINDOW};
use crate::optim::OptimizerSettings;

/// Environment variable naming the root directory for all outputs.
pub const OUTPUT_ENV: &str = "FREQLOC_OUTPUT";

/// One (W_s, W_a, σ) operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowPoint {
    pub sampling_window: usize,
    pub averaging_window: usize,
    /// Hz.
    pub noise_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train_magnitudes: MagnitudeSpec,
    pub train_seed: u64,
    /// Random magnitudes per bus in the test split.
    pub test_per_bus: usize,
    pub test_seed: u64,
    pub validation_per_bus: usize,
    pub validation_seed: u64,
    /// Range of the uniform test/validation magnitudes, MW.
    pub magnitude_low: f64,
    pub magnitude_high: f64,
    /// No-disturbance scenarios added to every split.
    pub no_disturbance: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_magnitudes: MagnitudeSpec::training_grid(),
            train_seed: 1,
            test_per_bus: 5,
            test_seed: 2,
            validation_per_bus: 5,
            validation_seed: 3,
            magnitude_low: 100.0,
            magnitude_high: 1000.0,
            no_disturbance: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Noise levels for the noise axis, Hz, at `noise_point`'s windows.
    pub noise_sigmas: Vec<f64>,
    pub noise_point: WindowPoint,
    /// Extra noiseless rows on the noise axis at these sampling windows
    /// (averaging window 1).
    pub noiseless_sampling_windows: Vec<usize>,
    /// λ grid of those rows. Features a few samples after onset are of order
    /// 1e-3 Hz, so they need far less regularization than the shared grid
    /// offers before the coefficients can resolve them.
    pub noiseless_lambda_grid: Vec<f64>,
    pub sampling_windows: Vec<usize>,
    pub sampling_point: WindowPoint,
    pub averaging_windows: Vec<usize>,
    pub averaging_point: WindowPoint,
    /// Candidate-set sizes; the full class count is always appended.
    pub top_k: Vec<usize>,
    /// Operating point of the top-k and missing-data axes.
    pub base_point: WindowPoint,
    /// Numbers of missing generators; 0 is the full-data reference.
    pub missing_counts: Vec<usize>,
    /// Random masks averaged per missing count (all masks when fewer exist).
    pub masks_per_count: usize,
    pub mask_seed: u64,
    pub plot: PlotConfig,
}

/// The single disturbance whose traces are exported for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlotConfig {
    pub bus: usize,
    /// MW.
    pub magnitude: f64,
    pub generators: Vec<usize>,
    /// Samples after t = 0.
    pub samples: usize,
    /// Hz.
    pub noise_sigma: f64,
}

impl Default for PlotConfig {
    fn default() -> Self {
        PlotConfig {
            bus: 4,
            magnitude: 200.0,
            generators: vec![1, 10],
            samples: 500,
            noise_sigma: 0.005,
        }
    }
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            noise_sigmas: vec![0.0, 0.0005, 0.001, 0.005, 0.01],
            noise_point: WindowPoint {
                sampling_window: 200,
                averaging_window: 1,
                noise_sigma: 0.0,
            },
            noiseless_sampling_windows: vec![1, 2],
            noiseless_lambda_grid: (-6..=5).map(|e| 10f64.powi(e)).collect(),
            sampling_windows: vec![5, 50, 100, 200],
            sampling_point: WindowPoint {
                sampling_window: 200,
                averaging_window: 1,
                noise_sigma: 0.005,
            },
            averaging_windows: vec![1, 10, 50, 100, 150],
            averaging_point: WindowPoint {
                sampling_window: 200,
                averaging_window: 1,
                noise_sigma: 0.005,
            },
            top_k: vec![1, 2, 3, 4, 5],
            base_point: WindowPoint {
                sampling_window: 200,
                averaging_window: 100,
                noise_sigma: 0.005,
            },
            missing_counts: vec![0, 1, 2, 3, 4, 5],
            masks_per_count: 20,
            mask_seed: 5,
            plot: PlotConfig::default(),
        }
    }
}

/// Everything an experiment run depends on. Parsed from TOML; every field has
/// a default so an empty file describes the standard IEEE 39-bus study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Output directory; relative paths resolve against `$FREQLOC_OUTPUT`
    /// when set, else the working directory.
    pub output_dir: PathBuf,
    /// Seed of the measurement-noise streams.
    pub noise_seed: u64,
    pub buses: Vec<usize>,
    pub lambda_grid: Vec<f64>,
    pub baseline_slope_window: usize,
    pub model: ModelOverrides,
    pub sim: SimConfig,
    pub splits: SplitConfig,
    pub optimizer: OptimizerSettings,
    pub magnitude: MagnitudeSettings,
    pub sweep: SweepConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            output_dir: PathBuf::from("freqloc-out"),
            noise_seed: 7,
            buses: DEFAULT_DISTURBANCE_BUSES.to_vec(),
            lambda_grid: default_lambda_grid(),
            baseline_slope_window: DEFAULT_SLOPE_WINDOW,
            model: ModelOverrides::default(),
            sim: SimConfig::default(),
            splits: SplitConfig::default(),
            optimizer: OptimizerSettings::default(),
            magnitude: MagnitudeSettings::default(),
            sweep: SweepConfig::default(),
        }
    }
}

pub fn default_lambda_grid() -> Vec<f64> {
    (0..=5).map(|e| 10f64.powi(e)).collect()
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::config("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::io::read_file(path)?;
        Self::from_toml(&text).map_err(|e| e.context(format!("config {}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization; pins every random stream.
    /// The output location is left out since it cannot change results.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        sha256_hex(c.to_toml().as_bytes())
    }

    /// Output directory after applying the environment root.
    pub fn resolved_output_dir(&self) -> PathBuf {
        resolve_output(&self.output_dir, std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
    }

    pub fn validate(&self) -> Result<()> {
        if self.buses.is_empty() {
            return Err(Error::config("buses", "must not be empty"));
        }
        let mut sorted = self.buses.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("buses", "contains duplicates"));
        }
        for (field, grid) in [
            ("lambda_grid", &self.lambda_grid),
            ("sweep.noiseless_lambda_grid", &self.sweep.noiseless_lambda_grid),
        ] {
            if grid.is_empty() {
                return Err(Error::config(field, "must not be empty"));
            }
            if let Some(l) = grid.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
                return Err(Error::config(field, format!("{l} is not a finite value >= 0")));
            }
        }
        if self.baseline_slope_window == 0 {
            return Err(Error::config("baseline_slope_window", "must be at least 1"));
        }
        let s = &self.splits;
        s.train_magnitudes
            .validate()
            .map_err(|e| e.context("splits.train_magnitudes"))?;
        if s.train_seed == s.test_seed || s.train_seed == s.validation_seed {
            return Err(Error::config("splits.train_seed", "must differ from the test and validation seeds"));
        }
        if s.test_seed == s.validation_seed {
            return Err(Error::config(
                "splits.validation_seed",
                "must differ from splits.test_seed, otherwise both splits draw the same magnitudes",
            ));
        }
        if s.test_per_bus == 0 {
            return Err(Error::config("splits.test_per_bus", "must be at least 1"));
        }
        if s.validation_per_bus == 0 {
            return Err(Error::config("splits.validation_per_bus", "must be at least 1"));
        }
        if !(s.magnitude_low > 0.0 && s.magnitude_low < s.magnitude_high && s.magnitude_high.is_finite()) {
            return Err(Error::config(
                "splits.magnitude_low",
                "need 0 < magnitude_low < magnitude_high",
            ));
        }
        self.sim.substeps().map_err(|e| e.context("sim"))?;
        let w = &self.sweep;
        let lists: [(&str, bool); 6] = [
            ("sweep.noise_sigmas", w.noise_sigmas.is_empty()),
            ("sweep.sampling_windows", w.sampling_windows.is_empty()),
            ("sweep.averaging_windows", w.averaging_windows.is_empty()),
            ("sweep.top_k", w.top_k.is_empty()),
            ("sweep.missing_counts", w.missing_counts.is_empty()),
            ("sweep.masks_per_count", w.masks_per_count == 0),
        ];
        if let Some((field, _)) = lists.iter().find(|(_, bad)| *bad) {
            return Err(Error::config(*field, "must not be empty"));
        }
        if let Some(s) = w.noise_sigmas.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
            return Err(Error::config("sweep.noise_sigmas", format!("{s} is not a valid standard deviation")));
        }
        if w.top_k.contains(&0) {
            return Err(Error::config("sweep.top_k", "k must be at least 1"));
        }
        for (field, p) in [
            ("sweep.noise_point", &w.noise_point),
            ("sweep.sampling_point", &w.sampling_point),
            ("sweep.averaging_point", &w.averaging_point),
            ("sweep.base_point", &w.base_point),
        ] {
            check_point(field, p)?;
        }
        for &ws in w.sampling_windows.iter().chain(&w.noiseless_sampling_windows) {
            if ws == 0 {
                return Err(Error::config("sweep.sampling_windows", "windows must be at least 1"));
            }
            if ws < w.sampling_point.averaging_window {
                return Err(Error::config(
                    "sweep.sampling_windows",
                    format!("W_s = {ws} is below the averaging window {}", w.sampling_point.averaging_window),
                ));
            }
        }
        for &wa in &w.averaging_windows {
            if wa == 0 || wa > w.averaging_point.sampling_window {
                return Err(Error::config(
                    "sweep.averaging_windows",
                    format!("W_a = {wa} must lie in 1..={}", w.averaging_point.sampling_window),
                ));
            }
        }
        if !(w.plot.magnitude > 0.0 && w.plot.magnitude.is_finite()) {
            return Err(Error::config("sweep.plot.magnitude", "must be positive"));
        }
        if !(w.plot.noise_sigma >= 0.0 && w.plot.noise_sigma.is_finite()) {
            return Err(Error::config("sweep.plot.noise_sigma", "must be >= 0"));
        }
        Ok(())
    }
}

fn check_point(field: &str, p: &WindowPoint) -> Result<()> {
    if p.averaging_window == 0 || p.averaging_window > p.sampling_window {
        return Err(Error::config(field, "need 1 <= averaging_window <= sampling_window"));
    }
    if !(p.noise_sigma >= 0.0 && p.noise_sigma.is_finite()) {
        return Err(Error::config(field, "noise_sigma must be >= 0"));
    }
    Ok(())
}

pub(crate) fn resolve_output(dir: &Path, root: Option<PathBuf>) -> PathBuf {
    match root {
        Some(root) if dir.is_relative() => root.join(dir),
        _ => dir.to_path_buf(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default_study() {
        let cfg = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.buses.len(), 21);
        assert_eq!(cfg.lambda_grid.len(), 6);
    }

    #[test]
    fn serialization_round_trips_and_hash_is_stable() {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        let mut other = cfg.clone();
        other.noise_seed += 1;
        assert_ne!(other.hash(), cfg.hash());
        let mut moved = cfg.clone();
        moved.output_dir = "elsewhere".into();
        assert_eq!(moved.hash(), cfg.hash());
    }

    #[test]
    fn equal_test_and_validation_seeds_are_rejected() {
        let text = "[splits]\ntest_seed = 4\nvalidation_seed = 4\n";
        match ExperimentConfig::from_toml(text).unwrap_err() {
            Error::Config { field, .. } => assert_eq!(field, "splits.validation_seed"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn unknown_keys_and_empty_lists_are_rejected() {
        assert!(ExperimentConfig::from_toml("lamda_grid = [1.0]\n").is_err());
        match ExperimentConfig::from_toml("lambda_grid = []\n").unwrap_err() {
            Error::Config { field, .. } => assert_eq!(field, "lambda_grid"),
            other => panic!("{other}"),
        }
        match ExperimentConfig::from_toml("[sweep]\ntop_k = []\n").unwrap_err() {
            Error::Config { field, .. } => assert_eq!(field, "sweep.top_k"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn overrides_parse() {
        let text = r#"
            buses = [4, 16]
            lambda_grid = [0.5]
            [model]
            damping = 2.0
            [[model.generator]]
            id = 3
            inertia = 4.5
        "#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(cfg.buses, vec![4, 16]);
        assert_eq!(cfg.model.generators.len(), 1);
    }

    #[test]
    fn relative_output_joins_env_root() {
        let root = Some(PathBuf::from("/data"));
        assert_eq!(resolve_output(Path::new("run"), root.clone()), PathBuf::from("/data/run"));
        assert_eq!(resolve_output(Path::new("/abs"), root), PathBuf::from("/abs"));
        assert_eq!(resolve_output(Path::new("run"), None), PathBuf::from("run"));
    }
}
