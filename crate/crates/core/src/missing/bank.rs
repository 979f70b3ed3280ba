use std::collections::{BTreeMap, BTreeSet};

use super::MissingMask;
use crate::error::{Error, Result, ResultExt};
use crate::features::{extract, featurize_dataset, FeatureConfig};
use crate::grid::{Dataset, FrequencyTrace};
use crate::localizer::{predict, train_localizer, LocalizationPrediction, LogisticModel};
use crate::magnitude::{estimate_magnitude, train_bank, LinearModelBank, MagnitudeSettings};
use crate::optim::OptimizerSettings;
use crate::par;

/// Models pre-trained for every missing-generator pattern up to `k_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioBank {
    pub localizers: BTreeMap<MissingMask, LogisticModel>,
    pub magnitude_banks: BTreeMap<MissingMask, LinearModelBank>,
    pub k_max: usize,
    pub generator_count: usize,
    pub feature_config: FeatureConfig,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BankSettings {
    pub bus_count: usize,
    pub lambda: f64,
    pub optimizer: OptimizerSettings,
    pub magnitude: MagnitudeSettings,
}

/// Localizer and magnitude models for one mask, trained on `dataset`.
pub fn train_for_mask(
    dataset: &Dataset,
    config: &FeatureConfig,
    mask: &MissingMask,
    settings: &BankSettings,
) -> Result<(LogisticModel, LinearModelBank)> {
    let samples = featurize_dataset(dataset, config, mask)?;
    let localizer = train_localizer(&samples, settings.bus_count, settings.lambda, &settings.optimizer)?;
    let mut mags = LinearModelBank::new(*config);
    train_bank(&mut mags, &samples, &settings.magnitude)?;
    Ok((localizer, mags))
}

pub fn build_bank(
    dataset: &Dataset,
    config: &FeatureConfig,
    k_max: usize,
    settings: &BankSettings,
) -> Result<ScenarioBank> {
    let n = dataset
        .traces
        .first()
        .map(|t| t.generator_count())
        .ok_or_else(|| Error::Input("cannot build a bank from an empty dataset".into()))?;
    if k_max >= n {
        return Err(Error::config(
            "k_max",
            format!("must be below the generator count {n}, got {k_max}"),
        ));
    }
    let masks = MissingMask::enumerate(n, k_max);
    let trained = par::try_map(&masks, |mask| {
        train_for_mask(dataset, config, mask, settings)
            .map(|pair| (mask.clone(), pair))
            .with_context(|| format!("mask {mask}"))
    })?;
    let mut localizers = BTreeMap::new();
    let mut magnitude_banks = BTreeMap::new();
    for (mask, (loc, mag)) in trained {
        localizers.insert(mask.clone(), loc);
        magnitude_banks.insert(mask, mag);
    }
    Ok(ScenarioBank {
        localizers,
        magnitude_banks,
        k_max,
        generator_count: n,
        feature_config: *config,
    })
}

impl ScenarioBank {
    pub fn models_for(&self, mask: &MissingMask) -> Result<(&LogisticModel, &LinearModelBank)> {
        let loc = self
            .localizers
            .get(mask)
            .ok_or_else(|| Error::Lookup(format!("localizer for mask {mask}")))?;
        let mag = self
            .magnitude_banks
            .get(mask)
            .ok_or_else(|| Error::Lookup(format!("magnitude bank for mask {mask}")))?;
        Ok((loc, mag))
    }

    /// Number of localizers the bank must hold: Σ_{j≤k_max} C(N, j).
    pub fn expected_entries(&self) -> usize {
        (0..=self.k_max).map(|j| binomial(self.generator_count, j)).sum()
    }
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Localizes with the model trained for the missing pattern implied by
/// `observed`, then estimates the magnitude with the predicted bus's
/// regression. A no-disturbance prediction reports 0 MW.
pub fn predict_with_missing(
    bank: &ScenarioBank,
    trace: &FrequencyTrace,
    observed: &BTreeSet<usize>,
) -> Result<(LocalizationPrediction, f64)> {
    let n = bank.generator_count;
    if trace.generator_count() != n {
        return Err(Error::Input(format!(
            "trace has {} generators, bank expects {n}",
            trace.generator_count()
        )));
    }
    if let Some(&g) = observed.iter().find(|&&g| g == 0 || g > n) {
        return Err(Error::Input(format!("observed set names unknown generator {g}")));
    }
    let mask = MissingMask::from_observed(observed.iter().copied(), n);
    if mask.len() > bank.k_max {
        return Err(Error::BudgetExceeded {
            missing: mask.len(),
            k_max: bank.k_max,
        });
    }
    let (loc, mags) = bank.models_for(&mask)?;
    let features = extract(trace, &bank.feature_config, &mask)?;
    let prediction = predict(loc, &features)?;
    let magnitude = match prediction.predicted_class {
        0 => 0.0,
        bus => estimate_magnitude(mags, bus, &mask, &features)?,
    };
    Ok((prediction, magnitude))
}
