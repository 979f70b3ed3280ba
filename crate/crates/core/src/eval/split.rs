use sha2::{Digest, Sha256};

use super::ExperimentConfig;
use crate::error::{Result, ResultExt};
use crate::grid::{generate_dataset, Dataset, DatasetSpec, GridModel, MagnitudeSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub test: Dataset,
    pub validation: Dataset,
}

impl Splits {
    pub fn hashes(&self) -> [String; 3] {
        [
            dataset_hash(&self.train),
            dataset_hash(&self.test),
            dataset_hash(&self.validation),
        ]
    }
}

/// Dataset specs of the three splits: the training grid, then independent
/// uniform draws per bus for test and validation under distinct seeds.
pub fn split_specs(cfg: &ExperimentConfig) -> [DatasetSpec; 3] {
    let s = &cfg.splits;
    let uniform = |count| MagnitudeSpec::Uniform {
        low: s.magnitude_low,
        high: s.magnitude_high,
        count,
    };
    [
        DatasetSpec {
            buses: cfg.buses.clone(),
            magnitudes: s.train_magnitudes.clone(),
            no_disturbance: s.no_disturbance,
            seed: s.train_seed,
        },
        DatasetSpec {
            buses: cfg.buses.clone(),
            magnitudes: uniform(s.test_per_bus),
            no_disturbance: s.no_disturbance,
            seed: s.test_seed,
        },
        DatasetSpec {
            buses: cfg.buses.clone(),
            magnitudes: uniform(s.validation_per_bus),
            no_disturbance: s.no_disturbance,
            seed: s.validation_seed,
        },
    ]
}

pub fn run_split(cfg: &ExperimentConfig, model: &GridModel) -> Result<Splits> {
    cfg.validate()?;
    let [train, test, validation] = split_specs(cfg);
    Ok(Splits {
        train: generate_dataset(model, &train, &cfg.sim).with_context(|| "train split".to_string())?,
        test: generate_dataset(model, &test, &cfg.sim).with_context(|| "test split".to_string())?,
        validation: generate_dataset(model, &validation, &cfg.sim)
            .with_context(|| "validation split".to_string())?,
    })
}

/// Content hash over scenario metadata and the exact bits of every sample.
pub fn dataset_hash(ds: &Dataset) -> String {
    let mut h = Sha256::new();
    h.update(format!("dataset {} seed {}\n", ds.len(), ds.seed).as_bytes());
    for t in &ds.traces {
        h.update(
            format!(
                "trace {} bus {} mw {:?} period {:?} shape {}x{}\n",
                t.scenario_id,
                t.scenario.label_index(),
                t.scenario.magnitude(),
                t.sample_period,
                t.generator_count(),
                t.sample_count()
            )
            .as_bytes(),
        );
        for v in t.samples.iter() {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
