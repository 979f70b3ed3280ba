use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::GridModel;
use super::sim::{simulate, DisturbanceScenario, FrequencyTrace, SimConfig};
use crate::error::{Error, Result, ResultExt};
use crate::par;

/// How disturbance magnitudes are chosen for each bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MagnitudeSpec {
    /// `start, start + step, ...` up to and including `stop`.
    Grid { start: f64, stop: f64, step: f64 },
    List { values: Vec<f64> },
    /// `count` draws per bus, uniform in `[low, high)`.
    Uniform { low: f64, high: f64, count: usize },
}

impl MagnitudeSpec {
    /// Magnitudes for the 100..1000 MW, 10 MW training grid.
    pub fn training_grid() -> Self {
        MagnitudeSpec::Grid {
            start: 100.0,
            stop: 1000.0,
            step: 10.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MagnitudeSpec::Grid { start, stop, step } => {
                if !(*start > 0.0 && *step > 0.0 && stop >= start) {
                    return Err(Error::config(
                        "magnitudes",
                        "grid needs 0 < start <= stop and a positive step",
                    ));
                }
            }
            MagnitudeSpec::List { values } => {
                if values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                    return Err(Error::config("magnitudes", "list values must be positive"));
                }
            }
            MagnitudeSpec::Uniform { low, high, .. } => {
                if !(*low > 0.0 && high > low && high.is_finite()) {
                    return Err(Error::config("magnitudes", "uniform range needs 0 < low < high"));
                }
            }
        }
        Ok(())
    }

    fn grid_values(start: f64, stop: f64, step: f64) -> Vec<f64> {
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        (0..count).map(|k| start + k as f64 * step).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub buses: Vec<usize>,
    pub magnitudes: MagnitudeSpec,
    /// Equilibrium traces appended with label 0.
    pub no_disturbance: usize,
    pub seed: u64,
}

/// Noiseless traces plus the seed that salts their measurement noise.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub traces: Vec<FrequencyTrace>,
    pub seed: u64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn scenarios(&self) -> Vec<DisturbanceScenario> {
        self.traces.iter().map(|t| t.scenario).collect()
    }
}

/// Enumerates scenarios in bus-major order, followed by the no-disturbance
/// scenarios. Random magnitudes are drawn from a ChaCha stream keyed by `seed`.
pub fn scenario_list(
    model: &GridModel,
    spec: &DatasetSpec,
    sim: &SimConfig,
) -> Result<Vec<DisturbanceScenario>> {
    spec.magnitudes.validate()?;
    for &b in &spec.buses {
        if b == 0 || b > model.bus_count() {
            return Err(Error::config("buses", format!("bus {b} does not exist")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::new();
    for &bus in &spec.buses {
        let values = match &spec.magnitudes {
            MagnitudeSpec::Grid { start, stop, step } => {
                MagnitudeSpec::grid_values(*start, *stop, *step)
            }
            MagnitudeSpec::List { values } => values.clone(),
            MagnitudeSpec::Uniform { low, high, count } => {
                (0..*count).map(|_| rng.random_range(*low..*high)).collect()
            }
        };
        for mw in values {
            out.push(DisturbanceScenario::at_bus(bus, mw, sim.onset_time, sim.duration)?);
        }
    }
    for _ in 0..spec.no_disturbance {
        out.push(DisturbanceScenario::none(sim.onset_time, sim.duration)?);
    }
    Ok(out)
}

/// Simulates every scenario of `spec`. Traces are stored without noise;
/// measurement noise is added at featurization time.
pub fn generate_dataset(model: &GridModel, spec: &DatasetSpec, sim: &SimConfig) -> Result<Dataset> {
    let scenarios = scenario_list(model, spec, sim)?;
    let indexed: Vec<(usize, DisturbanceScenario)> = scenarios.into_iter().enumerate().collect();
    let traces = par::try_map(&indexed, |(id, sc)| {
        simulate(model, sc, sim)
            .map(|mut t| {
                t.scenario_id = *id;
                t
            })
            .with_context(|| {
                format!(
                    "scenario {id} (bus {}, {} MW)",
                    sc.label_index(),
                    sc.magnitude()
                )
            })
    })?;
    Ok(Dataset {
        traces,
        seed: spec.seed,
    })
}
