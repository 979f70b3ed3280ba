//! Synthetic frequency data: network model, reduction, swing simulation and
//! scenario datasets.

mod dataset;
mod ieee39;
mod kron;
mod model;
mod sim;

pub use dataset::{generate_dataset, scenario_list, Dataset, DatasetSpec, MagnitudeSpec};
pub use ieee39::{
    build_ieee39, GeneratorOverride, ModelOverrides, DEFAULT_DISTURBANCE_BUSES, IEEE39_BUS_COUNT,
};
pub use kron::{kron_reduce, ReducedNetwork};
pub use model::{Generator, GridModel, Line};
pub(crate) use model::hex_digest;
pub use sim::{simulate, DisturbanceScenario, FrequencyTrace, SimConfig};
