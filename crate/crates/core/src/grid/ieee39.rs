//! New England 39-bus, 10-machine benchmark.
//!
//! Branch reactances are the standard published case data; the DC model only
//! keeps the series susceptance 1/x of each branch. Generators are numbered
//! by host bus (generator 1 at bus 30, ..., generator 10 at bus 39).
//!
//! Machine inertias follow the classical 10-machine dynamic dataset. That
//! dataset states H on a 100 MVA base; here units 1-9 are rated 1000 MVA
//! (so H = H_100 / 10) and unit 10, the equivalent of the neighbouring
//! interconnection, is rated 10000 MVA with H = 5 s. The product H·S, which
//! is all the swing equation uses, is unchanged.

use serde::{Deserialize, Serialize};

use super::model::{Generator, GridModel, Line};
use crate::error::{Error, Result};

pub const IEEE39_BUS_COUNT: usize = 39;

pub const DEFAULT_DAMPING: f64 = 1.0;
pub const DEFAULT_DROOP: f64 = 0.05;
pub const DEFAULT_GOVERNOR_TIME_CONSTANT: f64 = 0.5;
pub const DEFAULT_NOMINAL_FREQUENCY: f64 = 60.0;
pub const DEFAULT_BASE_POWER: f64 = 100.0;

/// (from, to, x in per unit on 100 MVA).
const BRANCHES: [(usize, usize, f64); 46] = [
    (1, 2, 0.0411),
    (1, 39, 0.0250),
    (2, 3, 0.0151),
    (2, 25, 0.0086),
    (2, 30, 0.0181),
    (3, 4, 0.0213),
    (3, 18, 0.0133),
    (4, 5, 0.0128),
    (4, 14, 0.0129),
    (5, 6, 0.0026),
    (5, 8, 0.0112),
    (6, 7, 0.0092),
    (6, 11, 0.0082),
    (6, 31, 0.0250),
    (7, 8, 0.0046),
    (8, 9, 0.0363),
    (9, 39, 0.0250),
    (10, 11, 0.0043),
    (10, 13, 0.0043),
    (10, 32, 0.0200),
    (12, 11, 0.0435),
    (12, 13, 0.0435),
    (13, 14, 0.0101),
    (14, 15, 0.0217),
    (15, 16, 0.0094),
    (16, 17, 0.0089),
    (16, 19, 0.0195),
    (16, 21, 0.0135),
    (16, 24, 0.0059),
    (17, 18, 0.0082),
    (17, 27, 0.0173),
    (19, 20, 0.0138),
    (19, 33, 0.0142),
    (20, 34, 0.0180),
    (21, 22, 0.0140),
    (22, 23, 0.0096),
    (22, 35, 0.0143),
    (23, 24, 0.0350),
    (23, 36, 0.0272),
    (25, 26, 0.0323),
    (25, 37, 0.0232),
    (26, 27, 0.0147),
    (26, 28, 0.0474),
    (26, 29, 0.0625),
    (28, 29, 0.0151),
    (29, 38, 0.0156),
];

/// (bus, H in s, rating in MVA).
const MACHINES: [(usize, f64, f64); 10] = [
    (30, 4.20, 1000.0),
    (31, 3.03, 1000.0),
    (32, 3.58, 1000.0),
    (33, 2.86, 1000.0),
    (34, 2.60, 1000.0),
    (35, 3.48, 1000.0),
    (36, 2.64, 1000.0),
    (37, 2.43, 1000.0),
    (38, 3.45, 1000.0),
    (39, 5.00, 10000.0),
];

/// Twenty-one load buses used as disturbance locations by default.
pub const DEFAULT_DISTURBANCE_BUSES: [usize; 21] = [
    1, 2, 3, 4, 7, 8, 12, 14, 15, 16, 17, 18, 20, 21, 23, 24, 25, 26, 27, 28, 29,
];

/// Per-generator parameter override; unset fields keep their defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorOverride {
    pub id: usize,
    pub inertia: Option<f64>,
    pub rating: Option<f64>,
    pub damping: Option<f64>,
    pub droop_gain: Option<f64>,
    pub governor_time_constant: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelOverrides {
    /// Damping applied to every machine.
    pub damping: Option<f64>,
    /// Droop R applied to every machine (gain is 1/R).
    pub droop: Option<f64>,
    pub governor_time_constant: Option<f64>,
    pub nominal_frequency: Option<f64>,
    pub base_power: Option<f64>,
    #[serde(rename = "generator")]
    pub generators: Vec<GeneratorOverride>,
    /// Branches to drop, as `[from, to]` pairs.
    pub remove_lines: Vec<[usize; 2]>,
}

pub fn build_ieee39(overrides: &ModelOverrides) -> Result<GridModel> {
    let damping = overrides.damping.unwrap_or(DEFAULT_DAMPING);
    let droop = overrides.droop.unwrap_or(DEFAULT_DROOP);
    if !(droop > 0.0 && droop.is_finite()) {
        return Err(Error::config("droop", "must be positive"));
    }
    let governor = overrides
        .governor_time_constant
        .unwrap_or(DEFAULT_GOVERNOR_TIME_CONSTANT);

    let mut generators: Vec<Generator> = MACHINES
        .iter()
        .enumerate()
        .map(|(k, &(bus, inertia, rating))| Generator {
            id: k + 1,
            bus,
            inertia,
            rating,
            damping,
            droop_gain: 1.0 / droop,
            governor_time_constant: governor,
        })
        .collect();

    for o in &overrides.generators {
        let g = generators
            .get_mut(o.id.wrapping_sub(1))
            .ok_or_else(|| Error::config(format!("generator[{}]", o.id), "no such generator"))?;
        if let Some(v) = o.inertia {
            g.inertia = v;
        }
        if let Some(v) = o.rating {
            g.rating = v;
        }
        if let Some(v) = o.damping {
            g.damping = v;
        }
        if let Some(v) = o.droop_gain {
            g.droop_gain = v;
        }
        if let Some(v) = o.governor_time_constant {
            g.governor_time_constant = v;
        }
    }

    for [a, b] in &overrides.remove_lines {
        if !BRANCHES
            .iter()
            .any(|&(f, t, _)| (f, t) == (*a, *b) || (f, t) == (*b, *a))
        {
            return Err(Error::config(
                "remove_lines",
                format!("no branch between buses {a} and {b}"),
            ));
        }
    }
    let lines = BRANCHES
        .iter()
        .filter(|&&(f, t, _)| {
            !overrides
                .remove_lines
                .iter()
                .any(|&[a, b]| (f, t) == (a, b) || (f, t) == (b, a))
        })
        .map(|&(from, to, x)| Line {
            from,
            to,
            susceptance: 1.0 / x,
        })
        .collect();

    GridModel::new(
        IEEE39_BUS_COUNT,
        generators,
        lines,
        overrides.nominal_frequency.unwrap_or(DEFAULT_NOMINAL_FREQUENCY),
        overrides.base_power.unwrap_or(DEFAULT_BASE_POWER),
    )
}
