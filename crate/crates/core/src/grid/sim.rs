//! Classical multi-machine swing dynamics on the Kron-reduced DC network.
//!
//! Per generator i (deviations from the pre-onset operating point):
//!
//! ```text
//! dδ_i/dt   = 2π Δf_i
//! M_i dΔf_i/dt = ΔPm_i − ΔPe_i − D_i S_i Δf_i / f_n,   M_i = 2 H_i S_i / f_n
//! dΔPm_i/dt = (−S_i Δf_i / (R_i f_n) − ΔPm_i) / T_g,i
//! ΔPe_i     = S_base Σ_j K_ij δ_j + c_i
//! ```
//!
//! where K is the reduced coupling and c the share of the load step each
//! machine picks up at the instant of onset.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::kron::kron_reduce;
use super::model::GridModel;
use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_PERIOD: f64 = 0.005;
pub const DEFAULT_INTEGRATOR_STEP: f64 = 0.001;
pub const DEFAULT_DURATION: f64 = 3.0;
pub const DEFAULT_ONSET_TIME: f64 = 1.0;

/// A single load step, or the no-disturbance case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisturbanceScenario {
    bus: Option<usize>,
    magnitude: f64,
    pub onset_time: f64,
    pub duration: f64,
}

impl DisturbanceScenario {
    /// Load increase of `magnitude` MW at `bus`. The magnitude must be positive.
    pub fn at_bus(bus: usize, magnitude: f64, onset_time: f64, duration: f64) -> Result<Self> {
        if bus == 0 {
            return Err(Error::Input("bus ids are 1-based".into()));
        }
        if !(magnitude > 0.0 && magnitude.is_finite()) {
            return Err(Error::Input(format!(
                "disturbance at bus {bus} needs a positive magnitude, got {magnitude}"
            )));
        }
        Self::checked(Some(bus), magnitude, onset_time, duration)
    }

    pub fn none(onset_time: f64, duration: f64) -> Result<Self> {
        Self::checked(None, 0.0, onset_time, duration)
    }

    fn checked(bus: Option<usize>, magnitude: f64, onset_time: f64, duration: f64) -> Result<Self> {
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(Error::Input(format!("duration must be positive, got {duration}")));
        }
        if !onset_time.is_finite() {
            return Err(Error::Input("onset time must be finite".into()));
        }
        Ok(DisturbanceScenario {
            bus,
            magnitude,
            onset_time,
            duration,
        })
    }

    pub fn bus(&self) -> Option<usize> {
        self.bus
    }

    pub fn magnitude(&self) -> f64 {
        self.magnitude
    }

    /// Class index: 0 for no disturbance, otherwise the bus id.
    pub fn label_index(&self) -> usize {
        self.bus.unwrap_or(0)
    }
}

/// Sampled frequency at every generator. Column 0 is the onset instant.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyTrace {
    pub scenario_id: usize,
    pub scenario: DisturbanceScenario,
    pub sample_period: f64,
    /// generators × samples, in Hz.
    pub samples: DMatrix<f64>,
    pub pre_onset_frequency: Vec<f64>,
}

impl FrequencyTrace {
    pub fn generator_count(&self) -> usize {
        self.samples.nrows()
    }

    pub fn sample_count(&self) -> usize {
        self.samples.ncols()
    }

    /// Samples of generator `g` (0-based position) as a contiguous slice.
    pub fn generator_samples(&self, g: usize) -> Vec<f64> {
        self.samples.row(g).iter().copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub integrator_step: f64,
    pub sample_period: f64,
    pub duration: f64,
    pub onset_time: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            integrator_step: DEFAULT_INTEGRATOR_STEP,
            sample_period: DEFAULT_SAMPLE_PERIOD,
            duration: DEFAULT_DURATION,
            onset_time: DEFAULT_ONSET_TIME,
        }
    }
}

impl SimConfig {
    /// Integrator steps per output sample.
    pub fn substeps(&self) -> Result<usize> {
        if !(self.integrator_step > 0.0 && self.sample_period > 0.0) {
            return Err(Error::config("integrator_step", "step and sample period must be positive"));
        }
        let ratio = self.sample_period / self.integrator_step;
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::config(
                "integrator_step",
                format!(
                    "{} s does not divide the sample period {} s",
                    self.integrator_step, self.sample_period
                ),
            ));
        }
        Ok(n as usize)
    }

    pub fn sample_count(&self) -> usize {
        (self.duration / self.sample_period).round() as usize + 1
    }
}

/// Linear state-space form of the dynamics, precomputed once per scenario.
struct SwingSystem {
    n: usize,
    /// S_base · K, MW per rad.
    coupling: DMatrix<f64>,
    injection: Vec<f64>,
    inv_inertia: Vec<f64>,
    damping: Vec<f64>,
    governor_gain: Vec<f64>,
    inv_governor_tc: Vec<f64>,
}

impl SwingSystem {
    fn new(model: &GridModel, scenario: &DisturbanceScenario) -> Result<Self> {
        let mut load = vec![0.0; model.bus_count()];
        if let Some(bus) = scenario.bus() {
            if bus > model.bus_count() {
                return Err(Error::Input(format!("bus {bus} not in model")));
            }
            load[bus - 1] = scenario.magnitude();
        }
        let reduced = kron_reduce(model, &load)?;
        let fnom = model.nominal_frequency();
        let gens = model.generators();
        Ok(SwingSystem {
            n: gens.len(),
            coupling: reduced.coupling * model.base_power(),
            injection: reduced.injection.iter().copied().collect(),
            inv_inertia: gens.iter().map(|g| 1.0 / g.inertia_coefficient(fnom)).collect(),
            damping: gens.iter().map(|g| g.damping * g.rating / fnom).collect(),
            governor_gain: gens.iter().map(|g| g.droop_gain * g.rating / fnom).collect(),
            inv_governor_tc: gens.iter().map(|g| 1.0 / g.governor_time_constant).collect(),
        })
    }

    /// State layout: [δ (rad); Δf (Hz); ΔPm (MW)].
    fn derivative(&self, y: &[f64], dy: &mut [f64]) {
        let n = self.n;
        let (angle, rest) = y.split_at(n);
        let (freq, mech) = rest.split_at(n);
        for i in 0..n {
            let mut pe = self.injection[i];
            for j in 0..n {
                pe += self.coupling[(i, j)] * angle[j];
            }
            dy[i] = std::f64::consts::TAU * freq[i];
            dy[n + i] = (mech[i] - pe - self.damping[i] * freq[i]) * self.inv_inertia[i];
            dy[2 * n + i] = (-self.governor_gain[i] * freq[i] - mech[i]) * self.inv_governor_tc[i];
        }
    }
}

/// Classic fixed-step fourth-order Runge-Kutta.
struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    fn new(dim: usize) -> Self {
        Rk4 {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    fn step(&mut self, f: impl Fn(&[f64], &mut [f64]), y: &mut [f64], h: f64) {
        let n = y.len();
        f(y, &mut self.k1);
        for i in 0..n {
            self.tmp[i] = y[i] + 0.5 * h * self.k1[i];
        }
        f(&self.tmp, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = y[i] + 0.5 * h * self.k2[i];
        }
        f(&self.tmp, &mut self.k3);
        for i in 0..n {
            self.tmp[i] = y[i] + h * self.k3[i];
        }
        f(&self.tmp, &mut self.k4);
        for i in 0..n {
            y[i] += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// Integrates the post-onset response. The system sits at equilibrium before
/// the onset, so integration starts at t_0 with zero deviations.
pub fn simulate(
    model: &GridModel,
    scenario: &DisturbanceScenario,
    sim: &SimConfig,
) -> Result<FrequencyTrace> {
    let substeps = sim.substeps()?;
    let system = SwingSystem::new(model, scenario)?;
    let n = system.n;
    let fnom = model.nominal_frequency();
    let count = ((scenario.duration / sim.sample_period).round() as usize) + 1;

    let mut samples = DMatrix::from_element(n, count, fnom);
    let mut state = vec![0.0; 3 * n];
    let mut rk = Rk4::new(3 * n);
    let h = sim.integrator_step;

    for k in 1..count {
        for s in 0..substeps {
            rk.step(|y, dy| system.derivative(y, dy), &mut state, h);
            let bad = state[n..2 * n]
                .iter()
                .any(|df| !df.is_finite() || df.abs() > fnom);
            if bad {
                let time = scenario.onset_time
                    + ((k - 1) * substeps + s + 1) as f64 * h;
                return Err(Error::Divergence { time });
            }
        }
        for i in 0..n {
            samples[(i, k)] = fnom + state[n + i];
        }
    }

    Ok(FrequencyTrace {
        scenario_id: 0,
        scenario: *scenario,
        sample_period: sim.sample_period,
        samples,
        pre_onset_frequency: vec![fnom; n],
    })
}
