use std::collections::VecDeque;

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// A synchronous machine attached to one bus.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    /// 1-based generator id.
    pub id: usize,
    /// 1-based bus id.
    pub bus: usize,
    /// Inertia constant H in seconds on the machine rating.
    pub inertia: f64,
    /// Rated apparent power S in MVA.
    pub rating: f64,
    /// Damping, per-unit torque per per-unit speed on the machine rating.
    pub damping: f64,
    /// Governor gain 1/R, per unit.
    pub droop_gain: f64,
    /// Governor time constant in seconds.
    pub governor_time_constant: f64,
}

impl Generator {
    /// Swing-equation coefficient 2HS/f_n in MW·s/Hz.
    pub fn inertia_coefficient(&self, nominal_frequency: f64) -> f64 {
        2.0 * self.inertia * self.rating / nominal_frequency
    }
}

/// A transmission branch with its series susceptance in per unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    pub susceptance: f64,
}

/// Immutable description of the simulated network. Construct through
/// [`GridModel::new`], which enforces the physical invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct GridModel {
    bus_count: usize,
    generators: Vec<Generator>,
    lines: Vec<Line>,
    nominal_frequency: f64,
    base_power: f64,
}

impl GridModel {
    pub fn new(
        bus_count: usize,
        generators: Vec<Generator>,
        lines: Vec<Line>,
        nominal_frequency: f64,
        base_power: f64,
    ) -> Result<Self> {
        if bus_count == 0 {
            return Err(Error::config("bus_count", "must be positive"));
        }
        if generators.is_empty() {
            return Err(Error::config("generators", "at least one generator is required"));
        }
        if !(nominal_frequency > 0.0 && nominal_frequency.is_finite()) {
            return Err(Error::config("nominal_frequency", "must be positive"));
        }
        if !(base_power > 0.0 && base_power.is_finite()) {
            return Err(Error::config("base_power", "must be positive"));
        }
        let mut seen_bus = vec![false; bus_count + 1];
        for (k, g) in generators.iter().enumerate() {
            let field = |name: &str| format!("generator[{}].{name}", g.id);
            if g.id != k + 1 {
                return Err(Error::config(
                    format!("generator[{}].id", k + 1),
                    "generator ids must be 1..N in order",
                ));
            }
            if g.bus == 0 || g.bus > bus_count {
                return Err(Error::config(field("bus"), format!("bus {} does not exist", g.bus)));
            }
            if seen_bus[g.bus] {
                return Err(Error::config(
                    field("bus"),
                    format!("bus {} already hosts a generator", g.bus),
                ));
            }
            seen_bus[g.bus] = true;
            if !(g.inertia > 0.0 && g.inertia.is_finite()) {
                return Err(Error::config(field("inertia"), "must be positive"));
            }
            if !(g.rating > 0.0 && g.rating.is_finite()) {
                return Err(Error::config(field("rating"), "must be positive"));
            }
            if !(g.damping >= 0.0 && g.damping.is_finite()) {
                return Err(Error::config(field("damping"), "must be nonnegative"));
            }
            if !(g.droop_gain >= 0.0 && g.droop_gain.is_finite()) {
                return Err(Error::config(field("droop_gain"), "must be nonnegative"));
            }
            if !(g.governor_time_constant > 0.0 && g.governor_time_constant.is_finite()) {
                return Err(Error::config(field("governor_time_constant"), "must be positive"));
            }
        }
        for (k, line) in lines.iter().enumerate() {
            let name = format!("line[{k}]");
            if line.from == 0 || line.from > bus_count || line.to == 0 || line.to > bus_count {
                return Err(Error::config(name, "endpoint bus does not exist"));
            }
            if line.from == line.to {
                return Err(Error::config(name, "self-loop"));
            }
            if !(line.susceptance.is_finite() && line.susceptance > 0.0) {
                return Err(Error::config(name, "susceptance must be positive"));
            }
        }
        let model = GridModel {
            bus_count,
            generators,
            lines,
            nominal_frequency,
            base_power,
        };
        if !model.is_connected() {
            return Err(Error::config("lines", "network graph is disconnected"));
        }
        Ok(model)
    }

    pub fn bus_count(&self) -> usize {
        self.bus_count
    }

    pub fn generator_count(&self) -> usize {
        self.generators.len()
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn nominal_frequency(&self) -> f64 {
        self.nominal_frequency
    }

    pub fn base_power(&self) -> f64 {
        self.base_power
    }

    /// Generator hosted at `bus`, if any.
    pub fn generator_at(&self, bus: usize) -> Option<&Generator> {
        self.generators.iter().find(|g| g.bus == bus)
    }

    /// Bus admittance (DC Laplacian) matrix, indexed by 0-based bus.
    pub fn susceptance_laplacian(&self) -> DMatrix<f64> {
        let n = self.bus_count;
        let mut y = DMatrix::zeros(n, n);
        for line in &self.lines {
            let (i, j) = (line.from - 1, line.to - 1);
            y[(i, j)] -= line.susceptance;
            y[(j, i)] -= line.susceptance;
            y[(i, i)] += line.susceptance;
            y[(j, j)] += line.susceptance;
        }
        y
    }

    /// Off-diagonal line susceptance matrix (zero diagonal, symmetric).
    pub fn line_susceptance(&self) -> DMatrix<f64> {
        let n = self.bus_count;
        let mut b = DMatrix::zeros(n, n);
        for line in &self.lines {
            let (i, j) = (line.from - 1, line.to - 1);
            b[(i, j)] += line.susceptance;
            b[(j, i)] += line.susceptance;
        }
        b
    }

    /// Breadth-first search over the line list.
    pub fn is_connected(&self) -> bool {
        let n = self.bus_count;
        let mut adj = vec![Vec::new(); n];
        for line in &self.lines {
            adj[line.from - 1].push(line.to - 1);
            adj[line.to - 1].push(line.from - 1);
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == n
    }

    /// SHA-256 over a canonical text rendering of every parameter.
    pub fn content_hash(&self) -> String {
        let mut text = format!(
            "buses {}\nfn {}\nbase {}\n",
            self.bus_count, self.nominal_frequency, self.base_power
        );
        for g in &self.generators {
            text += &format!(
                "gen {} {} {} {} {} {} {}\n",
                g.id, g.bus, g.inertia, g.rating, g.damping, g.droop_gain, g.governor_time_constant
            );
        }
        for l in &self.lines {
            text += &format!("line {} {} {}\n", l.from, l.to, l.susceptance);
        }
        hex_digest(text.as_bytes())
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gen(id: usize, bus: usize) -> Generator {
        Generator {
            id,
            bus,
            inertia: 3.0,
            rating: 100.0,
            damping: 1.0,
            droop_gain: 20.0,
            governor_time_constant: 0.5,
        }
    }

    fn line(from: usize, to: usize) -> Line {
        Line { from, to, susceptance: 10.0 }
    }

    #[test]
    fn rejects_disconnected_graph() {
        let err = GridModel::new(3, vec![gen(1, 1)], vec![line(1, 2)], 60.0, 100.0).unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "lines"));
    }

    #[test]
    fn rejects_two_generators_on_one_bus() {
        let err = GridModel::new(2, vec![gen(1, 1), gen(2, 1)], vec![line(1, 2)], 60.0, 100.0)
            .unwrap_err();
        assert!(err.to_string().contains("generator[2].bus"), "{err}");
    }

    #[test]
    fn laplacian_rows_sum_to_zero() {
        let m = GridModel::new(3, vec![gen(1, 1)], vec![line(1, 2), line(2, 3)], 60.0, 100.0)
            .unwrap();
        let y = m.susceptance_laplacian();
        for i in 0..3 {
            assert!(y.row(i).sum().abs() < 1e-12);
        }
        let b = m.line_susceptance();
        assert_eq!(b, b.transpose());
        assert!((0..3).all(|i| b[(i, i)] == 0.0));
    }

    #[test]
    fn hash_changes_with_parameters() {
        let a = GridModel::new(2, vec![gen(1, 1)], vec![line(1, 2)], 60.0, 100.0).unwrap();
        let mut g = gen(1, 1);
        g.inertia = 4.0;
        let b = GridModel::new(2, vec![g], vec![line(1, 2)], 60.0, 100.0).unwrap();
        assert_ne!(a.content_hash(), b.content_hash());
        assert_eq!(a.content_hash(), a.clone().content_hash());
    }
}
