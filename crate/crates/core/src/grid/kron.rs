//! Kron reduction of the DC network onto generator buses.

use nalgebra::{DMatrix, DVector};

use super::model::GridModel;
use crate::error::{Error, Result};

/// Generator-only equivalent of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedNetwork {
    /// Reduced susceptance Laplacian between generator internal buses, per unit,
    /// indexed by 0-based generator position.
    pub coupling: DMatrix<f64>,
    /// Electrical power each generator picks up, in MW, when the given loads
    /// are applied at fixed rotor angles.
    pub injection: DVector<f64>,
}

/// Eliminates every bus without a generator by successive Schur complements.
///
/// `load_injection` is the per-bus load in MW (positive = consumption, index
/// `b - 1` for bus `b`). Loads are constant-power and therefore only enter the
/// injection term; the returned coupling matrix is symmetric and has zero row
/// sums.
pub fn kron_reduce(model: &GridModel, load_injection: &[f64]) -> Result<ReducedNetwork> {
    let n_bus = model.bus_count();
    if load_injection.len() != n_bus {
        return Err(Error::Input(format!(
            "load injection has {} entries, model has {n_bus} buses",
            load_injection.len()
        )));
    }
    let mut y = model.susceptance_laplacian();
    let mut rhs: Vec<f64> = load_injection.iter().map(|p| -p).collect();

    let is_gen: Vec<bool> = (1..=n_bus).map(|b| model.generator_at(b).is_some()).collect();
    eliminate_interior(&mut y, &mut rhs, &is_gen)?;

    let gens = model.generators();
    let n = gens.len();
    let coupling = DMatrix::from_fn(n, n, |a, b| y[(gens[a].bus - 1, gens[b].bus - 1)]);
    let injection = DVector::from_fn(n, |a, _| -rhs[gens[a].bus - 1]);
    Ok(ReducedNetwork { coupling, injection })
}

/// Gaussian elimination of every index with `keep[k] == false`, in ascending
/// order, applied to both the matrix and the right-hand side.
fn eliminate_interior(y: &mut DMatrix<f64>, rhs: &mut [f64], keep: &[bool]) -> Result<()> {
    let n = y.nrows();
    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut alive = vec![true; n];
    for k in 0..n {
        if keep[k] {
            continue;
        }
        let pivot = y[(k, k)];
        if !(pivot.abs() > 1e-12 * scale) {
            return Err(Error::SingularPivot { bus: k + 1, pivot });
        }
        alive[k] = false;
        let rest: Vec<usize> = (0..n).filter(|&i| alive[i]).collect();
        for &i in &rest {
            let yik = y[(i, k)];
            if yik == 0.0 {
                continue;
            }
            for &j in &rest {
                let ykj = y[(k, j)];
                if ykj != 0.0 {
                    // product before division keeps the update bitwise symmetric
                    y[(i, j)] -= yik * ykj / pivot;
                }
            }
            rhs[i] -= yik * rhs[k] / pivot;
        }
    }
    Ok(())
}
