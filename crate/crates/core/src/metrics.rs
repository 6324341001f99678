//! Integral and pointwise error indices between two trajectories.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::trajectory::Trajectory;

/// Outcome of scoring one method against the reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub method: String,
    pub params: String,
    pub l2: [f64; 2],
    pub sup: [f64; 2],
    pub horizon: f64,
    pub grid_points: usize,
    pub reference: String,
    pub status: String,
    pub wall_seconds: f64,
}

impl ErrorReport {
    pub fn failed(method: &str, params: &str, reason: &str, horizon: f64, reference: &str) -> Self {
        Self {
            method: method.into(),
            params: params.into(),
            l2: [f64::NAN; 2],
            sup: [f64::NAN; 2],
            horizon,
            grid_points: 0,
            reference: reference.into(),
            status: format!("failed: {reason}"),
            wall_seconds: 0.0,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

const GRID_MATCH_RTOL: f64 = 1e-9;

/// Brings `candidate` onto the grid of `reference`, interpolating when the
/// grids differ.
fn aligned<T: Scalar>(candidate: &Trajectory<T>, reference: &Trajectory<T>) -> Result<Trajectory<T>> {
    let scale = reference.horizon().abs().max(T::one());
    let tol = T::lit(GRID_MATCH_RTOL) * scale;
    let same = candidate.len() == reference.len()
        && candidate
            .grid
            .iter()
            .zip(&reference.grid)
            .all(|(a, b)| (*a - *b).abs() <= tol);
    if same {
        Ok(candidate.clone())
    } else {
        candidate.resample(&reference.grid, tol)
    }
}

/// `sqrt(int_0^Ts e_i(t)^2 dt)` per compartment, trapezoid rule on the
/// reference grid.
pub fn l2_error<T: Scalar>(candidate: &Trajectory<T>, reference: &Trajectory<T>) -> Result<[T; 2]> {
    let cand = aligned(candidate, reference)?;
    if reference.len() < 2 {
        return Err(Error::invalid("l2 error needs at least two grid points"));
    }
    let half = T::lit(0.5);
    let mut acc = [T::zero(); 2];
    for k in 1..reference.len() {
        let dt = reference.grid[k] - reference.grid[k - 1];
        for (i, a) in acc.iter_mut().enumerate() {
            let e0 = cand.values[k - 1][i] - reference.values[k - 1][i];
            let e1 = cand.values[k][i] - reference.values[k][i];
            *a = *a + half * dt * (e0 * e0 + e1 * e1);
        }
    }
    Ok([acc[0].sqrt(), acc[1].sqrt()])
}

/// `max_t |e_i(t)|` per compartment on the reference grid.
pub fn sup_error<T: Scalar>(candidate: &Trajectory<T>, reference: &Trajectory<T>) -> Result<[T; 2]> {
    let cand = aligned(candidate, reference)?;
    let mut out = [T::zero(); 2];
    for (c, r) in cand.values.iter().zip(&reference.values) {
        for i in 0..2 {
            out[i] = out[i].max((c[i] - r[i]).abs());
        }
    }
    Ok(out)
}
