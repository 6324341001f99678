//! Commensurate-order expansion of the model and the input signals shared by
//! the time-domain solvers.

use nalgebra::{DMatrix, DVector};
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frac::gamma_fn;
use crate::pk::PkParams;

/// Largest accepted denominator `q`.
pub const MAX_COMMENSURATE_DENOMINATOR: u32 = 1000;

/// `D^gamma x = A x + b u` with `gamma = 1/q` and `2q` states.
///
/// States `0..q` hold `D^{i gamma} A1`, states `q..2q` hold `D^{i gamma} A2`.
#[derive(Debug, Clone, PartialEq)]
pub struct CommensurateSystem {
    pub gamma: Ratio<u32>,
    pub p: u32,
    pub q: u32,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub x0: DVector<f64>,
    output_indices: (usize, usize),
    entries: Vec<(usize, usize, f64)>,
    input_chain: Option<Vec<usize>>,
}

impl CommensurateSystem {
    /// A general linear system `D^{1/q} x = A x + b u` with the two reported
    /// components chosen by `outputs`.
    pub fn linear(
        q: u32,
        a: DMatrix<f64>,
        b: DVector<f64>,
        x0: DVector<f64>,
        outputs: (usize, usize),
    ) -> Result<Self> {
        let n = a.nrows();
        if q == 0 || a.ncols() != n || b.len() != n || x0.len() != n || outputs.0 >= n || outputs.1 >= n {
            return Err(Error::invalid("inconsistent linear system dimensions"));
        }
        let entries = sparse_entries(&a);
        Ok(Self {
            gamma: Ratio::new(1, q),
            p: 0,
            q,
            a,
            b,
            x0,
            output_indices: outputs,
            entries,
            input_chain: None,
        })
    }

    pub fn dimension(&self) -> usize {
        self.a.nrows()
    }

    pub fn gamma_f64(&self) -> f64 {
        *self.gamma.numer() as f64 / *self.gamma.denom() as f64
    }

    /// Indices of the physical compartments `A1`, `A2`.
    pub fn outputs(&self) -> (usize, usize) {
        self.output_indices
    }

    pub fn with_initial_amounts(mut self, a1: f64, a2: f64) -> Self {
        let (i1, i2) = self.outputs();
        self.x0.fill(0.0);
        self.x0[i1] = a1;
        self.x0[i2] = a2;
        self
    }

    /// `out = A x` using the sparse structure.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for &(r, c, v) in &self.entries {
            out[r] += v * x[c];
        }
    }

    /// States `c_0, ..., c_{L-1}` linked by unit entries `A[c_i][c_{i+1}]`
    /// with the input entering row `c_{L-1}` only. Known for expanded models.
    pub fn input_chain(&self) -> Option<&[usize]> {
        self.input_chain.as_deref()
    }

    /// Rows other than `q-1` and `2q-1` with more than the chain entry.
    pub fn coupling_rows(&self) -> Vec<usize> {
        let n = self.dimension();
        (0..n)
            .filter(|&r| {
                let nonzero: Vec<usize> = (0..n).filter(|&c| self.a[(r, c)] != 0.0).collect();
                !(nonzero.len() == 1 && nonzero[0] == r + 1)
            })
            .collect()
    }
}

/// Builds the chain system for `1 - alpha ~ p/q`.
pub fn expand_commensurate(params: &PkParams<f64>, p: u32, q: u32) -> Result<CommensurateSystem> {
    if p == 0 || p >= q {
        return Err(Error::invalid(format!("need 0 < p < q, got p = {p}, q = {q}")));
    }
    if q > MAX_COMMENSURATE_DENOMINATOR {
        return Err(Error::invalid(format!(
            "q = {q} exceeds {MAX_COMMENSURATE_DENOMINATOR}; the expansion would have {} states",
            2 * q
        )));
    }
    let (pu, qu) = (p as usize, q as usize);
    let n = 2 * qu;
    let mut entries = Vec::with_capacity(n + 4);
    for i in 0..n {
        if i != qu - 1 && i != n - 1 {
            entries.push((i, i + 1, 1.0));
        }
    }
    let PkParams { k10, k12, k21, .. } = *params;
    entries.push((qu - 1, 0, -(k12 + k10)));
    entries.push((qu - 1, qu + pu, k21));
    entries.push((n - 1, 0, k12));
    entries.push((n - 1, qu + pu, -k21));
    entries.retain(|e| e.2 != 0.0);
    let mut a = DMatrix::zeros(n, n);
    for &(r, c, v) in &entries {
        a[(r, c)] += v;
    }
    let mut b = DVector::zeros(n);
    b[qu - 1] = 1.0;
    Ok(CommensurateSystem {
        gamma: Ratio::new(1, q),
        p,
        q,
        a,
        b,
        x0: DVector::zeros(n),
        output_indices: (0, qu),
        entries,
        input_chain: Some((0..qu).collect()),
    })
}

fn sparse_entries(a: &DMatrix<f64>) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for r in 0..a.nrows() {
        for c in 0..a.ncols() {
            if a[(r, c)] != 0.0 {
                out.push((r, c, a[(r, c)]));
            }
        }
    }
    out
}

/// A rate `rate` (ng/day) applied on `[start, start + duration)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub start: f64,
    pub duration: f64,
    pub rate: f64,
}

/// Sum of rectangular infusion pulses.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InputSignal {
    pub pulses: Vec<Pulse>,
}

impl InputSignal {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn new(pulses: Vec<Pulse>) -> Result<Self> {
        for p in &pulses {
            if !(p.start >= 0.0 && p.duration > 0.0 && p.rate.is_finite() && p.start.is_finite()) {
                return Err(Error::invalid("pulses need start >= 0, duration > 0 and a finite rate"));
            }
        }
        Ok(Self { pulses })
    }

    /// Doses `amounts[j]` given as rates `amount / width` on `[times[j], times[j] + width)`.
    pub fn from_doses(times: &[f64], amounts: &[f64], width: f64) -> Result<Self> {
        if times.len() != amounts.len() {
            return Err(Error::invalid("dose times and amounts differ in length"));
        }
        Self::new(
            times
                .iter()
                .zip(amounts)
                .filter(|(_, &d)| d != 0.0)
                .map(|(&start, &d)| Pulse {
                    start,
                    duration: width,
                    rate: d / width,
                })
                .collect(),
        )
    }

    pub fn is_zero(&self) -> bool {
        self.pulses.iter().all(|p| p.rate == 0.0)
    }

    pub fn value(&self, t: f64) -> f64 {
        self.pulses
            .iter()
            .filter(|p| t >= p.start && t < p.start + p.duration)
            .map(|p| p.rate)
            .sum()
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            pulses: self.pulses.iter().map(|p| Pulse { rate: p.rate * k, ..*p }).collect(),
        }
    }

    /// Riemann-Liouville integral `I^gamma u (t)`, exact for pulses.
    pub fn fractional_integral(&self, gamma: f64, t: f64) -> f64 {
        if self.pulses.is_empty() {
            return 0.0;
        }
        let g = gamma_fn(gamma + 1.0).expect("gamma + 1 > 0");
        let ramp = |x: f64| if x > 0.0 { x.powf(gamma) } else { 0.0 };
        self.pulses
            .iter()
            .map(|p| p.rate * (ramp(t - p.start) - ramp(t - p.start - p.duration)))
            .sum::<f64>()
            / g
    }
}
