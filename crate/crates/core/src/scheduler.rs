//! Open-loop dose scheduling on the GL model and its evaluation against the
//! high-fidelity commensurate simulator.
//!
//! Doses `u_j` are given at `t_j = j t_d`, entering the GL recursion at step
//! `k_j = j t_d / t_c`. The states are condensed away, leaving a QP over the
//! dose vector alone.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::abm::abmpc_solve;
use crate::commensurate::{expand_commensurate, InputSignal};
use crate::error::{Error, Result};
use crate::gl::{build_gl_realization, run, GlRealization};
use crate::pk::{PatientSample, PkParams};
use crate::qp::{solve_dense_qp, AdmmSettings, DenseQp, KktResiduals};
use crate::trajectory::Trajectory;

/// Set-point for the tracked states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Reference {
    Constant([f64; 2]),
    /// One entry per tracked sample `k = 0..=N+1`.
    Trajectory(Vec<[f64; 2]>),
}

impl Reference {
    fn at(&self, k: usize) -> [f64; 2] {
        match self {
            Reference::Constant(r) => *r,
            Reference::Trajectory(v) => v[k],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DosingProblem {
    /// Control sampling time (days), also the GL step.
    pub t_c: f64,
    /// Dosing interval (days).
    pub t_d: f64,
    /// Treatment duration (days).
    pub n_d: f64,
    /// GL memory length in steps.
    pub nu: usize,
    pub q: [[f64; 2]; 2],
    pub x_ref: Reference,
    pub x_max: [f64; 2],
    pub u_max: f64,
    pub x0: [f64; 2],
    pub params: PkParams<f64>,
    pub solver: AdmmSettings,
}

impl Default for DosingProblem {
    fn default() -> Self {
        Self {
            t_c: 0.01,
            t_d: 0.5,
            n_d: 7.0,
            nu: 500,
            q: [[0.0, 0.0], [0.0, 1.0]],
            x_ref: Reference::Constant([0.0, 0.3]),
            x_max: [0.5, 0.5],
            u_max: 0.5,
            x0: [0.0, 0.0],
            params: PkParams::nominal(),
            solver: AdmmSettings::default(),
        }
    }
}

fn integer_ratio(num: f64, den: f64, what: &str) -> Result<usize> {
    let r = num / den;
    let k = r.round();
    if !(k >= 1.0) || (r - k).abs() > 1e-9 * k.max(1.0) {
        return Err(Error::invalid(format!("{what} = {r} must be a positive integer")));
    }
    Ok(k as usize)
}

impl DosingProblem {
    /// Dosing stride in control steps.
    pub fn stride(&self) -> Result<usize> {
        integer_ratio(self.t_d, self.t_c, "t_d / t_c")
    }

    /// Prediction horizon `N = N_d / t_c` in control steps.
    pub fn horizon_steps(&self) -> Result<usize> {
        integer_ratio(self.n_d, self.t_c, "N_d / t_c")
    }

    pub fn dose_count(&self) -> Result<usize> {
        integer_ratio(self.n_d, self.t_d, "N_d / t_d")
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("t_c", self.t_c), ("t_d", self.t_d), ("n_d", self.n_d)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} = {v} must be positive")));
            }
        }
        self.stride()?;
        self.horizon_steps()?;
        self.dose_count()?;
        if self.nu == 0 {
            return Err(Error::invalid("nu must be at least 1"));
        }
        let [[a, b], [c, d]] = self.q;
        let off = 0.5 * (b + c);
        if !(a >= -1e-12 && d >= -1e-12 && a * d - off * off >= -1e-12) {
            return Err(Error::invalid("Q must be positive semidefinite"));
        }
        for (name, v) in [("x_max[0]", self.x_max[0]), ("x_max[1]", self.x_max[1]), ("u_max", self.u_max)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} = {v} must be finite and non-negative")));
            }
        }
        if let Reference::Trajectory(v) = &self.x_ref {
            let need = self.horizon_steps()? + 2;
            if v.len() != need {
                return Err(Error::invalid(format!("x_ref has {} samples, expected {need}", v.len())));
            }
        }
        PkParams::new(self.params.alpha, self.params.k10, self.params.k12, self.params.k21)?;
        Ok(())
    }

    pub fn realization(&self) -> Result<GlRealization<f64>> {
        build_gl_realization(&self.params, self.t_c, self.nu)
    }
}

/// The condensed problem `min 1/2 u'Hu + c'u + constant` subject to
/// `G u <= g` and `0 <= u <= u_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct QpDescription {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    /// Cost of the undosed trajectory.
    pub constant: f64,
    pub u_max: f64,
    pub x_max: [f64; 2],
    /// Rows alternate `x_k[i] <= x_max[i]` and `-x_k[i] <= 0` for
    /// `k = 1..=N`, `i = 0, 1`.
    pub rows: DMatrix<f64>,
    pub rhs: DVector<f64>,
    /// `x_k = free[k] + maps[k] u` for `k = 0..=N+1`.
    pub free: Vec<[f64; 2]>,
    pub maps: Vec<DMatrix<f64>>,
    pub dose_steps: Vec<usize>,
    pub t_c: f64,
    pub t_d: f64,
    pub solver: AdmmSettings,
}

impl QpDescription {
    pub fn variables(&self) -> usize {
        self.linear.len()
    }

    /// Per-step input sequence for a dose vector; zero off the dosing grid.
    pub fn step_inputs(&self, doses: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.free.len()];
        for (&k, &u) in self.dose_steps.iter().zip(doses) {
            v[k] = u;
        }
        v
    }

    /// `(N+2) x n_doses` matrix mapping doses to per-step inputs.
    pub fn input_selection(&self) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(self.free.len(), self.variables());
        for (j, &k) in self.dose_steps.iter().enumerate() {
            s[(k, j)] = 1.0;
        }
        s
    }

    pub fn predict(&self, doses: &DVector<f64>) -> Vec<[f64; 2]> {
        self.free
            .iter()
            .zip(&self.maps)
            .map(|(f, m)| {
                let x = m * doses;
                [f[0] + x[0], f[1] + x[1]]
            })
            .collect()
    }

    pub fn cost(&self, doses: &DVector<f64>) -> f64 {
        0.5 * doses.dot(&(&self.hessian * doses)) + self.linear.dot(doses) + self.constant
    }

    fn to_dense(&self) -> Result<DenseQp> {
        let n = self.variables();
        let pairs = self.rows.nrows() / 2;
        let m = pairs + n;
        let mut a = DMatrix::zeros(m, n);
        let mut lower = DVector::zeros(m);
        let mut upper = DVector::zeros(m);
        for r in 0..pairs {
            a.row_mut(r).copy_from(&self.rows.row(2 * r));
            upper[r] = self.rhs[2 * r];
            lower[r] = -self.rhs[2 * r + 1];
        }
        for j in 0..n {
            a[(pairs + j, j)] = 1.0;
            upper[pairs + j] = self.u_max;
        }
        DenseQp::new(self.hessian.clone(), self.linear.clone(), a, lower, upper)
    }
}

/// Condenses the GL dynamics by superposition of the free response and
/// shifted unit-dose responses.
pub fn build_qp(problem: &DosingProblem, realization: &GlRealization<f64>, x0: [f64; 2]) -> Result<QpDescription> {
    problem.validate()?;
    if (realization.h - problem.t_c).abs() > 1e-12 * problem.t_c {
        return Err(Error::invalid(format!(
            "realization step {} differs from t_c = {}",
            realization.h, problem.t_c
        )));
    }
    let n_steps = problem.horizon_steps()?;
    let stride = problem.stride()?;
    let n_doses = problem.dose_count()?;
    let samples = n_steps + 2;

    let mut free = Vec::with_capacity(samples);
    run(realization, samples - 1, x0, |_| 0.0, |_, x| free.push(x))?;
    let mut impulse = Vec::with_capacity(samples);
    run(realization, samples - 1, [0.0, 0.0], |k| if k == 0 { 1.0 } else { 0.0 }, |_, x| impulse.push(x))?;

    let dose_steps: Vec<usize> = (0..n_doses).map(|j| j * stride).collect();
    let maps: Vec<DMatrix<f64>> = (0..samples)
        .map(|k| {
            DMatrix::from_fn(2, n_doses, |i, j| {
                let kj = dose_steps[j];
                if k > kj {
                    impulse[k - kj][i]
                } else {
                    0.0
                }
            })
        })
        .collect();

    let [[q00, q01], [q10, q11]] = problem.q;
    let off = 0.5 * (q01 + q10);
    let q = DMatrix::from_row_slice(2, 2, &[q00, off, off, q11]);
    let mut hessian = DMatrix::zeros(n_doses, n_doses);
    let mut linear = DVector::zeros(n_doses);
    let mut constant = 0.0;
    for k in 0..samples {
        let r = problem.x_ref.at(k);
        let e = DVector::from_vec(vec![r[0] - free[k][0], r[1] - free[k][1]]);
        let qm = &q * &maps[k];
        hessian += maps[k].transpose() * &qm * 2.0;
        linear -= qm.transpose() * &e * 2.0;
        constant += e.dot(&(&q * &e));
    }
    hessian = (&hessian + hessian.transpose()) * 0.5;

    let mut rows = DMatrix::zeros(4 * n_steps, n_doses);
    let mut rhs = DVector::zeros(4 * n_steps);
    for k in 1..=n_steps {
        for i in 0..2 {
            let r = 4 * (k - 1) + 2 * i;
            let m = maps[k].row(i);
            rows.row_mut(r).copy_from(&m);
            rows.row_mut(r + 1).copy_from(&(-m));
            rhs[r] = problem.x_max[i] - free[k][i];
            rhs[r + 1] = free[k][i];
        }
    }

    Ok(QpDescription {
        hessian,
        linear,
        constant,
        u_max: problem.u_max,
        x_max: problem.x_max,
        rows,
        rhs,
        free,
        maps,
        dose_steps,
        t_c: problem.t_c,
        t_d: problem.t_d,
        solver: problem.solver,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub doses: Vec<f64>,
    pub times: Vec<f64>,
    pub status: String,
    /// Tracking cost including the undosed constant.
    pub objective: f64,
    pub kkt: KktResiduals,
    pub iterations: usize,
    pub predicted: Trajectory<f64>,
    /// Largest violation of the state bounds by the prediction.
    pub state_violation: f64,
}

#[derive(Serialize)]
struct ScheduleJson<'a> {
    doses: &'a [f64],
    times: &'a [f64],
    status: &'a str,
    objective: f64,
    kkt: KktResiduals,
    iterations: usize,
    state_violation: f64,
}

impl Schedule {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e: std::io::Error| Error::Io(e.to_string());
        writeln!(out, "j,t_days,dose_ng").map_err(io)?;
        for (j, (t, u)) in self.times.iter().zip(&self.doses).enumerate() {
            writeln!(out, "{j},{t},{u}").map_err(io)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ScheduleJson {
            doses: &self.doses,
            times: &self.times,
            status: &self.status,
            objective: self.objective,
            kkt: self.kkt,
            iterations: self.iterations,
            state_violation: self.state_violation,
        })
        .expect("schedule serializes")
    }
}

pub fn solve_qp(qp: &QpDescription, tolerance: f64) -> Result<Schedule> {
    let dense = qp.to_dense()?;
    let settings = AdmmSettings {
        tolerance,
        ..qp.solver
    };
    let sol = solve_dense_qp(&dense, &settings)?;
    let doses: Vec<f64> = sol.x.iter().map(|u| u.clamp(0.0, qp.u_max)).collect();
    let u = DVector::from_vec(doses.clone());
    let states = qp.predict(&u);
    let mut violation: f64 = 0.0;
    for x in &states[1..states.len() - 1] {
        for i in 0..2 {
            violation = violation.max(x[i] - qp.x_max[i]).max(-x[i]);
        }
    }
    let grid: Vec<f64> = (0..states.len()).map(|k| k as f64 * qp.t_c).collect();
    let mut predicted = Trajectory::new(grid, states, "gl prediction")?;
    predicted.step = qp.t_c;
    Ok(Schedule {
        times: qp.dose_steps.iter().map(|&k| k as f64 * qp.t_c).collect(),
        status: if sol.polished { "solved (polished)" } else { "solved" }.into(),
        objective: qp.cost(&u),
        kkt: sol.kkt,
        iterations: sol.iterations,
        predicted,
        state_violation: violation,
        doses,
    })
}

/// Builds and solves the problem from `problem.x0`.
pub fn schedule(problem: &DosingProblem) -> Result<(QpDescription, Schedule)> {
    let realization = problem.realization()?;
    let qp = build_qp(problem, &realization, problem.x0)?;
    let s = solve_qp(&qp, problem.solver.tolerance)?;
    Ok((qp, s))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub patient_id: usize,
    /// High-fidelity response on the control grid.
    pub applied: Trajectory<f64>,
    /// `applied - predicted` per control step.
    pub discrepancy: Vec<[f64; 2]>,
    pub sup_discrepancy: [f64; 2],
    /// Sum of squared `A2 - x_ref2` over the control grid.
    pub tracking_error: f64,
    /// Largest excursion outside `[0, x_max]`.
    pub max_violation: f64,
}

/// Applies the schedule to the patient's commensurate model, solved by ABM.
/// Each dose is infused at rate `u_j / t_c` over `[t_j, t_j + t_c)`.
pub fn evaluate_schedule(
    schedule: &Schedule,
    patient: &PatientSample,
    hifi_step: f64,
    problem: &DosingProblem,
) -> Result<Evaluation> {
    if !(hifi_step > 0.0 && hifi_step <= 1e-4 * (1.0 + 1e-9)) {
        return Err(Error::invalid(format!("high-fidelity step {hifi_step} must be in (0, 1e-4]")));
    }
    let grid = &schedule.predicted.grid;
    let horizon = *grid.last().expect("non-empty prediction");
    let system = expand_commensurate(&patient.params(), patient.p_hat, patient.q)?
        .with_initial_amounts(problem.x0[0], problem.x0[1]);
    let input = InputSignal::from_doses(&schedule.times, &schedule.doses, problem.t_c)?;
    let hifi = abmpc_solve(&system, &input, hifi_step, horizon)?;
    let applied = hifi.resample(grid, 1e-9 * horizon.max(1.0))?;
    let mut sup = [0.0f64; 2];
    let mut tracking = 0.0;
    let mut violation = 0.0f64;
    let discrepancy: Vec<[f64; 2]> = applied
        .values
        .iter()
        .zip(&schedule.predicted.values)
        .enumerate()
        .map(|(k, (a, p))| {
            let d = [a[0] - p[0], a[1] - p[1]];
            sup[0] = sup[0].max(d[0].abs());
            sup[1] = sup[1].max(d[1].abs());
            let r = problem.x_ref.at(k);
            tracking += (a[1] - r[1]).powi(2);
            for i in 0..2 {
                violation = violation.max(a[i] - problem.x_max[i]).max(-a[i]);
            }
            d
        })
        .collect();
    Ok(Evaluation {
        patient_id: patient.id,
        applied,
        discrepancy,
        sup_discrepancy: sup,
        tracking_error: tracking,
        max_violation: violation,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationReport {
    /// In patient-id order; failures keep their slot.
    pub results: Vec<std::result::Result<Evaluation, String>>,
    pub grid: Vec<f64>,
    /// `[min, median, max]` of `A2` over the successful patients.
    pub envelope: Vec<[f64; 3]>,
}

impl PopulationReport {
    pub fn failures(&self) -> usize {
        self.results.iter().filter(|r| r.is_err()).count()
    }

    pub fn write_envelope_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e: std::io::Error| Error::Io(e.to_string());
        writeln!(out, "t,A2_min,A2_median,A2_max").map_err(io)?;
        for (t, [lo, med, hi]) in self.grid.iter().zip(&self.envelope) {
            writeln!(out, "{t},{lo},{med},{hi}").map_err(io)?;
        }
        Ok(())
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Applies one schedule to every patient in parallel.
pub fn population_run(
    schedule: &Schedule,
    population: &[PatientSample],
    hifi_step: f64,
    problem: &DosingProblem,
) -> Result<PopulationReport> {
    if population.is_empty() {
        return Err(Error::invalid("population must not be empty"));
    }
    let mut results: Vec<(usize, std::result::Result<Evaluation, String>)> = population
        .par_iter()
        .map(|p| (p.id, evaluate_schedule(schedule, p, hifi_step, problem).map_err(|e| e.to_string())))
        .collect();
    results.sort_by_key(|(id, _)| *id);
    let results: Vec<_> = results.into_iter().map(|(_, r)| r).collect();
    let grid = schedule.predicted.grid.clone();
    let ok: Vec<&Evaluation> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
    let envelope = if ok.is_empty() {
        Vec::new()
    } else {
        (0..grid.len())
            .map(|k| {
                let mut v: Vec<f64> = ok.iter().map(|e| e.applied.values[k][1]).collect();
                v.sort_by(f64::total_cmp);
                [v[0], median(&v), v[v.len() - 1]]
            })
            .collect()
    };
    Ok(PopulationReport { results, grid, envelope })
}
