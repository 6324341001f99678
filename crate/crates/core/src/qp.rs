//! Dense convex quadratic programs
//!
//! `minimize 1/2 x'Px + q'x  subject to  lower <= Ax <= upper`
//!
//! solved by ADMM (operator splitting with over-relaxation and a cached
//! Cholesky factor) followed by an active-set polishing step.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseQp {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub a: DMatrix<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdmmSettings {
    pub rho: f64,
    pub sigma: f64,
    pub relaxation: f64,
    pub max_iterations: usize,
    /// Absolute and relative termination tolerance, also the KKT threshold.
    pub tolerance: f64,
    pub infeasibility_tolerance: f64,
    pub polish: bool,
    pub check_every: usize,
}

impl Default for AdmmSettings {
    fn default() -> Self {
        Self {
            rho: 0.1,
            sigma: 1e-6,
            relaxation: 1.6,
            max_iterations: 50_000,
            tolerance: 1e-6,
            infeasibility_tolerance: 1e-7,
            polish: true,
            check_every: 10,
        }
    }
}

/// Infinity norms of the optimality conditions. The multiplier `y_i` is
/// positive when the upper bound of row `i` is active and negative for the
/// lower bound.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.dual).max(self.complementarity)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub polished: bool,
    pub kkt: KktResiduals,
}

const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const EQUALITY_RHO_SCALE: f64 = 1e3;

impl DenseQp {
    pub fn new(p: DMatrix<f64>, q: DVector<f64>, a: DMatrix<f64>, lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        let n = q.len();
        let m = lower.len();
        if p.shape() != (n, n) || a.shape() != (m, n) || upper.len() != m {
            return Err(Error::invalid(format!(
                "QP dimensions disagree: P {:?}, q {}, A {:?}, bounds {}/{}",
                p.shape(),
                n,
                a.shape(),
                m,
                upper.len()
            )));
        }
        for i in 0..m {
            if lower[i].is_nan() || upper[i].is_nan() || lower[i] > upper[i] {
                return Err(Error::Infeasible(format!(
                    "row {i} has empty bound interval [{}, {}]",
                    lower[i], upper[i]
                )));
            }
        }
        if p.iter().chain(q.iter()).chain(a.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("QP data must be finite"));
        }
        Ok(Self { p, q, a, lower, upper })
    }

    pub fn variables(&self) -> usize {
        self.q.len()
    }

    pub fn rows(&self) -> usize {
        self.lower.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.p * x)) + self.q.dot(x)
    }

    pub fn kkt_residuals(&self, x: &DVector<f64>, y: &DVector<f64>) -> KktResiduals {
        let ax = &self.a * x;
        let grad = &self.p * x + &self.q + self.a.transpose() * y;
        let mut r = KktResiduals {
            stationarity: grad.amax(),
            ..Default::default()
        };
        for i in 0..self.rows() {
            let (lo, hi) = (self.lower[i], self.upper[i]);
            r.primal = r.primal.max(ax[i] - hi).max(lo - ax[i]);
            let yi = y[i];
            if yi > 0.0 {
                if hi.is_finite() {
                    r.complementarity = r.complementarity.max((yi * (hi - ax[i])).abs());
                } else {
                    r.dual = r.dual.max(yi);
                }
            } else if yi < 0.0 {
                if lo.is_finite() {
                    r.complementarity = r.complementarity.max((yi * (ax[i] - lo)).abs());
                } else {
                    r.dual = r.dual.max(-yi);
                }
            }
        }
        r
    }
}

/// Problem after row equilibration and cost scaling.
struct Scaled {
    p: DMatrix<f64>,
    q: DVector<f64>,
    a: DMatrix<f64>,
    lower: DVector<f64>,
    upper: DVector<f64>,
    row_scale: DVector<f64>,
    cost_scale: f64,
}

impl Scaled {
    fn new(qp: &DenseQp) -> Self {
        let m = qp.rows();
        let row_scale = DVector::from_fn(m, |i, _| {
            let norm = qp.a.row(i).amax();
            if norm > 0.0 {
                1.0 / norm
            } else {
                1.0
            }
        });
        let mut a = qp.a.clone();
        for i in 0..m {
            a.row_mut(i).scale_mut(row_scale[i]);
        }
        let cost_norm = qp.p.amax().max(qp.q.amax());
        let cost_scale = if cost_norm > 0.0 { 1.0 / cost_norm } else { 1.0 };
        Self {
            p: &qp.p * cost_scale,
            q: &qp.q * cost_scale,
            a,
            lower: qp.lower.component_mul(&row_scale),
            upper: qp.upper.component_mul(&row_scale),
            row_scale,
            cost_scale,
        }
    }

    fn unscale_dual(&self, y: &DVector<f64>) -> DVector<f64> {
        y.component_mul(&self.row_scale) / self.cost_scale
    }

    fn factor(&self, sigma: f64, rho: &DVector<f64>) -> Result<Cholesky<f64, nalgebra::Dyn>> {
        let n = self.q.len();
        let mut k = &self.p + DMatrix::identity(n, n) * sigma;
        let mut weighted = self.a.clone();
        for i in 0..weighted.nrows() {
            weighted.row_mut(i).scale_mut(rho[i]);
        }
        k += self.a.transpose() * weighted;
        Cholesky::new(k).ok_or_else(|| Error::Singular("ADMM system matrix is not positive definite".into()))
    }
}

fn rho_vector(lower: &DVector<f64>, upper: &DVector<f64>, rho: f64) -> DVector<f64> {
    DVector::from_fn(lower.len(), |i, _| {
        if (upper[i] - lower[i]).abs() < 1e-12 {
            (rho * EQUALITY_RHO_SCALE).min(RHO_MAX)
        } else {
            rho
        }
    })
}

pub fn solve_dense_qp(qp: &DenseQp, settings: &AdmmSettings) -> Result<QpSolution> {
    let n = qp.variables();
    let m = qp.rows();
    let tol = settings.tolerance;
    if !(tol > 0.0) || settings.check_every == 0 || !(settings.relaxation > 0.0 && settings.relaxation < 2.0) {
        return Err(Error::invalid("ADMM settings out of range"));
    }
    if m == 0 {
        return solve_unconstrained(qp);
    }
    let s = Scaled::new(qp);
    let alpha = settings.relaxation;
    let sigma = settings.sigma;
    let mut rho_base = settings.rho.clamp(RHO_MIN, RHO_MAX);
    let mut rho = rho_vector(&s.lower, &s.upper, rho_base);
    let mut chol = s.factor(sigma, &rho)?;

    let mut x = DVector::zeros(n);
    let mut z = DVector::from_fn(m, |i, _| 0.0f64.clamp(s.lower[i], s.upper[i]));
    let mut y = DVector::zeros(m);
    let mut y_prev = y.clone();
    let at = s.a.transpose();
    let mut iterations = 0;
    let mut residuals = (f64::INFINITY, f64::INFINITY);

    while iterations < settings.max_iterations {
        iterations += 1;
        y_prev.copy_from(&y);
        let rhs = &x * sigma - &s.q + &at * (rho.component_mul(&z) - &y);
        let x_tilde = chol.solve(&rhs);
        let z_tilde = &s.a * &x_tilde;
        x = &x_tilde * alpha + &x * (1.0 - alpha);
        let z_relaxed = &z_tilde * alpha + &z * (1.0 - alpha);
        for i in 0..m {
            z[i] = (z_relaxed[i] + y[i] / rho[i]).clamp(s.lower[i], s.upper[i]);
            y[i] += rho[i] * (z_relaxed[i] - z[i]);
        }
        if iterations % settings.check_every != 0 {
            continue;
        }

        let ax = &s.a * &x;
        let px = &s.p * &x;
        let aty = &at * &y;
        let primal = (&ax - &z).component_div(&s.row_scale).amax();
        let dual = (&px + &s.q + &aty).amax() / s.cost_scale;
        let primal_scale = ax.component_div(&s.row_scale).amax().max(z.component_div(&s.row_scale).amax());
        let dual_scale = px.amax().max(aty.amax()).max(s.q.amax()) / s.cost_scale;
        residuals = (primal, dual);
        if primal <= tol * (1.0 + primal_scale) && dual <= tol * (1.0 + dual_scale) {
            if let Some(sol) = finish(qp, &s, &x, &z, &y, iterations, settings) {
                return Ok(sol);
            }
        }

        let dy = s.unscale_dual(&(&y - &y_prev));
        let dy_norm = dy.amax();
        if dy_norm > 1e-12 && infeasibility_certificate(qp, &dy, settings.infeasibility_tolerance * dy_norm) {
            return Err(Error::Infeasible(format!(
                "primal infeasibility certificate after {iterations} iterations"
            )));
        }

        let ratio = ((primal / (primal_scale + 1e-30)) / (dual / (dual_scale + 1e-30) + 1e-30)).sqrt();
        if iterations % (5 * settings.check_every) == 0 && ratio.is_finite() && !(0.2..=5.0).contains(&ratio) {
            rho_base = (rho_base * ratio).clamp(RHO_MIN, RHO_MAX);
            rho = rho_vector(&s.lower, &s.upper, rho_base);
            chol = s.factor(sigma, &rho)?;
        }
    }

    if let Some(sol) = finish(qp, &s, &x, &z, &y, iterations, settings) {
        return Ok(sol);
    }
    Err(Error::MaxIterations {
        iterations,
        primal: residuals.0,
        dual: residuals.1,
    })
}

/// Polishes when requested and accepts whichever candidate meets every KKT
/// residual bound.
fn finish(
    qp: &DenseQp,
    s: &Scaled,
    x: &DVector<f64>,
    z: &DVector<f64>,
    y: &DVector<f64>,
    iterations: usize,
    settings: &AdmmSettings,
) -> Option<QpSolution> {
    let tol = settings.tolerance;
    let y_unscaled = s.unscale_dual(y);
    if settings.polish {
        if let Some((xp, yp)) = polish(qp, s, z, y) {
            let kkt = qp.kkt_residuals(&xp, &yp);
            if kkt.max() <= tol {
                return Some(QpSolution {
                    objective: qp.objective(&xp),
                    x: xp,
                    y: yp,
                    iterations,
                    polished: true,
                    kkt,
                });
            }
        }
    }
    let kkt = qp.kkt_residuals(x, &y_unscaled);
    let scale = 1.0 + qp.q.amax().max((&qp.p * x).amax());
    if kkt.primal <= tol && kkt.dual <= tol && kkt.stationarity <= tol * scale && kkt.complementarity <= tol * scale {
        return Some(QpSolution {
            objective: qp.objective(x),
            x: x.clone(),
            y: y_unscaled,
            iterations,
            polished: false,
            kkt,
        });
    }
    None
}

/// Solves the equality-constrained problem on the active set guessed from
/// the ADMM iterate, with iterative refinement.
fn polish(qp: &DenseQp, s: &Scaled, z: &DVector<f64>, y: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = qp.variables();
    let mut active = Vec::new();
    for i in 0..qp.rows() {
        if z[i] - s.lower[i] < -y[i] {
            active.push((i, qp.lower[i]));
        } else if s.upper[i] - z[i] < y[i] {
            active.push((i, qp.upper[i]));
        }
    }
    let k = active.len();
    let dim = n + k;
    let mut kkt = DMatrix::zeros(dim, dim);
    kkt.view_mut((0, 0), (n, n)).copy_from(&qp.p);
    let mut rhs = DVector::zeros(dim);
    for j in 0..n {
        rhs[j] = -qp.q[j];
    }
    for (r, &(i, bound)) in active.iter().enumerate() {
        for j in 0..n {
            kkt[(n + r, j)] = qp.a[(i, j)];
            kkt[(j, n + r)] = qp.a[(i, j)];
        }
        rhs[n + r] = bound;
    }
    let delta = 1e-9 * (1.0 + qp.p.amax());
    let mut regularized = kkt.clone();
    for j in 0..n {
        regularized[(j, j)] += delta;
    }
    for r in 0..k {
        regularized[(n + r, n + r)] -= delta;
    }
    let lu = regularized.lu();
    let mut sol = lu.solve(&rhs)?;
    for _ in 0..8 {
        let res = &rhs - &kkt * &sol;
        if res.amax() < 1e-14 * (1.0 + rhs.amax()) {
            break;
        }
        sol += lu.solve(&res)?;
    }
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let x = sol.rows(0, n).into_owned();
    let mut y_full = DVector::zeros(qp.rows());
    for (r, &(i, _)) in active.iter().enumerate() {
        y_full[i] = sol[n + r];
    }
    Some((x, y_full))
}

/// `A'dy ~ 0` with `u'max(dy,0) + l'min(dy,0) < 0` proves that no `x`
/// satisfies the bounds.
fn infeasibility_certificate(qp: &DenseQp, dy: &DVector<f64>, eps: f64) -> bool {
    if (qp.a.transpose() * dy).amax() > eps {
        return false;
    }
    let mut support = 0.0;
    for i in 0..qp.rows() {
        let d = dy[i];
        if d > 0.0 {
            if !qp.upper[i].is_finite() {
                return false;
            }
            support += qp.upper[i] * d;
        } else if d < 0.0 {
            if !qp.lower[i].is_finite() {
                return false;
            }
            support += qp.lower[i] * d;
        }
    }
    support < -eps
}

fn solve_unconstrained(qp: &DenseQp) -> Result<QpSolution> {
    let x = qp
        .p
        .clone()
        .cholesky()
        .map(|c| c.solve(&(-&qp.q)))
        .ok_or_else(|| Error::Singular("unconstrained QP needs a positive definite Hessian".into()))?;
    let y = DVector::zeros(0);
    Ok(QpSolution {
        objective: qp.objective(&x),
        kkt: qp.kkt_residuals(&x, &y),
        x,
        y,
        iterations: 0,
        polished: false,
    })
}
