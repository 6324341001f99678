//! Numerical inversion of Laplace transforms.
//!
//! Two independent constructions are provided:
//!
//! * [`valsa_invert`] replaces the Bromwich kernel `e^{st}` by
//!   `e^{st} / (1 + e^{-2a} e^{2st})`. Closing the contour over the kernel poles
//!   `s_n = (a + j(n - 1/2)pi) / t` turns the integral into the alternating
//!   series `f(t) ~ e^a / t * sum_n (-1)^n Im F(s_n)`, whose tail is summed with
//!   the Euler transform. The relative aliasing error is about `e^{-2a}`.
//! * [`fourier_trapezoid_invert`] discretizes the Bromwich integral with the
//!   trapezoid rule (a Fourier series of half-period `T`) and accelerates the
//!   series with the quotient-difference continued fraction of de Hoog, Knight
//!   and Stokes.
//!
//! Both evaluate `F` only at nodes with positive real part.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::Trajectory;

type ComplexFn = dyn Fn(Complex64) -> Complex64 + Send + Sync;

/// A Laplace-domain function `F(s)`.
#[derive(Clone)]
pub struct TransformFunction {
    f: Arc<ComplexFn>,
    /// Estimate of the abscissa of convergence; `F` is finite to the right.
    pub abscissa: f64,
    /// `f(0+)`, used when inversion is requested at `t = 0`.
    pub initial_value: Option<f64>,
}

impl std::fmt::Debug for TransformFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TransformFunction")
            .field("abscissa", &self.abscissa)
            .field("initial_value", &self.initial_value)
            .finish_non_exhaustive()
    }
}

impl TransformFunction {
    pub fn new(f: impl Fn(Complex64) -> Complex64 + Send + Sync + 'static) -> Self {
        Self {
            f: Arc::new(f),
            abscissa: 0.0,
            initial_value: None,
        }
    }

    pub fn with_abscissa(mut self, abscissa: f64) -> Self {
        self.abscissa = abscissa;
        self
    }

    pub fn with_initial_value(mut self, v: f64) -> Self {
        self.initial_value = Some(v);
        self
    }

    #[inline]
    pub fn eval(&self, s: Complex64) -> Complex64 {
        (self.f)(s)
    }

    /// `a F + b G`.
    pub fn linear_combination(a: f64, f: &Self, b: f64, g: &Self) -> Self {
        let (ff, gg) = (f.f.clone(), g.f.clone());
        Self {
            f: Arc::new(move |s| a * ff(s) + b * gg(s)),
            abscissa: f.abscissa.max(g.abscissa),
            initial_value: match (f.initial_value, g.initial_value) {
                (Some(x), Some(y)) => Some(a * x + b * y),
                _ => None,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InversionMethod {
    Valsa,
    FourierTrapezoid,
}

/// Parameters of either inversion method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InversionConfig {
    pub method: InversionMethod,
    /// Valsa kernel parameter.
    pub a: f64,
    /// Series length (Valsa), or `2M + 1` coefficients (Fourier).
    pub term_count: usize,
    /// Share of the Valsa series summed with the Euler transform.
    pub euler_fraction: f64,
    /// Fourier: shift added to the abscissa before the tolerance term.
    pub sigma0: f64,
    /// Fourier: the period `2T` is this multiple of the requested time.
    pub period_factor: f64,
    /// Fourier: target aliasing tolerance used to place the contour.
    pub tolerance: f64,
    /// Fourier: allowed change between the last two continued-fraction
    /// approximants, relative to `max(1, |f|)`.
    pub residual_tolerance: f64,
}

impl InversionConfig {
    pub fn valsa(a: f64) -> Self {
        Self {
            method: InversionMethod::Valsa,
            a,
            term_count: 1000,
            euler_fraction: 1.0 / 3.0,
            ..Self::fourier()
        }
    }

    pub fn fourier() -> Self {
        Self {
            method: InversionMethod::FourierTrapezoid,
            a: 11.0,
            term_count: 41,
            euler_fraction: 1.0 / 3.0,
            sigma0: 0.0,
            period_factor: 8.0,
            tolerance: 1e-9,
            residual_tolerance: 1e-6,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.a > 0.0) {
            return Err(Error::invalid("Valsa parameter a must be positive"));
        }
        if self.term_count < 10 {
            return Err(Error::invalid("term_count must be at least 10"));
        }
        if !(self.euler_fraction > 0.0 && self.euler_fraction < 1.0) {
            return Err(Error::invalid("euler_fraction must lie in (0, 1)"));
        }
        if !(self.period_factor > 1.0) {
            return Err(Error::invalid("period_factor must exceed 1 so that t < 2T"));
        }
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return Err(Error::invalid("tolerance must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        match self.method {
            InversionMethod::Valsa => format!("valsa(a={}, terms={})", self.a, self.term_count),
            InversionMethod::FourierTrapezoid => format!(
                "fourier(2T={}t, tol={:e}, terms={})",
                self.period_factor, self.tolerance, self.term_count
            ),
        }
    }
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self::valsa(11.0)
    }
}

fn check_node(t: f64, v: Complex64) -> Result<Complex64> {
    if v.re.is_finite() && v.im.is_finite() {
        Ok(v)
    } else {
        Err(Error::Inversion {
            t,
            reason: "transform is not finite at an evaluation node".into(),
        })
    }
}

/// Euler-transform weights `2^-m binom(m, k)`, `k = 0..=m`.
fn euler_weights(m: usize) -> Vec<f64> {
    // start from 2^-m and climb the binomial row; 2^-m stays normal for m < 1000
    let mut w = Vec::with_capacity(m + 1);
    let mut c = 0.5f64.powi(m as i32);
    w.push(c);
    for k in 1..=m {
        c *= (m + 1 - k) as f64 / k as f64;
        w.push(c);
    }
    w
}

/// Inverts `F` at `t > 0` with the Valsa kernel substitution.
pub fn valsa_invert(f: &TransformFunction, t: f64, config: &InversionConfig) -> Result<f64> {
    config.validate()?;
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::invalid(format!("inversion time {t} must be positive")));
    }
    let n_total = config.term_count;
    let n_euler = ((n_total as f64 * config.euler_fraction).round() as usize).clamp(1, n_total - 1);
    let n_direct = n_total - n_euler;
    let a = config.a + f.abscissa.max(0.0) * t;
    let pi = std::f64::consts::PI;

    let mut partial = 0.0;
    let mut tail_sums = Vec::with_capacity(n_euler + 1);
    for n in 1..=n_total {
        let s = Complex64::new(a, (n as f64 - 0.5) * pi) / t;
        let v = check_node(t, f.eval(s))?;
        let term = if n % 2 == 0 { v.im } else { -v.im };
        partial += term;
        if n >= n_direct {
            tail_sums.push(partial);
        }
    }
    let weights = euler_weights(n_euler);
    let accelerated: f64 = weights.iter().zip(&tail_sums).map(|(w, s)| w * s).sum();
    Ok(a.exp() / t * accelerated)
}

/// Inverts `F` at `t > 0` with the trapezoid/Fourier series and
/// quotient-difference acceleration.
pub fn fourier_trapezoid_invert(f: &TransformFunction, t: f64, config: &InversionConfig) -> Result<f64> {
    config.validate()?;
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::invalid(format!("inversion time {t} must be positive")));
    }
    let half_period = 0.5 * config.period_factor * t;
    if !(t < 2.0 * half_period) {
        return Err(Error::invalid("time must lie inside the period"));
    }
    let m = (config.term_count - 1) / 2;
    let sigma = config.sigma0 + f.abscissa - config.tolerance.ln() / (2.0 * half_period);
    let pi = std::f64::consts::PI;

    let mut a: Vec<Complex64> = (0..=2 * m)
        .map(|k| {
            let s = Complex64::new(sigma, pi * k as f64 / half_period);
            check_node(t, f.eval(s))
        })
        .collect::<Result<_>>()?;
    a[0] *= 0.5;

    let d = qd_coefficients(&a).ok_or_else(|| Error::Inversion {
        t,
        reason: "quotient-difference table broke down (zero divisor)".into(),
    })?;
    let z = Complex64::from_polar(1.0, pi * t / half_period);
    let (value, previous) = continued_fraction(&d, z);
    let scale = (sigma * t).exp() / half_period;
    let result = scale * value.re;
    let residual = (scale * (value - previous).re).abs();
    if !result.is_finite() {
        return Err(Error::Inversion {
            t,
            reason: "non-finite continued fraction value".into(),
        });
    }
    if residual > config.residual_tolerance * result.abs().max(1.0) {
        return Err(Error::Inversion {
            t,
            reason: format!(
                "slow convergence: acceleration residual {residual:e} exceeds tolerance {:e}",
                config.residual_tolerance
            ),
        });
    }
    Ok(result)
}

/// Continued-fraction coefficients `d_0..d_2M` from the power series
/// coefficients `a_0..a_2M` by the quotient-difference algorithm.
fn qd_coefficients(a: &[Complex64]) -> Option<Vec<Complex64>> {
    let len = a.len();
    let m = (len - 1) / 2;
    let zero = Complex64::new(0.0, 0.0);
    let nonzero = |c: Complex64| c.norm() > 0.0 && c.re.is_finite() && c.im.is_finite();

    // q holds q_r^{(i)}, e holds e_{r-1}^{(i)} going in
    let mut q: Vec<Complex64> = Vec::with_capacity(len - 1);
    for i in 0..len - 1 {
        if !nonzero(a[i]) {
            return None;
        }
        q.push(a[i + 1] / a[i]);
    }
    let mut e: Vec<Complex64> = vec![zero; len];
    let mut d = Vec::with_capacity(len);
    d.push(a[0]);
    for r in 1..=m {
        let count_e = 2 * (m - r) + 1;
        let e_new: Vec<Complex64> = (0..count_e).map(|i| q[i + 1] - q[i] + e[i + 1]).collect();
        d.push(-q[0]);
        d.push(-e_new[0]);
        if r < m {
            let count_q = 2 * (m - r);
            let mut q_new = Vec::with_capacity(count_q);
            for i in 0..count_q {
                if !nonzero(e_new[i]) {
                    return None;
                }
                q_new.push(q[i + 1] * e_new[i + 1] / e_new[i]);
            }
            q = q_new;
        }
        e = e_new;
    }
    Some(d)
}

/// Evaluates `d0 / (1 + d1 z / (1 + d2 z / ...))` with the de Hoog remainder
/// estimate; returns the final and the preceding approximant.
fn continued_fraction(d: &[Complex64], z: Complex64) -> (Complex64, Complex64) {
    let n = d.len() - 1;
    let one = Complex64::new(1.0, 0.0);
    let (mut a_prev, mut a_cur) = (Complex64::new(0.0, 0.0), d[0]);
    let (mut b_prev, mut b_cur) = (one, one);
    for dk in d.iter().take(n).skip(1) {
        let a_next = a_cur + dk * z * a_prev;
        let b_next = b_cur + dk * z * b_prev;
        a_prev = a_cur;
        a_cur = a_next;
        b_prev = b_cur;
        b_cur = b_next;
    }
    let previous = a_cur / b_cur;
    let h = 0.5 * (one + (d[n - 1] - d[n]) * z);
    let remainder = -h * (one - (one + d[n] * z / (h * h)).sqrt());
    let a_last = a_cur + remainder * a_prev;
    let b_last = b_cur + remainder * b_prev;
    (a_last / b_last, previous)
}

/// Dispatches on `config.method`. `t = 0` returns the transform's declared
/// initial value.
pub fn invert(f: &TransformFunction, t: f64, config: &InversionConfig) -> Result<f64> {
    if t == 0.0 {
        return f.initial_value.ok_or_else(|| Error::Inversion {
            t,
            reason: "t = 0 requested but the transform has no initial value".into(),
        });
    }
    match config.method {
        InversionMethod::Valsa => valsa_invert(f, t, config),
        InversionMethod::FourierTrapezoid => fourier_trapezoid_invert(f, t, config),
    }
}

/// Inverts one transform at every grid point. Work is O(grid x terms); each
/// point is independent, so the result does not depend on the thread schedule.
pub fn invert_values(f: &TransformFunction, grid: &[f64], config: &InversionConfig) -> Result<Vec<f64>> {
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("inversion grid must be increasing"));
    }
    if grid.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::invalid("inversion grid must be non-negative"));
    }
    grid.par_iter().map(|&t| invert(f, t, config)).collect()
}

/// Inverts the pair `(F1, F2)` into a two-compartment trajectory.
pub fn invert_on_grid(
    transforms: (&TransformFunction, &TransformFunction),
    grid: &[f64],
    config: &InversionConfig,
) -> Result<Trajectory<f64>> {
    if grid.is_empty() {
        return Ok(Trajectory::empty(config.label()));
    }
    let a1 = invert_values(transforms.0, grid, config)?;
    let a2 = invert_values(transforms.1, grid, config)?;
    let values = a1.into_iter().zip(a2).map(|(x, y)| [x, y]).collect();
    Trajectory::new(grid.to_vec(), values, config.label())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step() -> TransformFunction {
        TransformFunction::new(|s| 1.0 / s).with_initial_value(1.0)
    }

    fn methods() -> [InversionConfig; 2] {
        [InversionConfig::valsa(11.0), InversionConfig::fourier()]
    }

    #[test]
    fn unit_step_and_exponential() {
        let exp = TransformFunction::new(|s| 1.0 / (s + 1.0));
        for cfg in methods() {
            assert!((invert(&step(), 1.0, &cfg).unwrap() - 1.0).abs() < 1e-8);
            assert!((invert(&exp, 2.0, &cfg).unwrap() - (-2.0f64).exp()).abs() < 1e-8);
        }
    }

    #[test]
    fn ramp_and_inverse_sqrt() {
        let ramp = TransformFunction::new(|s| 1.0 / (s * s));
        let isqrt = TransformFunction::new(|s| s.powf(-0.5));
        let expected = 1.0 / (std::f64::consts::PI).sqrt();
        for cfg in methods() {
            assert!((invert(&ramp, 3.0, &cfg).unwrap() - 3.0).abs() < 1e-7);
            assert!((invert(&isqrt, 1.0, &cfg).unwrap() - expected).abs() < 1e-6);
        }
    }

    #[test]
    fn valsa_improves_with_a() {
        let exp = TransformFunction::new(|s| 1.0 / (s + 0.5));
        let errs: Vec<f64> = [5.0, 8.0, 11.0]
            .iter()
            .map(|&a| (valsa_invert(&exp, 1.5, &InversionConfig::valsa(a)).unwrap() - (-0.75f64).exp()).abs())
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    }

    #[test]
    fn grid_inversion() {
        let grid: Vec<f64> = (0..20).map(|k| k as f64 * 0.25).collect();
        let traj = invert_on_grid((&step(), &step()), &grid, &InversionConfig::default()).unwrap();
        assert!(traj.values.iter().all(|v| (v[0] - 1.0).abs() < 1e-8 && (v[1] - 1.0).abs() < 1e-8));
        let empty = invert_on_grid((&step(), &step()), &[], &InversionConfig::default()).unwrap();
        assert!(empty.is_empty());
        let no_init = TransformFunction::new(|s| 1.0 / s);
        assert!(invert_values(&no_init, &[0.0, 1.0], &InversionConfig::default()).is_err());
    }

    #[test]
    fn non_finite_transform_is_reported() {
        let bad = TransformFunction::new(|_| Complex64::new(f64::NAN, 0.0));
        for cfg in methods() {
            assert!(matches!(invert(&bad, 1.0, &cfg), Err(Error::Inversion { .. })));
        }
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = InversionConfig::valsa(11.0);
        cfg.term_count = 5;
        assert!(invert(&step(), 1.0, &cfg).is_err());
        assert!(invert(&step(), -1.0, &InversionConfig::default()).is_err());
    }

    #[test]
    fn linearity() {
        let f = TransformFunction::new(|s| 1.0 / (s + 1.0));
        let g = TransformFunction::new(|s| 1.0 / (s * s + 4.0));
        let h = TransformFunction::linear_combination(2.0, &f, -3.0, &g);
        for cfg in methods() {
            for &t in &[0.3, 1.0, 4.0] {
                let lhs = invert(&h, t, &cfg).unwrap();
                let rhs = 2.0 * invert(&f, t, &cfg).unwrap() - 3.0 * invert(&g, t, &cfg).unwrap();
                assert!((lhs - rhs).abs() < 1e-9);
            }
        }
    }
}
