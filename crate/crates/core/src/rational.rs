//! Integer-order rational approximations of `s^alpha` and their substitution
//! into the two-compartment transfer functions.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::StateSpaceModel;
use crate::pk::PkParams;
use crate::poly;

/// `P(s) / Q(s)` with coefficients in descending powers of `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalTransferFunction {
    pub numerator: Vec<f64>,
    pub denominator: Vec<f64>,
}

/// Pole-zero-gain form, complex values stored as `[re, im]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroPoleGain {
    pub zeros: Vec<[f64; 2]>,
    pub poles: Vec<[f64; 2]>,
    pub gain: f64,
}

impl RationalTransferFunction {
    /// Leading zeros are trimmed. Improper functions are accepted here so that
    /// interpolants with one extra numerator degree can be represented; use
    /// [`Self::is_proper`] where properness matters.
    pub fn new(numerator: Vec<f64>, denominator: Vec<f64>) -> Result<Self> {
        if numerator.iter().chain(&denominator).any(|c| !c.is_finite()) {
            return Err(Error::invalid("transfer function coefficients must be finite"));
        }
        let denominator = poly::trim(&denominator);
        if denominator[0] == 0.0 {
            return Err(Error::invalid("denominator must not vanish identically"));
        }
        Ok(Self {
            numerator: poly::trim(&numerator),
            denominator,
        })
    }

    pub fn constant(c: f64) -> Self {
        Self {
            numerator: vec![c],
            denominator: vec![1.0],
        }
    }

    pub fn numerator_degree(&self) -> usize {
        poly::degree(&self.numerator)
    }

    pub fn denominator_degree(&self) -> usize {
        poly::degree(&self.denominator)
    }

    pub fn is_proper(&self) -> bool {
        poly::is_zero(&self.numerator) || self.numerator_degree() <= self.denominator_degree()
    }

    pub fn is_strictly_proper(&self) -> bool {
        poly::is_zero(&self.numerator) || self.numerator_degree() < self.denominator_degree()
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        poly::eval(&self.numerator, s) / poly::eval(&self.denominator, s)
    }

    pub fn eval_real(&self, x: f64) -> f64 {
        poly::eval_real(&self.numerator, x) / poly::eval_real(&self.denominator, x)
    }

    pub fn frequency_response(&self, omega: f64) -> Complex64 {
        self.eval(Complex64::new(0.0, omega))
    }

    /// Divides numerator and denominator by the leading denominator coefficient.
    pub fn normalized(&self) -> Self {
        let lead = self.denominator[0];
        Self {
            numerator: poly::scale(&self.numerator, 1.0 / lead),
            denominator: poly::scale(&self.denominator, 1.0 / lead),
        }
    }

    pub fn zpk(&self) -> Result<ZeroPoleGain> {
        let pair = |z: &Complex64| [z.re, z.im];
        let zeros = if poly::is_zero(&self.numerator) {
            Vec::new()
        } else {
            poly::roots(&self.numerator)?
        };
        Ok(ZeroPoleGain {
            zeros: zeros.iter().map(pair).collect(),
            poles: poly::roots(&self.denominator)?.iter().map(pair).collect(),
            gain: self.numerator[0] / self.denominator[0],
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }
}

/// Maximum `N` accepted by [`oustaloup`].
pub const OUSTALOUP_MAX_N: usize = 50;

/// Oustaloup filter `c0 * prod_{k=-N}^{N} (s + w_k) / (s + w'_k)` kept in
/// factored form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OustaloupDesign {
    pub alpha: f64,
    pub omega_b: f64,
    pub omega_h: f64,
    pub n: usize,
    /// `w_k`, `k = -N..=N`; the filter zeros sit at `-w_k`.
    pub zeros: Vec<f64>,
    /// `w'_k`, `k = -N..=N`; the filter poles sit at `-w'_k`.
    pub poles: Vec<f64>,
    pub gain: f64,
}

/// Designs the Oustaloup filter for `s^alpha` on `[omega_b, omega_h]`. The
/// gain is fixed by `|H(j w_u)| = w_u^alpha` at `w_u = sqrt(omega_b omega_h)`.
pub fn oustaloup(alpha: f64, omega_b: f64, omega_h: f64, n: usize) -> Result<OustaloupDesign> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("Oustaloup order {alpha} must lie in (0, 1)")));
    }
    if !(omega_b > 0.0 && omega_b < omega_h && omega_h.is_finite()) {
        return Err(Error::invalid("Oustaloup band requires 0 < omega_b < omega_h"));
    }
    if n > OUSTALOUP_MAX_N {
        return Err(Error::invalid(format!(
            "Oustaloup N = {n} exceeds {OUSTALOUP_MAX_N}; expanded coefficients would overflow"
        )));
    }
    let ratio = omega_h / omega_b;
    let count = 2 * n + 1;
    let place = |offset: f64| -> Vec<f64> {
        (0..count)
            .map(|i| omega_b * ratio.powf((i as f64 + offset) / count as f64))
            .collect()
    };
    let zeros = place(0.5 * (1.0 - alpha));
    let poles = place(0.5 * (1.0 + alpha));
    let mut design = OustaloupDesign {
        alpha,
        omega_b,
        omega_h,
        n,
        zeros,
        poles,
        gain: 1.0,
    };
    let omega_u = (omega_b * omega_h).sqrt();
    design.gain = omega_u.powf(alpha) / design.eval(Complex64::new(0.0, omega_u)).norm();
    Ok(design)
}

impl OustaloupDesign {
    pub fn eval(&self, s: Complex64) -> Complex64 {
        self.zeros
            .iter()
            .zip(&self.poles)
            .fold(Complex64::new(self.gain, 0.0), |acc, (&z, &p)| acc * (s + z) / (s + p))
    }

    pub fn centre_frequency(&self) -> f64 {
        (self.omega_b * self.omega_h).sqrt()
    }

    /// Expanded coefficient form.
    pub fn transfer_function(&self) -> RationalTransferFunction {
        let neg = |v: &[f64]| v.iter().map(|w| -w).collect::<Vec<_>>();
        RationalTransferFunction {
            numerator: poly::scale(&poly::from_real_roots(&neg(&self.zeros)), self.gain),
            denominator: poly::from_real_roots(&neg(&self.poles)),
        }
    }

    pub fn zpk(&self) -> ZeroPoleGain {
        ZeroPoleGain {
            zeros: self.zeros.iter().map(|w| [-w, 0.0]).collect(),
            poles: self.poles.iter().map(|w| [-w, 0.0]).collect(),
            gain: self.gain,
        }
    }

    /// Cascade of first-order sections `1 + (w_k - w'_k) / (s + w'_k)`.
    pub fn state_space(&self) -> StateSpaceModel {
        let sections = self.zeros.iter().zip(&self.poles).map(|(&z, &p)| {
            StateSpaceModel::new(
                DMatrix::from_element(1, 1, -p),
                DMatrix::from_element(1, 1, 1.0),
                DMatrix::from_element(1, 1, z - p),
                DMatrix::from_element(1, 1, 1.0),
            )
            .expect("scalar section is consistent")
        });
        let cascade = sections
            .reduce(|acc, next| acc.series(&next).expect("SISO sections compose"))
            .expect("at least one section");
        cascade.scaled_output(self.gain)
    }
}

/// Taylor coefficients `binom(beta, k) s0^(beta - k)` of `s^beta` about `s0`.
pub fn power_taylor(beta: f64, s0: f64, count: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(count);
    let mut binom = 1.0;
    for k in 0..count {
        if k > 0 {
            binom *= (beta - (k as f64 - 1.0)) / k as f64;
        }
        out.push(binom * s0.powf(beta - k as f64));
    }
    out
}

/// `[m/n]` Padé approximant of `s^beta` about `s0`, returned in powers of `s`.
pub fn pade_power(beta: f64, s0: f64, m: usize, n: usize) -> Result<RationalTransferFunction> {
    if !(s0 > 0.0 && s0.is_finite()) {
        return Err(Error::invalid("Padé expansion point must be positive"));
    }
    if n < m {
        return Err(Error::invalid("Padé [m/n] requires n >= m"));
    }
    let c = power_taylor(beta, s0, m + n + 1);
    let coef = |k: isize| if k < 0 { 0.0 } else { c[k as usize] };

    let mut q = vec![1.0];
    if n > 0 {
        let hankel = DMatrix::from_fn(n, n, |r, j| coef((m + 1 + r) as isize - (j + 1) as isize));
        let rhs = DVector::from_fn(n, |r, _| -coef((m + 1 + r) as isize));
        let svd = hankel.clone().svd(false, false);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !(smin > 1e-13 * smax) {
            return Err(Error::Singular("Padé Hankel system is rank-deficient".into()));
        }
        let sol = hankel
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Singular("Padé Hankel system is rank-deficient".into()))?;
        q.extend(sol.iter());
    }
    let p: Vec<f64> = (0..=m)
        .map(|k| (0..=k.min(n)).map(|j| q[j] * coef((k - j) as isize)).sum())
        .collect();

    // ascending in x = s - s0 -> descending in s
    let desc = |v: &[f64]| v.iter().rev().copied().collect::<Vec<_>>();
    RationalTransferFunction::new(
        poly::taylor_shift(&desc(&p), s0),
        poly::taylor_shift(&desc(&q), s0),
    )
}

/// `[m/n]` Padé approximant of `s^alpha` about `s0`.
///
/// For `n > m` this forces a decaying approximant onto a growing function and
/// produces a pole in the right half-plane; see [`pade_s_alpha_stable`].
pub fn pade_s_alpha(alpha: f64, s0: f64, m: usize, n: usize) -> Result<RationalTransferFunction> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("Padé order {alpha} must lie in (0, 1)")));
    }
    pade_power(alpha, s0, m, n)
}

/// `s^alpha ~ s * R(s)` with `R` the `[m/n]` Padé approximant of the Stieltjes
/// function `s^(alpha - 1)` about `s0`. Its poles are negative real, and for
/// `n = m + 1` the result is biproper.
pub fn pade_s_alpha_stable(alpha: f64, s0: f64, m: usize, n: usize) -> Result<RationalTransferFunction> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("Padé order {alpha} must lie in (0, 1)")));
    }
    let r = pade_power(alpha - 1.0, s0, m, n)?;
    RationalTransferFunction::new(poly::shift_up(&r.numerator), r.denominator)
}

/// Continued-fraction interpolation of a real black-box `h` at `points`.
///
/// The coefficient table follows `v_0 = h`, `v_{i+1}(s) = (s - s_i) / (v_i(s) - a_i)`
/// with `a_i = v_i(s_i)`. If every remaining difference vanishes the expansion
/// terminates early and represents `h` exactly.
pub fn matsuda_fujii(h: impl Fn(f64) -> f64, points: &[f64]) -> Result<RationalTransferFunction> {
    Ok(matsuda_fujii_coefficients(h, points)?.flatten())
}

/// Coefficients `a_i` and nodes `s_i` of a Thiele continued fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct ThieleFraction {
    pub coefficients: Vec<f64>,
    pub nodes: Vec<f64>,
}

impl ThieleFraction {
    pub fn eval(&self, s: f64) -> f64 {
        let k = self.coefficients.len() - 1;
        let mut acc = self.coefficients[k];
        for i in (0..k).rev() {
            acc = self.coefficients[i] + (s - self.nodes[i]) / acc;
        }
        acc
    }

    pub fn flatten(&self) -> RationalTransferFunction {
        let k = self.coefficients.len() - 1;
        let (mut num, mut den) = (vec![self.coefficients[k]], vec![1.0]);
        for i in (0..k).rev() {
            let next_num = poly::add(
                &poly::scale(&num, self.coefficients[i]),
                &poly::mul(&[1.0, -self.nodes[i]], &den),
            );
            den = num;
            num = next_num;
        }
        RationalTransferFunction {
            numerator: poly::trim(&num),
            denominator: poly::trim(&den),
        }
    }
}

pub fn matsuda_fujii_coefficients(h: impl Fn(f64) -> f64, points: &[f64]) -> Result<ThieleFraction> {
    if points.is_empty() {
        return Err(Error::invalid("Matsuda-Fujii needs at least one point"));
    }
    for (i, a) in points.iter().enumerate() {
        if !(a.is_finite() && *a > 0.0) {
            return Err(Error::invalid("interpolation points must be positive and finite"));
        }
        if points[..i].contains(a) {
            return Err(Error::invalid("interpolation points must be distinct"));
        }
    }
    let mut v: Vec<f64> = points.iter().map(|&s| h(s)).collect();
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("H must be finite at every interpolation point"));
    }
    let mut coefficients = Vec::with_capacity(points.len());
    for i in 0..points.len() {
        let a = v[i];
        coefficients.push(a);
        if i + 1 == points.len() {
            break;
        }
        let vanishing: Vec<bool> = (i + 1..points.len())
            .map(|k| (v[k] - a).abs() <= 1e-11 * v[k].abs().max(a.abs()).max(1e-300))
            .collect();
        if vanishing.iter().all(|&z| z) {
            break;
        }
        if vanishing.iter().any(|&z| z) {
            return Err(Error::Singular(format!(
                "continued-fraction difference vanishes at a later node after coefficient {i}"
            )));
        }
        for k in i + 1..points.len() {
            v[k] = (points[k] - points[i]) / (v[k] - a);
        }
    }
    let nodes = points[..coefficients.len()].to_vec();
    Ok(ThieleFraction { coefficients, nodes })
}

/// Replaces `s^alpha` in the two transfer functions by `P/Q`:
///
/// `G1 = (P + k21 Q) / den`, `G2 = k12 P / (s den)` with
/// `den = s P + k21 s Q + (k12 + k10) P + k10 k21 Q`.
pub fn substitute_into_pk(
    approx: &RationalTransferFunction,
    params: &PkParams<f64>,
) -> Result<(RationalTransferFunction, RationalTransferFunction)> {
    let (p, q) = (&approx.numerator, &approx.denominator);
    let PkParams { k10, k12, k21, .. } = *params;
    let num1 = poly::add(p, &poly::scale(q, k21));
    let den = poly::add(
        &poly::shift_up(&num1),
        &poly::add(&poly::scale(p, k12 + k10), &poly::scale(q, k10 * k21)),
    );
    let g1 = RationalTransferFunction::new(num1, den.clone())?;
    let g2 = RationalTransferFunction::new(poly::scale(p, k12), poly::shift_up(&den))?;
    if !g1.is_proper() || !g2.is_proper() {
        return Err(Error::invalid(
            "substituted transfer functions are improper; the approximant has too high a numerator degree",
        ));
    }
    Ok((g1, g2))
}

/// `M = Q / (P + k21 Q)`, the filter through which the approximant enters the
/// state-space form of the model (see [`crate::lti::pk_state_space`]).
pub fn substitution_filter(approx: &RationalTransferFunction, k21: f64) -> Result<RationalTransferFunction> {
    let den = poly::add(&approx.numerator, &poly::scale(&approx.denominator, k21));
    let m = RationalTransferFunction::new(approx.denominator.clone(), den)?;
    if !m.is_proper() {
        return Err(Error::invalid("approximant numerator degree is too low relative to its denominator"));
    }
    Ok(m)
}
