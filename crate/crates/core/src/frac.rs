//! Fractional-calculus primitives: Grünwald-Letnikov weights, continued-fraction
//! rationalization of real orders, the gamma function and a Mittag-Leffler
//! series evaluator.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A real differentiation order in `(0, 1)`, optionally paired with a
/// rational approximation `p/q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FractionalOrder<T> {
    alpha: T,
    rational: Option<(u32, u32)>,
}

impl<T: Scalar> FractionalOrder<T> {
    pub fn new(alpha: T) -> Result<Self> {
        if !(alpha > T::zero() && alpha < T::one()) {
            return Err(Error::invalid(format!("order {alpha} not in (0, 1)")));
        }
        Ok(Self {
            alpha,
            rational: None,
        })
    }

    pub fn with_rational(alpha: T, p: u32, q: u32) -> Result<Self> {
        let mut order = Self::new(alpha)?;
        if p == 0 || p >= q {
            return Err(Error::invalid(format!("rational form {p}/{q} must satisfy 0 < p < q")));
        }
        if p.gcd(&q) != 1 {
            return Err(Error::invalid(format!("rational form {p}/{q} is not reduced")));
        }
        order.rational = Some((p, q));
        Ok(order)
    }

    /// Attaches the best continued-fraction convergent with denominator at
    /// most `max_denominator`.
    pub fn rationalized(alpha: T, max_denominator: u64) -> Result<Self> {
        let (p, q) = rationalize_order(alpha, max_denominator)?;
        let p = u32::try_from(p).map_err(|_| Error::invalid("numerator overflows u32"))?;
        let q = u32::try_from(q).map_err(|_| Error::invalid("denominator overflows u32"))?;
        Self::with_rational(alpha, p, q)
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn rational(&self) -> Option<(u32, u32)> {
        self.rational
    }
}

/// Grünwald-Letnikov weights `c_j = (-1)^j binom(alpha, j)` for `j = 0..=nu`.
#[derive(Debug, Clone, PartialEq)]
pub struct GlWeightSequence<T> {
    pub alpha: T,
    pub weights: Vec<T>,
}

impl<T: Scalar> GlWeightSequence<T> {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.weights
    }
}

/// Computes `c_0 ..= c_count` by the multiplicative recurrence
/// `c_j = c_{j-1} (1 - (alpha + 1) / j)`.
pub fn gl_weights<T: Scalar>(alpha: T, count: usize) -> Result<GlWeightSequence<T>> {
    if !(alpha > T::zero() && alpha <= T::one()) {
        return Err(Error::invalid(format!("GL order {alpha} not in (0, 1]")));
    }
    if count == 0 {
        return Err(Error::invalid("GL weight count must be at least 1"));
    }
    let mut weights = Vec::with_capacity(count + 1);
    weights.push(T::one());
    let mut c = -alpha;
    weights.push(c);
    for j in 2..=count {
        c = c * (T::one() - (alpha + T::one()) / T::from_usize_lossy(j));
        weights.push(c);
    }
    Ok(GlWeightSequence { alpha, weights })
}

/// Best rational approximation `p/q` of `x` with `q <= max_denominator`.
///
/// Walks the continued-fraction convergents of `x` and, at the cut-off, also
/// considers the largest admissible semiconvergent, so the result is the
/// closest fraction with a bounded denominator. The expansion runs on the
/// exact binary value of `x`.
pub fn rationalize_order<T: Scalar>(x: T, max_denominator: u64) -> Result<(u64, u64)> {
    if !(x > T::zero() && x < T::one()) {
        return Err(Error::invalid(format!("value {x} not in (0, 1)")));
    }
    if max_denominator < 2 {
        return Err(Error::invalid("max_denominator must be at least 2"));
    }
    let xf = x.as_f64();
    let exact = BigRational::from_float(xf).ok_or_else(|| Error::invalid("non-finite value"))?;
    let mut num: BigInt = exact.numer().clone();
    let mut den: BigInt = exact.denom().clone();
    let limit = BigInt::from(max_denominator);

    let mut candidates: Vec<(BigInt, BigInt)> = Vec::new();
    let (mut p_prev, mut p_cur) = (BigInt::zero(), BigInt::one());
    let (mut q_prev, mut q_cur) = (BigInt::one(), BigInt::zero());
    while !den.is_zero() {
        let (a, r) = num.div_mod_floor(&den);
        let p_next = &a * &p_cur + &p_prev;
        let q_next = &a * &q_cur + &q_prev;
        if q_next > limit {
            // largest semiconvergent (p_prev + k p_cur) / (q_prev + k q_cur) that fits
            if !q_cur.is_zero() {
                let k = (&limit - &q_prev).div_floor(&q_cur);
                if k >= BigInt::one() {
                    candidates.push((&p_prev + &k * &p_cur, &q_prev + &k * &q_cur));
                }
            }
            break;
        }
        candidates.push((p_next.clone(), q_next.clone()));
        p_prev = std::mem::replace(&mut p_cur, p_next);
        q_prev = std::mem::replace(&mut q_cur, q_next);
        num = std::mem::replace(&mut den, r);
    }
    let (p, q) = candidates
        .into_iter()
        .map(|(p, q)| {
            let err = (&exact - BigRational::new(p.clone(), q.clone())).abs();
            (p, q, err)
        })
        .min_by(|a, b| a.2.cmp(&b.2).then(a.1.cmp(&b.1)))
        .map(|(p, q, _)| (p, q))
        .filter(|(p, _)| !p.is_zero())
        .ok_or_else(|| {
            Error::invalid(format!("0/1 is the closest fraction to {xf} with denominator <= {max_denominator}"))
        })?;
    Ok((p.to_u64().unwrap_or(u64::MAX), q.to_u64().unwrap_or(u64::MAX)))
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

fn lanczos_sum<T: Scalar>(x: T) -> T {
    let mut a = T::lit(LANCZOS[0]);
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        a = a + T::lit(c) / (x + T::from_usize_lossy(i));
    }
    a
}

/// Gamma function for positive arguments (Lanczos, g = 7).
pub fn gamma_fn<T: Scalar>(x: T) -> Result<T> {
    if !(x > T::zero()) || !x.is_finite() {
        return Err(Error::invalid(format!("gamma argument {x} must be positive and finite")));
    }
    Ok(gamma_pos(x))
}

pub(crate) fn gamma_pos<T: Scalar>(x: T) -> T {
    let half = T::lit(0.5);
    if x < half {
        // reflection
        let pi = T::PI();
        return pi / ((pi * x).sin() * gamma_pos(T::one() - x));
    }
    let x = x - T::one();
    let t = x + T::lit(LANCZOS_G) + half;
    let sqrt_two_pi = (T::lit(2.0) * T::PI()).sqrt();
    // split the power to keep t^(x+0.5) finite up to the f64 gamma overflow point
    let p = t.powf((x + half) * half);
    sqrt_two_pi * p * (p * (-t).exp()) * lanczos_sum(x)
}

/// Natural logarithm of the gamma function for positive arguments.
pub fn ln_gamma<T: Scalar>(x: T) -> Result<T> {
    if !(x > T::zero()) || !x.is_finite() {
        return Err(Error::invalid(format!("ln_gamma argument {x} must be positive and finite")));
    }
    Ok(ln_gamma_pos(x))
}

pub(crate) fn ln_gamma_pos<T: Scalar>(x: T) -> T {
    let half = T::lit(0.5);
    if x < half {
        let pi = T::PI();
        return (pi / (pi * x).sin()).ln() - ln_gamma_pos(T::one() - x);
    }
    let x = x - T::one();
    let t = x + T::lit(LANCZOS_G) + half;
    half * (T::lit(2.0) * T::PI()).ln() + (x + half) * t.ln() - t + lanczos_sum(x).ln()
}

/// Default cap on the number of Mittag-Leffler series terms.
pub const MITTAG_LEFFLER_MAX_TERMS: usize = 10_000;

/// Two-parameter Mittag-Leffler function `E_{alpha,beta}(t)` by its power series.
///
/// Summation stops at the first term smaller than `tolerance` once the terms
/// have started to decrease; that term is the truncation estimate. Meant for
/// `|t| <= 10`, where the series is a usable oracle.
pub fn mittag_leffler_series<T: Scalar>(alpha: T, beta: T, t: T, tolerance: T) -> Result<T> {
    mittag_leffler_series_capped(alpha, beta, t, tolerance, MITTAG_LEFFLER_MAX_TERMS)
}

pub fn mittag_leffler_series_capped<T: Scalar>(
    alpha: T,
    beta: T,
    t: T,
    tolerance: T,
    max_terms: usize,
) -> Result<T> {
    if !(alpha > T::zero() && beta > T::zero()) {
        return Err(Error::invalid("Mittag-Leffler parameters must be positive"));
    }
    if !(tolerance > T::zero()) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    if t == T::zero() {
        return Ok(T::one() / gamma_pos(beta));
    }
    let ln_abs_t = t.abs().ln();
    let negative = t < T::zero();
    let gamma_limit = T::lit(170.0);
    let mut sum = T::zero();
    let mut prev_mag = T::infinity();
    for k in 0..max_terms {
        let kf = T::from_usize_lossy(k);
        let arg = alpha * kf + beta;
        let mag = if arg <= gamma_limit {
            t.abs().powi(k as i32) / gamma_pos(arg)
        } else {
            (kf * ln_abs_t - ln_gamma_pos(arg)).exp()
        };
        if mag < tolerance && mag <= prev_mag {
            return Ok(sum);
        }
        let term = if negative && k % 2 == 1 { -mag } else { mag };
        sum = sum + term;
        prev_mag = mag;
    }
    Err(Error::NonConvergence {
        terms: max_terms,
        last_term: prev_mag.as_f64(),
    })
}
