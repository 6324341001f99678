//! Dense real polynomials stored by descending powers.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Drops leading zero coefficients, keeping at least one entry.
pub fn trim(p: &[f64]) -> Vec<f64> {
    let first = p.iter().position(|&c| c != 0.0).unwrap_or(p.len().saturating_sub(1));
    if p.is_empty() {
        vec![0.0]
    } else {
        p[first..].to_vec()
    }
}

pub fn degree(p: &[f64]) -> usize {
    trim(p).len() - 1
}

pub fn is_zero(p: &[f64]) -> bool {
    p.iter().all(|&c| c == 0.0)
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len().max(b.len());
    let mut out = vec![0.0; n];
    for (i, &c) in a.iter().enumerate() {
        out[n - a.len() + i] += c;
    }
    for (i, &c) in b.iter().enumerate() {
        out[n - b.len() + i] += c;
    }
    trim(&out)
}

pub fn scale(a: &[f64], k: f64) -> Vec<f64> {
    trim(&a.iter().map(|c| c * k).collect::<Vec<_>>())
}

pub fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    trim(&out)
}

/// Multiplies by `s`.
pub fn shift_up(a: &[f64]) -> Vec<f64> {
    let mut out = a.to_vec();
    out.push(0.0);
    trim(&out)
}

pub fn eval(p: &[f64], s: Complex64) -> Complex64 {
    p.iter().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * s + c)
}

pub fn eval_real(p: &[f64], x: f64) -> f64 {
    p.iter().fold(0.0, |acc, &c| acc * x + c)
}

pub fn derivative(p: &[f64]) -> Vec<f64> {
    let n = p.len() - 1;
    if n == 0 {
        return vec![0.0];
    }
    p[..n].iter().enumerate().map(|(i, &c)| c * (n - i) as f64).collect()
}

/// Monic polynomial with the given real roots.
pub fn from_real_roots(roots: &[f64]) -> Vec<f64> {
    roots.iter().fold(vec![1.0], |acc, &r| mul(&acc, &[1.0, -r]))
}

/// Rewrites `p(x)` as a polynomial in `s` with `x = s - s0`.
pub fn taylor_shift(p: &[f64], s0: f64) -> Vec<f64> {
    // Horner in the shifted basis: acc <- acc * (s - s0) + c
    let mut acc = vec![0.0];
    for &c in p {
        acc = add(&mul(&acc, &[1.0, -s0]), &[c]);
    }
    trim(&acc)
}

/// All complex roots by the Aberth-Ehrlich simultaneous iteration.
pub fn roots(p: &[f64]) -> Result<Vec<Complex64>> {
    let p = trim(p);
    let n = p.len() - 1;
    if n == 0 {
        return Ok(Vec::new());
    }
    if p.iter().any(|c| !c.is_finite()) {
        return Err(Error::invalid("polynomial has non-finite coefficients"));
    }
    let lead = p[0];
    let monic: Vec<f64> = p.iter().map(|c| c / lead).collect();
    let dp = derivative(&monic);

    // initial guesses on a circle through the geometric mean root modulus
    let c0 = monic[n].abs();
    let radius = if c0 > 0.0 { c0.powf(1.0 / n as f64) } else { 1.0 };
    let mut z: Vec<Complex64> = (0..n)
        .map(|k| Complex64::from_polar(radius, 2.0 * std::f64::consts::PI * (k as f64 + 0.25) / n as f64 + 0.4))
        .collect();

    for _ in 0..500 {
        let mut moved = 0.0f64;
        for i in 0..n {
            let pv = eval(&monic, z[i]);
            if pv == Complex64::new(0.0, 0.0) {
                continue;
            }
            let ratio = pv / eval(&dp, z[i]);
            let repulsion: Complex64 = (0..n).filter(|&j| j != i).map(|j| 1.0 / (z[i] - z[j])).sum();
            let step = ratio / (Complex64::new(1.0, 0.0) - ratio * repulsion);
            if step.re.is_finite() && step.im.is_finite() {
                z[i] -= step;
                moved = moved.max(step.norm() / z[i].norm().max(f64::MIN_POSITIVE));
            }
        }
        if moved < 1e-15 {
            break;
        }
    }
    if z.iter().any(|r| !r.re.is_finite() || !r.im.is_finite()) {
        return Err(Error::NonConvergence {
            terms: 500,
            last_term: f64::NAN,
        });
    }
    // snap numerically real roots and sort for reproducible output
    for r in &mut z {
        if r.im.abs() <= 1e-12 * r.norm().max(1e-300) {
            r.im = 0.0;
        }
    }
    z.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(z)
}
