//! Fractional linear multistep method generated by the trapezoidal rule
//! (convolution quadrature for `I^gamma`).
//!
//! `x_n = x0 + b I^gamma[u](t_n) + h^g (sum_{j<=n} w_{n-j} f_j + sum_{j<=s} W_{n,j} f_j)`
//! with `f = A x`, quadrature weights from `((1 + z) / (2 (1 - z)))^g` and
//! starting weights `W_{n,j}` that make the rule exact on `t^{k g}`,
//! `k g <= 1`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::abm::steps_for;
use crate::commensurate::{CommensurateSystem, InputSignal};
use crate::conv::OnlineConvolution;
use crate::error::{Error, Result};
use crate::frac::gamma_fn;
use crate::trajectory::Trajectory;

/// Smallest base order accepted by [`flmm_trapezoidal_solve`].
pub const FLMM_MIN_GAMMA: f64 = 0.1;

const LEAF: usize = 32;

/// Coefficients of `((1 + z) / (2 (1 - z)))^g` from
/// `(n + 1) w_{n+1} = 2 g w_n + (n - 1) w_{n-1}`.
pub fn trapezoidal_weights(gamma: f64, count: usize) -> Vec<f64> {
    let mut w = Vec::with_capacity(count);
    if count == 0 {
        return w;
    }
    w.push(2f64.powf(-gamma));
    if count > 1 {
        w.push(2.0 * gamma * w[0]);
    }
    for n in 1..count.saturating_sub(1) {
        let next = (2.0 * gamma * w[n] + (n as f64 - 1.0) * w[n - 1]) / (n as f64 + 1.0);
        w.push(next);
    }
    w
}

/// Linear convolution `(a * b)_n`, `n < len`, by FFT.
fn convolve(a: &[f64], b: &[f64], len: usize) -> Vec<f64> {
    let n = (a.len() + b.len()).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut z: Vec<Complex64> = (0..n)
        .map(|i| Complex64::new(a.get(i).copied().unwrap_or(0.0), b.get(i).copied().unwrap_or(0.0)))
        .collect();
    fwd.process(&mut z);
    // separate the two real spectra packed in one transform
    let mut prod = vec![Complex64::new(0.0, 0.0); n];
    for k in 0..n {
        let zk = z[k];
        let zc = z[(n - k) % n].conj();
        let fa = (zk + zc) * 0.5;
        let fb = (zk - zc) * Complex64::new(0.0, -0.5);
        prod[k] = fa * fb / n as f64;
    }
    inv.process(&mut prod);
    prod.iter().take(len).map(|c| c.re).collect()
}

/// Starting weights `W[n][j]`, `n = 0..len`, `j = 0..=s`.
fn starting_weights(gamma: f64, omega: &[f64], s: usize, len: usize) -> Result<Vec<Vec<f64>>> {
    let exps: Vec<f64> = (0..=s).map(|k| k as f64 * gamma).collect();
    let vander = DMatrix::from_fn(s + 1, s + 1, |r, j| if j == 0 && r == 0 { 1.0 } else { (j as f64).powf(exps[r]) });
    let lu = vander.lu();
    let mut rhs_rows = Vec::with_capacity(s + 1);
    for &e in &exps {
        let powers: Vec<f64> = (0..len).map(|j| if j == 0 { if e == 0.0 { 1.0 } else { 0.0 } } else { (j as f64).powf(e) }).collect();
        let quad = convolve(omega, &powers, len);
        let coef = gamma_fn(e + 1.0)? / gamma_fn(e + 1.0 + gamma)?;
        rhs_rows.push(
            (0..len)
                .map(|n| coef * (n as f64).powf(e + gamma) - quad[n])
                .collect::<Vec<f64>>(),
        );
    }
    (0..len)
        .map(|n| {
            let rhs = DVector::from_fn(s + 1, |r, _| rhs_rows[r][n]);
            lu.solve(&rhs)
                .map(|v| v.iter().copied().collect())
                .ok_or_else(|| Error::Singular("starting-weight system is singular".into()))
        })
        .collect()
}

/// Solves the system with the trapezoidal FLMM on `t_n = n h`.
pub fn flmm_trapezoidal_solve(
    system: &CommensurateSystem,
    u: &InputSignal,
    h: f64,
    horizon: f64,
) -> Result<Trajectory<f64>> {
    let gamma = system.gamma_f64();
    if gamma < FLMM_MIN_GAMMA {
        return Err(Error::Refused(format!(
            "trapezoidal FLMM refused for gamma = 1/{} < {FLMM_MIN_GAMMA}: below this order the \
             quadrature gives poor results and often fails to converge",
            system.q
        )));
    }
    let steps = steps_for(h, horizon)?;
    let len = steps + 1;
    let d = system.dimension();
    let (o1, o2) = system.outputs();
    let s = (1.0 / gamma + 1e-9).floor() as usize;
    let omega = trapezoidal_weights(gamma, len);
    let start = starting_weights(gamma, &omega, s, len)?;
    let hg = h.powf(gamma);
    let x0 = DVector::from_iterator(d, system.x0.iter().copied());
    let forcing = |n: usize| {
        if u.is_zero() {
            0.0
        } else {
            u.fractional_integral(gamma, n as f64 * h)
        }
    };
    let a = &system.a;
    let f0 = a * &x0;
    let mut xs: Vec<DVector<f64>> = Vec::with_capacity(len);
    xs.push(x0.clone());

    // first s steps solved jointly: they are coupled through the starting terms
    let first = s.min(steps);
    if first > 0 {
        let dim = first * d;
        let mut big = DMatrix::<f64>::identity(dim, dim);
        let mut rhs = DVector::zeros(dim);
        for n in 1..=first {
            let row = (n - 1) * d;
            for j in 1..=first {
                let mut c = start[n][j];
                if j <= n {
                    c += omega[n - j];
                }
                if c != 0.0 {
                    let block = a * (-hg * c);
                    let mut view = big.view_mut((row, (j - 1) * d), (d, d));
                    view += block;
                }
            }
            let known = &x0 + &f0 * (hg * (omega[n] + start[n][0])) + &system.b * forcing(n);
            rhs.rows_mut(row, d).copy_from(&known);
        }
        let sol = big
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Singular("FLMM starting block is singular".into()))?;
        for n in 1..=first {
            xs.push(sol.rows((n - 1) * d, d).into_owned());
        }
    }

    let mut conv = OnlineConvolution::new(vec![omega.clone()], d, len, LEAF)?;
    let fs: Vec<DVector<f64>> = xs.iter().map(|x| a * x).collect();
    for f in &fs {
        conv.push(f.as_slice());
    }
    let implicit = (DMatrix::<f64>::identity(d, d) - a * (hg * omega[0])).lu();
    let mut hist = vec![0.0; d];
    for n in first + 1..len {
        conv.current(0, &mut hist);
        let mut rhs = &x0 + &system.b * forcing(n);
        for i in 0..d {
            rhs[i] += hg * hist[i];
        }
        for (j, f) in fs.iter().enumerate().take(s + 1) {
            rhs += f * (hg * start[n][j]);
        }
        let x = implicit
            .solve(&rhs)
            .ok_or_else(|| Error::Singular("FLMM implicit step is singular".into()))?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("trapezoidal FLMM (gamma = {gamma:.4}, h = {h:e})"),
                t: n as f64 * h,
            });
        }
        if n + 1 < len {
            conv.push((a * &x).as_slice());
        }
        xs.push(x);
    }
    let grid = (0..len).map(|n| n as f64 * h).collect();
    let values = xs.iter().map(|x| [x[o1], x[o2]]).collect();
    Trajectory::new(grid, values, format!("flmm-trapezoidal(h={h:e}, gamma=1/{})", system.q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::commensurate::expand_commensurate;
    use crate::frac::mittag_leffler_series;
    use crate::pk::PkParams;

    #[test]
    fn weights_match_series_product() {
        // ((1+z)/2)^g (1-z)^{-g}: binomial series times rising-factorial series
        let g = 0.37;
        let n = 40;
        let mut plus = vec![2f64.powf(-g)];
        let mut minus = vec![1.0];
        for k in 1..n {
            plus.push(plus[k - 1] * (g - (k as f64 - 1.0)) / k as f64);
            minus.push(minus[k - 1] * (g + k as f64 - 1.0) / k as f64);
        }
        let w = trapezoidal_weights(g, n);
        for k in 0..n {
            let direct: f64 = (0..=k).map(|i| plus[i] * minus[k - i]).sum();
            assert!((w[k] - direct).abs() < 1e-13, "k={k}");
        }
    }

    #[test]
    fn fft_convolution() {
        let a = [1.0, 2.0, 3.0];
        let b = [0.5, -1.0];
        let c = convolve(&a, &b, 4);
        for (x, y) in c.iter().zip([0.5, 0.0, -0.5, -3.0]) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn refuses_small_order() {
        let sys = expand_commensurate(&PkParams::nominal(), 19, 46).unwrap();
        assert!(matches!(
            flmm_trapezoidal_solve(&sys, &InputSignal::zero(), 1e-2, 1.0),
            Err(Error::Refused(_))
        ));
    }

    #[test]
    fn relaxation_matches_mittag_leffler() {
        let sys = CommensurateSystem::linear(
            2,
            DMatrix::from_element(1, 1, -1.0),
            DVector::zeros(1),
            DVector::from_element(1, 1.0),
            (0, 0),
        )
        .unwrap();
        let traj = flmm_trapezoidal_solve(&sys, &InputSignal::zero(), 1e-4, 1.0).unwrap();
        let want = mittag_leffler_series(0.5, 1.0, -1.0, 1e-15).unwrap();
        let got = traj.values.last().unwrap()[0];
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    }
}
