//! Adams-Bashforth-Moulton predictor-corrector for linear commensurate systems.
//!
//! With `x(t) = x0 + I^gamma[A x](t) + b I^gamma[u](t)` the input term is
//! integrated exactly and the product-integration rules act on `f = A x`:
//!
//! * predictor: `x_p = x0 + h^g / Gamma(g+1) sum_{j<=n} B(n+1-j) f_j`,
//!   `B(L) = L^g - (L-1)^g`;
//! * corrector: `x = x0 + h^g / Gamma(g+2) (f(x_p) + sum_{j<=n} a_{j,n+1} f_j)`
//!   with `a_{j,n+1} = (L+1)^{g+1} - 2 L^{g+1} + (L-1)^{g+1}`, `L = n+1-j`, for
//!   `j >= 1` and `a_{0,n+1} = n^{g+1} - (n-g)(n+1)^g`.

use crate::commensurate::{CommensurateSystem, InputSignal};
use crate::conv::OnlineConvolution;
use crate::error::{Error, Result};
use crate::frac::gamma_fn;
use crate::trajectory::Trajectory;

const LEAF: usize = 32;

/// `sum_{k>=k0} binom(p, k) x^k` for `|x| <= 1/8`.
fn binomial_tail(p: f64, x: f64, k0: usize) -> f64 {
    let mut coef = 1.0;
    for k in 1..k0 {
        coef *= (p - (k as f64 - 1.0)) / k as f64;
    }
    let mut term_pow = x.powi(k0 as i32);
    let mut sum = 0.0;
    let mut k = k0;
    loop {
        coef *= (p - (k as f64 - 1.0)) / k as f64;
        let term = coef * term_pow;
        sum += term;
        if term.abs() <= 1e-18 * sum.abs() || k > 60 {
            break;
        }
        term_pow *= x;
        k += 1;
    }
    sum
}

/// Predictor kernel `L^g - (L-1)^g`, `L >= 1`.
pub fn predictor_weight(lag: usize, gamma: f64) -> f64 {
    let l = lag as f64;
    if lag <= 1 {
        return 1.0;
    }
    -l.powf(gamma) * (gamma * (-1.0 / l).ln_1p()).exp_m1()
}

/// Corrector kernel `(L+1)^p - 2 L^p + (L-1)^p`, `p = g + 1`, `L >= 1`.
pub fn corrector_weight(lag: usize, gamma: f64) -> f64 {
    let p = gamma + 1.0;
    let l = lag as f64;
    if lag < 8 {
        return (l + 1.0).powf(p) - 2.0 * l.powf(p) + (l - 1.0).powf(p);
    }
    // even part of the binomial series of (1 + x)^p, x = 1/L
    let x = 1.0 / l;
    let mut coef = 1.0;
    let mut sum = 0.0;
    let mut xp = 1.0;
    for k in 1..=60usize {
        coef *= (p - (k as f64 - 1.0)) / k as f64;
        xp *= x;
        if k % 2 == 0 {
            let term = coef * xp;
            sum += term;
            if term.abs() <= 1e-18 * sum.abs() {
                break;
            }
        }
    }
    2.0 * l.powf(p) * sum
}

/// Corrector weight of the initial sample, `n^{g+1} - (n-g)(n+1)^g`.
pub fn corrector_start_weight(n: usize, gamma: f64) -> f64 {
    let nf = n as f64;
    if n < 16 {
        return nf.powf(gamma + 1.0) - (nf - gamma) * (nf + 1.0).powf(gamma);
    }
    let x = 1.0 / nf;
    let y = (gamma * x.ln_1p()).exp_m1();
    nf.powf(gamma + 1.0) * (gamma * x * y - binomial_tail(gamma, x, 2))
}

fn check_step(h: f64, horizon: f64) -> Result<usize> {
    if !(h > 0.0 && h.is_finite()) || !(horizon >= h) {
        return Err(Error::invalid("solver requires h > 0 and horizon >= h"));
    }
    let steps = (horizon / h - 1e-9).ceil();
    if steps > 5e7 {
        return Err(Error::invalid(format!("{steps} steps exceed the supported length")));
    }
    Ok(steps as usize)
}

pub(crate) fn steps_for(h: f64, horizon: f64) -> Result<usize> {
    check_step(h, horizon)
}

/// How the input enters the solution.
///
/// Along the input chain the response splits into the exact chain part
/// `phi_i = I^{(L-i) gamma} u` and a remainder obeying the same equation with
/// the continuous forcing `A phi - D^gamma phi + b u`. This avoids the
/// one-stage-per-step lag of the predictor-corrector along the chain. Without
/// a known chain the input enters directly through `I^gamma u`.
struct InputPath {
    gamma: f64,
    chain: Option<ForcedChain>,
}

struct ForcedChain {
    position: Vec<Option<usize>>,
    length: usize,
    gain: f64,
    /// `(row, chain position, coefficient)` of entries not cancelled by the
    /// chain links.
    terms: Vec<(usize, usize, f64)>,
}

impl InputPath {
    fn new(system: &CommensurateSystem, gamma: f64) -> Self {
        let chain = system.input_chain().and_then(|chain| {
            let top = *chain.last()?;
            let mut position = vec![None; system.dimension()];
            for (k, &c) in chain.iter().enumerate() {
                position[c] = Some(k);
            }
            let mut terms = Vec::new();
            for r in 0..system.dimension() {
                for (k, &c) in chain.iter().enumerate() {
                    let v = system.a[(r, c)];
                    let link = k > 0 && r == chain[k - 1] && v == 1.0;
                    if v != 0.0 && !link {
                        terms.push((r, k, v));
                    }
                }
            }
            Some(ForcedChain {
                position,
                length: chain.len(),
                gain: system.b[top],
                terms,
            })
        });
        Self { gamma, chain }
    }

    /// Fills `r` with the remainder forcing and returns the multiplier of `b`
    /// added to every state.
    fn forcing(&self, u: &InputSignal, t: f64, r: &mut [f64]) -> f64 {
        r.fill(0.0);
        if u.is_zero() {
            return 0.0;
        }
        match &self.chain {
            None => u.fractional_integral(self.gamma, t),
            Some(fc) => {
                for &(row, k, v) in &fc.terms {
                    let order = (fc.length - k) as f64 * self.gamma;
                    r[row] += v * fc.gain * u.fractional_integral(order, t);
                }
                0.0
            }
        }
    }

    /// Chain part of state `i` at `t`.
    fn chain_part(&self, u: &InputSignal, i: usize, t: f64) -> f64 {
        match &self.chain {
            Some(fc) if !u.is_zero() => fc.position[i]
                .map(|k| fc.gain * u.fractional_integral((fc.length - k) as f64 * self.gamma, t))
                .unwrap_or(0.0),
            _ => 0.0,
        }
    }
}

/// Solves the system on `t_n = n h`, `n = 0..=ceil(T/h)`, returning `A1`, `A2`.
pub fn abmpc_solve(system: &CommensurateSystem, u: &InputSignal, h: f64, horizon: f64) -> Result<Trajectory<f64>> {
    let steps = check_step(h, horizon)?;
    let gamma = system.gamma_f64();
    let d = system.dimension();
    let len = steps + 1;
    let (o1, o2) = system.outputs();

    let b_kernel: Vec<f64> = (0..len).map(|l| if l == 0 { 0.0 } else { predictor_weight(l, gamma) }).collect();
    let a_kernel: Vec<f64> = (0..len).map(|l| if l == 0 { 0.0 } else { corrector_weight(l, gamma) }).collect();
    let mut conv = OnlineConvolution::new(vec![b_kernel, a_kernel.clone()], d, len, LEAF)?;

    let hg = h.powf(gamma);
    let pred_scale = hg / gamma_fn(gamma + 1.0)?;
    let corr_scale = hg / gamma_fn(gamma + 2.0)?;
    let x0: Vec<f64> = system.x0.iter().copied().collect();
    let path = InputPath::new(system, gamma);
    let mut r = vec![0.0; d];

    let mut grid = Vec::with_capacity(len);
    let mut values = Vec::with_capacity(len);
    let mut f0 = vec![0.0; d];
    system.apply(&x0, &mut f0);
    grid.push(0.0);
    values.push([x0[o1], x0[o2]]);
    conv.push(&f0);

    let mut sb = vec![0.0; d];
    let mut sa = vec![0.0; d];
    let mut xp = vec![0.0; d];
    let mut fp = vec![0.0; d];
    let mut x = vec![0.0; d];
    let mut f = vec![0.0; d];
    for m in 1..len {
        let t = m as f64 * h;
        let forcing = path.forcing(u, t, &mut r);
        conv.current(0, &mut sb);
        for i in 0..d {
            xp[i] = x0[i] + pred_scale * sb[i] + system.b[i] * forcing;
        }
        system.apply(&xp, &mut fp);
        for i in 0..d {
            fp[i] += r[i];
        }
        conv.current(1, &mut sa);
        let start = corrector_start_weight(m - 1, gamma) - a_kernel[m];
        for i in 0..d {
            x[i] = x0[i] + corr_scale * (fp[i] + sa[i] + start * f0[i]) + system.b[i] * forcing;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("ABM predictor-corrector (gamma = {gamma:.5}, h = {h:e})"),
                t,
            });
        }
        grid.push(t);
        values.push([x[o1] + path.chain_part(u, o1, t), x[o2] + path.chain_part(u, o2, t)]);
        if m + 1 < len {
            system.apply(&x, &mut f);
            for i in 0..d {
                f[i] += r[i];
            }
            conv.push(&f);
        }
    }
    let mut traj = Trajectory::new(grid, values, format!("abm(h={h:e}, gamma=1/{})", system.q))?;
    traj.step = h;
    Ok(traj)
}
