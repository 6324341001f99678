//! Truncated Grünwald-Letnikov discretization of the model and its augmented
//! finite-memory linear realization.
//!
//! `x_{k+1} = x_k + h A x_k + h^alpha F sum_{j<nu} c_j x_{k-j} + B u_k`
//! with `c_j` the GL weights of order `1 - alpha`, `u_k` a dose amount (ng) and
//! history before `t = 0` equal to zero. The augmented state
//! `(x_k, ..., x_{k-nu+1})` gives `x~_{k+1} = Â x~_k + B̂ u_k`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::frac::{gl_weights, GlWeightSequence};
use crate::pk::PkParams;
use crate::scalar::Scalar;
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, PartialEq)]
pub struct GlRealization<T> {
    pub h: T,
    pub nu: usize,
    pub params: PkParams<T>,
    /// `c_0..c_{nu-1}` of order `1 - alpha`.
    pub weights: GlWeightSequence<T>,
    pub a: [[T; 2]; 2],
    pub f: [[T; 2]; 2],
    pub b: [T; 2],
}

pub fn build_gl_realization<T: Scalar>(params: &PkParams<T>, h: T, nu: usize) -> Result<GlRealization<T>> {
    if !(h > T::zero() && h.is_finite()) {
        return Err(Error::invalid("GL step must be positive"));
    }
    if nu == 0 {
        return Err(Error::invalid("GL memory length must be at least 1"));
    }
    let mut weights = gl_weights(params.derivative_order(), nu.max(1))?;
    weights.weights.truncate(nu);
    let z = T::zero();
    let PkParams { k10, k12, k21, .. } = *params;
    Ok(GlRealization {
        h,
        nu,
        params: *params,
        weights,
        a: [[-(k12 + k10), z], [k12, z]],
        f: [[z, k21], [z, -k21]],
        b: [T::one(), z],
    })
}

impl<T: Scalar> GlRealization<T> {
    /// `h^alpha`, the factor in front of `F` once `h / h^{1-alpha}` is combined.
    pub fn memory_gain(&self) -> T {
        self.h.powf(self.params.alpha)
    }

    /// Block acting on `x_{k-j}` in the first block row of `Â`.
    pub fn block(&self, j: usize) -> [[T; 2]; 2] {
        let g = self.memory_gain() * self.weights.weights[j];
        let mut m = [[T::zero(); 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                m[r][c] = g * self.f[r][c];
                if j == 0 {
                    m[r][c] = m[r][c] + self.h * self.a[r][c] + if r == c { T::one() } else { T::zero() };
                }
            }
        }
        m
    }

    /// Dense `2 nu x 2 nu` transition matrix.
    pub fn dense_a_hat(&self) -> DMatrix<T> {
        let n = 2 * self.nu;
        let mut a = DMatrix::zeros(n, n);
        for j in 0..self.nu {
            let blk = self.block(j);
            for r in 0..2 {
                for c in 0..2 {
                    a[(r, 2 * j + c)] = blk[r][c];
                }
            }
        }
        for i in 2..n {
            a[(i, i - 2)] = T::one();
        }
        a
    }

    pub fn dense_b_hat(&self) -> DVector<T> {
        let mut b = DVector::zeros(2 * self.nu);
        b[0] = self.b[0];
        b[1] = self.b[1];
        b
    }
}

/// Runs the recursion from `x0` over `ceil(horizon / h)` steps. `doses[k]`
/// enters between steps `k` and `k + 1`; missing entries are zero.
pub fn gl_simulate<T: Scalar>(
    realization: &GlRealization<T>,
    doses: &[T],
    x0: [T; 2],
    horizon: T,
) -> Result<Trajectory<T>> {
    let h = realization.h;
    if !(horizon >= h) {
        return Err(Error::invalid("GL horizon must be at least one step"));
    }
    let steps = (horizon / h - T::lit(1e-9)).ceil().to_usize().unwrap_or(0);
    let mut grid = Vec::with_capacity(steps + 1);
    let mut values = Vec::with_capacity(steps + 1);
    run(realization, steps, x0, |k| doses.get(k).copied().unwrap_or(T::zero()), |k, x| {
        grid.push(T::from_usize_lossy(k) * h);
        values.push(x);
    })?;
    let mut traj = Trajectory::new(grid, values, format!("gl(h={}, nu={})", h, realization.nu))?;
    traj.step = h;
    Ok(traj)
}

/// Core recursion; `visit(k, x_k)` sees every state `k = 0..=steps`.
pub(crate) fn run<T: Scalar>(
    realization: &GlRealization<T>,
    steps: usize,
    x0: [T; 2],
    dose: impl Fn(usize) -> T,
    mut visit: impl FnMut(usize, [T; 2]),
) -> Result<()> {
    let nu = realization.nu;
    let c = &realization.weights.weights;
    let gain = realization.memory_gain();
    let h = realization.h;
    let [[a00, a01], [a10, a11]] = realization.a;
    let (f0, f1) = (realization.f[0][1], realization.f[1][1]);
    // F only reads the second compartment, so only its history is kept
    let mut ring = vec![T::zero(); nu];
    let mut head = 0usize;
    let mut x = x0;
    for k in 0..=steps {
        if !(x[0].is_finite() && x[1].is_finite()) {
            return Err(Error::NonFinite {
                context: "GL recursion".into(),
                t: (T::from_usize_lossy(k) * h).as_f64(),
            });
        }
        visit(k, x);
        if k == steps {
            break;
        }
        head = if head == 0 { nu - 1 } else { head - 1 };
        ring[head] = x[1];
        let filled = (k + 1).min(nu);
        let mut s = T::zero();
        for (j, cj) in c.iter().enumerate().take(filled) {
            let idx = head + j;
            s = s + *cj * ring[if idx >= nu { idx - nu } else { idx }];
        }
        let u = dose(k);
        let n0 = x[0] + h * (a00 * x[0] + a01 * x[1]) + gain * f0 * s + realization.b[0] * u;
        let n1 = x[1] + h * (a10 * x[0] + a11 * x[1]) + gain * f1 * s + realization.b[1] * u;
        x = [n0, n1];
    }
    Ok(())
}
