//! Continuous-time state-space models and their exact discretization.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::pk::PkParams;
use crate::poly;
use crate::rational::{substitution_filter, OustaloupDesign, RationalTransferFunction};
use crate::trajectory::Trajectory;

/// `x' = A x + B u`, `y = C x + D u`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

impl StateSpaceModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n
            || b.nrows() != n
            || c.ncols() != n
            || d.nrows() != c.nrows()
            || d.ncols() != b.ncols()
        {
            return Err(Error::invalid(format!(
                "inconsistent state-space dimensions: A {}x{}, B {}x{}, C {}x{}, D {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols(),
                c.nrows(),
                c.ncols(),
                d.nrows(),
                d.ncols()
            )));
        }
        Ok(Self { a, b, c, d })
    }

    pub fn states(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    /// `C (sI - A)^{-1} B + D`.
    pub fn transfer_matrix(&self, s: Complex64) -> Result<DMatrix<Complex64>> {
        let n = self.states();
        let to_c = |m: &DMatrix<f64>| m.map(|x| Complex64::new(x, 0.0));
        let d = to_c(&self.d);
        if n == 0 {
            return Ok(d);
        }
        let resolvent = DMatrix::<Complex64>::identity(n, n) * s - to_c(&self.a);
        let x = resolvent
            .lu()
            .solve(&to_c(&self.b))
            .ok_or_else(|| Error::Singular(format!("sI - A is singular at s = {s}")))?;
        Ok(to_c(&self.c) * x + d)
    }

    pub fn siso_response(&self, s: Complex64) -> Result<Complex64> {
        if self.inputs() != 1 || self.outputs() != 1 {
            return Err(Error::invalid("model is not single-input single-output"));
        }
        Ok(self.transfer_matrix(s)?[(0, 0)])
    }

    /// `next` driven by the output of `self`.
    pub fn series(&self, next: &StateSpaceModel) -> Result<Self> {
        if self.outputs() != next.inputs() {
            return Err(Error::invalid("series connection dimension mismatch"));
        }
        let (n1, n2) = (self.states(), next.states());
        let mut a = DMatrix::zeros(n1 + n2, n1 + n2);
        a.view_mut((0, 0), (n1, n1)).copy_from(&self.a);
        a.view_mut((n1, n1), (n2, n2)).copy_from(&next.a);
        a.view_mut((n1, 0), (n2, n1)).copy_from(&(&next.b * &self.c));
        let mut b = DMatrix::zeros(n1 + n2, self.inputs());
        b.view_mut((0, 0), (n1, self.inputs())).copy_from(&self.b);
        b.view_mut((n1, 0), (n2, self.inputs())).copy_from(&(&next.b * &self.d));
        let mut c = DMatrix::zeros(next.outputs(), n1 + n2);
        c.view_mut((0, 0), (next.outputs(), n1)).copy_from(&(&next.d * &self.c));
        c.view_mut((0, n1), (next.outputs(), n2)).copy_from(&next.c);
        Self::new(a, b, c, &next.d * &self.d)
    }

    pub fn scaled_output(&self, k: f64) -> Self {
        Self {
            a: self.a.clone(),
            b: self.b.clone(),
            c: &self.c * k,
            d: &self.d * k,
        }
    }

    /// Inverse system of `H + offset` for a SISO `H` with `D + offset != 0`.
    pub fn inverse_with_offset(&self, offset: f64) -> Result<Self> {
        if self.inputs() != 1 || self.outputs() != 1 {
            return Err(Error::invalid("only SISO systems are inverted"));
        }
        let d = self.d[(0, 0)] + offset;
        if d.abs() < 1e-300 {
            return Err(Error::Singular("feedthrough vanishes; inverse is improper".into()));
        }
        let inv = 1.0 / d;
        Self::new(
            &self.a - &self.b * &self.c * inv,
            &self.b * inv,
            &self.c * (-inv),
            DMatrix::from_element(1, 1, inv),
        )
    }

    /// State reached from rest by an impulse of the given weight on input 0.
    pub fn bolus_state(&self, dose: f64) -> DVector<f64> {
        self.b.column(0) * dose
    }
}

/// Controllable canonical realization of a proper transfer function.
pub fn realize(tf: &RationalTransferFunction) -> Result<StateSpaceModel> {
    if !tf.is_proper() {
        return Err(Error::invalid("only proper transfer functions can be realized"));
    }
    let tf = tf.normalized();
    let n = tf.denominator_degree();
    let mut num = tf.numerator.clone();
    while num.len() < n + 1 {
        num.insert(0, 0.0);
    }
    let d = num[0];
    // strictly proper remainder, descending powers s^{n-1}..s^0
    let rem: Vec<f64> = (1..=n).map(|i| num[i] - d * tf.denominator[i]).collect();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n.saturating_sub(1) {
        a[(i, i + 1)] = 1.0;
    }
    for j in 0..n {
        a[(n - 1, j)] = -tf.denominator[n - j];
    }
    let mut b = DMatrix::zeros(n, 1);
    if n > 0 {
        b[(n - 1, 0)] = 1.0;
    }
    let c = DMatrix::from_fn(1, n, |_, j| rem[n - 1 - j]);
    StateSpaceModel::new(a, b, c, DMatrix::from_element(1, 1, d))
}

/// Two-output realization (A1, A2) of the model with `s^alpha` replaced by an
/// approximant, given the filter `M = 1 / (H + k21)`.
///
/// With `xi' = k12 A1` the model reads
/// `A1' = -(k12 + k10) A1 + k21 k12 M[A1] + u` and `A2 = xi - k21 M[xi]`,
/// which reproduces the substituted `G1` and `G2` exactly.
pub fn pk_state_space(m: &StateSpaceModel, params: &PkParams<f64>) -> Result<StateSpaceModel> {
    if m.inputs() != 1 || m.outputs() != 1 {
        return Err(Error::invalid("substitution filter must be SISO"));
    }
    let PkParams { k10, k12, k21, .. } = *params;
    let r = m.states();
    let n = 2 + 2 * r;
    let (dm, cm) = (m.d[(0, 0)], m.c.row(0));
    // state order: A1, z1 (M driven by A1), xi, z2 (M driven by xi)
    let (i_a1, i_z1, i_xi, i_z2) = (0, 1, 1 + r, 2 + r);
    let mut a = DMatrix::zeros(n, n);
    a[(i_a1, i_a1)] = -(k12 + k10) + k21 * k12 * dm;
    for j in 0..r {
        a[(i_a1, i_z1 + j)] = k21 * k12 * cm[j];
    }
    a.view_mut((i_z1, i_z1), (r, r)).copy_from(&m.a);
    a.view_mut((i_z1, i_a1), (r, 1)).copy_from(&m.b);
    a[(i_xi, i_a1)] = k12;
    a.view_mut((i_z2, i_z2), (r, r)).copy_from(&m.a);
    a.view_mut((i_z2, i_xi), (r, 1)).copy_from(&m.b);

    let mut b = DMatrix::zeros(n, 1);
    b[(i_a1, 0)] = 1.0;
    let mut c = DMatrix::zeros(2, n);
    c[(0, i_a1)] = 1.0;
    c[(1, i_xi)] = 1.0 - k21 * dm;
    for j in 0..r {
        c[(1, i_z2 + j)] = -k21 * cm[j];
    }
    StateSpaceModel::new(a, b, c, DMatrix::zeros(2, 1))
}

/// [`pk_state_space`] for an approximant given in coefficient form.
pub fn pk_state_space_from_tf(approx: &RationalTransferFunction, params: &PkParams<f64>) -> Result<StateSpaceModel> {
    let m = realize(&substitution_filter(approx, params.k21)?)?;
    pk_state_space(&m, params)
}

/// [`pk_state_space`] for an Oustaloup filter, built from its cascade form.
pub fn pk_state_space_from_oustaloup(design: &OustaloupDesign, params: &PkParams<f64>) -> Result<StateSpaceModel> {
    let m = design.state_space().inverse_with_offset(params.k21)?;
    pk_state_space(&m, params)
}

/// Input applied between grid points.
#[derive(Debug, Clone, PartialEq)]
pub enum LtiInput {
    Zero,
    /// Value held on `[t_k, t_{k+1})` for a single-input model; missing
    /// trailing entries are zero.
    PiecewiseConstant(Vec<f64>),
}

/// Sampled outputs of [`simulate_lti`].
#[derive(Debug, Clone, PartialEq)]
pub struct LtiResponse {
    pub grid: Vec<f64>,
    pub outputs: Vec<DVector<f64>>,
}

impl LtiResponse {
    pub fn output(&self, i: usize) -> Vec<f64> {
        self.outputs.iter().map(|y| y[i]).collect()
    }

    pub fn into_trajectory(self, method: impl Into<String>) -> Result<Trajectory<f64>> {
        if self.outputs.first().is_some_and(|y| y.len() != 2) {
            return Err(Error::invalid("trajectory needs exactly two outputs"));
        }
        let values = self.outputs.iter().map(|y| [y[0], y[1]]).collect();
        Trajectory::new(self.grid, values, method)
    }
}

/// Exact zero-order-hold discretization `(Phi, Gamma)` for step `h`.
pub fn discretize(model: &StateSpaceModel, h: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, m) = (model.states(), model.inputs());
    let mut aug = DMatrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&(&model.a * h));
    aug.view_mut((0, n), (n, m)).copy_from(&(&model.b * h));
    let e = aug.exp();
    (e.view((0, 0), (n, n)).into_owned(), e.view((0, n), (n, m)).into_owned())
}

/// Steps the model over `t_k = k h`, `k = 0..=ceil(horizon / h)`.
pub fn simulate_lti(
    model: &StateSpaceModel,
    input: &LtiInput,
    x0: &DVector<f64>,
    h: f64,
    horizon: f64,
) -> Result<LtiResponse> {
    if !(h > 0.0 && h.is_finite()) || !(horizon >= h) {
        return Err(Error::invalid("simulate_lti requires h > 0 and horizon >= h"));
    }
    if x0.len() != model.states() {
        return Err(Error::invalid("initial state has the wrong dimension"));
    }
    if matches!(input, LtiInput::PiecewiseConstant(_)) && model.inputs() != 1 {
        return Err(Error::invalid("piecewise-constant input needs a single-input model"));
    }
    let steps = (horizon / h - 1e-9).ceil() as usize;
    let (phi, gamma) = discretize(model, h);
    let mut x = x0.clone();
    let mut grid = Vec::with_capacity(steps + 1);
    let mut outputs = Vec::with_capacity(steps + 1);
    let u_at = |k: usize| match input {
        LtiInput::Zero => 0.0,
        LtiInput::PiecewiseConstant(v) => v.get(k).copied().unwrap_or(0.0),
    };
    for k in 0..=steps {
        let t = k as f64 * h;
        let u = u_at(k);
        let y = &model.c * &x + model.d.column(0) * u;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "LTI simulation".into(),
                t,
            });
        }
        grid.push(t);
        outputs.push(y);
        if k < steps {
            x = &phi * &x + gamma.column(0) * u;
        }
    }
    Ok(LtiResponse { grid, outputs })
}

/// Realizes the transfer function and checks the frequency response at 20
/// log-spaced frequencies; returns the worst relative deviation.
pub fn realization_error(tf: &RationalTransferFunction, model: &StateSpaceModel) -> Result<f64> {
    let mut worst = 0.0f64;
    for i in 0..20 {
        let w = 10f64.powf(-3.0 + 6.0 * i as f64 / 19.0);
        let s = Complex64::new(0.0, w);
        let want = tf.eval(s);
        let got = model.siso_response(s)?;
        worst = worst.max((got - want).norm() / want.norm().max(1e-300));
    }
    Ok(worst)
}

/// Whether every pole of `tf` lies strictly in the left half-plane.
pub fn is_stable(tf: &RationalTransferFunction) -> Result<bool> {
    Ok(poly::roots(&tf.denominator)?.iter().all(|p| p.re < 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laplace::{valsa_invert, InversionConfig, TransformFunction};
    use crate::pk::bolus_scenario;
    use crate::rational::{matsuda_fujii, oustaloup, pade_s_alpha, pade_s_alpha_stable, substitute_into_pk};

    #[test]
    fn first_order_lag() {
        let tf = RationalTransferFunction::new(vec![1.0], vec![1.0, 1.0]).unwrap();
        let m = realize(&tf).unwrap();
        assert_eq!(m.a[(0, 0)], -1.0);
        assert_eq!((m.b[(0, 0)] * m.c[(0, 0)], m.d[(0, 0)]), (1.0, 0.0));
        let r = simulate_lti(&m, &LtiInput::Zero, &m.bolus_state(1.0), 0.01, 1.0).unwrap();
        assert!((r.outputs.last().unwrap()[0] - (-1f64).exp()).abs() < 1e-10);
        assert!((r.grid.last().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_response() {
        let tf = RationalTransferFunction::new(vec![1.0, 2.0], vec![1.0, 3.0, 2.0]).unwrap();
        let m = realize(&tf).unwrap();
        let r = simulate_lti(&m, &LtiInput::Zero, &DVector::zeros(2), 0.1, 2.0).unwrap();
        assert!(r.outputs.iter().all(|y| y[0] == 0.0));
    }

    #[test]
    fn step_input_matches_closed_form() {
        let tf = RationalTransferFunction::new(vec![2.0], vec![1.0, 2.0]).unwrap();
        let m = realize(&tf).unwrap();
        let r = simulate_lti(&m, &LtiInput::PiecewiseConstant(vec![1.0; 100]), &DVector::zeros(1), 0.05, 3.0).unwrap();
        for (t, y) in r.grid.iter().zip(&r.outputs) {
            assert!((y[0] - (1.0 - (-2.0 * t).exp())).abs() < 1e-12);
        }
    }

    #[test]
    fn realization_reproduces_frequency_response() {
        let params = PkParams::nominal();
        let pade = pade_s_alpha(params.alpha, 1.0, 2, 3).unwrap();
        let (tf1, tf2) = substitute_into_pk(&pade, &params).unwrap();
        for tf in [&tf1, &tf2] {
            let m = realize(tf).unwrap();
            assert_eq!(m.states(), tf.denominator_degree());
            assert!(realization_error(tf, &m).unwrap() < 1e-8);
        }
        let biproper = RationalTransferFunction::new(vec![3.0, 1.0, 2.0], vec![1.0, 0.5, 4.0]).unwrap();
        assert!(realization_error(&biproper, &realize(&biproper).unwrap()).unwrap() < 1e-8);
    }

    #[test]
    fn interconnection_matches_substitution() {
        let params = PkParams::nominal();
        let points: Vec<f64> = (-1..=10).map(|k| 2f64.powi(k)).collect();
        let cases = vec![
            pade_s_alpha(params.alpha, 1.0, 4, 5).unwrap(),
            matsuda_fujii(|s| s.powf(params.alpha), &points).unwrap(),
        ];
        for approx in &cases {
            let (tf1, tf2) = substitute_into_pk(approx, &params).unwrap();
            let ss = pk_state_space_from_tf(approx, &params).unwrap();
            for &w in &[0.01, 0.3, 2.0, 50.0] {
                let s = Complex64::new(0.0, w);
                let g = ss.transfer_matrix(s).unwrap();
                assert!((g[(0, 0)] / tf1.eval(s) - 1.0).norm() < 1e-8);
                assert!((g[(1, 0)] / tf2.eval(s) - 1.0).norm() < 1e-8);
            }
        }
        let d = oustaloup(params.alpha, 1e-3, 1e4, 20).unwrap();
        let ss = pk_state_space_from_oustaloup(&d, &params).unwrap();
        for &w in &[0.01, 0.3, 2.0, 50.0] {
            let s = Complex64::new(0.0, w);
            let h = d.eval(s);
            let den = s * h + params.k21 * s + (params.k12 + params.k10) * h + params.k10 * params.k21;
            let g = ss.transfer_matrix(s).unwrap();
            assert!((g[(0, 0)] / ((h + params.k21) / den) - 1.0).norm() < 1e-9);
            assert!((g[(1, 0)] / (params.k12 * h / (s * den)) - 1.0).norm() < 1e-9);
        }
    }

    #[test]
    fn impulse_response_matches_inversion() {
        let params = PkParams::nominal();
        let pade = pade_s_alpha_stable(params.alpha, 1.0, 2, 3).unwrap();
        let (tf1, _) = substitute_into_pk(&pade, &params).unwrap();
        let m = realize(&tf1).unwrap();
        let r = simulate_lti(&m, &LtiInput::Zero, &m.bolus_state(1.0), 0.1, 5.0).unwrap();
        let tf = tf1.clone();
        let f = TransformFunction::new(move |s| tf.eval(s));
        for (k, t) in [(1usize, 0.1), (10, 1.0), (50, 5.0)] {
            let want = valsa_invert(&f, t, &InversionConfig::valsa(11.0)).unwrap();
            assert!((r.outputs[k][0] - want).abs() < 1e-6, "t={t}");
        }
    }

    #[test]
    fn oustaloup_bolus_tracks_reference() {
        let params = PkParams::nominal();
        let d = oustaloup(params.alpha, 1e-2, 1e3, 8).unwrap();
        let ss = pk_state_space_from_oustaloup(&d, &params).unwrap();
        let r = simulate_lti(&ss, &LtiInput::Zero, &ss.bolus_state(0.1), 1e-3, 2.0).unwrap();
        let (f1, f2) = bolus_scenario(0.1, params).unwrap().transforms();
        for k in [500, 1000, 2000] {
            let t = r.grid[k];
            let e1 = (r.outputs[k][0] - valsa_invert(&f1, t, &InversionConfig::default()).unwrap()).abs();
            let e2 = (r.outputs[k][1] - valsa_invert(&f2, t, &InversionConfig::default()).unwrap()).abs();
            assert!(e1 < 0.03 && e2 < 0.01, "t={t}: {e1} {e2}");
        }
    }
}
