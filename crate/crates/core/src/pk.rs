//! The two-compartment fractional pharmacokinetic model of Amiodarone.
//!
//! Amounts are in ng, time in days. The central compartment `A1` receives the
//! dose and eliminates with rate `k10`; the tissue compartment `A2` exchanges
//! with it through a Caputo derivative of order `1 - alpha`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laplace::TransformFunction;
use crate::scalar::Scalar;

/// Model constants. `k21` carries units of day^-alpha.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PkParams<T = f64> {
    pub alpha: T,
    pub k10: T,
    pub k12: T,
    pub k21: T,
}

impl<T: Scalar> PkParams<T> {
    /// Validating constructor. Rate constants may be zero so that degenerate
    /// variants (no elimination, decoupled compartments) can be expressed.
    pub fn new(alpha: T, k10: T, k12: T, k21: T) -> Result<Self> {
        if !(alpha > T::zero() && alpha < T::one()) {
            return Err(Error::invalid(format!("alpha = {alpha} not in (0, 1)")));
        }
        for (name, k) in [("k10", k10), ("k12", k12), ("k21", k21)] {
            if !(k >= T::zero()) || !k.is_finite() {
                return Err(Error::invalid(format!("{name} = {k} must be finite and non-negative")));
            }
        }
        Ok(Self { alpha, k10, k12, k21 })
    }

    /// The published Amiodarone constants.
    pub fn nominal() -> Self {
        Self {
            alpha: T::lit(0.587),
            k10: T::lit(1.4913),
            k12: T::lit(2.9522),
            k21: T::lit(0.4854),
        }
    }

    /// Order of the Caputo derivative acting on the tissue compartment.
    pub fn derivative_order(&self) -> T {
        T::one() - self.alpha
    }
}

/// `A1(s)/U(s)` evaluated on the principal branch.
pub fn g1(params: &PkParams<f64>, s: Complex64) -> Complex64 {
    let sa = s.powf(params.alpha);
    (sa + params.k21) / denominator(params, s, sa)
}

/// `A2(s)/U(s)` evaluated on the principal branch.
pub fn g2(params: &PkParams<f64>, s: Complex64) -> Complex64 {
    let sa = s.powf(params.alpha);
    params.k12 * (sa / s) / denominator(params, s, sa)
}

fn denominator(p: &PkParams<f64>, s: Complex64, sa: Complex64) -> Complex64 {
    s * sa + p.k21 * s + (p.k12 + p.k10) * sa + p.k10 * p.k21
}

/// Both transfer functions as invertible transforms.
pub fn transfer_functions(params: &PkParams<f64>) -> (TransformFunction, TransformFunction) {
    let p1 = *params;
    let p2 = *params;
    (
        TransformFunction::new(move |s| g1(&p1, s)),
        TransformFunction::new(move |s| g2(&p2, s)),
    )
}

/// A single i.v. bolus into the central compartment at t = 0 with an empty
/// tissue compartment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BolusScenario {
    pub dose: f64,
    pub params: PkParams<f64>,
}

impl BolusScenario {
    pub fn initial_state(&self) -> [f64; 2] {
        [self.dose, 0.0]
    }

    /// Laplace transforms of the two compartment amounts, `dose * G_i(s)`,
    /// tagged with their values at t = 0.
    pub fn transforms(&self) -> (TransformFunction, TransformFunction) {
        let d = self.dose;
        let p1 = self.params;
        let p2 = self.params;
        (
            TransformFunction::new(move |s| d * g1(&p1, s)).with_initial_value(d),
            TransformFunction::new(move |s| d * g2(&p2, s)).with_initial_value(0.0),
        )
    }
}

pub fn bolus_scenario(dose: f64, params: PkParams<f64>) -> Result<BolusScenario> {
    if !(dose >= 0.0) || !dose.is_finite() {
        return Err(Error::invalid(format!("dose {dose} must be finite and non-negative")));
    }
    Ok(BolusScenario { dose, params })
}

/// Denominator of the rationalized order used for perturbed patients.
pub const PATIENT_ORDER_DENOMINATOR: u32 = 46;
/// Numerator of the nominal rationalized order (19/46 ~ 0.413).
pub const NOMINAL_ORDER_NUMERATOR: u32 = 19;
/// Perturbed numerators, drawn with equal probability.
pub const PATIENT_ORDER_NUMERATORS: [u32; 4] = [17, 18, 20, 21];
pub const MULTIPLIER_RANGE: (f64, f64) = (0.85, 1.15);

/// One simulated patient: multiplicative perturbations of the rate constants
/// and a perturbed rational derivative order `p_hat / 46`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatientSample {
    pub id: usize,
    pub base: PkParams<f64>,
    pub m10: f64,
    pub m12: f64,
    pub m21: f64,
    pub p_hat: u32,
    pub q: u32,
}

impl PatientSample {
    /// The unperturbed patient with order 19/46.
    pub fn nominal() -> Self {
        Self {
            id: 0,
            base: PkParams::nominal(),
            m10: 1.0,
            m12: 1.0,
            m21: 1.0,
            p_hat: NOMINAL_ORDER_NUMERATOR,
            q: PATIENT_ORDER_DENOMINATOR,
        }
    }

    /// Derivative order `p_hat / q` of the tissue exchange term.
    pub fn derivative_order(&self) -> f64 {
        self.p_hat as f64 / self.q as f64
    }

    /// Realized model parameters; `alpha = 1 - p_hat / q`.
    pub fn params(&self) -> PkParams<f64> {
        PkParams {
            alpha: 1.0 - self.derivative_order(),
            k10: self.base.k10 * self.m10,
            k12: self.base.k12 * self.m12,
            k21: self.base.k21 * self.m21,
        }
    }
}

/// Draws `n` patients. Patient `i` uses ChaCha8 stream `i` of `seed`, so a
/// patient's draw does not depend on how many others were sampled.
pub fn sample_population(n: usize, seed: u64) -> Result<Vec<PatientSample>> {
    if n == 0 {
        return Err(Error::invalid("population size must be at least 1"));
    }
    let base = PkParams::nominal();
    let (lo, hi) = MULTIPLIER_RANGE;
    Ok((0..n)
        .map(|id| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(id as u64);
            let m10 = rng.gen_range(lo..=hi);
            let m12 = rng.gen_range(lo..=hi);
            let m21 = rng.gen_range(lo..=hi);
            let p_hat = PATIENT_ORDER_NUMERATORS[rng.gen_range(0..PATIENT_ORDER_NUMERATORS.len())];
            PatientSample {
                id,
                base,
                m10,
                m12,
                m21,
                p_hat,
                q: PATIENT_ORDER_DENOMINATOR,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: usize,
    pub m10: f64,
    pub m12: f64,
    pub m21: f64,
    pub p_hat: u32,
    pub seed: u64,
}

/// Population manifest as a JSON array of `{id, m10, m12, m21, p_hat, seed}`.
pub fn population_manifest_json(population: &[PatientSample], seed: u64) -> String {
    let entries: Vec<ManifestEntry> = population
        .iter()
        .map(|p| ManifestEntry {
            id: p.id,
            m10: p.m10,
            m12: p.m12,
            m21: p.m21,
            p_hat: p.p_hat,
            seed,
        })
        .collect();
    serde_json::to_string_pretty(&entries).expect("manifest serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nominal_constants() {
        let p = PkParams::<f64>::nominal();
        assert_eq!((p.alpha, p.k10, p.k12, p.k21), (0.587, 1.4913, 2.9522, 0.4854));
        assert!((p.derivative_order() - 0.413).abs() < 1e-15);
        let (num, den) = crate::frac::rationalize_order(p.derivative_order(), 100).unwrap();
        assert_eq!((num, den), (19, 46));
    }

    #[test]
    fn params_validation() {
        assert!(PkParams::new(1.0, 1.0, 1.0, 1.0).is_err());
        assert!(PkParams::new(0.5, -1.0, 1.0, 1.0).is_err());
        assert!(PkParams::new(0.5, 0.0, 1.0, 1.0).is_ok());
    }

    #[test]
    fn g1_at_one() {
        let p = PkParams::nominal();
        let v = g1(&p, Complex64::new(1.0, 0.0));
        let expected = (1.0 + 0.4854) / (1.0 + 0.4854 + (2.9522 + 1.4913) + 1.4913 * 0.4854);
        assert!((v.re - expected).abs() < 1e-15);
        assert!(v.im.abs() < 1e-15);
    }

    #[test]
    fn g1_behaves_like_inverse_s() {
        let p = PkParams::nominal();
        let s = Complex64::new(1e8, 0.0);
        let v = g1(&p, s) * s;
        assert!((v.re - 1.0).abs() < 1e-3);
    }

    #[test]
    fn conjugate_symmetry() {
        let p = PkParams::nominal();
        for &w in &[0.01, 0.3, 2.0, 50.0] {
            let a = g2(&p, Complex64::new(0.2, w));
            let b = g2(&p, Complex64::new(0.2, -w));
            assert!((a - b.conj()).norm() < 1e-14 * a.norm());
            let r = g1(&p, Complex64::new(w, 0.0));
            assert!(r.im.abs() < 1e-15);
        }
    }

    #[test]
    fn population_bounds_and_determinism() {
        let a = sample_population(100, 7).unwrap();
        let b = sample_population(100, 7).unwrap();
        assert_eq!(a, b);
        for p in &a {
            for m in [p.m10, p.m12, p.m21] {
                assert!((0.85..=1.15).contains(&m));
            }
            assert!(PATIENT_ORDER_NUMERATORS.contains(&p.p_hat));
            let order = p.params().derivative_order();
            assert!([17.0, 18.0, 20.0, 21.0].iter().any(|n| (order - n / 46.0).abs() < 1e-15));
        }
        assert!(sample_population(0, 1).is_err());
        // prefix stability
        let c = sample_population(10, 7).unwrap();
        assert_eq!(&a[..10], &c[..]);
    }

    #[test]
    fn population_mean() {
        let pop = sample_population(10_000, 42).unwrap();
        let mean = pop.iter().map(|p| p.m10).sum::<f64>() / pop.len() as f64;
        assert!((mean - 1.0).abs() < 0.01);
        let mut counts = [0usize; 4];
        for p in &pop {
            counts[PATIENT_ORDER_NUMERATORS.iter().position(|&x| x == p.p_hat).unwrap()] += 1;
        }
        for c in counts {
            assert!((c as f64 / 10_000.0 - 0.25).abs() < 0.02);
        }
    }

    #[test]
    fn manifest_shape() {
        let pop = sample_population(2, 3).unwrap();
        let json = population_manifest_json(&pop, 3);
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        let arr = v.as_array().unwrap();
        assert_eq!(arr.len(), 2);
        for key in ["id", "m10", "m12", "m21", "p_hat", "seed"] {
            assert!(arr[0].get(key).is_some());
        }
    }
}
