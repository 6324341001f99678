use fracpk::frac::gl_weights;
use fracpk::gl::{build_gl_realization, gl_simulate};
use fracpk::laplace::{invert, InversionConfig, TransformFunction};
use fracpk::lti::realize;
use fracpk::pk::{g1, g2, sample_population, PATIENT_ORDER_NUMERATORS};
use fracpk::rational::{matsuda_fujii, oustaloup, RationalTransferFunction};
use fracpk::PkParams;
use num_complex::Complex64;
use proptest::prelude::*;

fn polynomial_from_roots(roots: &[f64]) -> Vec<f64> {
    let mut p = vec![1.0];
    for &r in roots {
        let mut next = vec![0.0; p.len() + 1];
        for (i, c) in p.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c * r;
        }
        p = next;
    }
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn gl_partial_sums_positive_and_decreasing(alpha in 0.01f64..0.99, n in 1usize..3000) {
        let w = gl_weights(alpha, n).unwrap();
        let mut s = 0.0;
        let mut prev = f64::INFINITY;
        for c in &w.weights {
            s += c;
            prop_assert!(s > 0.0 && s < prev);
            prev = s;
        }
    }

    #[test]
    fn gl_recurrence_matches_binomial(alpha in 0.01f64..0.99, j in 2usize..400) {
        let w = gl_weights(alpha, j).unwrap();
        // (-1)^j binom(alpha, j) = prod_{i=1}^{j} (i - 1 - alpha) / i
        let direct: f64 = (1..=j).map(|i| (i as f64 - 1.0 - alpha) / i as f64).product();
        prop_assert!(((w.weights[j] - direct) / direct).abs() < 1e-12);
    }

    // The deviation at the band edges is about 3 alpha dB for any N, so the
    // 2 dB bound is checked for alpha up to 0.65.
    #[test]
    fn oustaloup_tracks_power_law(
        alpha in 0.05f64..0.65,
        lb in -3.0f64..-1.0,
        lh in 2.0f64..4.0,
        n in 8usize..=20,
    ) {
        let (wb, wh) = (10f64.powf(lb), 10f64.powf(lh));
        let d = oustaloup(alpha, wb, wh, n).unwrap();
        for i in 0..200 {
            let w = 10f64.powf(lb + (lh - lb) * i as f64 / 199.0);
            let db = 20.0 * (d.eval(Complex64::new(0.0, w)).norm() / w.powf(alpha)).log10();
            prop_assert!(db.abs() <= 2.0, "{db} dB at {w}");
        }
        let phase = d.eval(Complex64::new(0.0, d.centre_frequency())).arg().to_degrees();
        prop_assert!((phase - 90.0 * alpha).abs() <= 3.0);
    }

    #[test]
    fn matsuda_interpolates_nodes(alpha in 0.05f64..0.95, beta in 1.5f64..3.0, k_max in 4i32..9) {
        let nodes: Vec<f64> = (-1..=k_max).map(|k| beta.powi(k)).collect();
        let tf = matsuda_fujii(|s| s.powf(alpha), &nodes).unwrap();
        for &s in &nodes {
            let want = s.powf(alpha);
            prop_assert!(((tf.eval_real(s) - want) / want).abs() < 1e-8);
        }
    }

    #[test]
    fn realization_preserves_frequency_response(
        poles in proptest::collection::vec(0.1f64..20.0, 1..6),
        zeros in proptest::collection::vec(-20.0f64..20.0, 0..6),
        gain in 0.1f64..10.0,
    ) {
        let zeros = &zeros[..zeros.len().min(poles.len())];
        let neg: Vec<f64> = poles.iter().map(|p| -p).collect();
        let num: Vec<f64> = polynomial_from_roots(zeros).iter().map(|c| c * gain).collect();
        let tf = RationalTransferFunction::new(num, polynomial_from_roots(&neg)).unwrap();
        let model = realize(&tf).unwrap();
        for i in 0..20 {
            let s = Complex64::new(0.0, 10f64.powf(-2.0 + 4.0 * i as f64 / 19.0));
            let want = tf.eval(s);
            let got = model.siso_response(s).unwrap();
            prop_assert!((got - want).norm() <= 1e-8 * want.norm().max(1e-12));
        }
    }

    #[test]
    fn gl_conserves_mass_without_elimination(
        alpha in 0.1f64..0.95,
        k12 in 0.0f64..5.0,
        k21 in 0.0f64..2.0,
        doses in proptest::collection::vec(0.0f64..0.2, 0..50),
    ) {
        let params = PkParams::new(alpha, 0.0, k12, k21).unwrap();
        let r = build_gl_realization(&params, 1e-2, 200).unwrap();
        let traj = gl_simulate(&r, &doses, [0.05, 0.0], 2.0).unwrap();
        let mut total = 0.05;
        for (k, v) in traj.values.iter().enumerate() {
            if k > 0 {
                total += doses.get(k - 1).copied().unwrap_or(0.0);
            }
            prop_assert!((v[0] + v[1] - total).abs() < 1e-12);
        }
    }

    #[test]
    fn gl_stays_non_negative(
        scale in 0.8f64..1.2,
        h in prop_oneof![Just(1e-2), Just(5e-3), Just(1e-3)],
        doses in proptest::collection::vec(0.0f64..0.5, 0..200),
    ) {
        let n = PkParams::nominal();
        let params = PkParams::new(n.alpha, n.k10 * scale, n.k12 * scale, n.k21 * scale).unwrap();
        let r = build_gl_realization(&params, h, 500).unwrap();
        let traj = gl_simulate(&r, &doses, [0.0, 0.0], 2.0).unwrap();
        prop_assert!(traj.values.iter().all(|v| v[0] >= -1e-9 && v[1] >= -1e-9));
    }

    #[test]
    fn inversion_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, p in 0.1f64..3.0, t in 0.1f64..5.0) {
        let f = TransformFunction::new(move |s| 1.0 / (s + p));
        let g = TransformFunction::new(move |s| 1.0 / (s * s + p * s + 1.0));
        let h = TransformFunction::linear_combination(a, &f, b, &g);
        for cfg in [InversionConfig::valsa(11.0), InversionConfig::fourier()] {
            let lhs = invert(&h, t, &cfg).unwrap();
            let rhs = a * invert(&f, t, &cfg).unwrap() + b * invert(&g, t, &cfg).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }
    }

    #[test]
    fn transfer_functions_are_conjugate_symmetric(
        alpha in 0.05f64..0.95,
        k10 in 0.1f64..3.0,
        k12 in 0.1f64..5.0,
        k21 in 0.1f64..2.0,
        w in 1e-3f64..1e3,
    ) {
        let p = PkParams::new(alpha, k10, k12, k21).unwrap();
        for g in [g1, g2] {
            let up = g(&p, Complex64::new(0.0, w));
            let down = g(&p, Complex64::new(0.0, -w));
            prop_assert!((up - down.conj()).norm() <= 1e-12 * up.norm().max(1.0));
            let real_axis = g(&p, Complex64::new(w, 0.0));
            prop_assert!(real_axis.im.abs() <= 1e-12 * real_axis.re.abs().max(1.0));
        }
    }

    #[test]
    fn patient_orders_come_from_the_protocol(seed in any::<u64>(), n in 1usize..40) {
        for p in sample_population(n, seed).unwrap() {
            prop_assert!(PATIENT_ORDER_NUMERATORS.contains(&p.p_hat));
            let alpha = p.params().alpha;
            prop_assert!([17.0, 18.0, 20.0, 21.0].iter().any(|k| (alpha - (1.0 - k / 46.0)).abs() < 1e-15));
            for m in [p.m10, p.m12, p.m21] {
                prop_assert!((0.85..=1.15).contains(&m));
            }
        }
    }
}
