use gsobs::geometry::{besicovitch_cover, coverage_check, sensor_periodic, Ball, RadiusProfile, SensorSet};
use gsobs::kovrijkine::{good_ball_test, series_bound, ClassifierConfig};
use gsobs::observability::{bound_shape_fit, empirical_constant, min_relative_eigenvalue, observability_gramian};
use gsobs::quadrature::{gauss_hermite, gauss_legendre, gaussian_even_moment};
use gsobs::semigroup::{
    delta_weight_transfer, fit_gs_bound, harmonic_flow, shubin_galerkin_flow, GSBound,
};
use gsobs::spectral::{mass, Region, SpectralFunction};
use gsobs::theorems::{k_effective, phi, sensor_mass, verify_uncertainty, PipelineOptions};
use num_complex::Complex64;
use proptest::prelude::*;

fn coeffs(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 1..=max_len).prop_filter("nonzero", |c| c.iter().any(|x| x.abs() > 1e-3))
}

fn profile() -> impl Strategy<Value = RadiusProfile> {
    (1.0f64..3.0, 0.0f64..=1.0, 0.1f64..0.9, 1.0f64..4.0)
        .prop_map(|(r, delta, eta, r0)| RadiusProfile::new(r, delta, eta, r0).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn parseval(c in coeffs(65)) {
        let f = SpectralFunction::new_1d(c).unwrap();
        let m = mass(&f, &Region::Whole).unwrap();
        prop_assert!((m - f.norm_sq()).abs() < 1e-10 * f.norm_sq().max(1.0));
    }

    #[test]
    fn complex_eval_on_real_axis(c in coeffs(40), x in -8.0f64..8.0) {
        let f = SpectralFunction::new_1d(c).unwrap();
        let re = f.eval(&[x]).unwrap();
        let z = f.eval_complex(&[Complex64::new(x, 0.0)]).unwrap().value().unwrap();
        prop_assert!((z.re - re).abs() < 1e-12 * re.abs().max(1.0));
        prop_assert!(z.im.abs() < 1e-12);
    }

    #[test]
    fn derivative_matches_finite_differences(c in coeffs(20), x in -5.0f64..5.0) {
        let f = SpectralFunction::new_1d(c).unwrap();
        let df = f.derivative(0).unwrap();
        let h = 1e-5;
        let fd = (f.eval(&[x + h]).unwrap() - f.eval(&[x - h]).unwrap()) / (2.0 * h);
        prop_assert!((df.eval(&[x]).unwrap() - fd).abs() < 1e-6);
    }

    #[test]
    fn ladder_raises_degree_by_one(c in coeffs(30)) {
        let f = SpectralFunction::new_1d(c).unwrap();
        prop_assert!(f.derivative(0).unwrap().max_degree() <= f.max_degree() + 1);
        prop_assert!(f.multiply_coordinate(0).unwrap().max_degree() <= f.max_degree() + 1);
    }

    #[test]
    fn quadrature_moments(order in 2usize..40) {
        let gh = gauss_hermite(order).unwrap();
        for k in 0..=(gh.exact_degree() / 2).min(20) {
            let q = gh.integrate(|x| x.powi(2 * k as i32));
            let exact = gaussian_even_moment(k);
            prop_assert!((q - exact).abs() < 1e-12 * exact);
        }
        let gl = gauss_legendre(order).unwrap();
        for k in 0..=gl.exact_degree().min(30) {
            let q = gl.integrate(|x| x.powi(k as i32));
            let exact = if k % 2 == 0 { 2.0 / (k as f64 + 1.0) } else { 0.0 };
            prop_assert!((q - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn harmonic_semigroup_and_contraction(c in coeffs(40), s in 0.0f64..2.0, t in 0.0f64..2.0) {
        let g = SpectralFunction::new_1d(c).unwrap();
        let two_step = harmonic_flow(&harmonic_flow(&g, s).unwrap(), t).unwrap();
        let one_step = harmonic_flow(&g, s + t).unwrap();
        for (a, b) in two_step.coeffs().iter().zip(one_step.coeffs()) {
            prop_assert!((a - b).abs() < 1e-10);
        }
        prop_assert!(one_step.norm() <= g.norm() + 1e-12);
    }

    #[test]
    fn galerkin_flow_contracts(c in coeffs(16), t in 0.01f64..1.0) {
        let g = SpectralFunction::new_1d(c).unwrap();
        let out = shubin_galerkin_flow(&g, t, 2, 1, 1.0).unwrap();
        prop_assert!(out.output.norm() <= g.norm() * (1.0 + 1e-8));
        let h = harmonic_flow(&g, t).unwrap();
        let same = shubin_galerkin_flow(&g, t, 1, 1, 1.0).unwrap().output;
        for (a, b) in h.coeffs().iter().zip(same.coeffs()) {
            prop_assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn rho_hypotheses(p in profile(), xs in prop::collection::vec(-1e4f64..1e4, 200)) {
        for x in xs {
            let r = p.rho(&[x]);
            prop_assert!(r > 0.0);
            prop_assert!(r <= p.envelope(&[x]) * (1.0 + 1e-12));
            if x.abs() >= p.r0 {
                prop_assert!(r <= p.eta * x.abs() * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn covering_covers_with_small_overlap(p in profile(), r in 1.0f64..20.0, seed in 0u64..1000) {
        let cover = besicovitch_cover(&p, r, 1).unwrap();
        let rep = coverage_check(&cover, 20_000, seed);
        prop_assert!(rep.passed());
        prop_assert!(rep.max_multiplicity <= 4);
        prop_assert!(cover.centers.iter().all(|c| c[0].abs() < cover.target_radius));
    }

    #[test]
    fn density_monotone_under_enlargement(lo in 0.05f64..0.9, extra in 0.0f64..0.1, c in -10.0f64..10.0, r in 0.1f64..3.0) {
        let small = sensor_periodic(1.0, lo).unwrap();
        let big = sensor_periodic(1.0, lo + extra).unwrap();
        let a = small.ball_density(&[c], r).unwrap().value;
        let b = big.ball_density(&[c], r).unwrap().value;
        prop_assert!(b >= a - 1e-14);
    }

    #[test]
    fn classification_monotone_in_eps(seed in 0u64..500, c in -4.0f64..4.0, rad in 0.3f64..2.0, e1 in 0.01f64..1.0, e2 in 0.01f64..1.0) {
        let (small, large) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
        let f = harmonic_flow(&SpectralFunction::random(1, 10, seed).unwrap(), 0.3).unwrap();
        let b = fit_gs_bound(&f, 0.5, 0.5, 6, 6).unwrap().bound;
        let ball = Ball::new(vec![c], rad);
        let bd = delta_weight_transfer(&b, 0.0).unwrap();
        let at = |eps| good_ball_test(&f, &ball, &ClassifierConfig::from_bound(eps, 2, &bd, 16, 1).unwrap()).unwrap();
        let coarse = at(large);
        let fine = at(small);
        if coarse.is_good {
            prop_assert!(fine.is_good);
        }
    }

    #[test]
    fn series_bound_holds(d in 0.5f64..6.0, s in 0.0f64..0.9) {
        let b = series_bound(d, s).unwrap();
        prop_assert!(b.holds);
        prop_assert!(b.log_sum <= b.log_bound);
    }

    #[test]
    fn delta_transfer_never_shrinks(d1 in 0.1f64..10.0, d2 in 1.0f64..10.0, delta in 0.0f64..=1.0) {
        let b = GSBound::new(d1, d2, 0.5, 0.5).unwrap();
        let t = delta_weight_transfer(&b, delta).unwrap();
        prop_assert!(t.d2 >= b.d2);
        prop_assert_eq!(t.d1, b.d1);
    }

    #[test]
    fn k_effective_monotone_in_sensor(seed in 0u64..500, lo in 0.1f64..0.6, extra in 0.05f64..0.3, eps in 1e-3f64..0.5) {
        let f = harmonic_flow(&SpectralFunction::random(1, 10, seed).unwrap(), 0.3).unwrap();
        let b = fit_gs_bound(&f, 0.5, 0.5, 6, 6).unwrap().bound;
        let ph = phi(eps, b.d2, 0.5);
        let norm_sq = f.norm_sq();
        let small = sensor_mass(&f, &sensor_periodic(1.0, lo).unwrap()).unwrap();
        let big = sensor_mass(&f, &sensor_periodic(1.0, lo + extra).unwrap()).unwrap();
        prop_assert!(big >= small * (1.0 - 1e-9));
        let (k_small, _) = k_effective(norm_sq, small, eps, b.d1, ph);
        let (k_big, _) = k_effective(norm_sq, big, eps, b.d1, ph);
        prop_assert!(k_big <= k_small + 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn gramian_symmetric_psd(fill in 0.2f64..0.9, t in 0.05f64..2.0, n in 4usize..24) {
        let omega = sensor_periodic(1.0, fill).unwrap();
        let g = observability_gramian(&omega, t, n).unwrap();
        let norm = g.norm();
        prop_assert!((&g - g.transpose()).norm() <= 1e-14 * norm);
        prop_assert!(min_relative_eigenvalue(&g) >= -1e-10);
    }

    #[test]
    fn observability_constant_monotone(fill in 0.2f64..0.8, extra in 0.05f64..0.2, t1 in 0.05f64..1.0, dt in 0.0f64..1.0, n in 4usize..20) {
        let small = sensor_periodic(1.0, fill).unwrap();
        let big = sensor_periodic(1.0, fill + extra).unwrap();
        let whole = SensorSet::whole(1).unwrap();
        let t2 = t1 + dt;
        let c = |o: &SensorSet, t: f64| empirical_constant(o, t, n).unwrap().c_obs;
        let tol = 1.0 + 1e-8;
        prop_assert!(c(&small, t2) <= c(&small, t1) * tol);
        prop_assert!(c(&big, t1) <= c(&small, t1) * tol);
        prop_assert!(c(&whole, t1) <= c(&big, t1) * tol);
    }

    #[test]
    fn shape_fit_monotone_in_grid(extra in 2.0f64..6.0, r2 in 0.1f64..0.5) {
        let omega = sensor_periodic(1.0, 0.5).unwrap();
        let ts = vec![0.1, 0.5, 1.0];
        let cs: Vec<f64> = ts.iter().map(|&t| empirical_constant(&omega, t, 16).unwrap().c_obs).collect();
        let base = bound_shape_fit(&ts, &cs, r2, 0.5).unwrap();
        let mut ts2 = ts.clone();
        ts2.push(extra);
        let mut cs2 = cs.clone();
        cs2.push(empirical_constant(&omega, extra, 16).unwrap().c_obs);
        let wider = bound_shape_fit(&ts2, &cs2, r2, 0.5).unwrap();
        prop_assert!(base.finite && wider.finite);
        prop_assert!(wider.n <= base.n * (1.0 + 1e-6));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn pipeline_steps_hold_on_admissible_inputs(seed in 0u64..1000, fill in 0.2f64..1.0, eps in 1e-3f64..0.5) {
        let f = harmonic_flow(&SpectralFunction::random(1, 10, seed).unwrap(), 0.3).unwrap();
        let b = fit_gs_bound(&f, 0.5, 0.5, 8, 8).unwrap().bound;
        let p = RadiusProfile::new(1.0, 0.0, 0.5, 2.0).unwrap();
        let omega = sensor_periodic(1.0, fill).unwrap();
        let rep = verify_uncertainty(&f, &b, &p, &omega, fill, eps, &PipelineOptions::default()).unwrap();
        prop_assert!(rep.passed, "failed step {:?}", rep.failed_step);
        prop_assert!(rep.steps.iter().any(|s| s.step == "partition" && s.passed));
    }
}
