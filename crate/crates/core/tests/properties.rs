//! Invariants checked on random inputs.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use proptest::prelude::*;

use optocat::analytic::{damped_star_trace, default_x_grid, marginal_conditional, marginal_pure_cat, thermal_quadrature_density};
use optocat::dissipation::correlation_closed_form;
use optocat::model::{
    cat_condition_residual, conditional_cat_kappa, conditional_cat_time, disentangled_cat_kappa, e_of, f_of, parse_time,
};
use optocat::oracle::{exact_unitary_apply_density, exact_unitary_invert_density, mirror_dim_for};
use optocat::states::{coherent_vector_unchecked, Basis, FockVector, displace_vector, pure_cat, thermal_density};

fn alpha(mu: f64, arg: f64) -> C64 {
    C64::from_polar(mu.sqrt(), arg)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn unitary_round_trip(mu in 0.1f64..1.0, arg in 0.0..2.0 * PI, t in 0.0f64..7.0, kappa in 0.05f64..0.3, z in 0.0f64..0.3) {
        // field cut at 8 levels and renormalized; the round trip does not need the full coherent tail
        let df = 8;
        let dm = mirror_dim_for(df, kappa, t, z);
        let f = coherent_vector_unchecked(alpha(mu, arg), df, Basis::Field(df));
        let s = f.norm_sqr().sqrt();
        let f = FockVector::new(f.amplitudes.mapv(|a| a / s), Basis::Field(df)).unwrap();
        let rho = f.projector().kron(&thermal_density(z, dm).unwrap());
        let out = exact_unitary_apply_density(&rho, t, kappa, true).unwrap();
        prop_assert!((out.trace().re - rho.trace().re).abs() < 1e-9);
        prop_assert!(out.hermiticity_error() < 1e-10);
        let back = exact_unitary_invert_density(&out, t, kappa, true).unwrap();
        prop_assert!(back.sup_distance(&rho) < 1e-8, "{}", back.sup_distance(&rho));
    }

    #[test]
    fn cat_marginal_is_normalized(mu in 0.2f64..9.0, arg in 0.0..2.0 * PI) {
        let a0 = alpha(mu, arg);
        let g = marginal_pure_cat(a0, &default_x_grid(a0));
        prop_assert!((g.total() - 1.0).abs() < 5e-6);
        prop_assert!(g.values.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn conditional_marginal_is_normalized(mu in 0.2f64..7.0, arg in 0.0..2.0 * PI, kappa in 0.3f64..1.0, y in -2.0f64..2.0) {
        let a0 = alpha(mu, arg);
        let t = conditional_cat_time(kappa, 0).unwrap();
        let g = marginal_conditional(a0, t, kappa, y, &default_x_grid(a0)).unwrap();
        prop_assert!((g.total() - 1.0).abs() < 5e-6);
    }

    #[test]
    fn conditional_time_inverts_coupling(kappa in 0.05f64..3.0, m in 0u32..4) {
        let t = conditional_cat_time(kappa, m).unwrap();
        prop_assert!(cat_condition_residual(t, kappa) < 1e-9);
        let k = conditional_cat_kappa(t, m).unwrap();
        prop_assert!((k - kappa).abs() < 1e-9 * kappa.max(1.0), "{k} vs {kappa}");
    }

    #[test]
    fn disentangled_couplings_close_the_loop(m1 in 1u32..6, m2 in 0u32..6) {
        let k = disentangled_cat_kappa(m1, m2).unwrap();
        let t = 2.0 * PI * m1 as f64;
        prop_assert!(f_of(t, k).abs() < 1e-12);
        prop_assert!(cat_condition_residual(t, k) < 1e-9);
    }

    #[test]
    fn kerr_phase_bounds(t in 0.0f64..50.0, kappa in 0.0f64..2.0) {
        prop_assert!(f_of(t, kappa).abs() <= 2.0 * kappa + 1e-15);
        prop_assert!(e_of(t, kappa) >= -1e-12);
    }

    #[test]
    fn damped_star_trace_vanishes(mu in 0.5f64..7.0, arg in 0.0..2.0 * PI, gamma in 0.0f64..0.02) {
        let tr = damped_star_trace(alpha(mu, arg), 2.0 * PI, 0.5, gamma, None).unwrap();
        prop_assert!(tr.norm() < 1e-9, "{tr}");
    }

    #[test]
    fn undamped_correlation_is_a_probability(mu in 0.0f64..10.0, t in 0.0f64..20.0, kappa in 0.0f64..1.5, n_th in 0.0f64..5.0) {
        let c = correlation_closed_form(alpha(mu, 0.3), t, kappa, 0.0, n_th).unwrap();
        prop_assert!((-1e-15..=1.0 + 1e-12).contains(&c));
    }

    #[test]
    fn thermal_density_is_positive(y in -30.0f64..30.0, z in 0.0f64..0.99) {
        prop_assert!(thermal_quadrature_density(y, z) >= 0.0);
    }

    #[test]
    fn cat_and_displacement_keep_the_norm(mu in 0.1f64..4.0, arg in 0.0..2.0 * PI, r in 0.0f64..1.5, phi in 0.0..2.0 * PI) {
        let cat = pure_cat(alpha(mu, arg), 60).unwrap();
        prop_assert!((cat.norm_sqr() - 1.0).abs() < 1e-9);
        let d = displace_vector(&cat, C64::from_polar(r, phi));
        prop_assert!((d.norm_sqr() - 1.0).abs() < 1e-7, "{}", d.norm_sqr());
    }

    #[test]
    fn time_tokens(c in -100.0f64..100.0) {
        prop_assert_eq!(parse_time(&format!("{}", c)).unwrap(), c);
        let tol = 1e-12 * c.abs().max(1.0);
        let half = parse_time(&format!("{}xpi", c)).unwrap();
        let full = parse_time(&format!("{}x2pi", c)).unwrap();
        prop_assert!((half - c * PI).abs() <= tol);
        prop_assert!((full - 2.0 * c * PI).abs() <= tol);
    }
}

#[test]
fn time_token_rejects_garbage() {
    for bad in ["", "pi", "xpi", "1.5xpix", "NaN", "infxpi"] {
        assert!(parse_time(bad).is_err(), "{bad}");
    }
}
