//! Cat prepared by reading the mirror at t' = 3 pi / 2 instead of waiting for the
//! mirror to disentangle. The reading y sets the cat's orientation; a warm mirror
//! only enters through the reading's probability.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use optocat::analytic::{damped_marginal_conditional, default_x_grid, marginal_conditional};
use optocat::model::{conditional_cat_kappa, f_of, parity_measurement_result, z_from_n_th};

fn main() -> optocat::Result<()> {
    let alpha0 = C64::new(0.0, 7f64.sqrt());
    let t = 1.5 * PI;
    let kappa = conditional_cat_kappa(t, 0)?;
    println!("kappa = {kappa:.6}, F(t') = {:.6}", f_of(t, kappa));
    let y_parity = parity_measurement_result(t, kappa)?;
    println!("reading that rotates the cat by pi/2: y = {y_parity:.6}");

    let x = default_x_grid(alpha0);
    for y in [0.0, 0.5, y_parity] {
        let g = marginal_conditional(alpha0, t, kappa, y, &x)?;
        let peak = x[(0..x.len()).max_by(|&i, &j| g.values[i].total_cmp(&g.values[j])).unwrap()];
        println!("y = {y:.3}: peak at X = {peak:.3}, total {:.8}", g.total());
    }

    println!("\nphoton loss gamma = 0.02 at y = 0:");
    for n_th in [0.0, 2.0, 20.0] {
        let z = z_from_n_th(n_th)?;
        let g = damped_marginal_conditional(alpha0, t, kappa, 2e-2, 0.0, z, &x, None)?;
        println!("  n_th = {n_th:>4}: max P = {:.5}, visibility {:.4}", g.max_value(), g.visibility(0.0, PI / (4.0 * 7f64.sqrt())));
    }
    Ok(())
}
