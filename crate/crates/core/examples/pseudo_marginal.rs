//! Field marginal when the mirror reading is discarded: the pseudo-cat. Dephasing grows
//! with the mirror temperature and with how far F(t) is from zero.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use optocat::analytic::{default_x_grid, pseudo_cat_marginal};
use optocat::model::{f_of, z_from_n_th};

fn main() -> optocat::Result<()> {
    let alpha0 = C64::new(0.0, 7f64.sqrt());
    let kappa = 0.5;
    let x = default_x_grid(alpha0);
    let half = PI / (4.0 * alpha0.norm());
    println!("{:>8} {:>8} {:>6} {:>10} {:>10}", "t/2pi", "F", "n_th", "visib.", "total");
    for frac in [0.84, 0.95, 1.0] {
        let t = 2.0 * PI * frac;
        for n_th in [0.0, 1.0, 5.0] {
            let z = z_from_n_th(n_th)?;
            let g = pseudo_cat_marginal(alpha0, t, kappa, 0.0, z, &x, None)?;
            println!(
                "{frac:>8.2} {:>8.4} {n_th:>6} {:>10.4} {:>10.7}",
                f_of(t, kappa),
                g.visibility(0.0, half),
                g.total()
            );
        }
    }
    Ok(())
}
