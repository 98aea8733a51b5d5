//! Field quadrature marginal at the disentangling time t* = 2 pi, with and without
//! photon loss. Starts from the reference experimental design.

use std::f64::consts::PI;

use optocat::analytic::{damped_marginal_star, linear_grid, marginal_pure_cat};
use optocat::model::{scale_params, RawParams};

fn main() -> optocat::Result<()> {
    let p = scale_params(&RawParams::reference())?;
    println!("reference design: kappa = {:.4}, gamma = {:.3e}, n_th = {:.3}", p.kappa, p.gamma, p.n_th);

    // the cat condition needs kappa = 1/2 at t* = 2 pi
    let (t, kappa) = (2.0 * PI, 0.5);
    let x = linear_grid(-4.0, 4.0, 0.01)?;
    let cat = marginal_pure_cat(p.alpha0, &x);
    let half = PI / (4.0 * p.alpha0.norm());
    println!("{:>8} {:>12} {:>12}", "gamma", "visibility", "total");
    for gamma in [0.0, 5e-3, 1e-2, 2e-2] {
        let g = damped_marginal_star(p.alpha0, t, kappa, gamma, &x, None)?;
        println!("{gamma:>8.3} {:>12.4} {:>12.8}", g.visibility(0.0, half), g.total());
    }
    println!("pure cat visibility {:.4}", cat.visibility(0.0, half));

    let g = damped_marginal_star(p.alpha0, t, kappa, 2e-2, &x, None)?;
    println!("\n{:>6} {:>10} {:>10}", "X", "P_0", "P_gamma");
    for i in (0..x.len()).step_by(40) {
        println!("{:>6.2} {:>10.5} {:>10.5}", x[i], cat.values[i], g.values[i]);
    }
    Ok(())
}
