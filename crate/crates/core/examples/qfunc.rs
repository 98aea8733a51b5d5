//! Joint Husimi function Q(alpha, beta) of field and mirror, sliced along the field
//! amplitude with the mirror fixed at the origin, at the time of maximal entanglement
//! and at the disentangling time.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use optocat::analytic::q_function;
use optocat::model::ScaledParams;

fn main() -> optocat::Result<()> {
    let alpha0 = C64::new(0.0, 2f64.sqrt());
    let params = ScaledParams::new(0.5, 0.0, 0.0, alpha0)?;
    let beta = C64::new(0.0, 0.0);
    for t in [PI, 2.0 * PI] {
        println!("t = {:.3}", t);
        for im in [-2.0, -1.4, -0.7, 0.0, 0.7, 1.4, 2.0] {
            let row: Vec<String> = [-2.0, -1.0, 0.0, 1.0, 2.0]
                .iter()
                .map(|&re| q_function(C64::new(re, im), beta, t, &params, 40).map(|q| format!("{q:9.5}")))
                .collect::<optocat::Result<_>>()?;
            println!("  Im = {im:>5.2} | {}", row.join(" "));
        }
    }
    Ok(())
}
