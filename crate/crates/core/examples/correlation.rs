//! Photon-number / mirror-momentum correlation over one mechanical period: the closed
//! form against the exactly evolved joint state, then its first-order loss correction.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use optocat::dissipation::{correlation_closed_form, correlation_from_vector};
use optocat::oracle::{exact_unitary_apply_vector, mirror_dim_for};
use optocat::states::{coherent_vector, Basis, FockVector};

fn main() -> optocat::Result<()> {
    let alpha0 = C64::new(0.0, 2f64.sqrt());
    let kappa = 0.5;
    let df = 24;
    println!("{:>8} {:>12} {:>12} {:>14}", "t/2pi", "closed", "exact", "gamma=0.01,n=2");
    for k in 0..=10 {
        let t = 2.0 * PI * k as f64 / 10.0;
        let closed = correlation_closed_form(alpha0, t, kappa, 0.0, 0.0)?;
        let damped = correlation_closed_form(alpha0, t, kappa, 1e-2, 2.0)?;
        let dm = mirror_dim_for(df, kappa, t, 0.0);
        let mut vac = ndarray::Array1::zeros(dm);
        vac[0] = C64::new(1.0, 0.0);
        let joint = coherent_vector(alpha0, df)?.kron(&FockVector::new(vac, Basis::Mirror(dm))?)?;
        let out = exact_unitary_apply_vector(&joint, t, kappa, false)?;
        let exact = match correlation_from_vector(&out) {
            Ok(c) => format!("{c:12.8}"),
            Err(_) => format!("{:>12}", "degenerate"),
        };
        println!("{:>8.2} {closed:>12.8} {exact} {damped:>14.6}", t / (2.0 * PI));
    }
    Ok(())
}
