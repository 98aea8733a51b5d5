//! Couplings and times at which a cat appears: disentangled cats at t = 2 pi m1, and
//! conditional cats at the first few times where the Kerr phase reaches pi/2 + 2 pi m.

use std::f64::consts::PI;

use optocat::model::{conditional_cat_time, disentangled_cat_kappa, f_of, parity_measurement_result};

fn main() -> optocat::Result<()> {
    println!("disentangled cats, t = 2 pi m1:");
    for m1 in 1..=4 {
        for m2 in 0..m1 {
            let k = disentangled_cat_kappa(m1, m2)?;
            println!("  m1 = {m1}, m2 = {m2}: kappa = {k:.6}");
        }
    }
    let kappa = 0.52;
    println!("\nconditional cats at kappa = {kappa}:");
    for m in 0..4 {
        let t = conditional_cat_time(kappa, m)?;
        let f = f_of(t, kappa);
        let y = parity_measurement_result(t, kappa).map(|y| format!("{y:.4}")).unwrap_or_else(|_| "-".into());
        println!("  m = {m}: t' = {:.4} ({:.4} x pi), F = {f:.4}, parity reading y = {y}", t, t / PI);
    }
    Ok(())
}
