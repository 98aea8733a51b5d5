//! Photon-number distribution after mixing the cat with a reference field, for
//! in-phase and out-of-phase injection, with the two injection models side by side.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use optocat::analytic::{photon_stats, photon_stats_displaced, InjectionPhase};
use optocat::specfun::QuadSpec;

fn main() -> optocat::Result<()> {
    let alpha0 = C64::new(0.0, 7f64.sqrt());
    let (t, kappa, z, n_max) = (2.0 * PI, 0.5, 0.0, 81);
    let q = QuadSpec::default();
    let tables = [
        ("in/additive", photon_stats(alpha0, t, kappa, z, InjectionPhase::In, n_max, q)?),
        ("out/additive", photon_stats(alpha0, t, kappa, z, InjectionPhase::Out, n_max, q)?),
        ("in/displaced", photon_stats_displaced(alpha0, t, kappa, z, InjectionPhase::In, n_max, q)?),
        ("out/displaced", photon_stats_displaced(alpha0, t, kappa, z, InjectionPhase::Out, n_max, q)?),
    ];
    print!("{:>3}", "n");
    for (name, _) in &tables {
        print!(" {name:>14}");
    }
    println!();
    for n in (0..=12).chain((20..=40).step_by(4)) {
        print!("{n:>3}");
        for (_, g) in &tables {
            print!(" {:>14.6e}", g.values[n]);
        }
        println!();
    }
    for (name, g) in &tables {
        println!("{name}: sum {:.10}", g.total());
    }
    Ok(())
}
