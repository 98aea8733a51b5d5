//! Closed forms against the numerical oracle on a small case: the exact propagator
//! against RK4, the projected field marginal against the conditional-cat formula, and
//! the first-order loss correction against the Lindblad integration.

use std::f64::consts::PI;

use ndarray::Array1;
use num_complex::Complex64 as C64;
use optocat::analytic::{linear_grid, marginal_conditional};
use optocat::dissipation::{born_correction_kerr_frame_from_state, TauQuad};
use optocat::model::conditional_cat_kappa;
use optocat::oracle::{
    exact_unitary_apply, lindblad_integrate, lindblad_integrate_kerr_frame, mirror_dim_for, project_mirror_quadrature,
    Blocks, JointState, LindbladOptions,
};
use optocat::states::{coherent_vector, thermal_density, Basis, FockVector};

fn main() -> optocat::Result<()> {
    let alpha0 = C64::new(0.0, 1.0);
    let t = 1.5 * PI;
    let kappa = conditional_cat_kappa(t, 0)?;
    let df = 18;
    let dm = mirror_dim_for(df, kappa, t, 0.0);
    let mut vac = Array1::zeros(dm);
    vac[0] = C64::new(1.0, 0.0);
    let joint = JointState::Pure(coherent_vector(alpha0, df)?.kron(&FockVector::new(vac, Basis::Mirror(dm))?)?);

    let exact = exact_unitary_apply(&joint, t, kappa, true)?;
    let rk = lindblad_integrate(&joint, t, kappa, 0.0, &LindbladOptions::default())?;
    println!("mirror levels {dm}; exact vs RK4 sup-norm {:.2e}", exact.sup_distance(&rk.state));

    let x = linear_grid(-3.0, 3.0, 0.05)?;
    for y in [0.0, 0.7] {
        let rho = project_mirror_quadrature(&exact, y, t)?.field.to_density();
        let closed = marginal_conditional(alpha0, t, kappa, y, &x)?;
        let d = x.iter().zip(&closed.values).map(|(&xi, &c)| (rho.quadrature_density(xi) - c).abs()).fold(0.0, f64::max);
        println!("y = {y}: projected vs closed-form marginal {d:.2e}");
    }

    // loss in the Kerr frame keeps the mirror basis small
    let (dfs, dk) = (16, 20);
    let f = coherent_vector(C64::new(0.0, 0.6), dfs)?;
    let rho0 = f.projector().kron(&thermal_density(0.0, dk)?);
    println!("\n{:>8} {:>12}", "gamma", "|num - Born|");
    for gamma in [2e-2, 1e-2, 5e-3] {
        let (num, _) = lindblad_integrate_kerr_frame(&rho0, t, kappa, gamma, &LindbladOptions::default())?;
        let (r0, rg) = born_correction_kerr_frame_from_state(&rho0, t, kappa, gamma, &TauQuad::default())?;
        let mut diff = Blocks::zeros(dfs, dk);
        for (i, d) in diff.data.iter_mut().enumerate() {
            *d = &num.r.data[i] - &r0.data[i] - &rg.data[i];
        }
        let dev = diff.data.iter().flat_map(|m| m.iter().map(|v| v.norm())).fold(0.0, f64::max);
        println!("{gamma:>8.3} {dev:>12.3e}");
    }
    println!("(the deviation should shrink about four times per halving of gamma)");
    Ok(())
}
