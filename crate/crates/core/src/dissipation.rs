//! First-order Born correction for photon loss, and the photon-number/mirror-momentum
//! correlation coefficient.

use ndarray::{Array2, Zip};
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::model::{check_z, e_of, f_of};
use crate::oracle::{exact_unitary_apply_density, Blocks};
use crate::specfun::displacement_matrix;
use crate::states::{coherent_vector, thermal_density, DensityMatrix, FockVector};

/// Controls of the composite Simpson rule over the delay variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauQuad {
    /// Intervals of the first pass (even).
    pub intervals: usize,
    /// Stop doubling once the sup-norm change is below this.
    pub tol: f64,
    pub max_intervals: usize,
}

impl Default for TauQuad {
    fn default() -> Self {
        Self { intervals: 128, tol: 1e-8, max_intervals: 1 << 14 }
    }
}

#[derive(Debug, Clone)]
pub struct BornReport {
    pub rho0: DensityMatrix,
    pub rho_gamma: DensityMatrix,
    /// gamma |alpha0|^2 t.
    pub validity: f64,
    pub trace_residual: f64,
    /// Simpson intervals of the accepted pass.
    pub intervals: usize,
}

impl BornReport {
    pub fn total(&self) -> DensityMatrix {
        DensityMatrix {
            entries: &self.rho0.entries + &self.rho_gamma.entries,
            basis: self.rho0.basis,
            traceless: false,
        }
    }
}

fn initial_state(alpha0: C64, z: f64, dims: (usize, usize)) -> Result<DensityMatrix> {
    check_z(z)?;
    let field = coherent_vector(alpha0, dims.0)?.projector();
    let mirror = thermal_density(z, dims.1)?;
    let lost = 1.0 - mirror.trace().re;
    if lost > 1e-10 {
        return Err(Error::Truncation {
            what: format!("thermal mirror state loses {lost:e} to the cut-off"),
            required: crate::model::thermal_dim(z, 1e-11),
            have: dims.1,
        });
    }
    Ok(field.kron(&mirror))
}

fn check_born_args(t: f64, gamma: f64) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return invalid(format!("t must be nonnegative, got {t}"));
    }
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return invalid(format!("gamma must be nonnegative, got {gamma}"));
    }
    Ok(())
}

/// Jump term sum over n of sqrt(n n2) e^{i(phi_n - phi_n2)} D r_{n,n2} D^dag placed in block (n-1, n2-1),
/// with phi_n = sign E (2n - 1).
fn dressed_jump(r: &Blocks, e: f64, sign: f64, d: &Array2<C64>) -> Blocks {
    let (df, dm) = (r.df, r.dm);
    let dh = d.t().mapv(|v| v.conj());
    let mut out = Blocks::zeros(df, dm);
    for n in 1..df {
        for n2 in 1..df {
            let src = r.block(n, n2);
            if src.iter().all(|v| v.re == 0.0 && v.im == 0.0) {
                continue;
            }
            let ph = C64::from_polar(
                ((n * n2) as f64).sqrt(),
                sign * e * ((2 * n) as f64 - (2 * n2) as f64),
            );
            out.data[(n - 1) * df + (n2 - 1)] = d.dot(src).dot(&dh).mapv(|v| v * ph);
        }
    }
    out
}

fn blocks_add(acc: &mut Blocks, w: f64, x: &Blocks) {
    for (a, b) in acc.data.iter_mut().zip(x.data.iter()) {
        Zip::from(a).and(b).for_each(|p, &q| *p += q * w);
    }
}

/// Composite Simpson integral of a block-valued function over [0, t], doubling the
/// intervals until the sup-norm change drops below `quad.tol`. Nodes are evaluated in
/// parallel and summed in index order.
fn simpson_blocks<F>(f: F, t: f64, df: usize, dm: usize, quad: &TauQuad) -> Result<(Blocks, usize)>
where
    F: Fn(f64) -> Blocks + Sync,
{
    if quad.intervals < 2 || quad.intervals % 2 != 0 {
        return invalid(format!("Simpson intervals must be even and >= 2, got {}", quad.intervals));
    }
    let chunk = rayon::current_num_threads().max(1) * 2;
    let sum_nodes = |nodes: &[f64]| -> Blocks {
        let mut acc = Blocks::zeros(df, dm);
        for c in nodes.chunks(chunk) {
            let vals: Vec<Blocks> = c.par_iter().map(|&s| f(s)).collect();
            for v in &vals {
                blocks_add(&mut acc, 1.0, v);
            }
        }
        acc
    };
    let mut n = quad.intervals;
    let h = t / n as f64;
    let mut ends = f(0.0);
    blocks_add(&mut ends, 1.0, &f(t));
    let evens: Vec<f64> = (1..n / 2).map(|i| 2.0 * i as f64 * h).collect();
    let odds: Vec<f64> = (0..n / 2).map(|i| (2 * i + 1) as f64 * h).collect();
    let mut interior = sum_nodes(&evens);
    let odd = sum_nodes(&odds);
    let simpson = |h: f64, interior_even: &Blocks, odd: &Blocks| -> Blocks {
        let mut s = Blocks::zeros(df, dm);
        blocks_add(&mut s, h / 3.0, &ends);
        blocks_add(&mut s, 2.0 * h / 3.0, interior_even);
        blocks_add(&mut s, 4.0 * h / 3.0, odd);
        s
    };
    let mut current = simpson(h, &interior, &odd);
    blocks_add(&mut interior, 1.0, &odd);
    if t == 0.0 {
        return Ok((current, n));
    }
    loop {
        if n * 2 > quad.max_intervals {
            return Err(Error::StepConvergence { change: f64::NAN, tol: quad.tol });
        }
        n *= 2;
        let h = t / n as f64;
        let odds: Vec<f64> = (0..n / 2).map(|i| (2 * i + 1) as f64 * h).collect();
        let odd = sum_nodes(&odds);
        let next = simpson(h, &interior, &odd);
        blocks_add(&mut interior, 1.0, &odd);
        let change = next.sup_distance(&current);
        current = next;
        if change < quad.tol {
            return Ok((current, n));
        }
    }
}

fn number_anticommutator(r: &Blocks) -> Blocks {
    let mut out = r.clone();
    for n in 0..r.df {
        for n2 in 0..r.df {
            let w = (n + n2) as f64;
            out.data[n * r.df + n2].mapv_inplace(|v| v * w);
        }
    }
    out
}

/// rho_gamma(t) = gamma int_0^t ds a_s rho_0(t) a_s^dag - (gamma/2) t {N, rho_0(t)},
/// a_s = U(s) a U(s)^dag, for a coherent field and thermal mirror at t = 0.
/// `dims` = (field, mirror).
pub fn born_correction(
    alpha0: C64,
    t: f64,
    kappa: f64,
    gamma: f64,
    z: f64,
    dims: (usize, usize),
    quad: &TauQuad,
) -> Result<BornReport> {
    let init = initial_state(alpha0, z, dims)?;
    born_correction_from_state(&init, t, kappa, gamma, quad)
}

/// [`born_correction`] for an arbitrary joint initial state; `validity` uses its mean photon number.
pub fn born_correction_from_state(init: &DensityMatrix, t: f64, kappa: f64, gamma: f64, quad: &TauQuad) -> Result<BornReport> {
    check_born_args(t, gamma)?;
    let (df, dm) = init.basis.joint_dims()?;
    let rho0 = exact_unitary_apply_density(init, t, kappa, true)?;
    let validity = gamma * init.field_part()?.mean_number() * t;
    if gamma == 0.0 {
        let zero = DensityMatrix { entries: Array2::zeros(rho0.entries.dim()), basis: rho0.basis, traceless: true };
        return Ok(BornReport { rho0, rho_gamma: zero, validity, trace_residual: 0.0, intervals: 0 });
    }
    let b0 = Blocks::from_density(&rho0)?;
    let jump = |s: f64| {
        let shift = C64::from_polar(f_of(s, kappa), -std::f64::consts::FRAC_PI_2 - 0.5 * s);
        let d = displacement_matrix(shift, dm, dm);
        dressed_jump(&b0, e_of(s, kappa), -1.0, &d)
    };
    let (int, intervals) = simpson_blocks(jump, t, df, dm, quad)?;
    check_jump_tail(&int, &b0, t)?;
    let mut rg = Blocks::zeros(df, dm);
    blocks_add(&mut rg, gamma, &int);
    blocks_add(&mut rg, -0.5 * gamma * t, &number_anticommutator(&b0));
    let mut rho_gamma = rg.to_density();
    rho_gamma.traceless = true;
    let trace_residual = rho_gamma.trace().norm();
    Ok(BornReport { rho0, rho_gamma, validity, trace_residual, intervals })
}

/// Trace lost by the mirror cut-off while displacing after a jump.
fn check_jump_tail(int: &Blocks, b0: &Blocks, t: f64) -> Result<()> {
    let jumped = int.trace().re;
    let expect: f64 = t * (0..b0.df).map(|n| n as f64 * b0.block(n, n).diag().sum().re).sum::<f64>();
    let lost = expect - jumped;
    if lost > 1e-10 * expect.max(1.0) {
        return Err(Error::Truncation {
            what: format!("displaced jump terms lose {lost:e} to the mirror cut-off"),
            required: b0.dm + 4,
            have: b0.dm,
        });
    }
    Ok(())
}

/// Born correction in the Kerr frame, R = U^dag rho U:
/// R_gamma(t) = gamma int_0^t dtau [a~(tau) R_0 a~(tau)^dag - {N, R_0}/2],
/// a~(tau) = U(tau)^dag a U(tau), R_0 = rho(0). Returns (R_0, R_gamma).
pub fn born_correction_kerr_frame(
    alpha0: C64,
    t: f64,
    kappa: f64,
    gamma: f64,
    z: f64,
    dims: (usize, usize),
    quad: &TauQuad,
) -> Result<(Blocks, Blocks)> {
    let init = initial_state(alpha0, z, dims)?;
    born_correction_kerr_frame_from_state(&init, t, kappa, gamma, quad)
}

/// [`born_correction_kerr_frame`] for an arbitrary joint initial state.
pub fn born_correction_kerr_frame_from_state(
    init: &DensityMatrix,
    t: f64,
    kappa: f64,
    gamma: f64,
    quad: &TauQuad,
) -> Result<(Blocks, Blocks)> {
    check_born_args(t, gamma)?;
    let b0 = Blocks::from_density(init)?;
    let (df, dm) = (b0.df, b0.dm);
    let mut rg = Blocks::zeros(df, dm);
    if gamma == 0.0 {
        return Ok((b0, rg));
    }
    let jump = |s: f64| {
        let shift = C64::from_polar(f_of(s, kappa), std::f64::consts::FRAC_PI_2 + 0.5 * s);
        let d = displacement_matrix(shift, dm, dm);
        dressed_jump(&b0, e_of(s, kappa), 1.0, &d)
    };
    let (int, _) = simpson_blocks(jump, t, df, dm, quad)?;
    check_jump_tail(&int, &b0, t)?;
    blocks_add(&mut rg, gamma, &int);
    blocks_add(&mut rg, -0.5 * gamma * t, &number_anticommutator(&b0));
    Ok((b0, rg))
}

/// Closed-form correlation coefficient to first order in gamma.
pub fn correlation_closed_form(alpha0: C64, t: f64, kappa: f64, gamma: f64, n_th: f64) -> Result<f64> {
    if !(n_th >= 0.0) || !(gamma >= 0.0) {
        return invalid(format!("need n_th >= 0 and gamma >= 0, got {n_th}, {gamma}"));
    }
    let mu = alpha0.norm_sqr();
    let k2 = kappa * kappa;
    let (s, s2) = (t.sin(), (0.5 * t).sin());
    let num = 2.0 * mu * k2 * (s * s + 4.0 * gamma * s2 * s2 * s);
    let den = (0.5 + n_th + 2.0 * mu * k2 * s * s) * (1.0 - gamma * t)
        + mu * k2 * 0.5 * gamma * (2.0 * t - 8.0 * s + 3.0 * (2.0 * t).sin());
    if !(den > 0.0) {
        return Err(Error::Domain(format!(
            "correlation denominator {den} is not positive (gamma t = {})",
            gamma * t
        )));
    }
    Ok(num / den)
}

/// |<N p> - <N><p>|^2 / (Var N Var p) on a joint state, p = i(b^dag - b)/2.
pub fn correlation_from_state(rho: &DensityMatrix) -> Result<f64> {
    correlation_scaled(rho, 1.0)
}

/// [`correlation_from_state`] for a pure joint state, without forming the density matrix.
pub fn correlation_from_vector(psi: &FockVector) -> Result<f64> {
    let (df, dm) = psi.basis.joint_dims()?;
    let moments = (0..df)
        .map(|n| {
            let v = psi.amplitudes.slice(ndarray::s![n * dm..(n + 1) * dm]);
            let mut m = [0.0; 3];
            for i in 0..dm {
                for j in i.saturating_sub(2)..(i + 3).min(dm) {
                    let w = v[i].conj() * v[j];
                    m[0] += (momentum_element(i, j, 0, 1.0) * w).re;
                    m[1] += (momentum_element(i, j, 1, 1.0) * w).re;
                    m[2] += (momentum_element(i, j, 2, 1.0) * w).re;
                }
            }
            m
        })
        .collect::<Vec<_>>();
    correlation_from_moments(&moments)
}

/// <i|p^k|j> for p = lambda i(b^dag - b)/2, k = 0, 1, 2.
fn momentum_element(i: usize, j: usize, k: u32, lambda: f64) -> C64 {
    let jf = j as f64;
    match k {
        0 => C64::new(if i == j { 1.0 } else { 0.0 }, 0.0),
        1 => {
            if i == j + 1 {
                C64::new(0.0, 0.5 * lambda * (jf + 1.0).sqrt())
            } else if i + 1 == j {
                C64::new(0.0, -0.5 * lambda * jf.sqrt())
            } else {
                C64::new(0.0, 0.0)
            }
        }
        _ => {
            let l2 = lambda * lambda;
            if i == j {
                C64::new(0.25 * l2 * (2.0 * jf + 1.0), 0.0)
            } else if i == j + 2 {
                C64::new(-0.25 * l2 * ((jf + 1.0) * (jf + 2.0)).sqrt(), 0.0)
            } else if i + 2 == j {
                C64::new(-0.25 * l2 * (jf * (jf - 1.0)).sqrt(), 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        }
    }
}

/// Momentum rescaled by `lambda`; the coefficient does not depend on it.
fn correlation_scaled(rho: &DensityMatrix, lambda: f64) -> Result<f64> {
    let (df, dm) = rho.basis.joint_dims()?;
    let tr = rho.trace();
    if (tr - 1.0).norm() > 1e-6 {
        return invalid(format!("state trace {tr} is not 1"));
    }
    let moments = (0..df)
        .map(|n| {
            let mut m = [0.0; 3];
            for i in 0..dm {
                for j in i.saturating_sub(2)..(i + 3).min(dm) {
                    // Tr(rho_nn P) = sum_ij P_ij rho_ji
                    let r = rho.entries[[n * dm + j, n * dm + i]];
                    for (k, slot) in m.iter_mut().enumerate() {
                        *slot += (momentum_element(i, j, k as u32, lambda) * r).re;
                    }
                }
            }
            m
        })
        .collect::<Vec<_>>();
    correlation_from_moments(&moments)
}

/// moments[n] = (Tr rho_nn, Tr rho_nn p, Tr rho_nn p^2).
fn correlation_from_moments(moments: &[[f64; 3]]) -> Result<f64> {
    let (mut en, mut en2, mut ep, mut ep2, mut enp) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (n, m) in moments.iter().enumerate() {
        let nf = n as f64;
        en += nf * m[0];
        en2 += nf * nf * m[0];
        ep += m[1];
        ep2 += m[2];
        enp += nf * m[1];
    }
    let vn = en2 - en * en;
    let vp = ep2 - ep * ep;
    if !(vn > 1e-14) || !(vp > 1e-14) {
        return Err(Error::Degenerate(format!("variances Var N = {vn:e}, Var p = {vp:e}")));
    }
    let cov = enp - en * ep;
    Ok(cov * cov / (vn * vp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{exact_unitary_apply_vector, lindblad_integrate_kerr_frame, mirror_dim_for, KerrToLab, LindbladOptions};
    use crate::states::{coherent_vector_unchecked, Basis};
    use ndarray::Array1;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    /// Truncated, renormalized coherent field times the mirror ground state.
    fn small_joint(alpha0: C64, df: usize, dm: usize) -> DensityMatrix {
        let f = coherent_vector_unchecked(alpha0, df, Basis::Field(df));
        let s = f.norm_sqr().sqrt();
        let f = FockVector { amplitudes: f.amplitudes.mapv(|a| a / s), basis: Basis::Field(df) };
        f.projector().kron(&thermal_density(0.0, dm).unwrap())
    }

    fn joint_vector(alpha0: C64, df: usize, dm: usize) -> FockVector {
        let f = coherent_vector(alpha0, df).unwrap();
        let mut vac = Array1::<C64>::zeros(dm);
        vac[0] = c(1.0, 0.0);
        f.kron(&FockVector { amplitudes: vac, basis: Basis::Mirror(dm) }).unwrap()
    }

    #[test]
    fn zero_gamma_gives_zero_correction() {
        let r = born_correction(c(1.0, 0.0), 2.0 * PI, 0.5, 0.0, 0.0, (20, 12), &TauQuad::default()).unwrap();
        assert_eq!(r.rho_gamma.sup_norm(), 0.0);
    }

    #[test]
    fn correction_is_traceless_and_hermitian() {
        let r = born_correction(c(2f64.sqrt(), 0.0), 2.0 * PI, 0.5, 1e-2, 0.0, (24, 14), &TauQuad::default()).unwrap();
        assert!(r.trace_residual < 1e-9, "{}", r.trace_residual);
        assert!(r.rho_gamma.hermiticity_error() < 1e-10);
        assert!((r.total().trace().re - 1.0).abs() < 1e-9);
        assert!((r.validity - 1e-2 * 2.0 * 2.0 * PI).abs() < 1e-9);
    }

    #[test]
    fn lab_and_kerr_frame_agree() {
        let (a0, t, kappa, gamma) = (c(0.3, 0.5), 2.2, 0.2, 0.02);
        let (df, dm_k) = (5, 12);
        let dm_lab = mirror_dim_for(df, kappa, t, 0.0);
        let q = TauQuad::default();
        let lab = born_correction_from_state(&small_joint(a0, df, dm_lab), t, kappa, gamma, &q).unwrap();
        let (_, rg) = born_correction_kerr_frame_from_state(&small_joint(a0, df, dm_k), t, kappa, gamma, &q).unwrap();
        let map = KerrToLab::new(t, kappa, df, dm_k, dm_lab).unwrap();
        let from_kerr = map.to_lab(&rg).unwrap();
        let d = lab.rho_gamma.sup_distance(&from_kerr);
        assert!(d < 1e-8, "{d}");
    }

    #[test]
    fn born_tracks_lindblad_at_small_gamma() {
        let (a0, t, kappa) = (c(0.0, 0.8), PI, 0.5);
        let init = small_joint(a0, 8, 16);
        let opts = LindbladOptions { dt_max: 0.02, ..Default::default() };
        let mut devs = Vec::new();
        for &g in &[0.02, 0.01] {
            let (r0, rg) = born_correction_kerr_frame_from_state(&init, t, kappa, g, &TauQuad::default()).unwrap();
            let (kf, _) = lindblad_integrate_kerr_frame(&init, t, kappa, g, &opts).unwrap();
            let mut diff = kf.r.clone();
            for ((d, a), b) in diff.data.iter_mut().zip(r0.data.iter()).zip(rg.data.iter()) {
                *d = &*d - a - b;
            }
            devs.push(diff.data.iter().flat_map(|m| m.iter().map(|v| v.norm())).fold(0.0, f64::max));
        }
        let ratio = devs[0] / devs[1];
        assert!((3.5..4.5).contains(&ratio), "{devs:?}");
    }

    #[test]
    fn closed_form_examples() {
        let a0 = c(0.0, 7f64.sqrt());
        assert!(correlation_closed_form(a0, PI, 0.5, 0.0, 0.0).unwrap().abs() < 1e-30);
        let t = 0.84 * 2.0 * PI;
        let c0 = correlation_closed_form(a0, t, 0.5, 0.0, 0.0).unwrap();
        assert!((c0 - 0.8331).abs() < 1e-4, "{c0}");
        let c1 = correlation_closed_form(a0, t, 0.5, 1e-2, 2.0).unwrap();
        assert!((c1 - 0.51).abs() < 0.01, "{c1}");
        assert!(matches!(correlation_closed_form(a0, 200.0, 0.5, 0.02, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn correlation_of_product_state_vanishes() {
        let f = coherent_vector(c(1.0, 0.4), 20).unwrap().projector();
        let m = thermal_density(0.3, 60).unwrap();
        let cval = correlation_from_state(&f.kron(&m)).unwrap();
        assert!(cval.abs() < 1e-20);
    }

    #[test]
    fn correlation_from_exact_states() {
        let a0 = c(0.0, 2f64.sqrt());
        let kappa = 0.5;
        let df = 24;
        for k in 1..=10 {
            let t = 2.0 * PI * k as f64 / 11.0;
            let dm = mirror_dim_for(df, kappa, t, 0.0);
            let out = exact_unitary_apply_vector(&joint_vector(a0, df, dm), t, kappa, false).unwrap();
            let got = correlation_from_vector(&out).unwrap();
            let want = correlation_closed_form(a0, t, kappa, 0.0, 0.0).unwrap();
            assert!((got - want).abs() < 1e-6, "t={t}: {got} vs {want}");
            assert!((0.0..=1.0 + 1e-12).contains(&got));
        }
    }

    #[test]
    fn vector_and_matrix_routes_agree() {
        let a0 = c(0.5, 0.5);
        let (df, dm) = (16, 40);
        let kappa = 0.3;
        let psi = exact_unitary_apply_vector(&joint_vector(a0, df, dm), 1.1, kappa, false).unwrap();
        let a = correlation_from_vector(&psi).unwrap();
        let b = correlation_from_state(&psi.projector()).unwrap();
        assert!((a - b).abs() < 1e-12);
        // the momentum scale drops out
        let s = correlation_scaled(&psi.projector(), 3.7).unwrap();
        assert!((s - b).abs() < 1e-12);
    }

    #[test]
    fn disentangled_and_bad_trace() {
        let a0 = c(0.0, 2f64.sqrt());
        let rho = coherent_vector(a0, 24).unwrap().projector().kron(&thermal_density(0.0, 4).unwrap());
        let out = exact_unitary_apply_density(&rho, 2.0 * PI, 0.5, false).unwrap();
        assert!(correlation_from_state(&out).unwrap() < 1e-10);
        let bad = DensityMatrix { entries: out.entries.mapv(|v| v * 2.0), basis: Basis::Joint { field: 24, mirror: 4 }, traceless: false };
        assert!(correlation_from_state(&bad).is_err());
    }
}
