//! Brute-force reference: exact unitary evolution, direct integration of the
//! master equation, and projective measurement of the mirror quadrature.
//!
//! Scaled Hamiltonian (cavity frequency removed): H = b^dag b - kappa N (b + b^dag),
//! photon loss through the dissipator gamma (a rho a^dag - {N, rho}/2).
//! Its propagator is U(t) = e^{iE N^2} D(i F N e^{-it/2}) e^{-i b^dag b t}.

use ndarray::{Array1, Array2, Zip};
use num_complex::Complex64 as C64;

use crate::error::{invalid, Error, Result};
use crate::model::{e_of, f_of, thermal_dim};
use crate::specfun::{displacement_matrix, ho_wavefunctions};
use crate::states::{Basis, DensityMatrix, FockVector};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Mass a unitary step may lose to the mirror cut-off before it is an error.
pub const UNITARY_TAIL_TOL: f64 = 1e-10;

/// Mirror dimension that holds displaced thermal states out to amplitude
/// 2 kappa |sin(s/2)| (dim_field - 1) for every s in [0, t_max].
pub fn mirror_dim_for(dim_field: usize, kappa: f64, t_max: f64, z: f64) -> usize {
    let fmax = if t_max >= std::f64::consts::PI { 2.0 * kappa } else { f_of(t_max, kappa).abs() };
    let r = fmax * dim_field.saturating_sub(1) as f64 + 1.0 + (thermal_dim(z, 1e-12) as f64).sqrt();
    (r * r + 8.0 * r + 20.0).ceil() as usize
}

/// Displacement amplitude attached to field number n: i F n e^{-it/2}.
pub fn mirror_shift(n: usize, t: f64, kappa: f64) -> C64 {
    C64::from_polar(f_of(t, kappa) * n as f64, std::f64::consts::FRAC_PI_2 - 0.5 * t)
}

/// A joint state, pure or mixed.
#[derive(Debug, Clone, PartialEq)]
pub enum JointState {
    Pure(FockVector),
    Mixed(DensityMatrix),
}

impl JointState {
    pub fn basis(&self) -> Basis {
        match self {
            JointState::Pure(v) => v.basis,
            JointState::Mixed(r) => r.basis,
        }
    }

    pub fn to_density(&self) -> DensityMatrix {
        match self {
            JointState::Pure(v) => v.projector(),
            JointState::Mixed(r) => r.clone(),
        }
    }

    /// Largest entry-wise difference of the density matrices, without forming them for pure states.
    pub fn sup_distance(&self, other: &JointState) -> f64 {
        match (self, other) {
            (JointState::Pure(a), JointState::Pure(b)) => pure_sup_distance(&a.amplitudes, &b.amplitudes),
            _ => self.to_density().sup_distance(&other.to_density()),
        }
    }
}

fn pure_sup_distance(a: &Array1<C64>, b: &Array1<C64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..a.len() {
        let (ai, bi) = (a[i], b[i]);
        if ai.norm() == 0.0 && bi.norm() == 0.0 {
            continue;
        }
        for j in 0..a.len() {
            let d = ai * a[j].conj() - bi * b[j].conj();
            worst = worst.max(d.norm());
        }
    }
    worst
}

/// Field-number blocks of a joint operator: `blocks[n * df + n2]` is the mirror matrix <n|.|n2>.
#[derive(Debug, Clone, PartialEq)]
pub struct Blocks {
    pub df: usize,
    pub dm: usize,
    pub data: Vec<Array2<C64>>,
}

impl Blocks {
    pub fn zeros(df: usize, dm: usize) -> Self {
        Self { df, dm, data: vec![Array2::zeros((dm, dm)); df * df] }
    }

    pub fn from_density(rho: &DensityMatrix) -> Result<Self> {
        let (df, dm) = rho.basis.joint_dims()?;
        let mut b = Self::zeros(df, dm);
        for n in 0..df {
            for n2 in 0..df {
                let blk = &mut b.data[n * df + n2];
                for i in 0..dm {
                    for j in 0..dm {
                        blk[[i, j]] = rho.entries[[n * dm + i, n2 * dm + j]];
                    }
                }
            }
        }
        Ok(b)
    }

    pub fn to_density(&self) -> DensityMatrix {
        let (df, dm) = (self.df, self.dm);
        let mut m = Array2::<C64>::zeros((df * dm, df * dm));
        for n in 0..df {
            for n2 in 0..df {
                let blk = &self.data[n * df + n2];
                for i in 0..dm {
                    for j in 0..dm {
                        m[[n * dm + i, n2 * dm + j]] = blk[[i, j]];
                    }
                }
            }
        }
        DensityMatrix { entries: m, basis: Basis::Joint { field: df, mirror: dm }, traceless: false }
    }

    pub fn block(&self, n: usize, n2: usize) -> &Array2<C64> {
        &self.data[n * self.df + n2]
    }

    pub fn trace(&self) -> C64 {
        (0..self.df).map(|n| self.block(n, n).diag().sum()).sum()
    }

    pub fn sup_distance(&self, other: &Blocks) -> f64 {
        self.data
            .iter()
            .zip(other.data.iter())
            .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()))
            .fold(0.0, f64::max)
    }

    fn axpy(&mut self, s: f64, other: &Blocks) {
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            Zip::from(a).and(b).for_each(|x, &y| *x += y * s);
        }
    }

    fn add_scaled(&self, s: f64, other: &Blocks) -> Blocks {
        let mut out = self.clone();
        out.axpy(s, other);
        out
    }

    /// Population in the top `k` mirror levels.
    fn mirror_top_population(&self, k: usize) -> f64 {
        let mut acc = 0.0;
        for n in 0..self.df {
            let b = self.block(n, n);
            for m in self.dm.saturating_sub(k)..self.dm {
                acc += b[[m, m]].re;
            }
        }
        acc
    }
}

fn adjoint(m: &Array2<C64>) -> Array2<C64> {
    m.t().mapv(|v| v.conj())
}

fn free_phases(dm: usize, t: f64) -> Vec<C64> {
    (0..dm).map(|m| C64::from_polar(1.0, -(m as f64) * t)).collect()
}

fn support(v: &[C64]) -> usize {
    v.iter().rposition(|a| a.norm() != 0.0).map_or(0, |p| p + 1)
}

/// Applies U(t) (with the mirror free rotation) or W(t) = U(t) e^{i b^dag b t} (without)
/// to a joint vector.
pub fn exact_unitary_apply_vector(psi: &FockVector, t: f64, kappa: f64, include_free_motion: bool) -> Result<FockVector> {
    let (df, dm) = psi.basis.joint_dims()?;
    let e = e_of(t, kappa);
    let rot = free_phases(dm, t);
    let mut out = Array1::<C64>::zeros(df * dm);
    let mut lost = 0.0;
    for n in 0..df {
        let mut v: Vec<C64> = psi.amplitudes.slice(ndarray::s![n * dm..(n + 1) * dm]).to_vec();
        if include_free_motion {
            v.iter_mut().zip(rot.iter()).for_each(|(a, r)| *a *= r);
        }
        let j = support(&v);
        if j == 0 {
            continue;
        }
        let d = displacement_matrix(mirror_shift(n, t, kappa), dm, j);
        let w = d.dot(&Array1::from(v[..j].to_vec()));
        let kerr = C64::from_polar(1.0, e * (n * n) as f64);
        let before: f64 = v.iter().map(|a| a.norm_sqr()).sum();
        let after: f64 = w.iter().map(|a| a.norm_sqr()).sum();
        lost += before - after;
        for m in 0..dm {
            out[n * dm + m] = kerr * w[m];
        }
    }
    if lost > UNITARY_TAIL_TOL {
        return Err(mirror_overflow(lost, df, kappa, t, dm));
    }
    FockVector::new(out, psi.basis)
}

fn mirror_overflow(lost: f64, df: usize, kappa: f64, t: f64, dm: usize) -> Error {
    Error::Truncation {
        what: format!("mirror displacement F n_max = {:.3} pushes {lost:e} past the cut-off", f_of(t, kappa).abs() * (df - 1) as f64),
        required: mirror_dim_for(df, kappa, t, 0.0),
        have: dm,
    }
}

/// Same as [`exact_unitary_apply_vector`] for a joint density matrix.
pub fn exact_unitary_apply_density(rho: &DensityMatrix, t: f64, kappa: f64, include_free_motion: bool) -> Result<DensityMatrix> {
    let b = Blocks::from_density(rho)?;
    let (out, lost) = unitary_blocks(&b, t, kappa, include_free_motion, false);
    if lost > UNITARY_TAIL_TOL {
        return Err(mirror_overflow(lost, b.df, kappa, t, b.dm));
    }
    let mut r = out.to_density();
    r.traceless = rho.traceless;
    Ok(r)
}

/// Conjugates every block by the per-number mirror unitary; `inverse` applies the adjoint map.
fn unitary_blocks(b: &Blocks, t: f64, kappa: f64, free: bool, inverse: bool) -> (Blocks, f64) {
    let (df, dm) = (b.df, b.dm);
    let e = e_of(t, kappa);
    let rot = free_phases(dm, t);
    // per-number mirror operator V_n (dm x dm) and phase
    let ops: Vec<Array2<C64>> = (0..df)
        .map(|n| {
            let shift = mirror_shift(n, t, kappa);
            let mut d = displacement_matrix(if inverse { -shift } else { shift }, dm, dm);
            if free {
                if inverse {
                    // e^{+i b^dag b t} D(-shift): scale rows
                    for m in 0..dm {
                        let p = rot[m].conj();
                        d.row_mut(m).mapv_inplace(|v| v * p);
                    }
                } else {
                    // D(shift) e^{-i b^dag b t}: scale columns
                    for m in 0..dm {
                        let p = rot[m];
                        d.column_mut(m).mapv_inplace(|v| v * p);
                    }
                }
            }
            d
        })
        .collect();
    let ops_h: Vec<Array2<C64>> = ops.iter().map(adjoint).collect();
    let mut out = Blocks::zeros(df, dm);
    for n in 0..df {
        for n2 in 0..df {
            let src = b.block(n, n2);
            if src.iter().all(|v| *v == ZERO) {
                continue;
            }
            let sign = if inverse { -1.0 } else { 1.0 };
            let ph = C64::from_polar(1.0, sign * e * ((n * n) as f64 - (n2 * n2) as f64));
            let blk = ops[n].dot(src).dot(&ops_h[n2]);
            out.data[n * df + n2] = blk.mapv(|v| v * ph);
        }
    }
    let lost = (b.trace() - out.trace()).re;
    (out, lost)
}

/// Exact evolution of a joint state.
pub fn exact_unitary_apply(state: &JointState, t: f64, kappa: f64, include_free_motion: bool) -> Result<JointState> {
    Ok(match state {
        JointState::Pure(v) => JointState::Pure(exact_unitary_apply_vector(v, t, kappa, include_free_motion)?),
        JointState::Mixed(r) => JointState::Mixed(exact_unitary_apply_density(r, t, kappa, include_free_motion)?),
    })
}

/// Inverse of [`exact_unitary_apply_density`] with the same (t, kappa, free-motion) choice.
pub fn exact_unitary_invert_density(rho: &DensityMatrix, t: f64, kappa: f64, include_free_motion: bool) -> Result<DensityMatrix> {
    let b = Blocks::from_density(rho)?;
    let (out, lost) = unitary_blocks(&b, t, kappa, include_free_motion, true);
    if lost > UNITARY_TAIL_TOL {
        return Err(mirror_overflow(lost, b.df, kappa, t, b.dm));
    }
    Ok(out.to_density())
}

/// Integrator controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LindbladOptions {
    /// Largest step of the first pass.
    pub dt_max: f64,
    /// Accept once halving the step changes the result by less than this (sup-norm).
    pub halving_tol: f64,
    pub max_halvings: usize,
    /// Mirror population allowed in the top three levels.
    pub leakage_tol: f64,
}

impl Default for LindbladOptions {
    fn default() -> Self {
        Self { dt_max: 1e-2, halving_tol: 1e-7, max_halvings: 8, leakage_tol: 1e-6 }
    }
}

#[derive(Debug, Clone)]
pub struct LindbladOutcome {
    pub state: JointState,
    /// Step of the accepted pass.
    pub dt: f64,
    pub steps: usize,
    /// Change between the accepted pass and the one before it.
    pub halving_change: f64,
}

/// Integrates the master equation from `state` for a time `t_final` with RK4 and
/// step halving, returning the Schroedinger-picture state. At gamma = 0 pure
/// states are propagated as vectors.
pub fn lindblad_integrate(
    state: &JointState,
    t_final: f64,
    kappa: f64,
    gamma: f64,
    opts: &LindbladOptions,
) -> Result<LindbladOutcome> {
    check_integration(t_final, gamma, opts)?;
    match state {
        JointState::Pure(psi) if gamma == 0.0 => {
            let (df, dm) = psi.basis.joint_dims()?;
            let run = |steps: usize| -> Result<Array1<C64>> {
                let v = integrate_pure(&psi.amplitudes, df, dm, t_final, kappa, steps, opts.leakage_tol)?;
                Ok(to_schrodinger_vector(v, df, dm, t_final))
            };
            let first = stable_steps(t_final, df, dm, kappa, 0.0, opts);
            let (v, dt, steps, change) = halve_until(t_final, first, opts, run, |a, b| max_abs_diff(a.iter(), b.iter()))?;
            Ok(LindbladOutcome { state: JointState::Pure(FockVector::new(v, psi.basis)?), dt, steps, halving_change: change })
        }
        _ => {
            let rho = state.to_density();
            let b0 = Blocks::from_density(&rho)?;
            let run = |steps: usize| -> Result<Blocks> {
                let b = integrate_lab_blocks(&b0, t_final, kappa, gamma, steps, opts.leakage_tol)?;
                Ok(to_schrodinger_blocks(b, t_final))
            };
            let first = stable_steps(t_final, b0.df, b0.dm, kappa, gamma, opts);
            let (b, dt, steps, change) = halve_until(t_final, first, opts, run, |a: &Blocks, b: &Blocks| a.sup_distance(b))?;
            Ok(LindbladOutcome { state: JointState::Mixed(b.to_density()), dt, steps, halving_change: change })
        }
    }
}

fn check_integration(t_final: f64, gamma: f64, opts: &LindbladOptions) -> Result<()> {
    if !(t_final >= 0.0) || !t_final.is_finite() {
        return invalid(format!("t_final must be nonnegative, got {t_final}"));
    }
    if !(gamma >= 0.0) {
        return invalid(format!("gamma must be nonnegative, got {gamma}"));
    }
    if !(opts.dt_max > 0.0) {
        return invalid(format!("dt_max must be positive, got {}", opts.dt_max));
    }
    Ok(())
}

fn max_abs_diff<'a>(a: impl Iterator<Item = &'a C64>, b: impl Iterator<Item = &'a C64>) -> f64 {
    a.zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Step count of the first pass: dt <= dt_max and dt * |generator| <= 2.5, inside the
/// RK4 stability region. The lab generator is bounded by kappa (df-1) 2 sqrt(dm) from
/// the coupling (sup over the basis of |b e^{-it} + h.c.|) plus gamma (df-1) from loss.
fn stable_steps(t_final: f64, df: usize, dm: usize, kappa: f64, gamma: f64, opts: &LindbladOptions) -> usize {
    let n = df.saturating_sub(1) as f64;
    let rate = kappa * n * 2.0 * (dm as f64).sqrt() + gamma * n;
    let by_dt = (t_final / opts.dt_max).ceil();
    let by_rate = (t_final * rate / 2.5).ceil();
    (by_dt.max(by_rate) as usize).max(1)
}

fn halve_until<T, R, D>(t_final: f64, first: usize, opts: &LindbladOptions, run: R, dist: D) -> Result<(T, f64, usize, f64)>
where
    R: Fn(usize) -> Result<T>,
    D: Fn(&T, &T) -> f64,
{
    let mut steps = first;
    let mut prev = run(steps)?;
    if t_final == 0.0 {
        return Ok((prev, 0.0, 0, 0.0));
    }
    let mut change = f64::INFINITY;
    for _ in 0..opts.max_halvings {
        steps *= 2;
        let next = run(steps)?;
        change = dist(&prev, &next);
        prev = next;
        if change < opts.halving_tol {
            return Ok((prev, t_final / steps as f64, steps, change));
        }
    }
    Err(Error::StepConvergence { change, tol: opts.halving_tol })
}

fn to_schrodinger_vector(mut v: Array1<C64>, df: usize, dm: usize, t: f64) -> Array1<C64> {
    let rot = free_phases(dm, t);
    for n in 0..df {
        for m in 0..dm {
            v[n * dm + m] *= rot[m];
        }
    }
    v
}

fn to_schrodinger_blocks(mut b: Blocks, t: f64) -> Blocks {
    let rot = free_phases(b.dm, t);
    for blk in b.data.iter_mut() {
        for ((i, j), v) in blk.indexed_iter_mut() {
            *v *= rot[i] * rot[j].conj();
        }
    }
    b
}

/// -i H_I(t) psi in the frame rotating with b^dag b: H_I = -kappa N (b e^{-it} + b^dag e^{it}).
fn pure_rhs(psi: &Array1<C64>, out: &mut Array1<C64>, df: usize, dm: usize, t: f64, kappa: f64) {
    let em = C64::from_polar(1.0, -t);
    let ep = em.conj();
    let sq: Vec<f64> = (0..=dm).map(|k| (k as f64).sqrt()).collect();
    for n in 0..df {
        let off = n * dm;
        // -i * (-kappa n) = i kappa n
        let c = C64::new(0.0, kappa * n as f64);
        for m in 0..dm {
            let mut acc = ZERO;
            if m + 1 < dm {
                acc += em * sq[m + 1] * psi[off + m + 1];
            }
            if m > 0 {
                acc += ep * sq[m] * psi[off + m - 1];
            }
            out[off + m] = c * acc;
        }
    }
}

fn integrate_pure(psi0: &Array1<C64>, df: usize, dm: usize, t_final: f64, kappa: f64, steps: usize, leak: f64) -> Result<Array1<C64>> {
    let h = t_final / steps as f64;
    let mut y = psi0.clone();
    let len = y.len();
    let (mut k1, mut k2, mut k3, mut k4) = (Array1::zeros(len), Array1::zeros(len), Array1::zeros(len), Array1::zeros(len));
    let mut tmp = Array1::<C64>::zeros(len);
    for s in 0..steps {
        let t = s as f64 * h;
        pure_rhs(&y, &mut k1, df, dm, t, kappa);
        Zip::from(&mut tmp).and(&y).and(&k1).for_each(|o, &a, &b| *o = a + b * (0.5 * h));
        pure_rhs(&tmp, &mut k2, df, dm, t + 0.5 * h, kappa);
        Zip::from(&mut tmp).and(&y).and(&k2).for_each(|o, &a, &b| *o = a + b * (0.5 * h));
        pure_rhs(&tmp, &mut k3, df, dm, t + 0.5 * h, kappa);
        Zip::from(&mut tmp).and(&y).and(&k3).for_each(|o, &a, &b| *o = a + b * h);
        pure_rhs(&tmp, &mut k4, df, dm, t + h, kappa);
        Zip::from(&mut y)
            .and(&k1)
            .and(&k2)
            .and(&k3)
            .and(&k4)
            .for_each(|o, &a, &b, &c, &d| *o += (a + (b + c) * 2.0 + d) * (h / 6.0));
        let top: f64 = (0..df)
            .flat_map(|n| (dm.saturating_sub(3)..dm).map(move |m| n * dm + m))
            .map(|i| y[i].norm_sqr())
            .sum();
        if top > leak {
            return Err(Error::Truncation {
                what: format!("mirror population {top:e} reached the top three levels"),
                required: mirror_dim_for(df, kappa, t_final, 0.0),
                have: dm,
            });
        }
    }
    Ok(y)
}

/// Right-hand side of the master equation in the frame rotating with b^dag b.
fn lab_rhs(r: &Blocks, t: f64, kappa: f64, gamma: f64) -> Blocks {
    let (df, dm) = (r.df, r.dm);
    let em = C64::from_polar(1.0, -t);
    let ep = em.conj();
    let sq: Vec<f64> = (0..=dm).map(|k| (k as f64).sqrt()).collect();
    let mut out = Blocks::zeros(df, dm);
    for n in 0..df {
        for n2 in 0..df {
            let src = r.block(n, n2);
            let dst = &mut out.data[n * df + n2];
            let kn = kappa * n as f64;
            let kn2 = kappa * n2 as f64;
            let decay = -0.5 * gamma * (n + n2) as f64;
            for i in 0..dm {
                for j in 0..dm {
                    // H_n rho
                    let mut hl = ZERO;
                    if i + 1 < dm {
                        hl += em * sq[i + 1] * src[[i + 1, j]];
                    }
                    if i > 0 {
                        hl += ep * sq[i] * src[[i - 1, j]];
                    }
                    // rho H_n2
                    let mut hr = ZERO;
                    if j > 0 {
                        hr += em * sq[j] * src[[i, j - 1]];
                    }
                    if j + 1 < dm {
                        hr += ep * sq[j + 1] * src[[i, j + 1]];
                    }
                    // -i(H rho - rho H) with H = -kappa n (...)
                    dst[[i, j]] = C64::new(0.0, 1.0) * (hl * kn - hr * kn2) + src[[i, j]] * decay;
                }
            }
            if gamma > 0.0 && n + 1 < df && n2 + 1 < df {
                let w = gamma * (((n + 1) * (n2 + 1)) as f64).sqrt();
                let up = r.block(n + 1, n2 + 1);
                Zip::from(dst).and(up).for_each(|d, &u| *d += u * w);
            }
        }
    }
    out
}

fn rk4_blocks<F>(y0: &Blocks, t_final: f64, steps: usize, leak: f64, kappa: f64, rhs: F) -> Result<Blocks>
where
    F: Fn(&Blocks, f64) -> Blocks,
{
    let h = t_final / steps as f64;
    let mut y = y0.clone();
    for s in 0..steps {
        let t = s as f64 * h;
        let k1 = rhs(&y, t);
        let k2 = rhs(&y.add_scaled(0.5 * h, &k1), t + 0.5 * h);
        let k3 = rhs(&y.add_scaled(0.5 * h, &k2), t + 0.5 * h);
        let k4 = rhs(&y.add_scaled(h, &k3), t + h);
        y.axpy(h / 6.0, &k1);
        y.axpy(h / 3.0, &k2);
        y.axpy(h / 3.0, &k3);
        y.axpy(h / 6.0, &k4);
        let top = y.mirror_top_population(3);
        if top > leak {
            return Err(Error::Truncation {
                what: format!("mirror population {top:e} reached the top three levels"),
                required: mirror_dim_for(y.df, kappa, t_final, 0.0),
                have: y.dm,
            });
        }
    }
    Ok(y)
}

fn integrate_lab_blocks(b0: &Blocks, t_final: f64, kappa: f64, gamma: f64, steps: usize, leak: f64) -> Result<Blocks> {
    rk4_blocks(b0, t_final, steps, leak, kappa, |r, t| lab_rhs(r, t, kappa, gamma))
}

/// Kerr-frame operator R = U(t)^dag rho U(t). Its equation of motion contains only the
/// dissipator, with the jump operator dressed by the exact propagator:
/// a~(t) = sum_n sqrt(n) e^{iE(2n-1)} |n-1><n| (x) D(i F e^{it/2}).
#[derive(Debug, Clone, PartialEq)]
pub struct KerrFrameState {
    pub r: Blocks,
    pub t: f64,
    pub kappa: f64,
}

/// Photon-loss superoperator in the Kerr frame at time t.
fn kerr_rhs(r: &Blocks, t: f64, kappa: f64, gamma: f64) -> Blocks {
    let (df, dm) = (r.df, r.dm);
    let e = e_of(t, kappa);
    let delta = C64::from_polar(f_of(t, kappa), std::f64::consts::FRAC_PI_2 + 0.5 * t);
    let d = displacement_matrix(delta, dm, dm);
    let dh = adjoint(&d);
    let mut out = Blocks::zeros(df, dm);
    for n in 0..df {
        for n2 in 0..df {
            let dst = &mut out.data[n * df + n2];
            let decay = -0.5 * gamma * (n + n2) as f64;
            Zip::from(&mut *dst).and(r.block(n, n2)).for_each(|o, &v| *o = v * decay);
            if n + 1 < df && n2 + 1 < df {
                let src = r.block(n + 1, n2 + 1);
                if src.iter().all(|v| *v == ZERO) {
                    continue;
                }
                let ph = C64::from_polar(
                    gamma * (((n + 1) * (n2 + 1)) as f64).sqrt(),
                    e * (2.0 * n as f64 + 1.0) - e * (2.0 * n2 as f64 + 1.0),
                );
                let jump = d.dot(src).dot(&dh);
                Zip::from(dst).and(&jump).for_each(|o, &v| *o += v * ph);
            }
        }
    }
    out
}

/// Integrates the master equation in the Kerr frame from rho(0) = R(0).
pub fn lindblad_integrate_kerr_frame(
    rho0: &DensityMatrix,
    t_final: f64,
    kappa: f64,
    gamma: f64,
    opts: &LindbladOptions,
) -> Result<(KerrFrameState, LindbladOutcomeInfo)> {
    check_integration(t_final, gamma, opts)?;
    let b0 = Blocks::from_density(rho0)?;
    let run = |steps: usize| rk4_blocks(&b0, t_final, steps, opts.leakage_tol, kappa, |r, t| kerr_rhs(r, t, kappa, gamma));
    let first = ((t_final / opts.dt_max).ceil() as usize).max(1);
    let (r, dt, steps, change) = halve_until(t_final, first, opts, run, |a: &Blocks, b: &Blocks| a.sup_distance(b))?;
    Ok((KerrFrameState { r, t: t_final, kappa }, LindbladOutcomeInfo { dt, steps, halving_change: change }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LindbladOutcomeInfo {
    pub dt: f64,
    pub steps: usize,
    pub halving_change: f64,
}

/// Maps Kerr-frame block operators to the Schroedinger picture, rho = U R U^dag,
/// in a mirror basis of dimension `dm_lab` >= the Kerr-frame mirror dimension.
pub struct KerrToLab {
    t: f64,
    kappa: f64,
    df: usize,
    dm_in: usize,
    dm_lab: usize,
    /// D(shift_n) restricted to the first dm_in columns, times the free rotation.
    ops: Vec<Array2<C64>>,
}

impl KerrToLab {
    pub fn new(t: f64, kappa: f64, df: usize, dm_in: usize, dm_lab: usize) -> Result<Self> {
        if dm_lab < dm_in {
            return invalid(format!("lab mirror dimension {dm_lab} below Kerr-frame dimension {dm_in}"));
        }
        let rot = free_phases(dm_in, t);
        let mut ops = Vec::with_capacity(df);
        for n in 0..df {
            let mut d = displacement_matrix(mirror_shift(n, t, kappa), dm_lab, dm_in);
            for m in 0..dm_in {
                let p = rot[m];
                d.column_mut(m).mapv_inplace(|v| v * p);
            }
            let kept: f64 = d.iter().map(|v| v.norm_sqr()).sum::<f64>() / dm_in as f64;
            if 1.0 - kept > 1e-10 && dm_lab > dm_in {
                let lost = 1.0 - kept;
                return Err(Error::Truncation {
                    what: format!("lab-frame mirror basis loses {lost:e} of displaced column mass"),
                    required: mirror_dim_for(df, kappa, t, 0.0) + dm_in,
                    have: dm_lab,
                });
            }
            ops.push(d);
        }
        Ok(Self { t, kappa, df, dm_in, dm_lab, ops })
    }

    fn lab_block(&self, b: &Blocks, n: usize, n2: usize) -> Array2<C64> {
        let e = e_of(self.t, self.kappa);
        let ph = C64::from_polar(1.0, e * ((n * n) as f64 - (n2 * n2) as f64));
        self.ops[n].dot(b.block(n, n2)).dot(&adjoint(&self.ops[n2])).mapv(|v| v * ph)
    }

    /// Lab-frame density matrix of a Kerr-frame operator.
    pub fn to_lab(&self, b: &Blocks) -> Result<DensityMatrix> {
        self.check(b)?;
        let mut out = Blocks::zeros(self.df, self.dm_lab);
        for n in 0..self.df {
            for n2 in 0..self.df {
                out.data[n * self.df + n2] = self.lab_block(b, n, n2);
            }
        }
        Ok(out.to_density())
    }

    /// Sup-norm of U B U^dag, one block at a time.
    pub fn lab_sup_norm(&self, b: &Blocks) -> Result<f64> {
        self.check(b)?;
        let mut worst = 0.0f64;
        for n in 0..self.df {
            for n2 in 0..self.df {
                if b.block(n, n2).iter().all(|v| *v == ZERO) {
                    continue;
                }
                let blk = self.lab_block(b, n, n2);
                worst = worst.max(blk.iter().map(|v| v.norm()).fold(0.0, f64::max));
            }
        }
        Ok(worst)
    }

    /// Field operator <y_t| U B U^dag |y_t> after reading y on the mirror quadrature x(t);
    /// its trace is the reading density when B is a state.
    pub fn project(&self, b: &Blocks, y: f64) -> Result<Array2<C64>> {
        self.check(b)?;
        let ov = mirror_quadrature_overlaps(y, self.t, self.dm_lab);
        let rows: Vec<Array1<C64>> = self
            .ops
            .iter()
            .map(|op| {
                let mut r = Array1::<C64>::zeros(self.dm_in);
                for j in 0..self.dm_lab {
                    for m in 0..self.dm_in {
                        r[m] += ov[j] * op[[j, m]];
                    }
                }
                r
            })
            .collect();
        let e = e_of(self.t, self.kappa);
        let mut out = Array2::<C64>::zeros((self.df, self.df));
        for n in 0..self.df {
            for n2 in 0..self.df {
                let blk = b.block(n, n2);
                let right = blk.dot(&rows[n2].mapv(|v| v.conj()));
                let v: C64 = rows[n].iter().zip(right.iter()).map(|(a, b)| a * b).sum();
                out[[n, n2]] = v * C64::from_polar(1.0, e * ((n * n) as f64 - (n2 * n2) as f64));
            }
        }
        Ok(out)
    }

    fn check(&self, b: &Blocks) -> Result<()> {
        if b.df != self.df || b.dm != self.dm_in {
            return invalid(format!(
                "block dims ({}, {}) do not match ({}, {})",
                b.df, b.dm, self.df, self.dm_in
            ));
        }
        Ok(())
    }
}

/// <y_t|m> for the eigenbasis of x(t) = b e^{it/2} + b^dag e^{-it/2}, m < dm.
pub fn mirror_quadrature_overlaps(y: f64, t: f64, dm: usize) -> Vec<C64> {
    let psi = ho_wavefunctions(0.5 * y, dm.saturating_sub(1));
    let s = std::f64::consts::FRAC_1_SQRT_2;
    (0..dm)
        .map(|m| C64::from_polar(s * psi[m], 0.5 * t * m as f64))
        .collect()
}

/// Field state after the mirror quadrature x(t) reads y, and the density of that reading.
#[derive(Debug, Clone)]
pub struct Projection {
    pub field: JointStateField,
    pub density: f64,
}

#[derive(Debug, Clone)]
pub enum JointStateField {
    Pure(FockVector),
    Mixed(DensityMatrix),
}

impl JointStateField {
    pub fn to_density(&self) -> DensityMatrix {
        match self {
            JointStateField::Pure(v) => v.projector(),
            JointStateField::Mixed(r) => r.clone(),
        }
    }
}

pub fn project_mirror_quadrature(state: &JointState, y: f64, t: f64) -> Result<Projection> {
    let (df, dm) = state.basis().joint_dims()?;
    let ov = mirror_quadrature_overlaps(y, t, dm);
    match state {
        JointState::Pure(psi) => {
            let mut v = Array1::<C64>::zeros(df);
            for n in 0..df {
                let mut acc = ZERO;
                for m in 0..dm {
                    acc += ov[m] * psi.amplitudes[n * dm + m];
                }
                v[n] = acc;
            }
            let p: f64 = v.iter().map(|a| a.norm_sqr()).sum();
            if !(p > 1e-300) {
                return Err(Error::Degenerate(format!("reading y = {y} has zero probability")));
            }
            let v = v.mapv(|a| a / p.sqrt());
            Ok(Projection { field: JointStateField::Pure(FockVector::new(v, Basis::Field(df))?), density: p })
        }
        JointState::Mixed(rho) => {
            let mut m = Array2::<C64>::zeros((df, df));
            for n in 0..df {
                for n2 in 0..df {
                    let mut acc = ZERO;
                    for i in 0..dm {
                        if ov[i] == ZERO {
                            continue;
                        }
                        let mut row = ZERO;
                        for j in 0..dm {
                            row += rho.entries[[n * dm + i, n2 * dm + j]] * ov[j].conj();
                        }
                        acc += ov[i] * row;
                    }
                    m[[n, n2]] = acc;
                }
            }
            let p = m.diag().sum().re;
            if !(p > 1e-300) {
                return Err(Error::Degenerate(format!("reading y = {y} has zero probability")));
            }
            let m = m.mapv(|a| a / p);
            Ok(Projection {
                field: JointStateField::Mixed(DensityMatrix { entries: m, basis: Basis::Field(df), traceless: false }),
                density: p,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::{coherent_vector, coherent_vector_unchecked, pure_cat, thermal_density};
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn joint_pure(alpha0: C64, df: usize, dm: usize) -> FockVector {
        let f = coherent_vector_unchecked(alpha0, df, Basis::Field(df));
        let s: f64 = f.norm_sqr();
        let f = FockVector { amplitudes: f.amplitudes.mapv(|a| a / s.sqrt()), basis: Basis::Field(df) };
        let mut vac = Array1::<C64>::zeros(dm);
        vac[0] = c(1.0, 0.0);
        f.kron(&FockVector { amplitudes: vac, basis: Basis::Mirror(dm) }).unwrap()
    }

    #[test]
    fn identity_at_zero_time() {
        let psi = joint_pure(c(0.5, 0.8), 10, 8);
        let out = exact_unitary_apply_vector(&psi, 0.0, 0.7, false).unwrap();
        assert!(max_abs_diff(out.amplitudes.iter(), psi.amplitudes.iter()) < 1e-15);
    }

    #[test]
    fn cat_at_disentangling_time() {
        let a0 = c(0.0, 2f64.sqrt());
        let df = 20;
        let rho = coherent_vector(a0, df).unwrap().projector().kron(&thermal_density(0.3, 30).unwrap());
        let out = exact_unitary_apply_density(&rho, 2.0 * PI, 0.5, false).unwrap();
        let field = out.field_part().unwrap();
        let cat = pure_cat(a0, df).unwrap();
        let fid = field.expectation_in(&cat).re;
        assert!((1.0 - fid).abs() < 1e-10, "fidelity {fid}");
    }

    #[test]
    fn unitarity_random_state() {
        let (df, dm) = (8, 60);
        let mut v = Array1::<C64>::zeros(df * dm);
        let mut seed = 7u64;
        for n in 0..df {
            for m in 0..6 {
                seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let a = ((seed >> 11) as f64 / (1u64 << 53) as f64) - 0.5;
                let b = ((seed >> 7) % 1000) as f64 / 1000.0 - 0.5;
                v[n * dm + m] = c(a, b);
            }
        }
        let s: f64 = v.iter().map(|a| a.norm_sqr()).sum();
        let psi = FockVector::new(v.mapv(|a| a / s.sqrt()), Basis::Joint { field: df, mirror: dm }).unwrap();
        let out = exact_unitary_apply_vector(&psi, 1.7, 0.2, true).unwrap();
        assert!((out.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn round_trip_inverse() {
        let a0 = c(0.3, 0.9);
        let (df, z, kappa) = (20, 0.05, 0.1);
        let dm = mirror_dim_for(df, kappa, 1.3, z);
        let rho = coherent_vector(a0, df).unwrap().projector().kron(&thermal_density(z, dm).unwrap());
        for free in [false, true] {
            let out = exact_unitary_apply_density(&rho, 1.3, kappa, free).unwrap();
            assert!((out.trace().re - rho.trace().re).abs() < 1e-10);
            let back = exact_unitary_invert_density(&out, 1.3, kappa, free).unwrap();
            assert!(back.sup_distance(&rho) < 1e-10);
        }
    }

    #[test]
    fn overflow_reported() {
        let psi = joint_pure(c(2.0, 0.0), 14, 8);
        assert!(matches!(exact_unitary_apply_vector(&psi, PI, 0.8, false), Err(Error::Truncation { .. })));
    }

    #[test]
    fn pure_and_mixed_integration_agree() {
        let (df, dm) = (6, 30);
        let psi = joint_pure(c(0.4, 0.3), df, dm);
        let opts = LindbladOptions { dt_max: 0.05, ..Default::default() };
        let a = lindblad_integrate(&JointState::Pure(psi.clone()), 2.0, 0.3, 0.0, &opts).unwrap();
        let b = lindblad_integrate(&JointState::Mixed(psi.projector()), 2.0, 0.3, 0.0, &opts).unwrap();
        assert!(a.state.sup_distance(&b.state) < 1e-7);
        let exact = exact_unitary_apply_vector(&psi, 2.0, 0.3, false).unwrap();
        assert!(a.state.sup_distance(&JointState::Pure(exact)) < 1e-7);
    }

    #[test]
    fn field_decay_without_coupling() {
        let (df, dm) = (14, 5);
        let a0 = c(1.0, 0.5);
        let psi = joint_pure(a0, df, dm);
        let gamma = 0.3;
        let t = 1.5;
        let out = lindblad_integrate(&JointState::Pure(psi.clone()), t, 1e-300, gamma, &LindbladOptions::default()).unwrap();
        let rho = out.state.to_density();
        let n0 = psi.projector().field_part().unwrap().mean_number();
        let n = rho.field_part().unwrap().mean_number();
        assert!((n / (n0 * (-gamma * t).exp()) - 1.0).abs() < 1e-6);
        assert!((rho.trace().re - 1.0).abs() < 1e-9);
        assert!(rho.hermiticity_error() < 1e-10);
    }

    #[test]
    fn kerr_frame_matches_lab_frame() {
        let (df, dm_k) = (5, 12);
        let kappa = 0.2;
        let t = PI;
        let gamma = 0.05;
        let psi = joint_pure(c(0.0, 0.5), df, dm_k);
        let rho0 = psi.projector();
        let opts = LindbladOptions { dt_max: 0.02, ..Default::default() };
        let (kf, _) = lindblad_integrate_kerr_frame(&rho0, t, kappa, gamma, &opts).unwrap();
        let dm_lab = mirror_dim_for(df, kappa, t, 0.0);
        let map = KerrToLab::new(t, kappa, df, dm_k, dm_lab).unwrap();
        let from_kerr = map.to_lab(&kf.r).unwrap();

        let psi_lab = joint_pure(c(0.0, 0.5), df, dm_lab);
        let lab = lindblad_integrate(&JointState::Mixed(psi_lab.projector()), t, kappa, gamma, &opts).unwrap();
        let d = lab.state.to_density().sup_distance(&from_kerr);
        assert!(d < 1e-7, "{d}");
    }

    #[test]
    fn projection_reproduces_conditional_cat() {
        let a0 = c(0.0, 1.0);
        let t = 1.5 * PI;
        let kappa = crate::model::conditional_cat_kappa(t, 0).unwrap();
        let df = 16;
        let dm = mirror_dim_for(df, kappa, t, 0.0);
        let psi = joint_pure(a0, df, dm);
        let out = exact_unitary_apply_vector(&psi, t, kappa, false).unwrap();
        for &y in &[0.0, 0.8, -1.7] {
            let p = project_mirror_quadrature(&JointState::Pure(out.clone()), y, t).unwrap();
            let want = crate::states::conditional_cat(a0, t, kappa, y, df + 10).unwrap();
            let field = match p.field {
                JointStateField::Pure(v) => v,
                _ => unreachable!(),
            };
            let ov: C64 = (0..df).map(|n| want.amplitudes[n].conj() * field.amplitudes[n]).sum();
            assert!(1.0 - ov.norm_sqr() < 1e-6, "y={y}: {}", ov.norm());
            let want_p = crate::analytic::mirror_quadrature_density(y, 0.0);
            assert!((p.density - want_p).abs() < 1e-8);
        }
    }

    #[test]
    fn projection_of_product_state() {
        let f = pure_cat(c(0.6, 0.2), 20).unwrap();
        let m = thermal_density(0.4, 40).unwrap();
        let rho = f.projector().kron(&m);
        let p = project_mirror_quadrature(&JointState::Mixed(rho), 0.9, 0.7).unwrap();
        assert!(p.field.to_density().sup_distance(&f.projector()) < 1e-12);
        let want = crate::analytic::mirror_quadrature_density(0.9, 0.4);
        assert!((p.density - want).abs() < 1e-8);
    }

    #[test]
    fn projection_density_integrates_to_one() {
        let psi = joint_pure(c(0.5, 0.5), 10, mirror_dim_for(10, 0.4, 2.0, 0.0));
        let out = exact_unitary_apply_vector(&psi, 2.0, 0.4, false).unwrap();
        let st = JointState::Pure(out);
        let mut s = 0.0;
        let h = 0.01;
        for i in 0..=2400 {
            let y = -12.0 + i as f64 * h;
            let w = if i == 0 || i == 2400 { 0.5 } else { 1.0 };
            s += w * h * project_mirror_quadrature(&st, y, 2.0).unwrap().density;
        }
        assert!((s - 1.0).abs() < 1e-8, "{s}");
    }
}
