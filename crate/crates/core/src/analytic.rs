//! Closed-form distributions: quadrature marginals (undamped, damped, conditional,
//! pseudo-cat), the joint Husimi function, the mirror quadrature density and photon
//! statistics after injection of a reference field.
//!
//! Field quadrature: X = (a + a^dag)/2. Mirror reading y: eigenvalue of
//! b e^{it/2} + b^dag e^{-it/2}, the operator that enters the coupling.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_4, PI};

use crate::error::{invalid, Error, Result};
use crate::model::{cat_condition_residual, check_z, e_of, f_of, ScaledParams};
use crate::states::{pseudo_cat_density, displace, GAUSS_CUT_SIGMAS};
use crate::specfun::{adaptive_quad, ho_wavefunctions, log_factorial_table, poisson_amplitudes, QuadSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridKind {
    Marginal,
    DampedMarginal,
    ConditionalMarginal,
    PseudoMarginal,
    PhotonNumber,
    QuadratureDensity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub kind: GridKind,
    pub kappa: f64,
    pub gamma: f64,
    pub z: f64,
    pub alpha0: (f64, f64),
    pub t: f64,
    pub p_max: usize,
    /// |E(t) - (pi/2 + 2 pi m)|.
    pub condition_residual: f64,
    /// gamma |alpha0|^2 t; first order is trustworthy while this is small.
    pub validity: f64,
    /// Largest imaginary part left over after summing conjugate term pairs.
    pub imag_residue: f64,
    /// Most negative value before clipping (0 if none).
    pub min_raw: f64,
}

impl GridMeta {
    fn new(kind: GridKind, kappa: f64, gamma: f64, z: f64, alpha0: C64, t: f64) -> Self {
        Self {
            kind,
            kappa,
            gamma,
            z,
            alpha0: (alpha0.re, alpha0.im),
            t,
            p_max: 0,
            condition_residual: if kappa > 0.0 { cat_condition_residual(t, kappa) } else { 0.0 },
            validity: gamma * alpha0.norm_sqr() * t,
            imag_residue: 0.0,
            min_raw: 0.0,
        }
    }
}

/// A sampled distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub abscissae: Vec<f64>,
    pub values: Vec<f64>,
    pub meta: GridMeta,
}

impl Grid1D {
    /// Trapezoid integral for continuous kinds, plain sum for photon numbers.
    pub fn total(&self) -> f64 {
        if self.meta.kind == GridKind::PhotonNumber {
            return self.values.iter().sum();
        }
        let mut acc = 0.0;
        for i in 1..self.values.len() {
            let h = self.abscissae[i] - self.abscissae[i - 1];
            acc += 0.5 * h * (self.values[i] + self.values[i - 1]);
        }
        acc
    }

    pub fn sup_distance(&self, other: &Grid1D) -> f64 {
        self.values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// (max - min)/(max + min) over |abscissa - center| <= half_width.
    pub fn visibility(&self, center: f64, half_width: f64) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (x, v) in self.abscissae.iter().zip(self.values.iter()) {
            if (x - center).abs() <= half_width + 1e-12 {
                lo = lo.min(*v);
                hi = hi.max(*v);
            }
        }
        (hi - lo) / (hi + lo)
    }

    fn from_raw(abscissae: Vec<f64>, raw: Vec<f64>, mut meta: GridMeta) -> Result<Self> {
        let min = raw.iter().cloned().fold(0.0, f64::min);
        meta.min_raw = min;
        if min < -1e-9 {
            return Err(Error::Domain(format!(
                "distribution dips to {min:e}: the first-order correction outweighs the undamped part"
            )));
        }
        let values = raw.into_iter().map(|v| v.max(0.0)).collect();
        Ok(Self { abscissae, values, meta })
    }
}

/// Evenly spaced grid from `min` to `max` inclusive.
pub fn linear_grid(min: f64, max: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(max >= min) {
        return invalid(format!("bad grid [{min}, {max}] step {step}"));
    }
    let n = ((max - min) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| min + i as f64 * step).collect())
}

/// [-X_m, X_m] with X_m = |alpha0| + 4 (eight standard deviations of a coherent
/// component), step 0.01.
pub fn default_x_grid(alpha0: C64) -> Vec<f64> {
    let xm = alpha0.norm() + 4.0;
    let n = (2.0 * xm / 0.01).round() as usize;
    (0..=n).map(|i| -xm + i as f64 * 0.01).collect()
}

/// Smallest p above the Poisson mean whose weight falls below 1e-20 of the largest, so that
/// dropped cross terms c_p c_q stay near 1e-10.
pub fn series_p_max(mu: f64) -> usize {
    if mu <= 0.0 {
        return 1;
    }
    let dim = (mu + 20.0 * mu.sqrt() + 40.0) as usize;
    let c = poisson_amplitudes(mu.sqrt(), dim);
    let peak = c.iter().map(|v| v * v).fold(0.0, f64::max);
    let start = mu.floor() as usize;
    (start..dim).find(|&p| c[p] * c[p] < 1e-20 * peak).unwrap_or(dim - 1)
}

fn check_p_max(mu: f64, p_max: usize) -> Result<()> {
    let c = poisson_amplitudes(mu.sqrt(), p_max + 1);
    let peak = c.iter().map(|v| v * v).fold(0.0, f64::max);
    if mu > 0.0 && c[p_max] * c[p_max] > 1e-12 * peak {
        return Err(Error::Truncation {
            what: format!("series term at p_max={p_max} still {:e} of peak", c[p_max] * c[p_max] / peak),
            required: series_p_max(mu),
            have: p_max,
        });
    }
    Ok(())
}

/// 1 + i(-1)^q - i(-1)^p + (-1)^{p+q}.
pub fn apq(p: usize, q: usize) -> C64 {
    let sp = if p % 2 == 0 { 1.0 } else { -1.0 };
    let sq = if q % 2 == 0 { 1.0 } else { -1.0 };
    C64::new(1.0 + sp * sq, sq - sp)
}

/// Integral of exp(-2i E(t* - tau)(p - q)) over [0, t*].
pub fn born_integral(p: usize, q: usize, t_star: f64, kappa: f64, quad: QuadSpec) -> Result<C64> {
    born_integral_diff(p as i64 - q as i64, t_star, kappa, quad)
}

fn born_integral_diff(d: i64, t_star: f64, kappa: f64, quad: QuadSpec) -> Result<C64> {
    if !(t_star >= 0.0) {
        return invalid(format!("t* must be nonnegative, got {t_star}"));
    }
    if d == 0 {
        return Ok(C64::new(t_star, 0.0));
    }
    if d < 0 {
        return Ok(born_integral_diff(-d, t_star, kappa, quad)?.conj());
    }
    let df = d as f64;
    // substitute s = t* - tau
    adaptive_quad(|s| C64::from_polar(1.0, -2.0 * e_of(s, kappa) * df), 0.0, t_star, quad)
}

/// Integral over [0, t'] of exp{-i[2E(s) + 2F(t')F(s) sin(tau/2)](p - q)}
/// times the mirror reading density at y - 2F(s) sin(tau/2), with s = t' - tau.
pub fn born_integral_conditional(
    p: usize,
    q: usize,
    t_prime: f64,
    kappa: f64,
    y: f64,
    z: f64,
    quad: QuadSpec,
) -> Result<C64> {
    born_integral_conditional_diff(p as i64 - q as i64, t_prime, kappa, y, z, quad)
}

fn born_integral_conditional_diff(
    d: i64,
    t_prime: f64,
    kappa: f64,
    y: f64,
    z: f64,
    quad: QuadSpec,
) -> Result<C64> {
    check_z(z)?;
    if !(t_prime >= 0.0) {
        return invalid(format!("t' must be nonnegative, got {t_prime}"));
    }
    if d < 0 {
        return Ok(born_integral_conditional_diff(-d, t_prime, kappa, y, z, quad)?.conj());
    }
    let df = d as f64;
    let ft = f_of(t_prime, kappa);
    adaptive_quad(
        |tau| {
            let s = t_prime - tau;
            let shift = 2.0 * f_of(s, kappa) * (0.5 * tau).sin();
            let phase = -(2.0 * e_of(s, kappa) + ft * shift) * df;
            C64::from_polar(mirror_quadrature_density(y - shift, z), phase)
        },
        0.0,
        t_prime,
        quad,
    )
}

/// A_{p,q} and I_{p,q} (or the conditional version) up to p_max.
#[derive(Debug, Clone, PartialEq)]
pub struct BornSeriesTerms {
    pub a_table: Array2<C64>,
    pub i_table: Array2<C64>,
    pub p_max: usize,
}

impl BornSeriesTerms {
    pub fn unconditional(p_max: usize, t_star: f64, kappa: f64, quad: QuadSpec) -> Result<Self> {
        let by_diff = diff_table(p_max, |d| born_integral_diff(d, t_star, kappa, quad))?;
        Ok(Self::assemble(p_max, &by_diff))
    }

    pub fn conditional(
        p_max: usize,
        t_prime: f64,
        kappa: f64,
        y: f64,
        z: f64,
        quad: QuadSpec,
    ) -> Result<Self> {
        let by_diff = diff_table(p_max, |d| born_integral_conditional_diff(d, t_prime, kappa, y, z, quad))?;
        Ok(Self::assemble(p_max, &by_diff))
    }

    fn assemble(p_max: usize, by_diff: &[C64]) -> Self {
        let n = p_max + 1;
        let mut a = Array2::zeros((n, n));
        let mut i = Array2::zeros((n, n));
        for p in 0..n {
            for q in 0..n {
                a[[p, q]] = apq(p, q);
                i[[p, q]] = if p >= q { by_diff[p - q] } else { by_diff[q - p].conj() };
            }
        }
        Self { a_table: a, i_table: i, p_max }
    }
}

fn diff_table<F: Fn(i64) -> Result<C64>>(p_max: usize, f: F) -> Result<Vec<C64>> {
    (0..=p_max as i64).map(f).collect()
}

/// Density of the mirror reading y in the thermal state, quadrature scaled as
/// (a + a^dag)/2: sqrt(2/pi (1-z)/(1+z)) exp[-2y^2 (1-z)/(1+z)].
pub fn thermal_quadrature_density(y: f64, z: f64) -> f64 {
    let r = (1.0 - z) / (1.0 + z);
    (2.0 / PI * r).sqrt() * (-2.0 * y * y * r).exp()
}

/// Sum over j of (1-z) z^j psi_j(y)^2, truncated once z^j < 1e-12 (the left side of
/// the thermal quadrature identity).
pub fn thermal_quadrature_series(y: f64, z: f64) -> Result<f64> {
    check_z(z)?;
    let j_max = if z == 0.0 { 0 } else { ((1e-12f64).ln() / z.ln()).ceil() as usize + 1 };
    let psi = ho_wavefunctions(y, j_max);
    let mut acc = 0.0;
    let mut w = 1.0 - z;
    for p in psi.iter() {
        acc += w * p * p;
        w *= z;
    }
    Ok(acc)
}

/// Density of the reading y of b e^{it/2} + b^dag e^{-it/2} in the thermal state:
/// Gaussian of variance (1+z)/(1-z).
pub fn mirror_quadrature_density(y: f64, z: f64) -> f64 {
    0.5 * thermal_quadrature_density(0.5 * y, z)
}

/// <X|alpha> for X = (a + a^dag)/2.
pub fn quadrature_wavefunction(alpha: C64, x: f64) -> C64 {
    let e = -x * x + 2.0 * alpha * x - 0.5 * alpha * alpha - 0.5 * alpha.norm_sqr();
    (2.0 / PI).powf(0.25) * e.exp()
}

fn cat_marginal_at(alpha0: C64, x: f64) -> f64 {
    let em = C64::from_polar(1.0, -FRAC_PI_4);
    let ep = C64::from_polar(1.0, FRAC_PI_4);
    let amp = ep * quadrature_wavefunction(alpha0, x) + em * quadrature_wavefunction(-alpha0, x);
    0.5 * amp.norm_sqr()
}

/// Quadrature marginal of the cat generated at the disentangling time.
pub fn marginal_pure_cat(alpha0: C64, x_grid: &[f64]) -> Grid1D {
    let values = x_grid.iter().map(|&x| cat_marginal_at(alpha0, x)).collect();
    let mut meta = GridMeta::new(GridKind::Marginal, 0.0, 0.0, 0.0, alpha0, 0.0);
    meta.condition_residual = 0.0;
    Grid1D { abscissae: x_grid.to_vec(), values, meta }
}

/// Quadrature marginal of the cat selected by the mirror reading y at t'.
pub fn marginal_conditional(alpha0: C64, t_prime: f64, kappa: f64, y: f64, x_grid: &[f64]) -> Result<Grid1D> {
    let f = f_of(t_prime, kappa);
    if f.abs() < 1e-12 {
        return Err(Error::Disentangled { t: t_prime });
    }
    let a = alpha0 * C64::from_polar(1.0, f * y);
    let values = x_grid.iter().map(|&x| cat_marginal_at(a, x)).collect();
    let meta = GridMeta::new(GridKind::ConditionalMarginal, kappa, 0.0, 0.0, alpha0, t_prime);
    Ok(Grid1D { abscissae: x_grid.to_vec(), values, meta })
}

/// Sum over p, q of psi_p(X) psi_q(X) c_p c_q e^{i arg(alpha0)(p-q)} coef[p, q].
fn hermite_series(alpha0: C64, x_grid: &[f64], coef: &Array2<C64>) -> (Vec<f64>, f64) {
    let n = coef.nrows();
    let c = poisson_amplitudes(alpha0.norm(), n);
    let th = alpha0.arg();
    let mut k = Array2::<C64>::zeros((n, n));
    for p in 0..n {
        for q in 0..n {
            k[[p, q]] = coef[[p, q]] * C64::from_polar(c[p] * c[q], th * (p as f64 - q as f64));
        }
    }
    let mut values = Vec::with_capacity(x_grid.len());
    let mut imag = 0.0f64;
    for &x in x_grid {
        let psi = ho_wavefunctions(x, n - 1);
        let mut acc = C64::new(0.0, 0.0);
        for p in 0..n {
            if psi[p] == 0.0 {
                continue;
            }
            let mut row = C64::new(0.0, 0.0);
            for q in 0..n {
                row += k[[p, q]] * psi[q];
            }
            acc += row * psi[p];
        }
        imag = imag.max(acc.im.abs());
        values.push(acc.re);
    }
    (values, imag)
}

/// Bracket of the damped series: A_{p,q}/2 w + (gamma/2)[A_{q,p} I_{p,q} |alpha0|^2 - A_{p,q} (p+q) t w / 2].
/// rho_0 of the cat carries A_{p,q}/2; a photon jump shifts (p, q) -> (p+1, q+1), which turns it into A_{q,p}/2.
fn damped_coefficients(terms: &BornSeriesTerms, gamma: f64, mu: f64, t: f64, w: f64) -> Array2<C64> {
    let n = terms.p_max + 1;
    let mut coef = Array2::<C64>::zeros((n, n));
    for p in 0..n {
        for q in 0..n {
            let aqp = terms.a_table[[q, p]];
            let apq = terms.a_table[[p, q]];
            let undamped = apq * 0.5 * w;
            let corr = aqp * terms.i_table[[p, q]] * mu - apq * ((p + q) as f64 * 0.5 * t * w);
            coef[[p, q]] = undamped + 0.5 * gamma * corr;
        }
    }
    coef
}

fn resolve_p_max(mu: f64, p_max: Option<usize>) -> Result<usize> {
    match p_max {
        Some(p) => {
            check_p_max(mu, p)?;
            Ok(p)
        }
        None => Ok(series_p_max(mu)),
    }
}

/// Quadrature marginal of the cat at t* = 2 pi m1 including the first-order photon-loss correction.
pub fn damped_marginal_star(
    alpha0: C64,
    t_star: f64,
    kappa: f64,
    gamma: f64,
    x_grid: &[f64],
    p_max: Option<usize>,
) -> Result<Grid1D> {
    if !(gamma >= 0.0) {
        return invalid(format!("gamma must be nonnegative, got {gamma}"));
    }
    let mu = alpha0.norm_sqr();
    let p_max = resolve_p_max(mu, p_max)?;
    let terms = BornSeriesTerms::unconditional(p_max, t_star, kappa, QuadSpec::default())?;
    let coef = damped_coefficients(&terms, gamma, mu, t_star, 1.0);
    let (raw, imag) = hermite_series(alpha0, x_grid, &coef);
    let mut meta = GridMeta::new(GridKind::DampedMarginal, kappa, gamma, 0.0, alpha0, t_star);
    meta.p_max = p_max;
    meta.imag_residue = imag;
    Grid1D::from_raw(x_grid.to_vec(), raw, meta)
}

/// Quadrature marginal conditioned on the mirror reading y at t', with the
/// first-order photon-loss correction and renormalization after the projection.
#[allow(clippy::too_many_arguments)]
pub fn damped_marginal_conditional(
    alpha0: C64,
    t_prime: f64,
    kappa: f64,
    gamma: f64,
    y: f64,
    z: f64,
    x_grid: &[f64],
    p_max: Option<usize>,
) -> Result<Grid1D> {
    check_z(z)?;
    let f = f_of(t_prime, kappa);
    if f.abs() < 1e-12 {
        return Err(Error::Disentangled { t: t_prime });
    }
    let mu = alpha0.norm_sqr();
    let p_max = resolve_p_max(mu, p_max)?;
    let terms = BornSeriesTerms::conditional(p_max, t_prime, kappa, y, z, QuadSpec::default())?;
    let w = mirror_quadrature_density(y, z);
    let coef = damped_coefficients(&terms, gamma, mu, t_prime, w);
    let norm = w + gamma * mu * (terms.i_table[[0, 0]].re - w * t_prime);
    if !(norm > 0.0) {
        return Err(Error::Domain(format!("conditional normalization {norm:e} is not positive")));
    }
    let rotated = alpha0 * C64::from_polar(1.0, f * y);
    let (raw, imag) = hermite_series(rotated, x_grid, &coef);
    let raw = raw.into_iter().map(|v| v / norm).collect();
    let mut meta = GridMeta::new(GridKind::ConditionalMarginal, kappa, gamma, z, alpha0, t_prime);
    meta.p_max = p_max;
    meta.imag_residue = imag / norm;
    Grid1D::from_raw(x_grid.to_vec(), raw, meta)
}

/// Quadrature marginal of the pseudo-cat: the damped series with each (p, q) term
/// dephased by the Gaussian average of e^{iF y (p-q)} over the thermal mirror reading.
pub fn pseudo_cat_marginal(
    alpha0: C64,
    t: f64,
    kappa: f64,
    gamma: f64,
    z: f64,
    x_grid: &[f64],
    p_max: Option<usize>,
) -> Result<Grid1D> {
    check_z(z)?;
    let mu = alpha0.norm_sqr();
    let p_max = resolve_p_max(mu, p_max)?;
    let terms = BornSeriesTerms::unconditional(p_max, t, kappa, QuadSpec::default())?;
    let mut coef = damped_coefficients(&terms, gamma, mu, t, 1.0);
    let f = f_of(t, kappa);
    let var = (1.0 + z) / (1.0 - z);
    for p in 0..=p_max {
        for q in 0..=p_max {
            let d = p as f64 - q as f64;
            coef[[p, q]] *= (-0.5 * f * f * d * d * var).exp();
        }
    }
    let (raw, imag) = hermite_series(alpha0, x_grid, &coef);
    let mut meta = GridMeta::new(GridKind::PseudoMarginal, kappa, gamma, z, alpha0, t);
    meta.p_max = p_max;
    meta.imag_residue = imag;
    Grid1D::from_raw(x_grid.to_vec(), raw, meta)
}

/// Joint Husimi function <alpha|<beta|rho(t)|beta>|alpha> of the evolved
/// coherent-field, thermal-mirror state; double series truncated at `trunc`.
pub fn q_function(alpha: C64, beta: C64, t: f64, params: &ScaledParams, trunc: usize) -> Result<f64> {
    q_series(alpha, beta, t, params, trunc, QReading::Exact)
}

/// The same series with the j-th mirror factor read as z^j |beta|^{2j} times the
/// printed inner r-sum; agrees with [`q_function`] only while F(t) = 0.
pub fn q_function_printed(alpha: C64, beta: C64, t: f64, params: &ScaledParams, trunc: usize) -> Result<f64> {
    q_series(alpha, beta, t, params, trunc, QReading::Printed)
}

#[derive(Clone, Copy, PartialEq)]
enum QReading {
    Exact,
    Printed,
}

fn clog(z: C64) -> Option<C64> {
    if z.norm() == 0.0 {
        None
    } else {
        Some(z.ln())
    }
}

fn q_series(alpha: C64, beta: C64, t: f64, params: &ScaledParams, trunc: usize, reading: QReading) -> Result<f64> {
    let z = params.z;
    check_z(z)?;
    let (e, f) = (e_of(t, params.kappa), f_of(t, params.kappa));
    let alpha0 = params.alpha0;
    let lf = log_factorial_table(2 * trunc + 2);
    let j_max = if z == 0.0 { 0 } else { trunc };
    let base = -0.5 * (alpha.norm_sqr() + alpha0.norm_sqr() + beta.norm_sqr());
    let la = clog(alpha.conj() * alpha0);
    let rot = C64::from_polar(1.0, -0.5 * t);
    let kerr = C64::new(-0.5 * f * f, e);
    let mut total = 0.0;
    let mut last_j = 0.0;
    let mut tail_n = 0.0f64;
    for j in 0..=j_max {
        let jf = j as f64;
        let pref = base + if j == 0 { 0.0 } else { 0.5 * (jf * z.ln() - lf[j]) };
        let mut s = C64::new(0.0, 0.0);
        for n in 0..=trunc {
            let nf = n as f64;
            let mut ex = C64::new(pref - lf[n], 0.0) + kerr * nf * nf + C64::new(0.0, f * nf) * rot * beta.conj();
            match la {
                Some(l) => ex += l * nf,
                None if n > 0 => continue,
                None => {}
            }
            let c = C64::new(0.0, f * nf) / rot;
            let mirror = match reading {
                QReading::Exact => {
                    let w = beta.conj() + c;
                    if j == 0 {
                        Some(C64::new(0.0, 0.0))
                    } else {
                        clog(w).map(|l| l * jf)
                    }
                }
                QReading::Printed => {
                    // |beta|^{2j} z^j with the r-sum sum_r c^r / (r! sqrt((j-r)!))
                    let mut r_sum = C64::new(0.0, 0.0);
                    for r in 0..=j {
                        let term = if r == 0 {
                            C64::new(1.0, 0.0)
                        } else if c.norm() == 0.0 {
                            C64::new(0.0, 0.0)
                        } else {
                            (c.ln() * r as f64).exp()
                        };
                        r_sum += term * (-lf[r] - 0.5 * lf[j - r]).exp();
                    }
                    // undo the 1/sqrt(j!) already in pref, apply |beta|^{2j}
                    let mag = if j == 0 { Some(0.0) } else if beta.norm() == 0.0 { None } else { Some(jf * beta.norm().ln()) };
                    match (mag, clog(r_sum)) {
                        (Some(m), Some(l)) => Some(C64::new(m + 0.5 * lf[j], 0.0) + l),
                        _ => None,
                    }
                }
            };
            if let Some(m) = mirror {
                let term = (ex + m).exp();
                if n == trunc {
                    tail_n = tail_n.max(term.norm());
                }
                s += term;
            }
        }
        let contrib = s.norm_sqr();
        if j == j_max {
            last_j = contrib;
        }
        total += contrib;
    }
    let q = (1.0 - z) * total;
    if tail_n > 1e-10 || (j_max > 0 && last_j > 1e-12) {
        return Err(Error::Truncation {
            what: format!("Husimi series tail {:e}", tail_n.max(last_j)),
            required: 2 * trunc,
            have: trunc,
        });
    }
    Ok(q)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InjectionPhase {
    /// alpha_r = alpha0.
    In,
    /// alpha_r = i alpha0.
    Out,
}

impl InjectionPhase {
    pub fn reference(&self, alpha0: C64) -> C64 {
        match self {
            InjectionPhase::In => alpha0,
            InjectionPhase::Out => alpha0 * C64::new(0.0, 1.0),
        }
    }
}

/// Photon-number distribution after a reference field alpha_r (|alpha_r| = |alpha0|)
/// is added to both cat components, averaged over the mirror reading.
pub fn photon_stats(
    alpha0: C64,
    t: f64,
    kappa: f64,
    z: f64,
    phase: InjectionPhase,
    n_max: usize,
    quad: QuadSpec,
) -> Result<Grid1D> {
    check_z(z)?;
    let mu = alpha0.norm_sqr();
    let need = (4.0 * mu + 16.0 * mu.sqrt() + 10.0).ceil() as usize;
    if n_max < need {
        return Err(Error::Truncation {
            what: "photon statistics after injection".into(),
            required: need,
            have: n_max,
        });
    }
    let alpha_r = phase.reference(alpha0);
    let f = f_of(t, kappa);
    let lf = log_factorial_table(n_max + 1);
    let em = C64::from_polar(1.0, -FRAC_PI_4);
    let ep = C64::from_polar(1.0, FRAC_PI_4);
    let fock = |b: C64, n: usize| -> C64 {
        if b.norm() == 0.0 {
            return if n == 0 { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
        }
        let nf = n as f64;
        C64::from_polar(
            (-0.5 * b.norm_sqr() + nf * b.norm().ln() - 0.5 * lf[n]).exp(),
            nf * b.arg(),
        )
    };
    // the two shifted components overlap, so each reading is normalized by
    // N(y) = 1 + Re(-i <A|B>), A = alpha0 e^{iFy} + alpha_r, B = -alpha0 e^{iFy} + alpha_r
    let prob = |y: f64, n: usize| -> f64 {
        let ay = alpha0 * C64::from_polar(1.0, f * y);
        let (a, b) = (ay + alpha_r, -ay + alpha_r);
        let overlap = (-0.5 * (a.norm_sqr() + b.norm_sqr()) + a.conj() * b).exp();
        let norm = 1.0 + (C64::new(0.0, -1.0) * overlap).re;
        let amp = ep * fock(a, n) + em * fock(b, n);
        0.5 * amp.norm_sqr() / norm
    };
    let sigma = ((1.0 + z) / (1.0 - z)).sqrt();
    let ymax = GAUSS_CUT_SIGMAS * sigma;
    // the n_max + 1 integrals share the tolerance so their errors cannot pile up in the total
    let per_n = QuadSpec { abs_tol: quad.abs_tol / (n_max + 1) as f64, ..quad };
    let mut raw = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let v = if f == 0.0 {
            prob(0.0, n)
        } else {
            adaptive_quad(
                |y| C64::new(mirror_quadrature_density(y, z) * prob(y, n), 0.0),
                -ymax,
                ymax,
                per_n,
            )?
            .re
        };
        raw.push(v);
    }
    check_photon_total(&raw, n_max)?;
    let mut meta = GridMeta::new(GridKind::PhotonNumber, kappa, 0.0, z, alpha0, t);
    meta.p_max = n_max;
    Grid1D::from_raw((0..=n_max).map(|n| n as f64).collect(), raw, meta)
}

/// Photon-number distribution of D(alpha_r) rho D(alpha_r)^dag with rho the pseudo-cat.
/// Unlike [`photon_stats`] this keeps the phase e^{i Im(alpha_r beta^*)} the
/// displacement operator attaches to each coherent component.
pub fn photon_stats_displaced(
    alpha0: C64,
    t: f64,
    kappa: f64,
    z: f64,
    phase: InjectionPhase,
    n_max: usize,
    quad: QuadSpec,
) -> Result<Grid1D> {
    let rho = pseudo_cat_density(alpha0, t, kappa, z, n_max + 1, quad)?;
    let out = displace(&rho, phase.reference(alpha0))?;
    let raw: Vec<f64> = out.entries.diag().iter().map(|v| v.re).collect();
    check_photon_total(&raw, n_max)?;
    let mut meta = GridMeta::new(GridKind::PhotonNumber, kappa, 0.0, z, alpha0, t);
    meta.p_max = n_max;
    Grid1D::from_raw((0..=n_max).map(|n| n as f64).collect(), raw, meta)
}

/// Probability missing from a photon-number distribution cut at n_max.
fn check_photon_total(raw: &[f64], n_max: usize) -> Result<()> {
    let total: f64 = raw.iter().sum();
    if (total - 1.0).abs() > 1e-8 {
        return Err(Error::Truncation {
            what: format!("photon-number distribution sums to {total} below n_max"),
            required: n_max + n_max / 2,
            have: n_max,
        });
    }
    Ok(())
}

/// Tr rho_gamma of the damped series at t*: sum_p c_p^2 (gamma/2)[A_pp I_pp |alpha0|^2 - A_pp p t].
/// Zero up to the series cut-off and quadrature error.
pub fn damped_star_trace(alpha0: C64, t_star: f64, kappa: f64, gamma: f64, p_max: Option<usize>) -> Result<C64> {
    let mu = alpha0.norm_sqr();
    let p_max = resolve_p_max(mu, p_max)?;
    let terms = BornSeriesTerms::unconditional(p_max, t_star, kappa, QuadSpec::default())?;
    let c = poisson_amplitudes(alpha0.norm(), p_max + 1);
    let mut acc = C64::new(0.0, 0.0);
    for p in 0..=p_max {
        let a = terms.a_table[[p, p]];
        let corr = a * terms.i_table[[p, p]] * mu - a * (p as f64 * t_star);
        acc += corr * (0.5 * gamma * c[p] * c[p]);
    }
    Ok(acc)
}
