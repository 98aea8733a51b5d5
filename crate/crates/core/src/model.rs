//! Physical parameters, the Kerr phases E(t), F(t), and the cat-generation conditions.
//!
//! Time is always the dimensionless `omega_m * t`.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::states::default_field_dim;

pub const HBAR: f64 = 1.054_571_817e-34;
pub const K_B: f64 = 1.380_649e-23;
pub const C_LIGHT: f64 = 2.997_924_58e8;

/// Raw laboratory inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawParams {
    pub omega_c: f64,
    pub omega_m: f64,
    pub mass: f64,
    pub length: f64,
    pub transmissivity: f64,
    pub temperature: f64,
    pub alpha0: C64,
}

impl RawParams {
    /// Cavity and mirror of the reference experimental design.
    pub fn reference() -> Self {
        Self {
            omega_c: 1e16,
            omega_m: 1e4,
            mass: 1e-14,
            length: 1.5,
            transmissivity: 1e-6,
            temperature: 1e-7,
            alpha0: C64::new(0.0, 7f64.sqrt()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledParams {
    pub kappa: f64,
    pub gamma: f64,
    pub z: f64,
    pub n_th: f64,
    pub alpha0: C64,
    pub dim_field: usize,
    pub dim_mirror: usize,
}

impl ScaledParams {
    pub fn new(kappa: f64, gamma: f64, z: f64, alpha0: C64) -> Result<Self> {
        if !(kappa > 0.0) || !kappa.is_finite() {
            return invalid(format!("kappa must be positive, got {kappa}"));
        }
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return invalid(format!("gamma must be nonnegative, got {gamma}"));
        }
        check_z(z)?;
        let dim_field = default_field_dim(alpha0.norm_sqr());
        let dim_mirror = thermal_dim(z, 1e-10).max(2);
        Ok(Self {
            kappa,
            gamma,
            z,
            n_th: z / (1.0 - z),
            alpha0,
            dim_field,
            dim_mirror,
        })
    }
}

pub(crate) fn check_z(z: f64) -> Result<()> {
    if !(0.0..1.0).contains(&z) {
        return invalid(format!("Boltzmann factor z must lie in [0, 1), got {z}"));
    }
    Ok(())
}

/// Smallest dimension with z^dim below `tol`.
pub fn thermal_dim(z: f64, tol: f64) -> usize {
    if z <= 0.0 {
        1
    } else {
        (tol.ln() / z.ln()).ceil() as usize + 1
    }
}

/// Boltzmann factor for a thermal occupation N_th.
pub fn z_from_n_th(n_th: f64) -> Result<f64> {
    if !(n_th >= 0.0) || !n_th.is_finite() {
        return invalid(format!("N_th must be nonnegative, got {n_th}"));
    }
    Ok(n_th / (1.0 + n_th))
}

pub fn scale_params(raw: &RawParams) -> Result<ScaledParams> {
    let positive = [
        ("omega_c", raw.omega_c),
        ("omega_m", raw.omega_m),
        ("mass", raw.mass),
        ("length", raw.length),
        ("temperature", raw.temperature),
    ];
    for (name, v) in positive {
        if !(v > 0.0) || !v.is_finite() {
            return invalid(format!("{name} must be positive, got {v}"));
        }
    }
    if !(raw.transmissivity > 0.0 && raw.transmissivity < 1.0) {
        return invalid(format!("transmissivity must lie in (0, 1), got {}", raw.transmissivity));
    }
    let g = raw.omega_c / raw.length * (HBAR / (2.0 * raw.mass * raw.omega_m)).sqrt();
    let kappa = g / raw.omega_m;
    let gamma = C_LIGHT * raw.transmissivity / (2.0 * raw.length) / raw.omega_m;
    let z = (-HBAR * raw.omega_m / (K_B * raw.temperature)).exp();
    ScaledParams::new(kappa, gamma, z, raw.alpha0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KerrPhase {
    pub t: f64,
    pub e_phase: f64,
    pub f_phase: f64,
}

pub fn kerr_phase(t: f64, kappa: f64) -> KerrPhase {
    KerrPhase {
        t,
        e_phase: e_of(t, kappa),
        f_phase: f_of(t, kappa),
    }
}

#[inline]
pub fn e_of(t: f64, kappa: f64) -> f64 {
    kappa * kappa * (t - t.sin())
}

#[inline]
pub fn f_of(t: f64, kappa: f64) -> f64 {
    2.0 * kappa * (0.5 * t).sin()
}

/// Coupling that makes t* = 2 pi m1 a cat-generation time with E(t*) = pi/2 + 2 pi m2.
pub fn disentangled_cat_kappa(m1: u32, m2: u32) -> Result<f64> {
    if m1 == 0 {
        return invalid("m1 must be at least 1");
    }
    Ok(((0.25 + m2 as f64) / m1 as f64).sqrt())
}

/// Coupling that gives E(t') = pi/2 + 2 pi m.
pub fn conditional_cat_kappa(t_prime: f64, m: u32) -> Result<f64> {
    let s = t_prime - t_prime.sin();
    if !(t_prime > 0.0) || !(s > 0.0) {
        return invalid(format!("t' - sin t' must be positive, got t' = {t_prime}"));
    }
    Ok(((PI / 2.0 + 2.0 * PI * m as f64) / s).sqrt())
}

/// Time t' with E(t') = pi/2 + 2 pi m for a given coupling (inverse of
/// [`conditional_cat_kappa`]); E is nondecreasing, so bisection.
pub fn conditional_cat_time(kappa: f64, m: u32) -> Result<f64> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return invalid(format!("kappa must be positive, got {kappa}"));
    }
    let target = PI / 2.0 + 2.0 * PI * m as f64;
    let (mut lo, mut hi) = (0.0, 1.0);
    while e_of(hi, kappa) < target {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if e_of(mid, kappa) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Mirror reading y = pi / (2 F(t')) that turns the conditional cat into pure_cat(i alpha0).
pub fn parity_measurement_result(t_prime: f64, kappa: f64) -> Result<f64> {
    let f = f_of(t_prime, kappa);
    if f.abs() < 1e-12 {
        return Err(Error::Disentangled { t: t_prime });
    }
    Ok(PI / (2.0 * f))
}

/// Distance of E(t) from the nearest pi/2 + 2 pi m.
pub fn cat_condition_residual(t: f64, kappa: f64) -> f64 {
    let e = e_of(t, kappa) - PI / 2.0;
    let k = (e / (2.0 * PI)).round();
    (e - 2.0 * PI * k).abs()
}

/// Parses a time token: plain number, `<c>xpi` or `<c>x2pi`.
pub fn parse_time(token: &str) -> Result<f64> {
    let s = token.trim();
    let (coef, mult) = if let Some(c) = s.strip_suffix("x2pi") {
        (c, 2.0 * PI)
    } else if let Some(c) = s.strip_suffix("xpi") {
        (c, PI)
    } else {
        (s, 1.0)
    };
    let v: f64 = coef
        .parse()
        .map_err(|_| Error::InvalidParameter(format!("cannot parse time `{token}`")))?;
    if !v.is_finite() {
        return invalid(format!("time `{token}` is not finite"));
    }
    Ok(v * mult)
}
