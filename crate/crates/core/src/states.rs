//! Truncated Fock-basis states: coherent, thermal, cats, pseudo-cats, displaced states.

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_4;

use crate::analytic::mirror_quadrature_density;
use crate::error::{invalid, Error, Result};
use crate::model::{check_z, f_of};
use crate::specfun::{adaptive_quad, displacement_matrix, ho_wavefunctions, poisson_amplitudes, QuadSpec};

/// Which Hilbert space an array lives in. Joint index is `n * dim_mirror + m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Basis {
    Field(usize),
    Mirror(usize),
    Joint { field: usize, mirror: usize },
}

impl Basis {
    pub fn dim(&self) -> usize {
        match *self {
            Basis::Field(d) | Basis::Mirror(d) => d,
            Basis::Joint { field, mirror } => field * mirror,
        }
    }

    pub fn joint_dims(&self) -> Result<(usize, usize)> {
        match *self {
            Basis::Joint { field, mirror } => Ok((field, mirror)),
            other => invalid(format!("expected a joint basis, got {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FockVector {
    pub amplitudes: Array1<C64>,
    pub basis: Basis,
}

impl FockVector {
    pub fn new(amplitudes: Array1<C64>, basis: Basis) -> Result<Self> {
        if amplitudes.len() != basis.dim() {
            return invalid(format!(
                "vector length {} does not match basis {:?}",
                amplitudes.len(),
                basis
            ));
        }
        Ok(Self { amplitudes, basis })
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn inner(&self, other: &FockVector) -> C64 {
        self.amplitudes
            .iter()
            .zip(other.amplitudes.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Probability carried by the last `k` basis states.
    pub fn tail_mass(&self, k: usize) -> f64 {
        let d = self.dim();
        self.amplitudes
            .iter()
            .skip(d.saturating_sub(k))
            .map(|a| a.norm_sqr())
            .sum()
    }

    pub fn projector(&self) -> DensityMatrix {
        let v = &self.amplitudes;
        let d = v.len();
        let mut m = Array2::<C64>::zeros((d, d));
        for i in 0..d {
            if v[i] == C64::new(0.0, 0.0) {
                continue;
            }
            for j in 0..d {
                m[[i, j]] = v[i] * v[j].conj();
            }
        }
        DensityMatrix { entries: m, basis: self.basis, traceless: false }
    }

    pub fn kron(&self, mirror: &FockVector) -> Result<FockVector> {
        let (df, dm) = (self.dim(), mirror.dim());
        let mut v = Array1::<C64>::zeros(df * dm);
        for n in 0..df {
            for m in 0..dm {
                v[n * dm + m] = self.amplitudes[n] * mirror.amplitudes[m];
            }
        }
        FockVector::new(v, Basis::Joint { field: df, mirror: dm })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub entries: Array2<C64>,
    pub basis: Basis,
    /// Set for correction terms whose trace vanishes by construction.
    pub traceless: bool,
}

impl DensityMatrix {
    pub fn new(entries: Array2<C64>, basis: Basis) -> Result<Self> {
        let d = basis.dim();
        if entries.dim() != (d, d) {
            return invalid(format!("matrix shape {:?} does not match basis {:?}", entries.dim(), basis));
        }
        Ok(Self { entries, basis, traceless: false })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn trace(&self) -> C64 {
        self.entries.diag().sum()
    }

    pub fn hermiticity_error(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in i..d {
                worst = worst.max((self.entries[[i, j]] - self.entries[[j, i]].conj()).norm());
            }
        }
        worst
    }

    pub fn purity(&self) -> f64 {
        self.entries.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn sup_distance(&self, other: &DensityMatrix) -> f64 {
        self.entries
            .iter()
            .zip(other.entries.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.entries.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// <psi|rho|psi>.
    pub fn expectation_in(&self, psi: &FockVector) -> C64 {
        let v = &psi.amplitudes;
        let rv = self.entries.dot(v);
        v.iter().zip(rv.iter()).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn kron(&self, mirror: &DensityMatrix) -> DensityMatrix {
        let (df, dm) = (self.dim(), mirror.dim());
        let mut m = Array2::<C64>::zeros((df * dm, df * dm));
        for n in 0..df {
            for np in 0..df {
                let f = self.entries[[n, np]];
                if f == C64::new(0.0, 0.0) {
                    continue;
                }
                for a in 0..dm {
                    for b in 0..dm {
                        m[[n * dm + a, np * dm + b]] = f * mirror.entries[[a, b]];
                    }
                }
            }
        }
        DensityMatrix {
            entries: m,
            basis: Basis::Joint { field: df, mirror: dm },
            traceless: self.traceless || mirror.traceless,
        }
    }

    /// Traces out the mirror of a joint state.
    pub fn field_part(&self) -> Result<DensityMatrix> {
        let (df, dm) = self.basis.joint_dims()?;
        let mut m = Array2::<C64>::zeros((df, df));
        for n in 0..df {
            for np in 0..df {
                let mut acc = C64::new(0.0, 0.0);
                for k in 0..dm {
                    acc += self.entries[[n * dm + k, np * dm + k]];
                }
                m[[n, np]] = acc;
            }
        }
        Ok(DensityMatrix { entries: m, basis: Basis::Field(df), traceless: self.traceless })
    }

    /// Traces out the field of a joint state.
    pub fn mirror_part(&self) -> Result<DensityMatrix> {
        let (df, dm) = self.basis.joint_dims()?;
        let mut m = Array2::<C64>::zeros((dm, dm));
        for n in 0..df {
            for a in 0..dm {
                for b in 0..dm {
                    m[[a, b]] += self.entries[[n * dm + a, n * dm + b]];
                }
            }
        }
        Ok(DensityMatrix { entries: m, basis: Basis::Mirror(dm), traceless: self.traceless })
    }

    /// Field quadrature density <X|rho|X> for X = (a + a^dag)/2.
    pub fn quadrature_density(&self, x: f64) -> f64 {
        let d = self.dim();
        let psi = ho_wavefunctions(x, d.saturating_sub(1));
        let mut acc = 0.0;
        for n in 0..d {
            let mut row = C64::new(0.0, 0.0);
            for np in 0..d {
                row += self.entries[[n, np]] * psi[np];
            }
            acc += (row * psi[n]).re;
        }
        acc
    }

    pub fn mean_number(&self) -> f64 {
        self.entries.diag().iter().enumerate().map(|(n, v)| n as f64 * v.re).sum()
    }
}

/// Field dimension ceil(mu + 8 sqrt(mu) + 10) for a Poisson mean mu.
pub fn default_field_dim(mu: f64) -> usize {
    (mu + 8.0 * mu.sqrt() + 10.0).ceil() as usize
}

fn check_coherent_dim(alpha: C64, dim: usize) -> Result<()> {
    let mu = alpha.norm_sqr();
    let need = mu + 8.0 * (mu + 1.0).sqrt();
    if (dim as f64) <= need {
        return Err(Error::Truncation {
            what: format!("coherent amplitude |alpha|^2 = {mu}"),
            required: need.floor() as usize + 1,
            have: dim,
        });
    }
    Ok(())
}

fn coherent_amplitudes(alpha: C64, dim: usize) -> Array1<C64> {
    let mag = poisson_amplitudes(alpha.norm(), dim);
    let ph = alpha.arg();
    Array1::from_iter((0..dim).map(|n| C64::from_polar(mag[n], ph * n as f64)))
}

pub fn coherent_vector(alpha: C64, dim: usize) -> Result<FockVector> {
    check_coherent_dim(alpha, dim)?;
    let v = FockVector { amplitudes: coherent_amplitudes(alpha, dim), basis: Basis::Field(dim) };
    let tail = v.tail_mass(5);
    if tail >= 1e-8 {
        return Err(Error::Truncation {
            what: format!("coherent tail mass {tail:e}"),
            required: default_field_dim(alpha.norm_sqr()),
            have: dim,
        });
    }
    Ok(v)
}

/// Coherent amplitudes without the truncation checks, for states known to fit.
pub fn coherent_vector_unchecked(alpha: C64, dim: usize, basis: Basis) -> FockVector {
    FockVector { amplitudes: coherent_amplitudes(alpha, dim), basis }
}

/// Thermal occupation probabilities (1 - z) z^n renormalized over the truncation.
pub fn thermal_populations(z: f64, dim: usize) -> Result<Vec<f64>> {
    check_z(z)?;
    if dim == 0 {
        return invalid("dimension must be positive");
    }
    let mut p: Vec<f64> = (0..dim).map(|n| (1.0 - z) * z.powi(n as i32)).collect();
    if z == 0.0 {
        p[0] = 1.0;
    }
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
    Ok(p)
}

pub fn thermal_density(z: f64, dim: usize) -> Result<DensityMatrix> {
    let p = thermal_populations(z, dim)?;
    let mut m = Array2::<C64>::zeros((dim, dim));
    for (n, v) in p.iter().enumerate() {
        m[[n, n]] = C64::new(*v, 0.0);
    }
    Ok(DensityMatrix { entries: m, basis: Basis::Mirror(dim), traceless: false })
}

fn cat_amplitudes(alpha: C64, dim: usize) -> Array1<C64> {
    let c = coherent_amplitudes(alpha, dim);
    let ep = C64::from_polar(1.0, FRAC_PI_4);
    let em = ep.conj();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Array1::from_iter(
        c.iter()
            .enumerate()
            .map(|(n, a)| *a * (ep + if n % 2 == 0 { em } else { -em }) * s),
    )
}

/// (e^{i pi/4}|alpha0> + e^{-i pi/4}|-alpha0>)/sqrt2 = e^{i pi N^2/2}|alpha0>, the state left
/// by the Kerr phase E = pi/2.
pub fn pure_cat(alpha0: C64, dim: usize) -> Result<FockVector> {
    coherent_vector(alpha0, dim)?;
    Ok(FockVector { amplitudes: cat_amplitudes(alpha0, dim), basis: Basis::Field(dim) })
}

/// Cat left in the field when the mirror quadrature reads `y` at t'.
pub fn conditional_cat(alpha0: C64, t_prime: f64, kappa: f64, y: f64, dim: usize) -> Result<FockVector> {
    let f = f_of(t_prime, kappa);
    if f.abs() < 1e-12 {
        return Err(Error::Disentangled { t: t_prime });
    }
    pure_cat(alpha0 * C64::from_polar(1.0, f * y), dim)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CatKind {
    PureStar,
    Conditional,
    Pseudo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CatSpec {
    pub kind: CatKind,
    pub t: f64,
    pub kappa: f64,
    pub y_measured: Option<f64>,
    pub z: f64,
}

impl CatSpec {
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            CatKind::PureStar => {
                if f_of(self.t, self.kappa).abs() > 1e-10 {
                    return invalid(format!("F({}) is not zero: not a disentangling time", self.t));
                }
            }
            CatKind::Conditional => {
                if self.y_measured.is_none() {
                    return invalid("conditional cat needs a measured mirror value");
                }
            }
            CatKind::Pseudo => check_z(self.z)?,
        }
        Ok(())
    }

    pub fn field_state(&self, alpha0: C64, dim: usize, quad: QuadSpec) -> Result<DensityMatrix> {
        self.validate()?;
        match self.kind {
            CatKind::PureStar => Ok(pure_cat(alpha0, dim)?.projector()),
            CatKind::Conditional => {
                let y = self.y_measured.unwrap_or_default();
                Ok(conditional_cat(alpha0, self.t, self.kappa, y, dim)?.projector())
            }
            CatKind::Pseudo => pseudo_cat_density(alpha0, self.t, self.kappa, self.z, dim, quad),
        }
    }
}

/// Half-width in units of the standard deviation outside which a Gaussian weighs < 1e-12.
pub const GAUSS_CUT_SIGMAS: f64 = 7.5;

/// Field state of the pseudo-cat: the cat phase averaged over the mirror's thermal reading.
pub fn pseudo_cat_density(
    alpha0: C64,
    t: f64,
    kappa: f64,
    z: f64,
    dim: usize,
    quad: QuadSpec,
) -> Result<DensityMatrix> {
    check_z(z)?;
    let cat = pure_cat(alpha0, dim)?;
    let f = f_of(t, kappa);
    let sigma = ((1.0 + z) / (1.0 - z)).sqrt();
    let ymax = GAUSS_CUT_SIGMAS * sigma;
    let mut smear = vec![C64::new(0.0, 0.0); dim];
    for (k, s) in smear.iter_mut().enumerate() {
        if k > 0 && f == 0.0 {
            *s = C64::new(1.0, 0.0);
            continue;
        }
        let kf = k as f64;
        *s = adaptive_quad(
            |y| C64::from_polar(mirror_quadrature_density(y, z), f * y * kf),
            -ymax,
            ymax,
            quad,
        )?;
    }
    let mut m = Array2::<C64>::zeros((dim, dim));
    for n in 0..dim {
        for np in 0..dim {
            let g = if n >= np { smear[n - np] } else { smear[np - n].conj() };
            m[[n, np]] = cat.amplitudes[n] * cat.amplitudes[np].conj() * g;
        }
    }
    Ok(DensityMatrix { entries: m, basis: Basis::Field(dim), traceless: false })
}

/// D(alpha_r) rho D(alpha_r)^dag for a field state.
pub fn displace(state: &DensityMatrix, alpha_r: C64) -> Result<DensityMatrix> {
    let dim = match state.basis {
        Basis::Field(d) => d,
        other => return invalid(format!("displace acts on field states, got {other:?}")),
    };
    let d = displacement_matrix(alpha_r, dim, dim);
    let out = d.dot(&state.entries).dot(&d.t().mapv(|v| v.conj()));
    let before = state.trace().re;
    let after = out.diag().sum().re;
    let lost = before - after;
    if lost.abs() > 1e-6 {
        let mean = state.mean_number().sqrt() + alpha_r.norm();
        return Err(Error::Truncation {
            what: format!("displaced state loses tail mass {lost:e}"),
            required: default_field_dim(mean * mean),
            have: dim,
        });
    }
    Ok(DensityMatrix { entries: out, basis: state.basis, traceless: state.traceless })
}

/// D(alpha_r)|psi> for a field vector.
pub fn displace_vector(psi: &FockVector, alpha_r: C64) -> FockVector {
    let d = displacement_matrix(alpha_r, psi.dim(), psi.dim());
    FockVector { amplitudes: d.dot(&psi.amplitudes), basis: psi.basis }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn coherent_examples() {
        let v = coherent_vector(c(0.0, 0.0), 12).unwrap();
        assert_eq!(v.amplitudes[0], c(1.0, 0.0));
        assert!(v.amplitudes.iter().skip(1).all(|a| a.norm() == 0.0));
        let v = coherent_vector(c(1.0, 0.0), 20).unwrap();
        assert_relative_eq!(v.amplitudes[0].re, 0.606531, epsilon = 1e-6);
        let v = coherent_vector(c(0.0, 7f64.sqrt()), 60).unwrap();
        assert_relative_eq!(v.amplitudes[7].norm_sqr(), 0.149003, epsilon = 1e-6);
        assert!(matches!(coherent_vector(c(3.0, 0.0), 20), Err(Error::Truncation { .. })));
    }

    #[test]
    fn thermal_examples() {
        let r = thermal_density(0.0, 8).unwrap();
        assert_eq!(r.entries[[0, 0]], c(1.0, 0.0));
        assert_eq!(r.trace(), c(1.0, 0.0));
        assert!((thermal_density(0.5, 40).unwrap().mean_number() - 1.0).abs() < 1e-9);
        assert!((thermal_density(0.9, 300).unwrap().mean_number() - 9.0).abs() < 1e-6);
        assert!(thermal_density(1.0, 10).is_err());
    }

    #[test]
    fn pure_cat_properties() {
        let a0 = c(0.0, 7f64.sqrt());
        let cat = pure_cat(a0, 60).unwrap();
        assert!((cat.norm_sqr() - 1.0).abs() < 1e-12);
        let p = poisson_amplitudes(a0.norm(), 60);
        for n in 0..60 {
            assert!((cat.amplitudes[n].norm_sqr() - p[n] * p[n]).abs() < 1e-14);
        }
    }

    #[test]
    fn conditional_cat_cases() {
        let a0 = c(0.0, 2f64.sqrt());
        let t = 1.5 * PI;
        let k = crate::model::conditional_cat_kappa(t, 0).unwrap();
        let c0 = conditional_cat(a0, t, k, 0.0, 30).unwrap();
        let p = pure_cat(a0, 30).unwrap();
        for n in 0..30 {
            assert!((c0.amplitudes[n] - p.amplitudes[n]).norm() < 1e-12);
        }
        let y = crate::model::parity_measurement_result(t, k).unwrap();
        let cy = conditional_cat(a0, t, k, y, 30).unwrap();
        let rot = pure_cat(a0 * c(0.0, 1.0), 30).unwrap();
        assert!((cy.inner(&rot).norm() - 1.0).abs() < 1e-12);
        let c1 = conditional_cat(a0, t, k, 1.0, 30).unwrap();
        let f = f_of(t, k);
        assert_relative_eq!(f, 0.7416, epsilon = 1e-4);
        let rot = pure_cat(a0 * C64::from_polar(1.0, f), 30).unwrap();
        assert!((c1.inner(&rot).norm() - 1.0).abs() < 1e-12);
        assert!(conditional_cat(a0, 2.0 * PI, 0.5, 1.0, 30).is_err());
    }

    #[test]
    fn pseudo_cat_limits() {
        let a0 = c(0.0, 2f64.sqrt());
        let q = QuadSpec::default();
        let r = pseudo_cat_density(a0, 2.0 * PI, 0.5, 0.3, 30, q).unwrap();
        let p = pure_cat(a0, 30).unwrap().projector();
        assert!(r.sup_distance(&p) < 1e-12);

        let r = pseudo_cat_density(a0, 0.84 * 2.0 * PI, 0.5, 0.0, 30, q).unwrap();
        assert!((r.trace().re - 1.0).abs() < 1e-10);
        assert!(r.purity() < 1.0 - 1e-3);
        assert!(r.hermiticity_error() < 1e-12);

        // Gaussian moment identity for the off-diagonal suppression
        let f = f_of(0.84 * 2.0 * PI, 0.5);
        let z = 0.4;
        let r = pseudo_cat_density(a0, 0.84 * 2.0 * PI, 0.5, z, 30, q).unwrap();
        let cat = pure_cat(a0, 30).unwrap();
        for (n, np) in [(1usize, 0usize), (3, 1), (5, 2), (6, 0)] {
            let k = (n - np) as f64;
            let want = (-f * f * k * k * (1.0 + z) / (2.0 * (1.0 - z))).exp();
            let got = r.entries[[n, np]] / (cat.amplitudes[n] * cat.amplitudes[np].conj());
            assert!((got - c(want, 0.0)).norm() < 1e-9, "{n} {np}: {got} vs {want}");
        }
    }

    #[test]
    fn pseudo_cat_monotone_in_f() {
        let a0 = c(0.0, 2f64.sqrt());
        let q = QuadSpec::default();
        let p = pure_cat(a0, 30).unwrap().projector();
        let mut last = f64::INFINITY;
        for &kappa in &[0.5, 0.25, 0.1] {
            let r = pseudo_cat_density(a0, 0.84 * 2.0 * PI, kappa, 0.0, 30, q).unwrap();
            let d = r.sup_distance(&p);
            assert!(d < last);
            last = d;
        }
    }

    #[test]
    fn displace_examples() {
        let vac = coherent_vector(c(0.0, 0.0), 30).unwrap().projector();
        let vac = DensityMatrix { basis: Basis::Field(30), ..vac };
        let same = displace(&vac, c(0.0, 0.0)).unwrap();
        assert!(same.sup_distance(&vac) < 1e-15);
        let ar = c(1.1, -0.7);
        let d = displace(&vac, ar).unwrap();
        let want = coherent_vector(ar, 30).unwrap().projector();
        assert!(d.sup_distance(&want) < 1e-12);

        let cat = pure_cat(c(0.3, 1.0), 40).unwrap().projector();
        let there = displace(&cat, ar).unwrap();
        let back = displace(&there, -ar).unwrap();
        assert!(back.sup_distance(&cat) < 1e-8);
        assert!((there.trace().re - 1.0).abs() < 1e-8);

        assert!(matches!(displace(&cat, c(6.0, 0.0)), Err(Error::Truncation { .. })));
    }

    #[test]
    fn joint_helpers() {
        let f = pure_cat(c(0.0, 1.0), 20).unwrap().projector();
        let m = thermal_density(0.3, 12).unwrap();
        let j = f.kron(&m);
        assert_eq!(j.basis, Basis::Joint { field: 20, mirror: 12 });
        assert!(j.field_part().unwrap().sup_distance(&f) < 1e-14);
        let mp = j.mirror_part().unwrap();
        assert!(mp.sup_distance(&m) < 1e-14);
    }

    #[test]
    fn cat_spec_dispatch() {
        let s = CatSpec { kind: CatKind::PureStar, t: 1.0, kappa: 0.5, y_measured: None, z: 0.0 };
        assert!(s.validate().is_err());
        let s = CatSpec { kind: CatKind::Conditional, t: 1.0, kappa: 0.5, y_measured: None, z: 0.0 };
        assert!(s.validate().is_err());
        let s = CatSpec { kind: CatKind::PureStar, t: 2.0 * PI, kappa: 0.5, y_measured: None, z: 0.0 };
        let r = s.field_state(c(0.0, 1.0), 20, QuadSpec::default()).unwrap();
        assert!((r.trace().re - 1.0).abs() < 1e-12);
    }
}
