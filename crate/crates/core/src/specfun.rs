//! Special functions and quadrature shared by the rest of the crate.

use ndarray::Array2;
use num_complex::Complex64 as C64;

use crate::error::{invalid, Error, Result};

/// Tolerance and refinement cap for [`adaptive_quad`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadSpec {
    pub abs_tol: f64,
    pub max_depth: usize,
}

impl QuadSpec {
    pub fn new(abs_tol: f64, max_depth: usize) -> Result<Self> {
        if !(abs_tol > 0.0) || !abs_tol.is_finite() {
            return invalid(format!("abs_tol must be positive, got {abs_tol}"));
        }
        if max_depth < 1 {
            return invalid("max_depth must be at least 1");
        }
        Ok(Self { abs_tol, max_depth })
    }
}

impl Default for QuadSpec {
    fn default() -> Self {
        Self {
            abs_tol: 1e-11,
            max_depth: 40,
        }
    }
}

const STIRLING_CUTOFF: u64 = 256;
const HERMITE_LIMIT: f64 = 1e280;

/// ln(n!).
pub fn log_factorial(n: u64) -> f64 {
    if n < STIRLING_CUTOFF {
        return (2..=n).map(|k| (k as f64).ln()).sum();
    }
    let x = n as f64;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    x * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI * x).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
}

/// Table of ln(k!) for k = 0..=n.
pub fn log_factorial_table(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=n {
        if (k as u64) < STIRLING_CUTOFF {
            acc += (k as f64).ln();
            out.push(acc);
        } else {
            out.push(log_factorial(k as u64));
        }
    }
    out
}

/// Physicists' Hermite polynomials H_0(x)..H_{n_max}(x).
pub fn hermite_seq(x: f64, n_max: usize) -> Result<Vec<f64>> {
    let mut h = Vec::with_capacity(n_max + 1);
    h.push(1.0);
    if n_max >= 1 {
        h.push(2.0 * x);
    }
    for n in 1..n_max {
        let next = 2.0 * x * h[n] - 2.0 * n as f64 * h[n - 1];
        if !next.is_finite() || next.abs() > HERMITE_LIMIT {
            return Err(Error::Overflow(format!(
                "H_{}({x}) exceeds {HERMITE_LIMIT:e}",
                n + 1
            )));
        }
        h.push(next);
    }
    Ok(h)
}

/// psi_0(x)..psi_{n_max}(x) with psi_n(x) = (2/pi)^{1/4} (2^n n!)^{-1/2} H_n(sqrt2 x) e^{-x^2}.
///
/// Runs the normalized recurrence with a floating exponent so that neither the
/// Gaussian nor the polynomial part overflows.
pub fn ho_wavefunctions(x: f64, n_max: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_max + 1];
    let mut log_scale = -x * x;
    let mut prev = 0.0;
    let mut cur = (2.0 / std::f64::consts::PI).powf(0.25);
    let mut scales = vec![0.0; n_max + 1];
    let mut mant = vec![0.0; n_max + 1];
    for n in 0..=n_max {
        mant[n] = cur;
        scales[n] = log_scale;
        let next = (2.0 * x * cur - (n as f64).sqrt() * prev) / ((n + 1) as f64).sqrt();
        prev = cur;
        cur = next;
        let big = cur.abs().max(prev.abs());
        if big > 1e100 {
            cur *= 1e-100;
            prev *= 1e-100;
            log_scale += 100.0 * std::f64::consts::LN_10;
        } else if big < 1e-100 && big > 0.0 {
            cur *= 1e100;
            prev *= 1e100;
            log_scale -= 100.0 * std::f64::consts::LN_10;
        }
    }
    for n in 0..=n_max {
        out[n] = if mant[n] == 0.0 {
            0.0
        } else {
            mant[n].signum() * (mant[n].abs().ln() + scales[n]).exp()
        };
    }
    out
}

/// Single oscillator eigenfunction psi_n(x).
pub fn ho_wavefunction(n: usize, x: f64) -> Result<f64> {
    let v = ho_wavefunctions(x, n)[n];
    if !v.is_finite() {
        return Err(Error::Overflow(format!("psi_{n}({x}) is not finite")));
    }
    Ok(v)
}

/// Moduli e^{-|alpha|^2/2}|alpha|^n/sqrt(n!) for n = 0..dim, evaluated in log space.
pub fn poisson_amplitudes(abs_alpha: f64, dim: usize) -> Vec<f64> {
    let lf = log_factorial_table(dim);
    let x = abs_alpha * abs_alpha;
    (0..dim)
        .map(|n| {
            if abs_alpha == 0.0 {
                if n == 0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                (-0.5 * x + n as f64 * abs_alpha.ln() - 0.5 * lf[n]).exp()
            }
        })
        .collect()
}

/// Matrix elements <m|D(alpha)|j>, m < rows, j < cols, of the displacement operator.
///
/// Uses the associated-Laguerre closed form; the Laguerre recurrence runs with a
/// floating exponent so large |alpha| and large indices stay finite.
pub fn displacement_matrix(alpha: C64, rows: usize, cols: usize) -> Array2<C64> {
    let mut d = Array2::<C64>::zeros((rows, cols));
    let x = alpha.norm_sqr();
    if x == 0.0 {
        for k in 0..rows.min(cols) {
            d[[k, k]] = C64::new(1.0, 0.0);
        }
        return d;
    }
    let lf = log_factorial_table(rows + cols);
    let ln_abs = alpha.norm().ln();
    let arg_pos = alpha.arg();
    let arg_neg = (-alpha.conj()).arg();
    let span = rows.max(cols);
    for a in 0..span {
        let below = if a < rows { cols.min(rows - a) } else { 0 };
        let above = if a > 0 && a < cols { rows.min(cols - a) } else { 0 };
        let kmax = below.max(above);
        if kmax == 0 {
            continue;
        }
        let af = a as f64;
        let ph_pos = C64::from_polar(1.0, af * arg_pos);
        let ph_neg = C64::from_polar(1.0, af * arg_neg);
        let mut prev = 0.0f64;
        let mut cur = 1.0f64;
        let mut scale = 0.0f64;
        for k in 0..kmax {
            let val = if cur == 0.0 {
                0.0
            } else {
                let lm = 0.5 * (lf[k] - lf[k + a]) + af * ln_abs - 0.5 * x + scale + cur.abs().ln();
                cur.signum() * lm.exp()
            };
            if k < below {
                d[[k + a, k]] = ph_pos * val;
            }
            if k < above {
                d[[k, k + a]] = ph_neg * val;
            }
            let kf = k as f64;
            let next = ((2.0 * kf + 1.0 + af - x) * cur - (kf + af) * prev) / (kf + 1.0);
            prev = cur;
            cur = next;
            let big = cur.abs().max(prev.abs());
            if big > 1e150 {
                cur *= 1e-150;
                prev *= 1e-150;
                scale += 150.0 * std::f64::consts::LN_10;
            } else if big < 1e-150 && big > 0.0 {
                cur *= 1e150;
                prev *= 1e150;
                scale -= 150.0 * std::f64::consts::LN_10;
            }
        }
    }
    d
}

const INITIAL_PANELS: usize = 8;

struct Panel {
    a: f64,
    b: f64,
    fa: C64,
    fm: C64,
    fb: C64,
    whole: C64,
}

/// Adaptive Simpson quadrature of a complex integrand.
///
/// The interval is first cut into a few panels, each refined by bisection in a
/// fixed left-to-right order, so results are bit-reproducible.
pub fn adaptive_quad<F>(f: F, a: f64, b: f64, spec: QuadSpec) -> Result<C64>
where
    F: Fn(f64) -> C64,
{
    if !(a <= b) {
        return invalid(format!("adaptive_quad needs a <= b, got [{a}, {b}]"));
    }
    if a == b {
        return Ok(C64::new(0.0, 0.0));
    }
    let h = (b - a) / INITIAL_PANELS as f64;
    let tol = spec.abs_tol / INITIAL_PANELS as f64;
    let mut total = C64::new(0.0, 0.0);
    let mut err_total = 0.0;
    let mut failed = false;
    let mut fl = f(a);
    for i in 0..INITIAL_PANELS {
        let pa = a + i as f64 * h;
        let pb = if i + 1 == INITIAL_PANELS { b } else { a + (i + 1) as f64 * h };
        let pm = 0.5 * (pa + pb);
        let fm = f(pm);
        let fr = f(pb);
        let whole = (pb - pa) / 6.0 * (fl + 4.0 * fm + fr);
        let panel = Panel { a: pa, b: pb, fa: fl, fm, fb: fr, whole };
        let (v, e, ok) = simpson_refine(&f, panel, tol, spec.max_depth);
        total += v;
        err_total += e;
        failed |= !ok;
        fl = fr;
    }
    if failed && err_total > spec.abs_tol {
        return Err(Error::Quadrature { best: total, err: err_total, tol: spec.abs_tol });
    }
    Ok(total)
}

fn simpson_refine<F>(f: &F, p: Panel, tol: f64, depth: usize) -> (C64, f64, bool)
where
    F: Fn(f64) -> C64,
{
    let m = 0.5 * (p.a + p.b);
    let lm = 0.5 * (p.a + m);
    let rm = 0.5 * (m + p.b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - p.a) / 6.0 * (p.fa + 4.0 * flm + p.fm);
    let right = (p.b - m) / 6.0 * (p.fm + 4.0 * frm + p.fb);
    let diff = (left + right - p.whole).norm();
    if diff <= 15.0 * tol {
        return (left + right + (left + right - p.whole) / 15.0, diff / 15.0, true);
    }
    if depth == 0 {
        return (left + right, diff / 15.0, false);
    }
    let (lv, le, lok) = simpson_refine(
        f,
        Panel { a: p.a, b: m, fa: p.fa, fm: flm, fb: p.fm, whole: left },
        0.5 * tol,
        depth - 1,
    );
    let (rv, re, rok) = simpson_refine(
        f,
        Panel { a: m, b: p.b, fa: p.fm, fm: frm, fb: p.fb, whole: right },
        0.5 * tol,
        depth - 1,
    );
    (lv + rv, le + re, lok && rok)
}

/// Composite Simpson rule on `intervals` (rounded up to even) equal sub-intervals.
pub fn simpson_composite<F>(f: F, a: f64, b: f64, intervals: usize) -> C64
where
    F: Fn(f64) -> C64,
{
    let n = simpson_nodes(intervals);
    let h = (b - a) / (n - 1) as f64;
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        acc += simpson_weight(i, n) * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// Number of nodes of a composite Simpson rule with at least `intervals` sub-intervals.
pub fn simpson_nodes(intervals: usize) -> usize {
    let m = intervals.max(2);
    (m + m % 2) + 1
}

/// Simpson weight (1, 4, 2, ..., 4, 1) of node i out of n.
pub fn simpson_weight(i: usize, n: usize) -> f64 {
    if i == 0 || i + 1 == n {
        1.0
    } else if i % 2 == 1 {
        4.0
    } else {
        2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn log_factorial_values() {
        assert_eq!(log_factorial(0), 0.0);
        assert_eq!(log_factorial(1), 0.0);
        assert_relative_eq!(log_factorial(10), 15.104412573075516, max_relative = 1e-14);
        // either side of the Stirling switch
        let direct: f64 = (2..=300u64).map(|k| (k as f64).ln()).sum();
        assert_relative_eq!(log_factorial(300), direct, max_relative = 1e-13);
        let t = log_factorial_table(300);
        assert_relative_eq!(t[300], direct, max_relative = 1e-13);
        assert_relative_eq!(t[255], log_factorial(255), max_relative = 1e-15);
    }

    #[test]
    fn hermite_small() {
        assert_eq!(hermite_seq(0.0, 2).unwrap(), vec![1.0, 0.0, -2.0]);
        assert_eq!(hermite_seq(1.0, 3).unwrap(), vec![1.0, 2.0, 2.0, -4.0]);
        assert_eq!(hermite_seq(0.5, 1).unwrap(), vec![1.0, 1.0]);
        assert_eq!(hermite_seq(0.3, 0).unwrap(), vec![1.0]);
    }

    #[test]
    fn hermite_overflow_reported() {
        assert!(matches!(hermite_seq(10.0, 400), Err(Error::Overflow(_))));
    }

    #[test]
    fn hermite_recurrence_residual() {
        for &x in &[-10.0, -3.3, 0.0, 0.7, 5.0, 10.0] {
            let h = hermite_seq(x, 100).unwrap();
            for n in 1..100 {
                let r = h[n + 1] - 2.0 * x * h[n] + 2.0 * n as f64 * h[n - 1];
                assert!(r.abs() / h[n + 1].abs().max(1.0) < 1e-10);
            }
        }
    }

    #[test]
    fn wavefunction_values() {
        let c = (2.0 / PI).powf(0.25);
        assert_relative_eq!(ho_wavefunction(0, 0.0).unwrap(), c, max_relative = 1e-15);
        assert_relative_eq!(c, 0.893243, epsilon = 1e-6);
        assert_eq!(ho_wavefunction(1, 0.0).unwrap(), 0.0);
        assert_relative_eq!(ho_wavefunction(0, 1.0).unwrap(), c * (-1.0f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(ho_wavefunction(0, 1.0).unwrap(), 0.3286, epsilon = 1e-4);
    }

    #[test]
    fn wavefunction_matches_hermite_form() {
        let lf = log_factorial_table(40);
        for &x in &[-2.5, -0.3, 0.0, 1.1, 3.0] {
            let h = hermite_seq(2f64.sqrt() * x, 40).unwrap();
            let psi = ho_wavefunctions(x, 40);
            for n in 0..=40 {
                let norm = (2.0 / PI).powf(0.25) * (-0.5 * (n as f64 * 2f64.ln() + lf[n])).exp();
                let want = norm * h[n] * (-x * x).exp();
                assert!((psi[n] - want).abs() < 1e-12 * want.abs().max(1e-3));
            }
        }
    }

    #[test]
    fn wavefunction_orthonormal() {
        let n_max = 20;
        let dx = 1e-3;
        let mut gram = vec![vec![0.0; n_max + 1]; n_max + 1];
        let steps = (16.0 / dx) as usize;
        for i in 0..=steps {
            let x = -8.0 + i as f64 * dx;
            let w = if i == 0 || i == steps { 0.5 } else { 1.0 } * dx;
            let psi = ho_wavefunctions(x, n_max);
            for n in 0..=n_max {
                for m in 0..=n_max {
                    gram[n][m] += w * psi[n] * psi[m];
                }
            }
        }
        for n in 0..=n_max {
            for m in 0..=n_max {
                let want = if n == m { 1.0 } else { 0.0 };
                assert!((gram[n][m] - want).abs() < 1e-8, "{n} {m} {}", gram[n][m]);
            }
        }
    }

    #[test]
    fn wavefunction_far_tail_finite() {
        let psi = ho_wavefunctions(30.0, 1500);
        assert!(psi.iter().all(|v| v.is_finite()));
        assert_eq!(psi[0], 0.0);
        assert!(psi[1500].abs() > 0.0);
    }

    #[test]
    fn quad_examples() {
        let spec = QuadSpec::default();
        let v = adaptive_quad(|_| C64::new(1.0, 0.0), 0.0, 2.0 * PI, spec).unwrap();
        assert!((v - C64::new(2.0 * PI, 0.0)).norm() < 1e-13);
        let v = adaptive_quad(|t| C64::from_polar(1.0, t), 0.0, PI, spec).unwrap();
        assert!((v - C64::new(0.0, 2.0)).norm() < 1e-10);
    }

    #[test]
    fn quad_cubic_exact() {
        let spec = QuadSpec::new(1e-12, 2).unwrap();
        let f = |x: f64| C64::new(1.0 - 2.0 * x + 3.0 * x * x * x, x * x);
        let v = adaptive_quad(f, -1.0, 2.0, spec).unwrap();
        let re = 3.0 - (4.0 - 1.0) + 0.75 * (16.0 - 1.0);
        let im = (8.0 + 1.0) / 3.0;
        assert!((v - C64::new(re, im)).norm() < 1e-12);
    }

    #[test]
    fn quad_failure_carries_estimate() {
        let spec = QuadSpec::new(1e-14, 1).unwrap();
        match adaptive_quad(|t| C64::from_polar(1.0, 200.0 * t * t), 0.0, 3.0, spec) {
            Err(Error::Quadrature { best, .. }) => assert!(best.norm().is_finite()),
            other => panic!("expected failure, got {other:?}"),
        }
        assert!(QuadSpec::new(0.0, 3).is_err());
        assert!(QuadSpec::new(1e-9, 0).is_err());
    }

    #[test]
    fn composite_simpson() {
        let v = simpson_composite(|x| C64::new(x * x * x, 0.0), 0.0, 1.0, 3);
        assert!((v.re - 0.25).abs() < 1e-15);
        assert_eq!(simpson_nodes(128), 129);
        assert_eq!(simpson_nodes(3), 5);
    }

    #[test]
    fn poisson_amplitudes_mode() {
        let c = poisson_amplitudes(7f64.sqrt(), 60);
        assert_relative_eq!(c[7] * c[7], 0.149003, epsilon = 1e-6);
        let s: f64 = c.iter().map(|v| v * v).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    fn dense_generator_expm(alpha: C64, dim: usize) -> Array2<C64> {
        // Taylor series of exp(alpha b^dag - alpha^* b) with scaling and squaring.
        let mut g = Array2::<C64>::zeros((dim, dim));
        for k in 0..dim - 1 {
            let s = ((k + 1) as f64).sqrt();
            g[[k + 1, k]] = alpha * s;
            g[[k, k + 1]] = -alpha.conj() * s;
        }
        let squarings = 12;
        let g = g.mapv(|v| v / (1u64 << squarings) as f64);
        let mut term = Array2::<C64>::eye(dim);
        let mut e = Array2::<C64>::eye(dim);
        for k in 1..30 {
            term = term.dot(&g).mapv(|v| v / k as f64);
            e = e + &term;
        }
        for _ in 0..squarings {
            e = e.dot(&e);
        }
        e
    }

    #[test]
    fn displacement_against_generator() {
        let alpha = C64::new(1.3, -0.8);
        let d = displacement_matrix(alpha, 30, 30);
        let e = dense_generator_expm(alpha, 90);
        for m in 0..30 {
            for j in 0..12 {
                assert!((d[[m, j]] - e[[m, j]]).norm() < 1e-11, "{m} {j}");
            }
        }
    }

    #[test]
    fn displacement_columns_unit_norm_large_alpha() {
        let alpha = C64::from_polar(15.0, 0.4);
        let d = displacement_matrix(alpha, 800, 40);
        for j in 0..40 {
            let s: f64 = d.column(j).iter().map(|v| v.norm_sqr()).sum();
            assert!((s - 1.0).abs() < 1e-10, "column {j}: {s}");
        }
        let c = poisson_amplitudes(15.0, 800);
        for m in 0..800 {
            let want = C64::from_polar(c[m], 0.4 * m as f64);
            assert!((d[[m, 0]] - want).norm() < 1e-12);
        }
    }
}
