//! Shared numerical kernels: Gauss-Legendre rules, adaptive quadrature,
//! oscillatory Fourier integrals on the unit cube, and Bessel J0.
//!
//! Everything here is pure and thread-safe; higher modules parallelize over
//! evaluation points, not inside a single integral.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;
use thiserror::Error;

/// Failure of a quadrature routine to reach its requested tolerance.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("quadrature did not converge: estimated error {err:.3e} above tolerance {tol:.3e} ({context})")]
    NoConvergence { err: f64, tol: f64, context: String },
    #[error("invalid quadrature domain: {0}")]
    InvalidDomain(String),
}

// ---------------------------------------------------------------------------
// Gauss-Legendre rules
// ---------------------------------------------------------------------------

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
///
/// Computed by Newton iteration on P_n from Chebyshev initial guesses;
/// accurate to machine precision for the orders used here.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev guess for the i-th positive root.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Evaluate P_n and P_n' by the three-term recurrence.
            let (mut p0, mut p1) = (1.0_f64, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn gl_cached(n: usize) -> &'static (Vec<f64>, Vec<f64>) {
    static GL8: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    static GL16: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    static GL32: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    match n {
        8 => GL8.get_or_init(|| gauss_legendre(8)),
        16 => GL16.get_or_init(|| gauss_legendre(16)),
        32 => GL32.get_or_init(|| gauss_legendre(32)),
        _ => panic!("uncached Gauss-Legendre order {n}"),
    }
}

/// Integrate `f` over [a, b] with a composite n-panel 16-point rule.
pub fn integrate_panels(f: &dyn Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let (nodes, weights) = gl_cached(16);
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        let half = 0.5 * h;
        let mut s = 0.0;
        for (x, w) in nodes.iter().zip(weights.iter()) {
            s += w * f(mid + half * x);
        }
        total += s * half;
    }
    total
}

/// Adaptive composite integration of `f` over [a, b] to the given relative
/// tolerance (with a small absolute floor). Panel count doubles until two
/// successive refinements agree.
pub fn integrate_adaptive(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    rel_tol: f64,
) -> Result<f64, QuadError> {
    if !(b > a) {
        if b == a {
            return Ok(0.0);
        }
        return Err(QuadError::InvalidDomain(format!("[{a}, {b}]")));
    }
    let mut panels = 1;
    let mut prev = integrate_panels(f, a, b, panels);
    for _ in 0..16 {
        panels *= 2;
        let cur = integrate_panels(f, a, b, panels);
        let err = (cur - prev).abs();
        if err <= rel_tol * cur.abs().max(1e-300) || err <= 1e-15 {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(QuadError::NoConvergence {
        err: f64::NAN,
        tol: rel_tol,
        context: format!("adaptive integral on [{a}, {b}]"),
    })
}

// ---------------------------------------------------------------------------
// Oscillatory Fourier integrals on [-1/2, 1/2]
// ---------------------------------------------------------------------------

fn fourier_panels(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    omega: f64,
    panels: usize,
) -> Complex64 {
    let (nodes, weights) = gl_cached(8);
    let h = (b - a) / panels as f64;
    let mut total = Complex64::new(0.0, 0.0);
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        let half = 0.5 * h;
        let mut s = Complex64::new(0.0, 0.0);
        for (x, w) in nodes.iter().zip(weights.iter()) {
            let u = mid + half * x;
            let phase = -u * omega;
            s += w * f(u) * Complex64::new(phase.cos(), phase.sin());
        }
        total += s * half;
    }
    total
}

/// ∫_{-1/2}^{1/2} f(u) exp(-i u ω) du for a smooth (piecewise) integrand.
///
/// The segment list is split at `breakpoints` (integrand kinks, e.g. taper
/// joins) and each segment uses at least 8 Gauss points per oscillation
/// period of exp(-i u ω), doubling until two refinements agree to `tol`
/// relative to the integrand's absolute mass.
pub fn fourier_unit_interval(
    f: &dyn Fn(f64) -> f64,
    breakpoints: &[f64],
    omega: f64,
    tol: f64,
) -> Result<Complex64, QuadError> {
    let mut cuts = vec![-0.5];
    for &c in breakpoints {
        if c > -0.5 && c < 0.5 {
            cuts.push(c);
        }
    }
    cuts.push(0.5);
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);

    // Scale reference: |f| mass, so the tolerance is relative to the
    // non-oscillatory size of the problem rather than to a cancelled result.
    let scale = integrate_panels(&|u| f(u).abs(), -0.5, 0.5, 8).max(1e-300);

    let mut total = Complex64::new(0.0, 0.0);
    for seg in cuts.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let oscillations = (b - a) * omega.abs() / (2.0 * PI);
        let mut panels = (oscillations.ceil() as usize).max(1);
        let mut prev = fourier_panels(f, a, b, omega, panels);
        let mut done = false;
        for _ in 0..10 {
            panels *= 2;
            let cur = fourier_panels(f, a, b, omega, panels);
            let err = (cur - prev).norm();
            if err <= tol * scale {
                total += cur;
                done = true;
                break;
            }
            prev = cur;
        }
        if !done {
            return Err(QuadError::NoConvergence {
                err: f64::NAN,
                tol,
                context: format!("Fourier segment [{a}, {b}] at frequency {omega:.4}"),
            });
        }
    }
    Ok(total)
}

/// d-dimensional tensor-product version of [`fourier_unit_interval`] over
/// [-1/2,1/2]^d for a general (non-separable) integrand.
///
/// Panel counts per axis scale with the oscillation frequency `s[j]`; the
/// error estimate comes from one global refinement.
pub fn fourier_unit_cube(
    f: &dyn Fn(&[f64]) -> f64,
    d: usize,
    breakpoints: &[f64],
    s: &[f64],
    tol: f64,
) -> Result<Complex64, QuadError> {
    assert_eq!(s.len(), d);
    let coarse = fourier_cube_once(f, d, breakpoints, s, 1);
    let fine = fourier_cube_once(f, d, breakpoints, s, 2);
    let err = (fine - coarse).norm();
    let scale = fine.norm().max(1.0);
    if err > tol * scale {
        let finer = fourier_cube_once(f, d, breakpoints, s, 4);
        let err2 = (finer - fine).norm();
        if err2 > tol * finer.norm().max(1.0) {
            return Err(QuadError::NoConvergence {
                err: err2,
                tol,
                context: format!("tensor Fourier cube at s = {s:?}"),
            });
        }
        return Ok(finer);
    }
    Ok(fine)
}

fn fourier_cube_once(
    f: &dyn Fn(&[f64]) -> f64,
    d: usize,
    breakpoints: &[f64],
    s: &[f64],
    refine: usize,
) -> Complex64 {
    // Per-axis point lists: segments split at breakpoints, each with
    // oscillation-adapted composite 8-point panels.
    let (gl_nodes, gl_weights) = gl_cached(8);
    let mut axis_pts: Vec<Vec<(f64, Complex64)>> = Vec::with_capacity(d);
    for j in 0..d {
        let mut cuts = vec![-0.5];
        for &c in breakpoints {
            if c > -0.5 && c < 0.5 {
                cuts.push(c);
            }
        }
        cuts.push(0.5);
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
        let mut pts = Vec::new();
        for seg in cuts.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            let oscillations = (b - a) * s[j].abs() / (2.0 * PI);
            let panels = ((oscillations.ceil() as usize).max(1)) * 2 * refine;
            let h = (b - a) / panels as f64;
            for p in 0..panels {
                let mid = a + (p as f64 + 0.5) * h;
                let half = 0.5 * h;
                for (x, w) in gl_nodes.iter().zip(gl_weights.iter()) {
                    let u = mid + half * x;
                    let phase = -u * s[j];
                    pts.push((u, w * half * Complex64::new(phase.cos(), phase.sin())));
                }
            }
        }
        axis_pts.push(pts);
    }
    // Tensor accumulation.
    let mut total = Complex64::new(0.0, 0.0);
    let mut idx = vec![0usize; d];
    let mut u = vec![0.0; d];
    'outer: loop {
        let mut wphase = Complex64::new(1.0, 0.0);
        for j in 0..d {
            let (uj, wj) = axis_pts[j][idx[j]];
            u[j] = uj;
            wphase *= wj;
        }
        total += wphase * f(&u);
        // Advance the multi-index.
        for j in 0..d {
            idx[j] += 1;
            if idx[j] < axis_pts[j].len() {
                continue 'outer;
            }
            idx[j] = 0;
        }
        break;
    }
    total
}

// ---------------------------------------------------------------------------
// Bessel J0
// ---------------------------------------------------------------------------

/// Bessel function of the first kind, order zero.
///
/// Uses the trapezoidal discretization of (1/π)∫_0^π cos(z sin θ) dθ, which
/// converges geometrically for periodic analytic integrands once the point
/// count exceeds ~1.4 z.
pub fn bessel_j0(z: f64) -> f64 {
    let z = z.abs();
    let n = (1.5 * z).ceil() as usize + 24;
    let mut s = 0.0;
    for k in 0..n {
        let theta = PI * (k as f64 + 0.5) / n as f64;
        s += (z * theta.sin()).cos();
    }
    s / n as f64
}
