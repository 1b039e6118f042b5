//! Data tapers and the finite-window Fourier functionals H_{g,k}^{(n)}(ω)
//! used by the DFT normalization, the bias correction, and the analytic
//! pseudo-spectrum moments.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use thiserror::Error;

use crate::geometry::Window;
use crate::numeric::{fourier_unit_cube, fourier_unit_interval, integrate_adaptive, QuadError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TaperError {
    #[error("cosine-bell parameter a must lie in (0, 0.5), got {0}")]
    InvalidBellParameter(f64),
    #[error("taper values must lie in [0, 1]; found {value:.6} at u = {at:.6}")]
    OutOfRange { value: f64, at: f64 },
    #[error("taper has vanishing second moment")]
    DegenerateMoment,
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

/// Relative tolerance for the cached taper-moment quadratures.
pub const MOMENT_REL_TOL: f64 = 1e-10;
/// Relative tolerance for window Fourier functionals.
pub const WINDOW_FOURIER_TOL: f64 = 1e-10;

/// Shared handle for one-dimensional profile functions.
pub type AxisFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
/// Shared handle for functions on the unit cube.
pub type CubePointFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// One-dimensional profile of a separable data taper.
#[derive(Clone)]
pub enum TaperKind {
    /// h ≡ 1 on [-1/2, 1/2].
    Unit,
    /// The smooth ramp taper: rises on [-1/2, -1/2+a], equals 1 on the inner
    /// box, and mirrors on the right edge.
    CosineBell { a: f64 },
    /// User-supplied profile on [-1/2, 1/2] with its kink locations and the
    /// number of continuous derivatives it declares.
    Custom {
        profile: AxisFn,
        breakpoints: Vec<f64>,
        smoothness: u32,
    },
}

impl fmt::Debug for TaperKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaperKind::Unit => write!(f, "Unit"),
            TaperKind::CosineBell { a } => write!(f, "CosineBell {{ a: {a} }}"),
            TaperKind::Custom { smoothness, .. } => {
                write!(f, "Custom {{ smoothness: {smoothness} }}")
            }
        }
    }
}

/// Separable data taper on [-1/2, 1/2]^d with cached power integrals H_{h,k}.
#[derive(Debug, Clone)]
pub struct Taper {
    kind: TaperKind,
    dim: usize,
    /// 1-D integrals ∫ h(x)^k dx for k = 1, 2, 4.
    moments_1d: [f64; 3],
}

impl Taper {
    pub fn unit(dim: usize) -> Self {
        Self {
            kind: TaperKind::Unit,
            dim,
            moments_1d: [1.0, 1.0, 1.0],
        }
    }

    /// Cosine-bell taper with edge fraction `a` in (0, 0.5). `a = 0` is not
    /// representable here; use [`Taper::unit`] for the untapered case.
    pub fn cosine_bell(a: f64, dim: usize) -> Result<Self, TaperError> {
        if !(a > 0.0 && a < 0.5) {
            return Err(TaperError::InvalidBellParameter(a));
        }
        let kind = TaperKind::CosineBell { a };
        let moments_1d = Self::compute_moments(&kind)?;
        Ok(Self {
            kind,
            dim,
            moments_1d,
        })
    }

    /// CLI convention: `a = 0` selects the unit taper.
    pub fn from_parameter(a: f64, dim: usize) -> Result<Self, TaperError> {
        if a == 0.0 {
            Ok(Self::unit(dim))
        } else {
            Self::cosine_bell(a, dim)
        }
    }

    /// Plug in an arbitrary separable profile. The profile is sampled to
    /// check 0 ≤ h ≤ 1 and H_{h,2} > 0.
    pub fn custom(
        profile: AxisFn,
        breakpoints: Vec<f64>,
        smoothness: u32,
        dim: usize,
    ) -> Result<Self, TaperError> {
        for i in 0..=2048 {
            let u = -0.5 + i as f64 / 2048.0;
            let v = profile(u);
            if !(-1e-12..=1.0 + 1e-12).contains(&v) {
                return Err(TaperError::OutOfRange { value: v, at: u });
            }
        }
        let kind = TaperKind::Custom {
            profile,
            breakpoints,
            smoothness,
        };
        let moments_1d = Self::compute_moments(&kind)?;
        if moments_1d[1] <= 0.0 {
            return Err(TaperError::DegenerateMoment);
        }
        Ok(Self {
            kind,
            dim,
            moments_1d,
        })
    }

    fn compute_moments(kind: &TaperKind) -> Result<[f64; 3], TaperError> {
        let mut out = [0.0; 3];
        for (slot, k) in [(0usize, 1u32), (1, 2), (2, 4)] {
            out[slot] = moment_1d(kind, k)?;
        }
        Ok(out)
    }

    pub fn kind(&self) -> &TaperKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Declared number of continuous derivatives (metadata only).
    pub fn smoothness(&self) -> u32 {
        match &self.kind {
            TaperKind::Unit => 0,
            TaperKind::CosineBell { .. } => 2,
            TaperKind::Custom { smoothness, .. } => *smoothness,
        }
    }

    /// One-dimensional taper profile; zero outside [-1/2, 1/2].
    pub fn value_1d(&self, x: f64) -> f64 {
        if !(-0.5..=0.5).contains(&x) {
            return 0.0;
        }
        match &self.kind {
            TaperKind::Unit => 1.0,
            TaperKind::CosineBell { a } => cosine_bell_1d(*a, x),
            TaperKind::Custom { profile, .. } => profile(x),
        }
    }

    /// h(x) = ∏_j h(x_j); zero outside the unit cube.
    pub fn value(&self, x: &[f64]) -> f64 {
        x.iter().map(|&xj| self.value_1d(xj)).product()
    }

    /// H_{h,k} = ∫_{[-1/2,1/2]^d} h(x)^k dx, the d-th power of the 1-D
    /// integral for separable tapers. k in {1, 2, 4} is served from cache.
    pub fn moment(&self, k: u32) -> Result<f64, TaperError> {
        assert!(k >= 1, "moment order must be >= 1");
        let one_d = match k {
            1 => self.moments_1d[0],
            2 => self.moments_1d[1],
            4 => self.moments_1d[2],
            _ => moment_1d(&self.kind, k)?,
        };
        Ok(one_d.powi(self.dim as i32))
    }

    /// Cached H_{h,2}, the normalizer of every DFT.
    pub fn h2(&self) -> f64 {
        self.moments_1d[1].powi(self.dim as i32)
    }

    /// Kink locations of the 1-D profile, used to split quadrature segments.
    pub fn breakpoints_1d(&self) -> Vec<f64> {
        match &self.kind {
            TaperKind::Unit => vec![],
            TaperKind::CosineBell { a } => vec![-0.5 + a, 0.5 - a],
            TaperKind::Custom { breakpoints, .. } => breakpoints.clone(),
        }
    }
}

/// Piecewise cosine-bell profile.
fn cosine_bell_1d(a: f64, x: f64) -> f64 {
    let x = if x > 0.0 { -x } else { x };
    if x < -0.5 + a {
        let t = (x + 0.5) / a;
        t - (2.0 * PI * t).sin() / (2.0 * PI)
    } else {
        1.0
    }
}

fn moment_1d(kind: &TaperKind, k: u32) -> Result<f64, TaperError> {
    match kind {
        TaperKind::Unit => Ok(1.0),
        TaperKind::CosineBell { a } => {
            // Middle section is identically 1; edges are smooth ramps.
            let a = *a;
            let edge = integrate_adaptive(
                &|x| cosine_bell_1d(a, x).powi(k as i32),
                -0.5,
                -0.5 + a,
                MOMENT_REL_TOL,
            )?;
            Ok(1.0 - 2.0 * a + 2.0 * edge)
        }
        TaperKind::Custom {
            profile,
            breakpoints,
            ..
        } => {
            let mut cuts = vec![-0.5];
            cuts.extend(breakpoints.iter().copied().filter(|c| (-0.5..0.5).contains(c)));
            cuts.push(0.5);
            cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let mut total = 0.0;
            for seg in cuts.windows(2) {
                total += integrate_adaptive(
                    &|x| profile(x).powi(k as i32),
                    seg[0],
                    seg[1],
                    MOMENT_REL_TOL,
                )?;
            }
            Ok(total)
        }
    }
}

// ---------------------------------------------------------------------------
// Window Fourier functionals
// ---------------------------------------------------------------------------

/// Integrand on the unit cube for [`window_fourier`]. Separable integrands
/// (taper powers, taper x single-coordinate log-linear intensities) use the
/// fast per-axis path; everything else goes through tensor quadrature.
#[derive(Clone)]
pub enum CubeFn {
    Separable {
        factors: Vec<AxisFn>,
        breakpoints: Vec<f64>,
    },
    General {
        f: CubePointFn,
        breakpoints: Vec<f64>,
        dim: usize,
    },
}

impl CubeFn {
    pub fn dim(&self) -> usize {
        match self {
            CubeFn::Separable { factors, .. } => factors.len(),
            CubeFn::General { dim, .. } => *dim,
        }
    }

    pub fn eval(&self, u: &[f64]) -> f64 {
        match self {
            CubeFn::Separable { factors, .. } => factors
                .iter()
                .zip(u.iter())
                .map(|(f, &uj)| f(uj))
                .product(),
            CubeFn::General { f, .. } => f(u),
        }
    }

    /// The separable integrand h(u)^k.
    pub fn taper_power(taper: &Taper, k: u32) -> Self {
        let factors: Vec<AxisFn> = (0..taper.dim())
            .map(|_| {
                let t = taper.clone();
                Arc::new(move |u: f64| t.value_1d(u).powi(k as i32)) as AxisFn
            })
            .collect();
        CubeFn::Separable {
            factors,
            breakpoints: taper.breakpoints_1d(),
        }
    }
}

/// H_{g}^{(n)}(ω) = ∫_{D_n} g(x ⊘ A) exp(-i xᵀ ω) dx.
///
/// Substituting x = A ⊙ u reduces this to |D_n| times a unit-cube Fourier
/// integral at the effective frequency A ⊙ ω, evaluated with at least eight
/// Gauss points per oscillation and panel doubling until convergence.
pub fn window_fourier(g: &CubeFn, window: &Window, omega: &[f64]) -> Result<Complex64, QuadError> {
    let d = window.dim();
    assert_eq!(g.dim(), d, "integrand dimension must match the window");
    assert_eq!(omega.len(), d);
    let volume = window.volume();
    let s: Vec<f64> = window
        .side_lengths()
        .iter()
        .zip(omega.iter())
        .map(|(&a, &w)| a * w)
        .collect();
    match g {
        CubeFn::Separable {
            factors,
            breakpoints,
        } => {
            let mut acc = Complex64::new(volume, 0.0);
            for (j, f) in factors.iter().enumerate() {
                acc *= fourier_unit_interval(&**f, breakpoints, s[j], WINDOW_FOURIER_TOL)?;
            }
            Ok(acc)
        }
        CubeFn::General { f, breakpoints, .. } => {
            let val = fourier_unit_cube(&**f, d, breakpoints, &s, 1e-8)?;
            Ok(val * volume)
        }
    }
}

/// Plain (non-oscillatory) unit-cube integral of a [`CubeFn`], used for the
/// scalar moments H_{g,1} of the pseudo-spectrum.
pub fn unit_cube_integral(g: &CubeFn, rel_tol: f64) -> Result<f64, QuadError> {
    match g {
        CubeFn::Separable {
            factors,
            breakpoints,
        } => {
            let mut acc = 1.0;
            for f in factors {
                acc *= integral_with_breaks(&**f, breakpoints, rel_tol)?;
            }
            Ok(acc)
        }
        CubeFn::General {
            f,
            breakpoints,
            dim,
        } => {
            // Iterated integration; adequate for the small d used here.
            match dim {
                1 => integral_with_breaks(&|u| f(&[u]), breakpoints, rel_tol),
                2 => integral_with_breaks(
                    &|u1| {
                        integral_with_breaks(&|u2| f(&[u1, u2]), breakpoints, rel_tol)
                            .unwrap_or(f64::NAN)
                    },
                    breakpoints,
                    rel_tol,
                ),
                _ => {
                    let zeros = vec![0.0; *dim];
                    fourier_unit_cube(&**f, *dim, breakpoints, &zeros, rel_tol).map(|c| c.re)
                }
            }
        }
    }
}

fn integral_with_breaks(
    f: &dyn Fn(f64) -> f64,
    breakpoints: &[f64],
    rel_tol: f64,
) -> Result<f64, QuadError> {
    let mut cuts = vec![-0.5];
    cuts.extend(breakpoints.iter().copied().filter(|c| (-0.5..0.5).contains(c)));
    cuts.push(0.5);
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut total = 0.0;
    for seg in cuts.windows(2) {
        total += integrate_adaptive(f, seg[0], seg[1], rel_tol)?;
    }
    Ok(total)
}
