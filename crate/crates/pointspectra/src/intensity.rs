//! Parametric first-order intensity models on the unit cube, their Poisson
//! composite-likelihood fits, and the DFT bias terms they induce.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{MultitypePattern, Window};
use crate::numeric::{fourier_unit_interval, QuadError};
use crate::taper::{CubeFn, Taper, WINDOW_FOURIER_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntensityError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("point {0:?} lies outside the unit cube")]
    OutsideUnitCube(Vec<f64>),
    #[error("degenerate fit: type {0} has no points but the log-linear model needs them")]
    DegenerateFit(usize),
    #[error("singular normal equations while fitting type {0}")]
    SingularFit(usize),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

// ---------------------------------------------------------------------------
// Covariate basis
// ---------------------------------------------------------------------------

/// Named covariate functions on the unit cube available to log-linear models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisFn {
    Const,
    X1,
    X2,
    X1Sq,
    X2Sq,
    X1X2,
}

impl BasisFn {
    pub fn eval(&self, u: &[f64]) -> f64 {
        match self {
            BasisFn::Const => 1.0,
            BasisFn::X1 => u[0],
            BasisFn::X2 => u[1],
            BasisFn::X1Sq => u[0] * u[0],
            BasisFn::X2Sq => u[1] * u[1],
            BasisFn::X1X2 => u[0] * u[1],
        }
    }

    /// The single coordinate this covariate depends on, if any. `Const`
    /// reports axis 0 (it can be folded into any factor); `X1X2` reports
    /// `None` and forces the non-separable quadrature path.
    fn separable_axis(&self) -> Option<usize> {
        match self {
            BasisFn::Const => Some(0),
            BasisFn::X1 | BasisFn::X1Sq => Some(0),
            BasisFn::X2 | BasisFn::X2Sq => Some(1),
            BasisFn::X1X2 => None,
        }
    }

    fn max_axis(&self) -> usize {
        match self {
            BasisFn::Const => 0,
            BasisFn::X1 | BasisFn::X1Sq => 0,
            BasisFn::X2 | BasisFn::X2Sq | BasisFn::X1X2 => 1,
        }
    }

    /// Value of the axis-restricted part of the covariate at coordinate `u`
    /// on its own axis (only meaningful for separable covariates).
    fn eval_on_axis(&self, u: f64) -> f64 {
        match self {
            BasisFn::Const => 1.0,
            BasisFn::X1 | BasisFn::X2 => u,
            BasisFn::X1Sq | BasisFn::X2Sq => u * u,
            BasisFn::X1X2 => unreachable!("x1x2 is not separable"),
        }
    }

    pub fn parse(name: &str) -> Result<Self, IntensityError> {
        match name {
            "const" => Ok(BasisFn::Const),
            "x1" => Ok(BasisFn::X1),
            "x2" => Ok(BasisFn::X2),
            "x1sq" => Ok(BasisFn::X1Sq),
            "x2sq" => Ok(BasisFn::X2Sq),
            "x1x2" => Ok(BasisFn::X1X2),
            other => Err(IntensityError::InvalidArgument(format!(
                "unknown covariate `{other}`; choose from const, x1, x2, x1sq, x2sq, x1x2"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BasisFn::Const => "const",
            BasisFn::X1 => "x1",
            BasisFn::X2 => "x2",
            BasisFn::X1Sq => "x1sq",
            BasisFn::X2Sq => "x2sq",
            BasisFn::X1X2 => "x1x2",
        }
    }
}

/// Box parameter space for the coefficient vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    pub lower: f64,
    pub upper: f64,
}

impl ParamBounds {
    pub fn clamp(&self, b: f64) -> f64 {
        b.clamp(self.lower, self.upper)
    }
}

impl Default for ParamBounds {
    fn default() -> Self {
        // Generous compact box; intensities in this crate's problems live on
        // the scale 0.1..10, i.e. coefficients well inside +-20.
        Self {
            lower: -20.0,
            upper: 20.0,
        }
    }
}

// ---------------------------------------------------------------------------
// Intensity model
// ---------------------------------------------------------------------------

/// Model family, without coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum IntensityFamily {
    /// λ^(j)(u) = β_j ≥ 0.
    Constant,
    /// λ^(j)(u) = exp(Σ_k β_{jk} φ_k(u)).
    LogLinear { basis: Vec<BasisFn> },
}

/// Parametric first-order intensity λ(·; β) on the unit cube, per type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityModel {
    family: IntensityFamily,
    /// One coefficient vector per type (length 1 for the constant family).
    beta: Vec<Vec<f64>>,
    bounds: ParamBounds,
}

impl IntensityModel {
    pub fn constant(beta: Vec<f64>) -> Result<Self, IntensityError> {
        if beta.iter().any(|&b| b < 0.0 || !b.is_finite()) {
            return Err(IntensityError::InvalidArgument(format!(
                "constant intensities must be nonnegative and finite, got {beta:?}"
            )));
        }
        Ok(Self {
            family: IntensityFamily::Constant,
            beta: beta.into_iter().map(|b| vec![b]).collect(),
            bounds: ParamBounds {
                lower: 0.0,
                upper: f64::MAX,
            },
        })
    }

    pub fn log_linear(basis: Vec<BasisFn>, beta: Vec<Vec<f64>>) -> Result<Self, IntensityError> {
        if basis.is_empty() {
            return Err(IntensityError::InvalidArgument(
                "log-linear basis must be nonempty".into(),
            ));
        }
        for b in &beta {
            if b.len() != basis.len() {
                return Err(IntensityError::InvalidArgument(format!(
                    "coefficient vector length {} does not match basis size {}",
                    b.len(),
                    basis.len()
                )));
            }
        }
        Ok(Self {
            family: IntensityFamily::LogLinear { basis },
            beta,
            bounds: ParamBounds::default(),
        })
    }

    /// The zero-intensity model: a constant model with β = 0 for every type.
    /// Demeaning with it reproduces the raw periodogram 𝒥𝒥*.
    pub fn zero(m: usize) -> Self {
        Self::constant(vec![0.0; m]).expect("zero is a valid constant intensity")
    }

    pub fn family(&self) -> &IntensityFamily {
        &self.family
    }

    pub fn num_types(&self) -> usize {
        self.beta.len()
    }

    pub fn beta(&self) -> &[Vec<f64>] {
        &self.beta
    }

    pub fn bounds(&self) -> &ParamBounds {
        &self.bounds
    }

    fn min_dim(&self) -> usize {
        match &self.family {
            IntensityFamily::Constant => 1,
            IntensityFamily::LogLinear { basis } => {
                basis.iter().map(|b| b.max_axis()).max().unwrap_or(0) + 1
            }
        }
    }

    /// λ^(j)(u; β) for `u` in the unit cube (coordinates u = x ⊘ A).
    pub fn evaluate(&self, u: &[f64], type_idx: usize) -> Result<f64, IntensityError> {
        if u.iter().any(|&c| !(-0.5..=0.5).contains(&c)) {
            return Err(IntensityError::OutsideUnitCube(u.to_vec()));
        }
        if u.len() < self.min_dim() {
            return Err(IntensityError::InvalidArgument(format!(
                "point dimension {} too small for the covariate basis",
                u.len()
            )));
        }
        Ok(self.evaluate_unchecked(u, type_idx))
    }

    pub(crate) fn evaluate_unchecked(&self, u: &[f64], type_idx: usize) -> f64 {
        match &self.family {
            IntensityFamily::Constant => self.beta[type_idx][0],
            IntensityFamily::LogLinear { basis } => {
                let lin: f64 = basis
                    .iter()
                    .zip(&self.beta[type_idx])
                    .map(|(phi, &b)| b * phi.eval(u))
                    .sum();
                lin.exp()
            }
        }
    }

    /// The unit-cube integrand h(u) λ^(j)(u) for the bias functional, using
    /// the separable fast path whenever the basis allows it.
    pub fn bias_integrand(&self, taper: &Taper, type_idx: usize) -> CubeFn {
        let d = taper.dim();
        match &self.family {
            IntensityFamily::Constant => {
                let c = self.beta[type_idx][0];
                let mut factors: Vec<Arc<dyn Fn(f64) -> f64 + Send + Sync>> = Vec::new();
                for axis in 0..d {
                    let t = taper.clone();
                    if axis == 0 {
                        factors.push(Arc::new(move |u: f64| c * t.value_1d(u)));
                    } else {
                        factors.push(Arc::new(move |u: f64| t.value_1d(u)));
                    }
                }
                CubeFn::Separable {
                    factors,
                    breakpoints: taper.breakpoints_1d(),
                }
            }
            IntensityFamily::LogLinear { basis } => {
                let separable = basis.iter().all(|b| b.separable_axis().is_some());
                if separable {
                    let mut factors: Vec<Arc<dyn Fn(f64) -> f64 + Send + Sync>> = Vec::new();
                    for axis in 0..d {
                        let t = taper.clone();
                        let terms: Vec<(BasisFn, f64)> = basis
                            .iter()
                            .zip(&self.beta[type_idx])
                            .filter(|(b, _)| b.separable_axis() == Some(axis))
                            .map(|(b, &c)| (*b, c))
                            .collect();
                        factors.push(Arc::new(move |u: f64| {
                            let lin: f64 = terms.iter().map(|(b, c)| c * b.eval_on_axis(u)).sum();
                            t.value_1d(u) * lin.exp()
                        }));
                    }
                    CubeFn::Separable {
                        factors,
                        breakpoints: taper.breakpoints_1d(),
                    }
                } else {
                    let model = self.clone();
                    let t = taper.clone();
                    CubeFn::General {
                        f: Arc::new(move |u: &[f64]| {
                            t.value(u) * model.evaluate_unchecked(u, type_idx)
                        }),
                        breakpoints: taper.breakpoints_1d(),
                        dim: d,
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Convergence {
    Converged,
    MaxIter,
    Singular,
}

/// Result of a per-type Poisson composite-likelihood fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: IntensityModel,
    pub convergence: Convergence,
    pub log_composite_likelihood: f64,
}

/// Scaled score-norm threshold declaring Newton convergence.
pub const FIT_RESIDUAL_TOL: f64 = 1e-8;
/// Default dummy-point resolution (cells per axis) of the fit quadrature.
pub const DEFAULT_FIT_RESOLUTION: usize = 64;
const MAX_NEWTON_ITER: usize = 100;

/// Fit λ(·; β) by maximizing the Poisson composite likelihood
/// Σ_{x∈X_j} log λ^(j)(x ⊘ A; β) - ∫_{D_n} λ^(j)(x ⊘ A; β) dx.
///
/// The constant family has the closed-form maximizer N_j(D_n)/|D_n|; the
/// log-linear family runs bound-projected Newton iterations on a midpoint
/// quadrature grid with `quadrature_resolution` cells per axis.
pub fn fit_intensity(
    pattern: &MultitypePattern,
    family: &IntensityFamily,
    quadrature_resolution: usize,
) -> Result<FitResult, IntensityError> {
    let window = pattern.window();
    let volume = window.volume();
    let counts = pattern.counts_by_type();
    match family {
        IntensityFamily::Constant => {
            let beta: Vec<f64> = counts.iter().map(|&n| n as f64 / volume).collect();
            let model = IntensityModel::constant(beta.clone())?;
            let mut log_cl = 0.0;
            for (j, &n) in counts.iter().enumerate() {
                if n > 0 {
                    log_cl += n as f64 * beta[j].ln();
                }
                log_cl -= beta[j] * volume;
            }
            Ok(FitResult {
                model,
                convergence: Convergence::Converged,
                log_composite_likelihood: log_cl,
            })
        }
        IntensityFamily::LogLinear { basis } => {
            let d = window.dim();
            let need = basis.iter().map(|b| b.max_axis()).max().unwrap_or(0) + 1;
            if need > d {
                return Err(IntensityError::InvalidArgument(format!(
                    "basis references coordinate {need} but the window has dimension {d}"
                )));
            }
            if quadrature_resolution < 2 {
                return Err(IntensityError::InvalidArgument(
                    "quadrature resolution must be at least 2".into(),
                ));
            }
            let quad = midpoint_grid(d, quadrature_resolution);
            let p = basis.len();
            let bounds = ParamBounds::default();
            let mut all_beta = Vec::with_capacity(pattern.num_types());
            let mut convergence = Convergence::Converged;
            let mut log_cl = 0.0;
            let mut u = vec![0.0; d];
            for j in 0..pattern.num_types() {
                if counts[j] == 0 {
                    return Err(IntensityError::DegenerateFit(j));
                }
                // Sufficient statistic: Σ_x z(x ⊘ A).
                let mut z_sum = DVector::zeros(p);
                for x in pattern.points_of_type(j) {
                    window.to_unit_cube(x, &mut u);
                    for (k, phi) in basis.iter().enumerate() {
                        z_sum[k] += phi.eval(&u);
                    }
                }
                // Start from the intercept-only estimate when available.
                let mut beta = DVector::zeros(p);
                if let Some(pos) = basis.iter().position(|b| *b == BasisFn::Const) {
                    beta[pos] = (counts[j] as f64 / volume).ln();
                }
                let scale = (counts[j] as f64).max(1.0);
                let mut iter = 0;
                loop {
                    let (integral, grad, hess) = quad_moments(basis, &beta, &quad, volume);
                    let score = &z_sum - &grad;
                    if score.amax() / scale <= FIT_RESIDUAL_TOL {
                        break;
                    }
                    if iter >= MAX_NEWTON_ITER {
                        convergence = Convergence::MaxIter;
                        break;
                    }
                    let Some(step) = hess.clone().lu().solve(&score) else {
                        return Err(IntensityError::SingularFit(j));
                    };
                    // Damped, bound-projected Newton step.
                    let mut damping = 1.0;
                    let obj_now = objective(&z_sum, &beta, integral);
                    loop {
                        let mut cand = &beta + step.scale(damping);
                        for c in cand.iter_mut() {
                            *c = bounds.clamp(*c);
                        }
                        let (int_c, _, _) = quad_moments(basis, &cand, &quad, volume);
                        if objective(&z_sum, &cand, int_c) >= obj_now - 1e-12 || damping < 1e-6 {
                            beta = cand;
                            break;
                        }
                        damping *= 0.5;
                    }
                    iter += 1;
                }
                let (integral, _, _) = quad_moments(basis, &beta, &quad, volume);
                // Objective above drops the Σ log λ intercept-free constant
                // shuffle: z_sum·β is exactly Σ_x log λ(x).
                log_cl += objective(&z_sum, &beta, integral);
                all_beta.push(beta.iter().copied().collect::<Vec<f64>>());
            }
            let model = IntensityModel::log_linear(basis.clone(), all_beta)?;
            Ok(FitResult {
                model,
                convergence,
                log_composite_likelihood: log_cl,
            })
        }
    }
}

fn objective(z_sum: &DVector<f64>, beta: &DVector<f64>, integral: f64) -> f64 {
    z_sum.dot(beta) - integral
}

struct QuadGrid {
    points: Vec<Vec<f64>>,
    weight: f64,
}

fn midpoint_grid(d: usize, res: usize) -> QuadGrid {
    let mut points = Vec::with_capacity(res.pow(d as u32));
    let mut idx = vec![0usize; d];
    loop {
        let u: Vec<f64> = idx
            .iter()
            .map(|&i| -0.5 + (i as f64 + 0.5) / res as f64)
            .collect();
        points.push(u);
        let mut j = 0;
        loop {
            if j == d {
                return QuadGrid {
                    points,
                    weight: (1.0 / res as f64).powi(d as i32),
                };
            }
            idx[j] += 1;
            if idx[j] < res {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}

/// (∫ λ, ∫ z λ, ∫ z zᵀ λ) over D_n on the midpoint grid.
fn quad_moments(
    basis: &[BasisFn],
    beta: &DVector<f64>,
    quad: &QuadGrid,
    volume: f64,
) -> (f64, DVector<f64>, DMatrix<f64>) {
    let p = basis.len();
    let mut integral = 0.0;
    let mut grad = DVector::zeros(p);
    let mut hess = DMatrix::zeros(p, p);
    let mut z = vec![0.0; p];
    for u in &quad.points {
        for (k, phi) in basis.iter().enumerate() {
            z[k] = phi.eval(u);
        }
        let lin: f64 = z.iter().zip(beta.iter()).map(|(zk, bk)| zk * bk).sum();
        let lam = lin.exp();
        integral += lam;
        for k in 0..p {
            grad[k] += z[k] * lam;
            for l in 0..p {
                hess[(k, l)] += z[k] * z[l] * lam;
            }
        }
    }
    let w = quad.weight * volume;
    (integral * w, grad.scale(w), hess.scale(w))
}

// ---------------------------------------------------------------------------
// DFT bias vector
// ---------------------------------------------------------------------------

/// E[𝒥_{h,n}(ω)] under λ(·; β): entry j is
/// (2π)^{-d/2} H_{h,2}^{-1/2} |D_n|^{-1/2} H_{h λ^(j),1}^{(n)}(ω).
pub fn dft_bias_vector(
    model: &IntensityModel,
    taper: &Taper,
    window: &Window,
    omega: &[f64],
) -> Result<Vec<Complex64>, IntensityError> {
    let d = window.dim();
    let norm =
        (2.0 * PI).powf(-(d as f64) / 2.0) * taper.h2().powf(-0.5) / window.volume().sqrt();
    let mut out = Vec::with_capacity(model.num_types());
    for j in 0..model.num_types() {
        let g = model.bias_integrand(taper, j);
        let h = crate::taper::window_fourier(&g, window, omega)?;
        out.push(h * norm);
    }
    Ok(out)
}

/// Bias vectors for a whole symmetric grid, `[node][type]`.
///
/// Separable integrands factor over axes; the per-axis 1-D transforms are
/// computed once per distinct index and combined per node, which turns a
/// grid-size x quadrature cost into grid-size products.
pub fn dft_bias_field(
    model: &IntensityModel,
    taper: &Taper,
    window: &Window,
    grid: &crate::geometry::FrequencyGrid,
) -> Result<Vec<Vec<Complex64>>, IntensityError> {
    let d = window.dim();
    let volume = window.volume();
    let norm = (2.0 * PI).powf(-(d as f64) / 2.0) * taper.h2().powf(-0.5) / volume.sqrt();
    let n_nodes = grid.len();
    let mut out = vec![vec![Complex64::new(0.0, 0.0); model.num_types()]; n_nodes];
    for j in 0..model.num_types() {
        let g = model.bias_integrand(taper, j);
        match &g {
            CubeFn::Separable {
                factors,
                breakpoints,
            } => {
                // axis_tables[axis][k + k_max]
                let mut axis_tables: Vec<Vec<Complex64>> = Vec::with_capacity(d);
                for (axis, f) in factors.iter().enumerate() {
                    let k_max = grid.k_max()[axis];
                    let a_j = window.side_lengths()[axis];
                    let mut table = vec![Complex64::new(0.0, 0.0); (2 * k_max + 1) as usize];
                    for k in 0..=k_max {
                        let omega_j = 2.0 * PI * k as f64 / grid.omega_vec()[axis];
                        let v = fourier_unit_interval(
                            &**f,
                            breakpoints,
                            a_j * omega_j,
                            WINDOW_FOURIER_TOL,
                        )?;
                        table[(k + k_max) as usize] = v;
                        table[(k_max - k) as usize] = v.conj();
                    }
                    axis_tables.push(table);
                }
                for (idx, row) in out.iter_mut().enumerate() {
                    let k = grid.multi_index(idx);
                    let mut acc = Complex64::new(volume * norm, 0.0);
                    for axis in 0..d {
                        acc *= axis_tables[axis][(k[axis] + grid.k_max()[axis]) as usize];
                    }
                    row[j] = acc;
                }
            }
            CubeFn::General { .. } => {
                let mut omega = vec![0.0; d];
                for (idx, row) in out.iter_mut().enumerate() {
                    let k = grid.multi_index(idx);
                    grid.node_into(&k, &mut omega);
                    let h = crate::taper::window_fourier(&g, window, &omega)?;
                    row[j] = h * norm;
                }
            }
        }
    }
    Ok(out)
}
