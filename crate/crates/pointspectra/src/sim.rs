//! Ground-truth generators: Poisson sampling, the bivariate
//! product-shot-noise Cox models M1-M3 with their closed-form reweighted
//! covariances, and the weighted-process (thinning) construction.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{MultitypePattern, Window};
use crate::intensity::{IntensityError, IntensityModel};
use crate::theory::{CovEntry, ReweightedCovariance, TheoryError};

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("invalid intensity: {0}")]
    InvalidIntensity(String),
    #[error("invalid Cox parameters: {0}")]
    InvalidParams(String),
    #[error("simulation configuration error: {0}")]
    Config(String),
    #[error("unsupported operation: {0}")]
    UnsupportedOperation(String),
    #[error(transparent)]
    Intensity(#[from] IntensityError),
    #[error(transparent)]
    Theory(#[from] TheoryError),
}

// ---------------------------------------------------------------------------
// Gaussian dispersal kernel
// ---------------------------------------------------------------------------

/// Planar Gaussian dispersal density φ_σ(r) = (2πσ²)^{-1} exp(-r²/(2σ²)).
///
/// Normalized to unit mass over ℝ², which makes both latent fields mean one
/// and the first-order intensity of the Cox models exactly λ^(i); the
/// closed-form reduced covariances below are consistent with this
/// normalization.
pub fn gaussian_kernel(sigma: f64, r: f64) -> f64 {
    (-r * r / (2.0 * sigma * sigma)).exp() / (2.0 * PI * sigma * sigma)
}

fn kernel_peak(sigma: f64) -> f64 {
    1.0 / (2.0 * PI * sigma * sigma)
}

// ---------------------------------------------------------------------------
// Model parameters
// ---------------------------------------------------------------------------

/// Named parameter presets from the simulation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoxPreset {
    /// Homogeneous, inter-species clustering.
    M1,
    /// Inhomogeneous, inter-species clustering.
    M2,
    /// Inhomogeneous, inter-species repulsion.
    M3,
}

impl CoxPreset {
    pub fn parse(s: &str) -> Result<Self, SimulationError> {
        match s.to_ascii_uppercase().as_str() {
            "M1" => Ok(CoxPreset::M1),
            "M2" => Ok(CoxPreset::M2),
            "M3" => Ok(CoxPreset::M3),
            other => Err(SimulationError::InvalidParams(format!(
                "unknown model `{other}`; choose M1, M2, or M3"
            ))),
        }
    }
}

/// Full parameterization of the bivariate product-shot-noise Cox process:
/// first-order intensities, parent intensities κ, kernel scales σ, and the
/// interaction matrix ξ_{j→i}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxModelParams {
    pub lambda: IntensityModel,
    pub kappa: [f64; 3],
    pub sigma: [f64; 3],
    /// `xi[j][i]` = ξ_{(j+1) → (i+1)}: effect of parent process j on offspring i.
    pub xi: [[f64; 2]; 3],
}

impl CoxModelParams {
    pub fn new(
        lambda: IntensityModel,
        kappa: [f64; 3],
        sigma: [f64; 3],
        xi: [[f64; 2]; 3],
    ) -> Result<Self, SimulationError> {
        if lambda.num_types() != 2 {
            return Err(SimulationError::InvalidParams(
                "the product-shot-noise model is bivariate".into(),
            ));
        }
        if kappa.iter().any(|&k| !(k > 0.0)) || sigma.iter().any(|&s| !(s > 0.0)) {
            return Err(SimulationError::InvalidParams(
                "parent intensities and kernel scales must be positive".into(),
            ));
        }
        if xi.iter().flatten().any(|&x| x <= -1.0) {
            return Err(SimulationError::InvalidParams(
                "interaction parameters must exceed -1".into(),
            ));
        }
        for i in 0..2 {
            if xi[i][i] != 0.0 {
                return Err(SimulationError::InvalidParams(format!(
                    "ξ_{{{0}→{0}}} must be zero: parent {0} acts on its own offspring through the shot-noise field",
                    i + 1
                )));
            }
        }
        Ok(Self {
            lambda,
            kappa,
            sigma,
            xi,
        })
    }

    pub fn preset(which: CoxPreset) -> Self {
        let kappa = [0.25, 0.75, 0.2];
        let sigma = [0.6, 0.3, 1.0];
        let xi_cluster = [[0.0, 0.7], [0.9, 0.0], [0.3, 0.1]];
        let xi_repulse = [[0.0, -0.7], [-0.9, 0.0], [0.3, 0.1]];
        let lambda_const = IntensityModel::constant(vec![0.5, 1.5]).expect("valid preset");
        let lambda_inhom = IntensityModel::log_linear(
            vec![
                crate::intensity::BasisFn::Const,
                crate::intensity::BasisFn::X1Sq,
                crate::intensity::BasisFn::X2Sq,
            ],
            vec![
                vec![3.0_f64.ln(), -2.0, -2.0],
                vec![2.0_f64.ln(), -2.0, 2.0],
            ],
        )
        .expect("valid preset");
        let (lambda, xi) = match which {
            CoxPreset::M1 => (lambda_const, xi_cluster),
            CoxPreset::M2 => (lambda_inhom.clone(), xi_cluster),
            CoxPreset::M3 => (lambda_inhom, xi_repulse),
        };
        Self::new(lambda, kappa, sigma, xi).expect("presets are valid")
    }

    pub fn max_sigma(&self) -> f64 {
        self.sigma.iter().copied().fold(0.0, f64::max)
    }

    /// The deterministic normalizer exp(-Σ_j κ_j ξ_{j→i} / φ_j(0)) of the
    /// compound field Y_i.
    pub fn compound_prefactor(&self, target: usize) -> f64 {
        let mut s = 0.0;
        for j in 0..3 {
            s += self.kappa[j] * self.xi[j][target] / kernel_peak(self.sigma[j]);
        }
        (-s).exp()
    }
}

/// Sampling controls for the Cox simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    /// Side length of the intensity-field cells (spatial units).
    pub cell_size: f64,
    /// Parent buffer width as a multiple of max σ (at least 3).
    pub buffer_factor: f64,
    /// Gaussian kernels are truncated beyond this multiple of σ.
    pub kernel_cutoff: f64,
    /// Replace the shot-noise fields by 1 (degenerate Poisson switch).
    pub unit_shot_noise: bool,
    /// Upper bound on the number of field cells.
    pub max_cells: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            cell_size: 0.05,
            buffer_factor: 4.0,
            kernel_cutoff: 4.0,
            unit_shot_noise: false,
            max_cells: 1 << 24,
        }
    }
}

impl SimulationConfig {
    fn validate(&self) -> Result<(), SimulationError> {
        if !(self.cell_size > 0.0) {
            return Err(SimulationError::Config("cell size must be positive".into()));
        }
        if self.buffer_factor < 3.0 {
            return Err(SimulationError::Config(
                "parent buffer must be at least 3 kernel scales".into(),
            ));
        }
        if !(self.kernel_cutoff > 0.0) {
            return Err(SimulationError::Config("kernel cutoff must be positive".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Poisson sampling
// ---------------------------------------------------------------------------

fn poisson_count(mean: f64, rng: &mut ChaCha8Rng) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive mean").sample(rng) as usize
}

/// Homogeneous Poisson sample on the window: a Poisson(λ|D|) count with
/// uniform placement. Returns flat coordinates.
pub fn sample_homogeneous_poisson(
    lambda: f64,
    window: &Window,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>, SimulationError> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(SimulationError::InvalidIntensity(format!(
            "constant intensity must be finite and nonnegative, got {lambda}"
        )));
    }
    let n = poisson_count(lambda * window.volume(), rng);
    let d = window.dim();
    let mut coords = Vec::with_capacity(n * d);
    for _ in 0..n {
        for &a in window.side_lengths() {
            coords.push(rng.random_range(-a / 2.0..a / 2.0));
        }
    }
    Ok(coords)
}

/// Inhomogeneous Poisson sample: a dominating homogeneous proposal at
/// `bound` thinned pointwise with acceptance λ(x)/bound. When no bound is
/// supplied, it is computed as the intensity's maximum over the field grid.
pub fn sample_inhomogeneous_poisson(
    intensity: &dyn Fn(&[f64]) -> f64,
    bound: Option<f64>,
    window: &Window,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>, SimulationError> {
    let bound = match bound {
        Some(b) => b,
        None => intensity_bound_on_grid(intensity, window, 0.05)?,
    };
    if !(bound >= 0.0) || !bound.is_finite() {
        return Err(SimulationError::InvalidIntensity(format!(
            "intensity bound must be finite and nonnegative, got {bound}"
        )));
    }
    if bound == 0.0 {
        return Ok(Vec::new());
    }
    let d = window.dim();
    let n = poisson_count(bound * window.volume(), rng);
    let mut coords = Vec::new();
    let mut x = vec![0.0; d];
    for _ in 0..n {
        for (j, &a) in window.side_lengths().iter().enumerate() {
            x[j] = rng.random_range(-a / 2.0..a / 2.0);
        }
        let lam = intensity(&x);
        if lam < 0.0 || !lam.is_finite() {
            return Err(SimulationError::InvalidIntensity(format!(
                "intensity is {lam} at {x:?}"
            )));
        }
        if rng.random::<f64>() < lam / bound {
            coords.extend_from_slice(&x);
        }
    }
    Ok(coords)
}

fn intensity_bound_on_grid(
    intensity: &dyn Fn(&[f64]) -> f64,
    window: &Window,
    cell: f64,
) -> Result<f64, SimulationError> {
    let d = window.dim();
    if d != 2 {
        return Err(SimulationError::Config(
            "automatic intensity bounds are implemented for d = 2".into(),
        ));
    }
    let (a1, a2) = (window.side_lengths()[0], window.side_lengths()[1]);
    let nx = (a1 / cell).ceil() as usize;
    let ny = (a2 / cell).ceil() as usize;
    let mut max = 0.0_f64;
    for i in 0..nx {
        for j in 0..ny {
            let x = [
                -a1 / 2.0 + (i as f64 + 0.5) * a1 / nx as f64,
                -a2 / 2.0 + (j as f64 + 0.5) * a2 / ny as f64,
            ];
            let v = intensity(&x);
            if v < 0.0 || !v.is_finite() {
                return Err(SimulationError::InvalidIntensity(format!(
                    "intensity is {v} at {x:?}"
                )));
            }
            max = max.max(v);
        }
    }
    Ok(max)
}

/// Multitype inhomogeneous Poisson pattern under a parametric intensity
/// (each type independent), wrapped with its provenance for reweighting.
pub fn sample_poisson_pattern(
    lambda: &IntensityModel,
    window: &Window,
    seed: u64,
) -> Result<SimulatedPattern, SimulationError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = lambda.num_types();
    let d = window.dim();
    let mut coords = Vec::new();
    let mut types = Vec::new();
    for j in 0..m {
        let sides = window.side_lengths().to_vec();
        let f = |x: &[f64]| {
            let u: Vec<f64> = x.iter().zip(&sides).map(|(xi, ai)| xi / ai).collect();
            lambda.evaluate_unchecked(&u, j)
        };
        let pts = sample_inhomogeneous_poisson(&f, None, window, &mut rng)?;
        let n = pts.len() / d;
        coords.extend(pts);
        types.extend(std::iter::repeat_n(j, n));
    }
    let pattern = MultitypePattern::new(window.clone(), m, coords, types)
        .map_err(|e| SimulationError::Config(e.to_string()))?;
    Ok(SimulatedPattern {
        pattern,
        source: PatternSource::Poisson {
            lambda: lambda.clone(),
            window: window.clone(),
            seed,
        },
    })
}

// ---------------------------------------------------------------------------
// Latent fields
// ---------------------------------------------------------------------------

/// Parent draws on the buffered window, one homogeneous Poisson process per
/// parent type.
#[derive(Debug, Clone)]
pub struct ParentDraws {
    pub per_type: [Vec<f64>; 3],
}

/// Draw the three parent processes over the window extended by the buffer.
pub fn draw_parents(
    params: &CoxModelParams,
    window: &Window,
    config: &SimulationConfig,
    rng: &mut ChaCha8Rng,
) -> Result<ParentDraws, SimulationError> {
    let buffer = config.buffer_factor * params.max_sigma();
    let sides: Vec<f64> = window
        .side_lengths()
        .iter()
        .map(|&a| a + 2.0 * buffer)
        .collect();
    let buffered = Window::new(sides).map_err(|e| SimulationError::Config(e.to_string()))?;
    let mut per_type: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (j, slot) in per_type.iter_mut().enumerate() {
        *slot = sample_homogeneous_poisson(params.kappa[j], &buffered, rng)?;
    }
    Ok(ParentDraws { per_type })
}

/// S_i(x) = κ_i^{-1} Σ_{v ∈ Φ_i} φ_i(‖x - v‖), kernels truncated beyond
/// `cutoff`·σ.
pub fn shot_noise_field(parents: &[f64], kappa: f64, sigma: f64, cutoff: f64, x: &[f64]) -> f64 {
    let r_max2 = (cutoff * sigma) * (cutoff * sigma);
    let mut s = 0.0;
    for v in parents.chunks_exact(2) {
        let dx = x[0] - v[0];
        let dy = x[1] - v[1];
        let r2 = dx * dx + dy * dy;
        if r2 <= r_max2 {
            s += gaussian_kernel(sigma, r2.sqrt());
        }
    }
    s / kappa
}

/// Y_i(x) = exp(-Σ_j κ_j ξ_{j→i}/φ_j(0)) Π_j Π_{v ∈ Φ_j}
///          {1 + ξ_{j→i} φ_j(‖x - v‖)/φ_j(0)}.
pub fn compound_field(
    parents: &ParentDraws,
    params: &CoxModelParams,
    target: usize,
    x: &[f64],
    cutoff: f64,
) -> f64 {
    let mut product = params.compound_prefactor(target);
    for j in 0..3 {
        let xi = params.xi[j][target];
        if xi == 0.0 {
            continue;
        }
        let sigma = params.sigma[j];
        let peak = kernel_peak(sigma);
        let r_max2 = (cutoff * sigma) * (cutoff * sigma);
        for v in parents.per_type[j].chunks_exact(2) {
            let dx = x[0] - v[0];
            let dy = x[1] - v[1];
            let r2 = dx * dx + dy * dy;
            if r2 <= r_max2 {
                product *= 1.0 + xi * gaussian_kernel(sigma, r2.sqrt()) / peak;
            }
        }
    }
    product
}

// ---------------------------------------------------------------------------
// Cox pattern sampling
// ---------------------------------------------------------------------------

/// How a pattern was produced; reweighting needs to regenerate independent
/// copies and therefore refuses observed data.
#[derive(Debug, Clone)]
pub enum PatternSource {
    Cox {
        params: CoxModelParams,
        config: SimulationConfig,
        seed: u64,
    },
    Poisson {
        lambda: IntensityModel,
        window: Window,
        seed: u64,
    },
    Observed,
}

/// A pattern together with its generation provenance.
#[derive(Debug, Clone)]
pub struct SimulatedPattern {
    pub pattern: MultitypePattern,
    pub source: PatternSource,
}

impl SimulatedPattern {
    /// Wrap externally observed data (reweighting will refuse it).
    pub fn observed(pattern: MultitypePattern) -> Self {
        Self {
            pattern,
            source: PatternSource::Observed,
        }
    }
}

/// Sample the bivariate product-shot-noise Cox process: draw parents once
/// in the buffered window, evaluate Λ_i = λ^(i)(x/A) S_i(x) Y_i(x) on the
/// field grid, then place per-cell Poisson counts uniformly within cells.
pub fn sample_cox_pattern(
    params: &CoxModelParams,
    window: &Window,
    config: &SimulationConfig,
    seed: u64,
) -> Result<SimulatedPattern, SimulationError> {
    config.validate()?;
    if window.dim() != 2 {
        return Err(SimulationError::Config(
            "the product-shot-noise simulator is two-dimensional".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let parents = draw_parents(params, window, config, &mut rng)?;

    let (a1, a2) = (window.side_lengths()[0], window.side_lengths()[1]);
    let nx = (a1 / config.cell_size).ceil().max(1.0) as usize;
    let ny = (a2 / config.cell_size).ceil().max(1.0) as usize;
    if nx * ny > config.max_cells {
        return Err(SimulationError::Config(format!(
            "field grid {nx} x {ny} exceeds the configured cell budget {}",
            config.max_cells
        )));
    }
    let (wx, wy) = (a1 / nx as f64, a2 / ny as f64);
    let n_cells = nx * ny;

    // Additive accumulators for the shot-noise sums and multiplicative ones
    // for the compound products, filled parent by parent over the cells each
    // kernel reaches.
    let mut shot = vec![[0.0f64; 2]; n_cells];
    let mut compound = vec![[1.0f64; 2]; n_cells];
    for j in 0..3 {
        let sigma = params.sigma[j];
        let peak = kernel_peak(sigma);
        let r_max = config.kernel_cutoff * sigma;
        let r_max2 = r_max * r_max;
        let xi = params.xi[j];
        for v in parents.per_type[j].chunks_exact(2) {
            let ix_lo = (((v[0] - r_max + a1 / 2.0) / wx).floor().max(0.0)) as usize;
            let ix_hi = (((v[0] + r_max + a1 / 2.0) / wx).ceil()).min(nx as f64) as usize;
            let iy_lo = (((v[1] - r_max + a2 / 2.0) / wy).floor().max(0.0)) as usize;
            let iy_hi = (((v[1] + r_max + a2 / 2.0) / wy).ceil()).min(ny as f64) as usize;
            for ix in ix_lo..ix_hi {
                let cx = -a1 / 2.0 + (ix as f64 + 0.5) * wx;
                let dx = cx - v[0];
                for iy in iy_lo..iy_hi {
                    let cy = -a2 / 2.0 + (iy as f64 + 0.5) * wy;
                    let dy = cy - v[1];
                    let r2 = dx * dx + dy * dy;
                    if r2 > r_max2 {
                        continue;
                    }
                    let phi = gaussian_kernel(sigma, r2.sqrt());
                    let cell = ix * ny + iy;
                    if j < 2 {
                        shot[cell][j] += phi / params.kappa[j];
                    }
                    let ratio = phi / peak;
                    if xi[0] != 0.0 {
                        compound[cell][0] *= 1.0 + xi[0] * ratio;
                    }
                    if xi[1] != 0.0 {
                        compound[cell][1] *= 1.0 + xi[1] * ratio;
                    }
                }
            }
        }
    }

    let prefactor = [params.compound_prefactor(0), params.compound_prefactor(1)];
    let cell_area = wx * wy;
    let mut coords = Vec::new();
    let mut types = Vec::new();
    let mut u = [0.0f64; 2];
    for target in 0..2 {
        for ix in 0..nx {
            let cx = -a1 / 2.0 + (ix as f64 + 0.5) * wx;
            for iy in 0..ny {
                let cy = -a2 / 2.0 + (iy as f64 + 0.5) * wy;
                u[0] = cx / a1;
                u[1] = cy / a2;
                let lam0 = params.lambda.evaluate_unchecked(&u, target);
                let s = if config.unit_shot_noise {
                    1.0
                } else {
                    shot[ix * ny + iy][target]
                };
                let y = prefactor[target] * compound[ix * ny + iy][target];
                let mean = lam0 * s * y * cell_area;
                let count = poisson_count(mean, &mut rng);
                for _ in 0..count {
                    let px = cx - wx / 2.0 + rng.random::<f64>() * wx;
                    let py = cy - wy / 2.0 + rng.random::<f64>() * wy;
                    coords.push(px.clamp(-a1 / 2.0, a1 / 2.0));
                    coords.push(py.clamp(-a2 / 2.0, a2 / 2.0));
                    types.push(target);
                }
            }
        }
    }
    let pattern = MultitypePattern::new(window.clone(), 2, coords, types)
        .map_err(|e| SimulationError::Config(e.to_string()))?;
    Ok(SimulatedPattern {
        pattern,
        source: PatternSource::Cox {
            params: params.clone(),
            config: config.clone(),
            seed,
        },
    })
}

// ---------------------------------------------------------------------------
// Closed-form reduced covariance
// ---------------------------------------------------------------------------

/// c_i(x) = φ_i(0)^{-2} ∫ φ_i(x+u) φ_i(u) du in closed Gaussian form:
/// π σ_i² exp(-‖x‖²/(4σ_i²)). The ratio is normalization free.
pub fn kernel_overlap(sigma: f64, r: f64) -> f64 {
    PI * sigma * sigma * (-r * r / (4.0 * sigma * sigma)).exp()
}

fn l2_entry_radial(params: &CoxModelParams, i: usize, j: usize, r: f64) -> f64 {
    let c = [
        kernel_overlap(params.sigma[0], r),
        kernel_overlap(params.sigma[1], r),
        kernel_overlap(params.sigma[2], r),
    ];
    if i == j {
        let shot = 1.0 + kernel_peak(params.sigma[i]).powi(2) / params.kappa[i] * c[i];
        let mut expo = 0.0;
        for l in 0..3 {
            expo += params.kappa[l] * params.xi[l][i] * params.xi[l][i] * c[l];
        }
        shot * expo.exp() - 1.0
    } else {
        let f1 = 1.0 + params.xi[i][j] * kernel_peak(params.sigma[i]) * c[i];
        let f2 = 1.0 + params.xi[j][i] * kernel_peak(params.sigma[j]) * c[j];
        let mut expo = 0.0;
        for l in 0..3 {
            expo += params.kappa[l] * params.xi[l][i] * params.xi[l][j] * c[l];
        }
        f1 * f2 * expo.exp() - 1.0
    }
}

/// The closed-form reduced covariance matrix L₂(x) of the model.
pub fn closed_form_l2(params: &CoxModelParams, x: &[f64]) -> DMatrix<f64> {
    let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
    DMatrix::from_fn(2, 2, |i, j| l2_entry_radial(params, i, j, r))
}

/// Package the closed forms as a [`ReweightedCovariance`] with a scanned
/// effective support radius.
pub fn reweighted_covariance(
    params: &CoxModelParams,
) -> Result<ReweightedCovariance, SimulationError> {
    // Scan outward until every entry is safely below the decay tolerance.
    let mut radius = 6.0 * params.max_sigma();
    loop {
        let worst = (0..2)
            .flat_map(|i| (i..2).map(move |j| (i, j)))
            .map(|(i, j)| l2_entry_radial(params, i, j, radius).abs())
            .fold(0.0, f64::max);
        if worst < 1e-11 {
            break;
        }
        radius += params.max_sigma();
        if radius > 100.0 * params.max_sigma() {
            return Err(SimulationError::InvalidParams(
                "reduced covariance does not decay within 100 kernel scales".into(),
            ));
        }
    }
    let mut entries = Vec::new();
    for i in 0..2 {
        for j in i..2 {
            let p = params.clone();
            entries.push(CovEntry::Isotropic(Arc::new(move |r: f64| {
                l2_entry_radial(&p, i, j, r)
            })));
        }
    }
    Ok(ReweightedCovariance::new(2, 2, entries, radius)?)
}

// ---------------------------------------------------------------------------
// Weighted-process reweighting
// ---------------------------------------------------------------------------

/// Draw an independent copy of the generating process, deterministically
/// derived from the source seed and the copy index.
fn regenerate(
    source: &PatternSource,
    copy: u64,
    window: &Window,
) -> Result<MultitypePattern, SimulationError> {
    match source {
        PatternSource::Cox {
            params,
            config,
            seed,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            rng.set_stream(copy);
            let copy_seed = rng.random::<u64>();
            Ok(sample_cox_pattern(params, window, config, copy_seed)?.pattern)
        }
        PatternSource::Poisson { lambda, seed, .. } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            rng.set_stream(copy);
            let copy_seed = rng.random::<u64>();
            Ok(sample_poisson_pattern(lambda, window, copy_seed)?.pattern)
        }
        PatternSource::Observed => Err(SimulationError::UnsupportedOperation(
            "reweighting needs independent copies; only simulated patterns support it".into(),
        )),
    }
}

/// The weighted-process construction with weights w_j = 1/λ^(j): superpose
/// k_j independent copies of the pattern (k_j = ⌈sup 1/λ^(j)⌉) and thin with
/// probability w_j(x)/k_j. The output has unit first-order intensity.
///
/// Only simulated patterns are supported: the construction requires fresh
/// independent copies of the generating process.
pub fn reweight_by_thinning(
    sim: &SimulatedPattern,
    true_lambda: &IntensityModel,
    seed: u64,
) -> Result<MultitypePattern, SimulationError> {
    if matches!(sim.source, PatternSource::Observed) {
        return Err(SimulationError::UnsupportedOperation(
            "reweighting needs independent copies; only simulated patterns support it".into(),
        ));
    }
    let pattern = &sim.pattern;
    let window = pattern.window();
    let d = window.dim();
    let m = pattern.num_types();
    if true_lambda.num_types() != m {
        return Err(SimulationError::InvalidParams(format!(
            "intensity has {} types, pattern has {m}",
            true_lambda.num_types()
        )));
    }
    // sup 1/λ^(j) over the field grid.
    let mut k_per_type = vec![1u64; m];
    for j in 0..m {
        let min_lam = min_intensity_on_grid(true_lambda, window, j)?;
        if !(min_lam > 0.0) {
            return Err(SimulationError::InvalidIntensity(format!(
                "type {j} intensity must be strictly positive for reweighting"
            )));
        }
        k_per_type[j] = (1.0 / min_lam - 1e-12).ceil().max(1.0) as u64;
    }
    let k_max = *k_per_type.iter().max().unwrap();

    // Copy 0 is the observed draw; the rest are regenerated independently.
    let mut copies: Vec<MultitypePattern> = vec![pattern.clone()];
    for copy in 1..k_max {
        copies.push(regenerate(&sim.source, copy, window)?);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords = Vec::new();
    let mut types = Vec::new();
    let mut u = vec![0.0; d];
    for j in 0..m {
        let k = k_per_type[j] as usize;
        for copy in copies.iter().take(k) {
            for x in copy.points_of_type(j) {
                window.to_unit_cube(x, &mut u);
                let lam = true_lambda.evaluate_unchecked(&u, j);
                let p = 1.0 / (lam * k as f64);
                debug_assert!((0.0..=1.0 + 1e-9).contains(&p));
                if rng.random::<f64>() < p {
                    coords.extend_from_slice(x);
                    types.push(j);
                }
            }
        }
    }
    MultitypePattern::new(window.clone(), m, coords, types)
        .map_err(|e| SimulationError::Config(e.to_string()))
}

fn min_intensity_on_grid(
    lambda: &IntensityModel,
    window: &Window,
    type_idx: usize,
) -> Result<f64, SimulationError> {
    let d = window.dim();
    if d != 2 {
        return Err(SimulationError::Config(
            "reweighting is implemented for d = 2".into(),
        ));
    }
    let n = 101;
    let mut min = f64::INFINITY;
    let mut u = vec![0.0; d];
    for i in 0..n {
        for j in 0..n {
            u[0] = -0.5 + i as f64 / (n - 1) as f64;
            u[1] = -0.5 + j as f64 / (n - 1) as f64;
            min = min.min(lambda.evaluate_unchecked(&u, type_idx));
        }
    }
    Ok(min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use crate::numeric::integrate_adaptive;

    #[test]
    fn presets_reproduce_study_parameters() {
        let m1 = CoxModelParams::preset(CoxPreset::M1);
        assert_eq!(m1.kappa, [0.25, 0.75, 0.2]);
        assert_eq!(m1.sigma, [0.6, 0.3, 1.0]);
        assert_eq!(m1.xi, [[0.0, 0.7], [0.9, 0.0], [0.3, 0.1]]);
        assert_abs_diff_eq!(m1.lambda.evaluate(&[0.1, 0.1], 0).unwrap(), 0.5);
        assert_abs_diff_eq!(m1.lambda.evaluate(&[0.1, 0.1], 1).unwrap(), 1.5);
        let m3 = CoxModelParams::preset(CoxPreset::M3);
        assert_eq!(m3.xi[0][1], -0.7);
        assert_eq!(m3.xi[1][0], -0.9);
        assert_abs_diff_eq!(m3.lambda.evaluate(&[0.0, 0.0], 0).unwrap(), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn invalid_params_rejected() {
        let lam = IntensityModel::constant(vec![1.0, 1.0]).unwrap();
        assert!(CoxModelParams::new(lam.clone(), [0.0, 1.0, 1.0], [1.0; 3], [[0.0; 2]; 3]).is_err());
        assert!(
            CoxModelParams::new(lam.clone(), [1.0; 3], [1.0; 3], [[0.0, -1.5], [0.0; 2], [0.0; 2]])
                .is_err()
        );
        // ξ_{i→i} must be zero.
        assert!(
            CoxModelParams::new(lam, [1.0; 3], [1.0; 3], [[0.5, 0.0], [0.0; 2], [0.0; 2]]).is_err()
        );
    }

    #[test]
    fn zero_intensity_gives_empty_sample() {
        let w = Window::square(10.0, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = sample_homogeneous_poisson(0.0, &w, &mut rng).unwrap();
        assert!(pts.is_empty());
        assert!(sample_homogeneous_poisson(-1.0, &w, &mut rng).is_err());
    }

    /// Poisson mean-variance oracle: mean count over 1000 replicates within
    /// 3·sqrt(λ|D|/reps) of λ|D|.
    #[test]
    fn homogeneous_count_matches_poisson_mean() {
        let w = Window::square(20.0, 2).unwrap();
        let lambda = 2.0;
        let reps = 1000;
        let mut total = 0usize;
        for seed in 0..reps {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            total += sample_homogeneous_poisson(lambda, &w, &mut rng).unwrap().len() / 2;
        }
        let mean = total as f64 / reps as f64;
        let want = lambda * w.volume();
        let tol = 3.0 * (want / reps as f64).sqrt();
        assert!((mean - want).abs() < tol, "mean {mean} want {want} ± {tol}");
    }

    #[test]
    fn full_acceptance_thinning_equals_homogeneous_draw() {
        let w = Window::square(12.0, 2).unwrap();
        let c = 1.3;
        let mut rng1 = ChaCha8Rng::seed_from_u64(42);
        let hom = sample_homogeneous_poisson(c, &w, &mut rng1).unwrap();
        let mut rng2 = ChaCha8Rng::seed_from_u64(42);
        let inhom =
            sample_inhomogeneous_poisson(&|_: &[f64]| c, Some(c), &w, &mut rng2).unwrap();
        // Same count draw, acceptance probability one: identical size.
        assert_eq!(hom.len(), inhom.len());
    }

    #[test]
    fn shot_noise_direct_values() {
        // No parents.
        assert_eq!(shot_noise_field(&[], 1.0, 0.6, 4.0, &[0.0, 0.0]), 0.0);
        // One parent at the evaluation point: φ(0)/κ = (2πσ²)^{-1}.
        let v = shot_noise_field(&[0.3, -0.2], 1.0, 0.6, 4.0, &[0.3, -0.2]);
        assert_abs_diff_eq!(v, 1.0 / (2.0 * PI * 0.36), epsilon = 1e-14);
        assert_abs_diff_eq!(v, 0.442_097_064_0, epsilon = 1e-9);
    }

    #[test]
    fn kernel_mass_is_one_by_radial_quadrature() {
        // ∫_{ℝ²} φ(‖u‖) du = 2π ∫ φ(r) r dr = 1 for the planar Gaussian.
        for sigma in [0.3, 0.6, 1.0] {
            let mass = 2.0
                * PI
                * integrate_adaptive(
                    &|r: f64| gaussian_kernel(sigma, r) * r,
                    0.0,
                    12.0 * sigma,
                    1e-12,
                )
                .unwrap();
            assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-10);
        }
    }

    /// Monte Carlo first-moment check E[S_i(x)] = 1 over parent draws.
    #[test]
    fn shot_noise_mean_is_one() {
        let params = CoxModelParams::preset(CoxPreset::M1);
        let w = Window::square(6.0, 2).unwrap();
        let config = SimulationConfig::default();
        let reps = 500;
        let x = [0.7, -1.1];
        let mut vals = Vec::with_capacity(reps);
        for seed in 0..reps {
            let mut rng = ChaCha8Rng::seed_from_u64(9000 + seed as u64);
            let parents = draw_parents(&params, &w, &config, &mut rng).unwrap();
            vals.push(shot_noise_field(
                &parents.per_type[0],
                params.kappa[0],
                params.sigma[0],
                config.kernel_cutoff,
                &x,
            ));
        }
        let mean: f64 = vals.iter().sum::<f64>() / reps as f64;
        let var: f64 = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / reps as f64;
        let se = (var / reps as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn compound_field_direct_values() {
        let params = CoxModelParams::preset(CoxPreset::M1);
        // ξ ≡ 0 target-by-target: build a variant with no interactions.
        let no_xi = CoxModelParams::new(
            params.lambda.clone(),
            params.kappa,
            params.sigma,
            [[0.0; 2]; 3],
        )
        .unwrap();
        let parents = ParentDraws {
            per_type: [vec![0.5, 0.5], vec![], vec![]],
        };
        assert_abs_diff_eq!(compound_field(&parents, &no_xi, 0, &[0.0, 0.0], 4.0), 1.0);
        // Single parent of type 1 at x with ξ_{1→2} = 0.7:
        // prefactor · (1 + 0.7).
        let parents_at_x = ParentDraws {
            per_type: [vec![-0.3, 0.9], vec![], vec![]],
        };
        let got = compound_field(&parents_at_x, &params, 1, &[-0.3, 0.9], 4.0);
        let prefactor = params.compound_prefactor(1);
        assert_abs_diff_eq!(got, prefactor * 1.7, epsilon = 1e-12);
        // And the prefactor itself: exp(-Σ_j κ_j ξ_{j→2}/φ_j(0)).
        let want = (-(0.25 * 0.7 * 2.0 * PI * 0.36 + 0.2 * 0.1 * 2.0 * PI * 1.0)).exp();
        assert_abs_diff_eq!(prefactor, want, epsilon = 1e-12);
    }

    /// Monte Carlo normalizer check E[Y_i(x)] = 1 over parent draws.
    #[test]
    fn compound_mean_is_one() {
        let params = CoxModelParams::preset(CoxPreset::M1);
        let w = Window::square(6.0, 2).unwrap();
        let config = SimulationConfig::default();
        let reps = 500;
        let x = [0.0, 0.0];
        let mut vals = Vec::with_capacity(reps);
        for seed in 0..reps {
            let mut rng = ChaCha8Rng::seed_from_u64(31000 + seed as u64);
            let parents = draw_parents(&params, &w, &config, &mut rng).unwrap();
            vals.push(compound_field(&parents, &params, 0, &x, config.kernel_cutoff));
        }
        let mean: f64 = vals.iter().sum::<f64>() / reps as f64;
        let var: f64 = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / reps as f64;
        let se = (var / reps as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn cox_sampler_is_deterministic() {
        let params = CoxModelParams::preset(CoxPreset::M1);
        let w = Window::square(10.0, 2).unwrap();
        let config = SimulationConfig::default();
        let a = sample_cox_pattern(&params, &w, &config, 77).unwrap();
        let b = sample_cox_pattern(&params, &w, &config, 77).unwrap();
        assert_eq!(a.pattern, b.pattern);
        let c = sample_cox_pattern(&params, &w, &config, 78).unwrap();
        assert_ne!(a.pattern, c.pattern);
    }

    /// First-moment identity λ^(i) = E[Λ_i]: M1 mean counts at A = 20 are
    /// (0.5·400, 1.5·400) = (200, 600).
    #[test]
    fn m1_mean_counts_match_first_moment() {
        let params = CoxModelParams::preset(CoxPreset::M1);
        let w = Window::square(20.0, 2).unwrap();
        let config = SimulationConfig {
            cell_size: 0.1,
            ..Default::default()
        };
        let reps = 100;
        let mut counts = [Vec::with_capacity(reps), Vec::with_capacity(reps)];
        for seed in 0..reps {
            let sim = sample_cox_pattern(&params, &w, &config, 400 + seed as u64).unwrap();
            let c = sim.pattern.counts_by_type();
            counts[0].push(c[0] as f64);
            counts[1].push(c[1] as f64);
        }
        for (j, want) in [(0usize, 200.0), (1usize, 600.0)] {
            let mean: f64 = counts[j].iter().sum::<f64>() / reps as f64;
            let var: f64 =
                counts[j].iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / reps as f64;
            let se = (var / reps as f64).sqrt();
            assert!(
                (mean - want).abs() < 3.0 * se,
                "type {j}: mean {mean}, want {want}, se {se}"
            );
        }
    }

    /// Degenerate switch: unit shot-noise and ξ ≡ 0 reduce the sampler to
    /// an inhomogeneous Poisson process with mean |D| ∫ λ(u) du.
    #[test]
    fn degenerate_switch_matches_poisson_integral() {
        let lambda = CoxModelParams::preset(CoxPreset::M2).lambda;
        let params = CoxModelParams::new(
            lambda.clone(),
            [0.25, 0.75, 0.2],
            [0.6, 0.3, 1.0],
            [[0.0; 2]; 3],
        )
        .unwrap();
        let w = Window::square(10.0, 2).unwrap();
        let config = SimulationConfig {
            unit_shot_noise: true,
            cell_size: 0.05,
            ..Default::default()
        };
        // Riemann integral of λ^(1) over the unit cube.
        let n = 400;
        let mut integral = 0.0;
        for i in 0..n {
            for j in 0..n {
                let u = [
                    -0.5 + (i as f64 + 0.5) / n as f64,
                    -0.5 + (j as f64 + 0.5) / n as f64,
                ];
                integral += lambda.evaluate_unchecked(&u, 0) / (n * n) as f64;
            }
        }
        let want = integral * w.volume();
        let reps = 200;
        let mut vals = Vec::with_capacity(reps);
        for seed in 0..reps {
            let sim = sample_cox_pattern(&params, &w, &config, 7000 + seed as u64).unwrap();
            vals.push(sim.pattern.counts_by_type()[0] as f64);
        }
        let mean: f64 = vals.iter().sum::<f64>() / reps as f64;
        let se = (want / reps as f64).sqrt();
        assert!((mean - want).abs() < 3.0 * se, "mean {mean}, want {want}");
    }

    #[test]
    fn closed_form_l2_limits() {
        let params = CoxModelParams::preset(CoxPreset::M1);
        // Large separation: all entries vanish.
        let far = closed_form_l2(&params, &[30.0, 0.0]);
        for v in far.iter() {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-12);
        }
        // No cross links: ξ_{1→2} = ξ_{2→1} = 0 and ξ_{3→1} ξ_{3→2} = 0.
        let independent = CoxModelParams::new(
            params.lambda.clone(),
            params.kappa,
            params.sigma,
            [[0.0, 0.0], [0.0, 0.0], [0.3, 0.0]],
        )
        .unwrap();
        for r in [0.0, 0.4, 1.3] {
            let l = closed_form_l2(&independent, &[r, 0.0]);
            assert_abs_diff_eq!(l[(0, 1)], 0.0, epsilon = 1e-14);
        }
    }

    /// Quadrature oracle for c_i(x) = φ(0)^{-2} ∫ φ(x+u) φ(u) du, then the
    /// closed-form L₂ at the origin frozen as regression constants.
    #[test]
    fn closed_form_l2_matches_quadrature_oracle() {
        // Oracle: 2-D Riemann integration of the kernel overlap.
        let overlap_quad = |sigma: f64, r: f64| {
            let half = 6.0 * sigma;
            let n = 600;
            let h = 2.0 * half / n as f64;
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let ux = -half + (i as f64 + 0.5) * h;
                    let uy = -half + (j as f64 + 0.5) * h;
                    let du = (ux * ux + uy * uy).sqrt();
                    let dv = ((ux + r) * (ux + r) + uy * uy).sqrt();
                    acc += gaussian_kernel(sigma, du) * gaussian_kernel(sigma, dv) * h * h;
                }
            }
            acc / kernel_peak(sigma).powi(2)
        };
        for sigma in [0.3, 0.6, 1.0] {
            for r in [0.0, 0.5, 1.5] {
                assert_abs_diff_eq!(kernel_overlap(sigma, r), overlap_quad(sigma, r), epsilon = 1e-8);
            }
        }
        // Frozen regression constants at x = 0 for the M1 preset, computed
        // once from the oracle above.
        let params = CoxModelParams::preset(CoxPreset::M1);
        let l0 = closed_form_l2(&params, &[0.0, 0.0]);
        assert_abs_diff_eq!(l0[(0, 0)], 1.367_454_808, epsilon = 1e-6);
        assert_abs_diff_eq!(l0[(0, 1)], 0.994_747_957, epsilon = 1e-6);
        assert_abs_diff_eq!(l0[(0, 1)], l0[(1, 0)], epsilon = 1e-14);
        // M3 flips the cross sign at the origin.
        let m3 = CoxModelParams::preset(CoxPreset::M3);
        assert!(closed_form_l2(&m3, &[0.0, 0.0])[(0, 1)] < 0.0);
    }

    #[test]
    fn reweighted_covariance_feeds_theory_layer() {
        let params = CoxModelParams::preset(CoxPreset::M1);
        let cov = reweighted_covariance(&params).unwrap();
        assert!(cov.is_isotropic());
        for r in [0.0, 1.0, 2.5] {
            let direct = closed_form_l2(&params, &[r, 0.0]);
            assert_abs_diff_eq!(cov.eval(0, 0, &[r, 0.0]), direct[(0, 0)], epsilon = 1e-14);
            assert_abs_diff_eq!(cov.eval(0, 1, &[0.0, r]), direct[(0, 1)], epsilon = 1e-14);
        }
    }

    #[test]
    fn reweighting_identity_when_intensity_is_one() {
        // λ ≡ 1: k = 1 and p ≡ 1, the pattern passes through unchanged.
        let w = Window::square(8.0, 2).unwrap();
        let lambda = IntensityModel::constant(vec![1.0]).unwrap();
        let sim = sample_poisson_pattern(&lambda, &w, 5).unwrap();
        let rew = reweight_by_thinning(&sim, &lambda, 99).unwrap();
        assert_eq!(rew, sim.pattern);
    }

    #[test]
    fn reweighting_rejects_observed_patterns() {
        let w = Window::square(4.0, 2).unwrap();
        let pattern = MultitypePattern::new(w, 1, vec![0.0, 0.0], vec![0]).unwrap();
        let sim = SimulatedPattern::observed(pattern);
        let lambda = IntensityModel::constant(vec![1.0]).unwrap();
        let err = reweight_by_thinning(&sim, &lambda, 1).unwrap_err();
        assert!(matches!(err, SimulationError::UnsupportedOperation(_)));
    }

    /// Campbell oracle: reweighting an inhomogeneous Poisson pattern with
    /// its true intensity yields mean count |D|.
    #[test]
    fn reweighted_poisson_has_unit_intensity() {
        let w = Window::square(10.0, 2).unwrap();
        let m2_lambda1 = IntensityModel::log_linear(
            vec![crate::intensity::BasisFn::Const, crate::intensity::BasisFn::X1Sq,
                 crate::intensity::BasisFn::X2Sq],
            vec![vec![3.0_f64.ln(), -2.0, -2.0]],
        )
        .unwrap();
        let reps = 200;
        let mut vals = Vec::with_capacity(reps);
        for seed in 0..reps {
            let sim = sample_poisson_pattern(&m2_lambda1, &w, 60_000 + seed as u64).unwrap();
            let rew = reweight_by_thinning(&sim, &m2_lambda1, 70_000 + seed as u64).unwrap();
            vals.push(rew.len() as f64);
        }
        let mean: f64 = vals.iter().sum::<f64>() / reps as f64;
        let var: f64 = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / reps as f64;
        let se = (var / reps as f64).sqrt();
        let want = w.volume();
        assert!(
            (mean - want).abs() < 3.0 * se,
            "mean {mean}, want {want}, se {se}"
        );
    }
}
