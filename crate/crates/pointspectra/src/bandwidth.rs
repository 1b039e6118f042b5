//! Bandwidth selection for the kernel pseudo-spectrum estimator: the
//! MSE-rate rule b ∝ |D_n|^{-1/(d+4)} and the cross-validated spectral
//! divergence minimizer.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{CMat, FrequencyGrid, MultitypePattern, Window};
use crate::intensity::IntensityModel;
use crate::spectral::{
    feasible_periodogram, kernel_smooth_field, KernelKind, KernelSpec, Periodogram, SpectralError,
};
use crate::taper::Taper;

#[derive(Debug, Error)]
pub enum BandwidthError {
    #[error("the optimal-bandwidth rate rule covers dimensions d <= 4, got {0}")]
    UnsupportedDimension(usize),
    #[error("invalid cross-validation configuration: {0}")]
    InvalidConfig(String),
    #[error("leave-one-out smoother singular at node {node:?} for bandwidth {bandwidth}")]
    SingularSmoother { node: Vec<i64>, bandwidth: f64 },
    #[error("no bandwidth in the search interval produced a finite objective")]
    SelectionFailure,
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

// ---------------------------------------------------------------------------
// Optimal-rate rule
// ---------------------------------------------------------------------------

/// The MSE-optimal bandwidth |D_n|^{-1/(d+4)} (proportionality constant 1),
/// floored at the default computational grid spacing: when the raw value
/// falls below max_j 1.5π/A_j it is bumped to that spacing rounded up to the
/// next multiple of 0.05 (the simulation convention sets 0.5 for A = 10).
pub fn optimal_bandwidth(window: &Window) -> Result<f64, BandwidthError> {
    let d = window.dim();
    if d > 4 {
        return Err(BandwidthError::UnsupportedDimension(d));
    }
    let raw = window.volume().powf(-1.0 / (d as f64 + 4.0));
    let spacing = window
        .side_lengths()
        .iter()
        .map(|&a| 1.5 * PI / a)
        .fold(0.0, f64::max);
    if raw >= spacing {
        Ok(raw)
    } else {
        Ok((spacing / 0.05).ceil() * 0.05)
    }
}

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

/// Configuration of the cross-validated spectral divergence.
#[derive(Debug, Clone)]
pub struct CvConfig {
    /// Half-width of the frequency box W = [-w, w]^d over which L(b) sums.
    pub domain_halfwidth: f64,
    /// Nodes with ‖ω‖∞ below this radius are excluded from the sum.
    pub exclusion_radius: f64,
    /// Bandwidth search interval.
    pub b_min: f64,
    pub b_max: f64,
    /// Ridge multiplier: λ = ridge · trace/m is added to the diagonal of the
    /// leave-one-out matrix before inversion.
    pub ridge: f64,
    /// Coarse scan size before golden-section refinement.
    pub scan_points: usize,
    /// Absolute tolerance on b for the golden-section refinement.
    pub golden_tol: f64,
    pub kernel: KernelKind,
}

impl CvConfig {
    /// Simulation-study defaults for a given grid: W = [-1.5π, 1.5π]^d,
    /// exclusion 0.1π, search from just above the grid spacing to 2.4.
    pub fn for_grid(grid: &FrequencyGrid) -> Self {
        let spacing = grid.max_spacing();
        let b_min = 1.05 * spacing;
        Self {
            domain_halfwidth: 1.5 * PI,
            exclusion_radius: 0.1 * PI,
            b_min,
            b_max: (2.4_f64).max(2.0 * b_min),
            ridge: 1e-8,
            scan_points: 20,
            golden_tol: 0.005,
            kernel: KernelKind::Triangular,
        }
    }

    fn validate(&self, grid: &FrequencyGrid) -> Result<(), BandwidthError> {
        let spacing = grid.max_spacing();
        if self.b_min < spacing {
            return Err(BandwidthError::InvalidConfig(format!(
                "b_min {} is below the grid spacing {}",
                self.b_min, spacing
            )));
        }
        if self.b_max > self.domain_halfwidth {
            return Err(BandwidthError::InvalidConfig(format!(
                "b_max {} exceeds half the extent of W ({})",
                self.b_max, self.domain_halfwidth
            )));
        }
        if !(self.b_min < self.b_max) {
            return Err(BandwidthError::InvalidConfig(format!(
                "empty search interval [{}, {}]",
                self.b_min, self.b_max
            )));
        }
        if self.scan_points < 2 {
            return Err(BandwidthError::InvalidConfig(
                "scan needs at least 2 points".into(),
            ));
        }
        Ok(())
    }

    fn included_nodes(&self, grid: &FrequencyGrid) -> Vec<usize> {
        (0..grid.len())
            .filter(|&idx| {
                let norm = grid.node_norm_inf(idx);
                norm <= self.domain_halfwidth + 1e-12 && norm >= self.exclusion_radius - 1e-12
            })
            .collect()
    }
}

/// Tr{ Î F̂⁻¹ } + log det F̂ for one node, after adding the ridge.
fn node_divergence(
    periodogram_mat: &CMat,
    loo_mat: &CMat,
    ridge: f64,
) -> Option<f64> {
    let m = loo_mat.nrows();
    let trace: f64 = loo_mat.diagonal().iter().map(|c| c.re).sum();
    let lam = ridge * trace / m as f64;
    let mut reg = loo_mat.clone();
    for i in 0..m {
        reg[(i, i)] += Complex64::new(lam, 0.0);
    }
    let chol = reg.cholesky()?;
    // log det from the Cholesky factor diagonal.
    let log_det: f64 = (0..m).map(|i| 2.0 * chol.l()[(i, i)].re.ln()).sum();
    let inv = chol.inverse();
    let mut tr = 0.0;
    for i in 0..m {
        for j in 0..m {
            tr += (periodogram_mat[(i, j)] * inv[(j, i)]).re;
        }
    }
    Some(tr + log_det)
}

/// The cross-validated spectral divergence
/// L(b) = Σ_{ω_t ∈ W} [ Tr{Î(ω_t) F̂^{(-1)}(ω_t)⁻¹} + log det F̂^{(-1)}(ω_t) ],
/// with F̂^{(-1)} the leave-one-out smoother at bandwidth b.
pub fn cv_objective_for_periodogram(
    periodogram: &Periodogram,
    config: &CvConfig,
    b: f64,
) -> Result<f64, BandwidthError> {
    let grid = periodogram.grid();
    config.validate(grid)?;
    if !(b >= config.b_min && b <= config.b_max) {
        return Err(BandwidthError::InvalidConfig(format!(
            "bandwidth {b} outside the search interval [{}, {}]",
            config.b_min, config.b_max
        )));
    }
    let spec = KernelSpec::with_kind(config.kernel.clone(), vec![b; grid.dim()])?;
    let loo = kernel_smooth_field(periodogram.field(), &spec, true)?;
    let nodes = config.included_nodes(grid);
    let mut total = 0.0;
    for idx in nodes {
        match node_divergence(periodogram.field().value(idx), loo.value(idx), config.ridge) {
            Some(v) => total += v,
            None => {
                return Err(BandwidthError::SingularSmoother {
                    node: grid.multi_index(idx),
                    bandwidth: b,
                })
            }
        }
    }
    Ok(total)
}

/// Spec-level entry point: build the feasible periodogram, then evaluate L(b).
pub fn cv_objective(
    pattern: &MultitypePattern,
    taper: &Taper,
    model: &IntensityModel,
    grid: &FrequencyGrid,
    config: &CvConfig,
    b: f64,
) -> Result<f64, BandwidthError> {
    let p = feasible_periodogram(pattern, taper, model, grid)?;
    cv_objective_for_periodogram(&p, config, b)
}

/// Full diagnostic curve of a bandwidth selection run.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct BandwidthSelection {
    pub b_cv: f64,
    /// The coarse-scan (and refinement) evaluations, sorted by b.
    pub curve: Vec<(f64, f64)>,
}

/// Minimize L(b): a log-spaced coarse scan followed by golden-section
/// refinement around the best scan point, to absolute tolerance
/// `config.golden_tol` on b. Returns the minimizer and the scan curve.
pub fn select_bandwidth_cv(
    periodogram: &Periodogram,
    config: &CvConfig,
) -> Result<BandwidthSelection, BandwidthError> {
    let grid = periodogram.grid();
    config.validate(grid)?;
    let n = config.scan_points;
    let (ln_lo, ln_hi) = (config.b_min.ln(), config.b_max.ln());
    let bs: Vec<f64> = (0..n)
        .map(|i| (ln_lo + (ln_hi - ln_lo) * i as f64 / (n - 1) as f64).exp())
        .collect();
    let evals: Vec<(f64, Option<f64>)> = bs
        .par_iter()
        .map(|&b| {
            let l = cv_objective_for_periodogram(periodogram, config, b).ok();
            (b, l.filter(|v| v.is_finite()))
        })
        .collect();
    let mut curve: Vec<(f64, f64)> = evals
        .iter()
        .filter_map(|&(b, l)| l.map(|v| (b, v)))
        .collect();
    if curve.is_empty() {
        return Err(BandwidthError::SelectionFailure);
    }
    let best_pos = evals
        .iter()
        .enumerate()
        .filter_map(|(i, &(_, l))| l.map(|v| (i, v)))
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    // Bracket around the best scan point, clamped to the interval.
    let lo = if best_pos == 0 { config.b_min } else { bs[best_pos - 1] };
    let hi = if best_pos + 1 >= n { config.b_max } else { bs[best_pos + 1] };
    let eval = |b: f64| -> f64 {
        cv_objective_for_periodogram(periodogram, config, b)
            .ok()
            .filter(|v| v.is_finite())
            .unwrap_or(f64::INFINITY)
    };
    let (b_ref, l_ref) = golden_section(&eval, lo, hi, config.golden_tol);
    curve.push((b_ref, l_ref));
    curve.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let &(b_cv, _) = curve
        .iter()
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .unwrap();
    Ok(BandwidthSelection {
        b_cv: b_cv.max(config.b_min),
        curve,
    })
}

fn golden_section(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    (mid, f(mid))
}
