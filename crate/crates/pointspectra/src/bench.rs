//! Monte Carlo study harness: integrated squared bias / MSE of the spectrum
//! estimators against analytic truth, bandwidth summaries, radial averaging,
//! empirical coherence, and a kernel pair-correlation estimator for
//! simulator validation.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bandwidth::{optimal_bandwidth, select_bandwidth_cv, BandwidthError, CvConfig};
use crate::geometry::{assert_hermitian_psd, HermitianField, MultitypePattern, Window};
use crate::intensity::{fit_intensity, IntensityError, IntensityFamily, IntensityModel};
use crate::sim::{
    sample_cox_pattern, sample_poisson_pattern, CoxModelParams, CoxPreset, SimulationConfig,
    SimulationError,
};
use crate::spectral::{
    feasible_periodogram, kernel_smooth, KernelSpec, SpectralError, SpectrumEstimate,
};
use crate::taper::{Taper, TaperError};
use crate::theory::{
    coherence_of, intensity_taper_moments, AnalyticPseudoSpectrum, TheoryError,
};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid study configuration: {0}")]
    InvalidConfig(String),
    #[error("truth entry ({0}, {1}) vanishes on the whole metric domain")]
    DegenerateTruth(usize, usize),
    #[error("estimate grids disagree with the truth grid")]
    GridMismatch,
    #[error("singular plug-in reweighted spectrum")]
    SingularSpectrum,
    #[error(transparent)]
    Sim(#[from] SimulationError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Theory(#[from] TheoryError),
    #[error(transparent)]
    Bandwidth(#[from] BandwidthError),
    #[error(transparent)]
    Intensity(#[from] IntensityError),
    #[error(transparent)]
    Taper(#[from] TaperError),
}

// ---------------------------------------------------------------------------
// Integrated bias / MSE metrics
// ---------------------------------------------------------------------------

/// Frequency band W_o = {ω : min ≤ ‖ω‖∞ ≤ max} over which metrics average.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricDomain {
    pub min_norm: f64,
    pub max_norm: f64,
}

impl Default for MetricDomain {
    fn default() -> Self {
        Self {
            min_norm: 0.1 * PI,
            max_norm: 1.5 * PI,
        }
    }
}

/// A metric value plus the number of nodes skipped because the truth entry
/// was numerically zero there.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MetricValue {
    pub value: f64,
    pub skipped_nodes: usize,
}

/// Threshold below which a truth entry is treated as zero and the node is
/// skipped (near-zero cross truth inflates relative errors).
pub const TRUTH_FLOOR: f64 = 1e-12;

fn domain_nodes(field: &HermitianField, domain: &MetricDomain) -> Vec<usize> {
    let grid = field.grid();
    (0..grid.len())
        .filter(|&idx| {
            let n = grid.node_norm_inf(idx);
            n >= domain.min_norm - 1e-12 && n <= domain.max_norm + 1e-12
        })
        .collect()
}

/// Integrated squared relative bias of the real part:
/// mean over W_o nodes of (mean_r Re F̂_r / F - 1)².
pub fn ibias2(
    estimates: &[HermitianField],
    truth: &HermitianField,
    entry: (usize, usize),
    domain: &MetricDomain,
) -> Result<MetricValue, BenchError> {
    metric_impl(estimates, truth, entry, domain, false)
}

/// Integrated MSE: mean over W_o nodes of mean_r (Re F̂_r / F - 1)².
pub fn imse(
    estimates: &[HermitianField],
    truth: &HermitianField,
    entry: (usize, usize),
    domain: &MetricDomain,
) -> Result<MetricValue, BenchError> {
    metric_impl(estimates, truth, entry, domain, true)
}

fn metric_impl(
    estimates: &[HermitianField],
    truth: &HermitianField,
    entry: (usize, usize),
    domain: &MetricDomain,
    mse: bool,
) -> Result<MetricValue, BenchError> {
    if estimates.len() < 2 {
        return Err(BenchError::InvalidConfig(
            "metrics need at least 2 replicates".into(),
        ));
    }
    for est in estimates {
        if est.grid() != truth.grid() {
            return Err(BenchError::GridMismatch);
        }
    }
    let nodes = domain_nodes(truth, domain);
    let reps = estimates.len() as f64;
    let mut total = 0.0;
    let mut used = 0usize;
    let mut skipped = 0usize;
    for &idx in &nodes {
        let f = truth.value(idx)[(entry.0, entry.1)].re;
        if f.abs() < TRUTH_FLOOR {
            skipped += 1;
            continue;
        }
        if mse {
            let mut acc = 0.0;
            for est in estimates {
                let ratio = est.value(idx)[(entry.0, entry.1)].re / f;
                acc += (ratio - 1.0) * (ratio - 1.0);
            }
            total += acc / reps;
        } else {
            let mut mean_ratio = 0.0;
            for est in estimates {
                mean_ratio += est.value(idx)[(entry.0, entry.1)].re / f;
            }
            mean_ratio /= reps;
            total += (mean_ratio - 1.0) * (mean_ratio - 1.0);
        }
        used += 1;
    }
    if used == 0 {
        return Err(BenchError::DegenerateTruth(entry.0, entry.1));
    }
    Ok(MetricValue {
        value: total / used as f64,
        skipped_nodes: skipped,
    })
}

// ---------------------------------------------------------------------------
// Radial averaging
// ---------------------------------------------------------------------------

/// Bin the real part of one entry by ‖ω‖₂ into rings of the given width;
/// empty rings are omitted. Ring width must exceed the grid spacing.
pub fn radial_average(
    field: &HermitianField,
    entry: (usize, usize),
    ring_width: f64,
) -> Result<Vec<(f64, f64)>, BenchError> {
    let grid = field.grid();
    if ring_width <= grid.max_spacing() {
        return Err(BenchError::InvalidConfig(format!(
            "ring width {ring_width} must exceed the grid spacing {}",
            grid.max_spacing()
        )));
    }
    let mut sums: Vec<(f64, usize)> = Vec::new();
    for idx in 0..grid.len() {
        let node = grid.node(&grid.multi_index(idx));
        let r = node.iter().map(|c| c * c).sum::<f64>().sqrt();
        let bin = (r / ring_width) as usize;
        if sums.len() <= bin {
            sums.resize(bin + 1, (0.0, 0));
        }
        sums[bin].0 += field.value(idx)[(entry.0, entry.1)].re;
        sums[bin].1 += 1;
    }
    Ok(sums
        .into_iter()
        .enumerate()
        .filter(|(_, (_, n))| *n > 0)
        .map(|(bin, (s, n))| ((bin as f64 + 0.5) * ring_width, s / n as f64))
        .collect())
}

// ---------------------------------------------------------------------------
// Empirical coherence
// ---------------------------------------------------------------------------

/// Plug-in coherence/partial-coherence of the intensity reweighted process:
/// 𝓕⁻¹(L₂)-hat = H_{h,2}(F̂ - (2π)^{-d} H_{h,2}^{-1} diag Ĥ) ⊘ Ĥ_{λλᵀ},
/// F̃-hat = (2π)^{-d} I + 𝓕⁻¹(L₂)-hat, evaluated on a coarse sub-grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoherenceReport {
    /// Multi-indices of the evaluation nodes.
    pub nodes: Vec<Vec<i64>>,
    /// R̂ matrices per node (entries may exceed 1 when PSD fails).
    pub coherence: Vec<Vec<Vec<f64>>>,
    /// D̂ matrices per node.
    pub partial_coherence: Vec<Vec<Vec<f64>>>,
    /// Per-pair maxima of R̂² over the evaluation nodes.
    pub max_r_squared: Vec<Vec<f64>>,
    /// Per-pair maxima of D̂².
    pub max_d_squared: Vec<Vec<f64>>,
    /// False when some plug-in F̃-hat failed the PSD check; values are then
    /// reported unclipped.
    pub psd_ok: bool,
}

/// Number of evaluation nodes per axis for the coherence maxima (7 x 7 = 49
/// frequencies on the default grid).
pub const COHERENCE_NODES_PER_AXIS: usize = 7;

pub fn empirical_coherence(
    spectrum: &SpectrumEstimate,
    fitted: &IntensityModel,
    taper: &Taper,
) -> Result<CoherenceReport, BenchError> {
    let field = &spectrum.field;
    let grid = field.grid();
    let d = grid.dim();
    let m = field.num_types();
    let h2 = taper.h2();
    let (diag_m, pair_m) = intensity_taper_moments(taper, fitted)?;
    let pref = (2.0 * PI).powi(-(d as i32));

    // Coarse evaluation sub-grid: evenly spaced indices per axis.
    let mut axis_indices: Vec<Vec<i64>> = Vec::with_capacity(d);
    for j in 0..d {
        let k = grid.k_max()[j];
        let n = COHERENCE_NODES_PER_AXIS.min((2 * k + 1) as usize);
        let idx: Vec<i64> = (0..n)
            .map(|i| {
                let f = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
                (-k as f64 + f * (2 * k) as f64).round() as i64
            })
            .collect();
        axis_indices.push(idx);
    }
    let mut nodes: Vec<Vec<i64>> = vec![vec![]];
    for axis in &axis_indices {
        let mut next = Vec::new();
        for base in &nodes {
            for &t in axis {
                let mut k = base.clone();
                k.push(t);
                next.push(k);
            }
        }
        nodes = next;
    }

    let mut coherence = Vec::with_capacity(nodes.len());
    let mut partial = Vec::with_capacity(nodes.len());
    let mut max_r2 = DMatrix::<f64>::zeros(m, m);
    let mut max_d2 = DMatrix::<f64>::zeros(m, m);
    let mut psd_ok = true;
    for k in &nodes {
        let idx = grid.flat_index(k).expect("node on grid");
        let fhat = field.value(idx);
        // F-tilde-hat = (2π)^{-d} I + H_{h,2}(F̂ - (2π)^{-d}H_{h,2}^{-1}diag Ĥ) ⊘ Ĥ_{λλᵀ}.
        let mut ftilde = crate::geometry::CMat::zeros(m, m);
        for a in 0..m {
            for b in 0..m {
                let mut v = fhat[(a, b)];
                if a == b {
                    v -= Complex64::new(pref * diag_m[a] / h2, 0.0);
                }
                let denom = pair_m[(a, b)];
                if denom.abs() < 1e-300 {
                    return Err(BenchError::SingularSpectrum);
                }
                ftilde[(a, b)] = v * (h2 / denom);
                if a == b {
                    ftilde[(a, b)] += Complex64::new(pref, 0.0);
                }
            }
        }
        if !assert_hermitian_psd(&ftilde, 1e-8 * (1.0 + ftilde.norm())) {
            psd_ok = false;
        }
        let r = coherence_of(&ftilde);
        // Ridge before inversion, as in the bandwidth module.
        let trace: f64 = ftilde.diagonal().iter().map(|c| c.re).sum();
        let mut reg = ftilde.clone();
        for i in 0..m {
            reg[(i, i)] += Complex64::new(1e-8 * trace.abs() / m as f64, 0.0);
        }
        let inv = reg.try_inverse().ok_or(BenchError::SingularSpectrum)?;
        let dm = coherence_of(&inv);
        for a in 0..m {
            for b in 0..m {
                max_r2[(a, b)] = max_r2[(a, b)].max(r[(a, b)] * r[(a, b)]);
                max_d2[(a, b)] = max_d2[(a, b)].max(dm[(a, b)] * dm[(a, b)]);
            }
        }
        coherence.push(matrix_rows(&r));
        partial.push(matrix_rows(&dm));
    }
    Ok(CoherenceReport {
        nodes,
        coherence,
        partial_coherence: partial,
        max_r_squared: matrix_rows(&max_r2),
        max_d_squared: matrix_rows(&max_d2),
        psd_ok,
    })
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Null Monte Carlo band for the coherence maxima: simulate independent
/// Poisson pairs under the fitted intensities, recompute max R̂², and return
/// the requested quantile.
#[allow(clippy::too_many_arguments)]
pub fn coherence_null_band(
    fitted: &IntensityModel,
    window: &Window,
    taper: &Taper,
    bandwidth: f64,
    grid_scale: f64,
    max_norm: f64,
    reps: usize,
    seed: u64,
    quantile: f64,
) -> Result<f64, BenchError> {
    let grid = crate::geometry::make_frequency_grid(window, grid_scale, max_norm)
        .map_err(|e| BenchError::InvalidConfig(e.to_string()))?;
    let maxima: Result<Vec<f64>, BenchError> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(rep as u64 + 1);
            let s = rng.random::<u64>();
            let sim = sample_poisson_pattern(fitted, window, s)?;
            let fit = fit_intensity(&sim.pattern, fitted.family(), 64)?;
            let p = feasible_periodogram(&sim.pattern, taper, &fit.model, &grid)?;
            let spec = KernelSpec::triangular_scalar(bandwidth, window.dim())?;
            let sm = kernel_smooth(&p, &spec)?;
            let rep = empirical_coherence(&sm, &fit.model, taper)?;
            let m = rep.max_r_squared.len();
            let mut worst = 0.0_f64;
            for a in 0..m {
                for b in 0..m {
                    if a != b {
                        worst = worst.max(rep.max_r_squared[a][b]);
                    }
                }
            }
            Ok(worst)
        })
        .collect();
    let mut maxima = maxima?;
    maxima.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = ((maxima.len() as f64 - 1.0) * quantile).round() as usize;
    Ok(maxima[pos])
}

// ---------------------------------------------------------------------------
// Pair correlation estimator (simulator validation)
// ---------------------------------------------------------------------------

/// Kernel (cross-)pair-correlation estimator with translation edge
/// correction: ĝ_{ij}(r) = Σ≠ k_b(r - ‖x-y‖) / (2πr λ_i(x) λ_j(y) Π(A_l - |Δ_l|)),
/// Epanechnikov kernel.
pub fn pcf_estimate(
    pattern: &MultitypePattern,
    lambda: &IntensityModel,
    type_i: usize,
    type_j: usize,
    radii: &[f64],
    bandwidth: f64,
) -> Result<Vec<f64>, BenchError> {
    let window = pattern.window();
    let d = window.dim();
    if d != 2 {
        return Err(BenchError::InvalidConfig(
            "the PCF estimator is implemented for d = 2".into(),
        ));
    }
    let sides = window.side_lengths();
    let mut out = vec![0.0; radii.len()];
    let mut ui = vec![0.0; d];
    let mut uj = vec![0.0; d];
    let r_hi = radii.iter().cloned().fold(0.0, f64::max) + bandwidth;
    for x in pattern.points_of_type(type_i) {
        window.to_unit_cube(x, &mut ui);
        let lam_i = lambda.evaluate_unchecked(&ui, type_i);
        for y in pattern.points_of_type(type_j) {
            if std::ptr::eq(x.as_ptr(), y.as_ptr()) {
                continue;
            }
            let dx = (x[0] - y[0]).abs();
            let dy = (x[1] - y[1]).abs();
            let dist = (dx * dx + dy * dy).sqrt();
            if dist > r_hi || dist == 0.0 {
                continue;
            }
            window.to_unit_cube(y, &mut uj);
            let lam_j = lambda.evaluate_unchecked(&uj, type_j);
            let translation = (sides[0] - dx) * (sides[1] - dy);
            for (slot, &r) in out.iter_mut().zip(radii.iter()) {
                let u = (dist - r) / bandwidth;
                if u.abs() < 1.0 {
                    let k = 0.75 * (1.0 - u * u) / bandwidth;
                    *slot += k / (2.0 * PI * r * lam_i * lam_j * translation);
                }
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Study harness
// ---------------------------------------------------------------------------

/// Which pseudo-spectrum estimators a study evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// The feasible periodogram.
    Raw,
    /// Kernel smoother at the MSE-rate bandwidth.
    KernelOpt,
    /// Kernel smoother at the cross-validated bandwidth.
    KernelCv,
    /// Test hook: the analytic truth itself (zero bias and MSE).
    InjectTruth,
}

impl EstimatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::Raw => "raw",
            EstimatorKind::KernelOpt => "kernel_opt",
            EstimatorKind::KernelCv => "kernel_cv",
            EstimatorKind::InjectTruth => "inject_truth",
        }
    }
}

/// Which first-order intensity model demeans the DFT.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntensityScheme {
    /// Fit the correctly specified family of the generating model.
    Correct,
    /// Fit a constant model (Î_SOS): misspecified for M2/M3.
    ConstantFit,
    /// No demeaning (Î_0): β ≡ 0.
    Zero,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyConfig {
    pub model: CoxPreset,
    pub sides: Vec<f64>,
    pub reps: usize,
    pub estimators: Vec<EstimatorKind>,
    pub intensity: IntensityScheme,
    pub taper_a: f64,
    pub grid_scale: f64,
    pub max_norm: f64,
    pub metric_domain: MetricDomain,
    pub cell_size: f64,
    pub seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            model: CoxPreset::M1,
            sides: vec![10.0, 20.0],
            reps: 50,
            estimators: vec![
                EstimatorKind::Raw,
                EstimatorKind::KernelOpt,
                EstimatorKind::KernelCv,
            ],
            intensity: IntensityScheme::Correct,
            taper_a: 0.025,
            grid_scale: 4.0 / 3.0,
            max_norm: 1.5 * PI,
            metric_domain: MetricDomain::default(),
            cell_size: 0.05,
            seed: 20240101,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellReport {
    pub side: f64,
    pub estimator: EstimatorKind,
    pub entry: (usize, usize),
    pub ibias2: f64,
    pub imse: f64,
    pub skipped_nodes: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BandwidthSummary {
    pub side: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub mean: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyReport {
    pub config: StudyConfig,
    pub cells: Vec<CellReport>,
    pub bandwidths: Vec<BandwidthSummary>,
    /// Optimal-rule bandwidth per side, for reference.
    pub optimal_bandwidths: Vec<(f64, f64)>,
    pub failures: Vec<String>,
    pub runtime_seconds: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() as f64 - 1.0);
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// The intensity family a scheme fits for a given generating model.
fn scheme_family(scheme: IntensityScheme, params: &CoxModelParams) -> Option<IntensityFamily> {
    match scheme {
        IntensityScheme::Correct => Some(params.lambda.family().clone()),
        IntensityScheme::ConstantFit => Some(IntensityFamily::Constant),
        IntensityScheme::Zero => None,
    }
}

struct RepOutput {
    fields: Vec<HermitianField>,
    b_cv: Option<f64>,
}

/// Run the full pipeline per replicate (simulate → fit → periodogram →
/// smoothers) and aggregate IBIAS²/IMSE per estimator and entry plus
/// bandwidth summaries. Deterministic given the config seed; per-replicate
/// failures are recorded and the study continues.
pub fn run_study(config: &StudyConfig) -> Result<StudyReport, BenchError> {
    let start = Instant::now();
    if config.reps < 2 {
        return Err(BenchError::InvalidConfig(
            "a study needs at least 2 replicates".into(),
        ));
    }
    if config.metric_domain.max_norm > config.max_norm {
        return Err(BenchError::InvalidConfig(
            "metric domain extends beyond the frequency grid".into(),
        ));
    }
    let params = CoxModelParams::preset(config.model);
    let taper = Taper::from_parameter(config.taper_a, 2)?;
    let sim_config = SimulationConfig {
        cell_size: config.cell_size,
        ..Default::default()
    };
    let mut cells = Vec::new();
    let mut bandwidths = Vec::new();
    let mut optimal_bandwidths = Vec::new();
    let mut failures = Vec::new();

    for (side_idx, &side) in config.sides.iter().enumerate() {
        let window =
            Window::square(side, 2).map_err(|e| BenchError::InvalidConfig(e.to_string()))?;
        let grid = crate::geometry::make_frequency_grid(&window, config.grid_scale, config.max_norm)
            .map_err(|e| BenchError::InvalidConfig(e.to_string()))?;
        let truth =
            AnalyticPseudoSpectrum::new(taper.clone(), params.lambda.clone(), crate::sim::reweighted_covariance(&params)?)?;
        let truth_field = truth.eval_grid(&grid)?;
        let b_opt = optimal_bandwidth(&window)?;
        optimal_bandwidths.push((side, b_opt));
        let mut cv_config = CvConfig::for_grid(&grid);
        cv_config.exclusion_radius = config.metric_domain.min_norm;
        cv_config.domain_halfwidth = config.metric_domain.max_norm;

        let rep_results: Vec<Result<RepOutput, String>> = (0..config.reps)
            .into_par_iter()
            .map(|rep| {
                run_replicate(
                    config,
                    &params,
                    &taper,
                    &sim_config,
                    &window,
                    &grid,
                    &truth_field,
                    &cv_config,
                    b_opt,
                    side_idx,
                    rep,
                )
                .map_err(|e| format!("side {side} replicate {rep}: {e}"))
            })
            .collect();

        let mut per_estimator: Vec<Vec<HermitianField>> =
            vec![Vec::new(); config.estimators.len()];
        let mut cv_values = Vec::new();
        for res in rep_results {
            match res {
                Ok(out) => {
                    for (slot, f) in per_estimator.iter_mut().zip(out.fields) {
                        slot.push(f);
                    }
                    if let Some(b) = out.b_cv {
                        cv_values.push(b);
                    }
                }
                Err(msg) => failures.push(msg),
            }
        }

        let m = params.lambda.num_types();
        for (e_idx, est) in config.estimators.iter().enumerate() {
            let fields = &per_estimator[e_idx];
            if fields.len() < 2 {
                failures.push(format!(
                    "side {side}: estimator {} has {} successful replicates, metrics skipped",
                    est.name(),
                    fields.len()
                ));
                continue;
            }
            for i in 0..m {
                for j in i..m {
                    let b = ibias2(fields, &truth_field, (i, j), &config.metric_domain)?;
                    let v = imse(fields, &truth_field, (i, j), &config.metric_domain)?;
                    // Same-sample variance decomposition.
                    debug_assert!(v.value >= b.value - 1e-12);
                    cells.push(CellReport {
                        side,
                        estimator: *est,
                        entry: (i, j),
                        ibias2: b.value,
                        imse: v.value,
                        skipped_nodes: b.skipped_nodes,
                    });
                }
            }
        }
        if !cv_values.is_empty() {
            let mut sorted = cv_values.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            bandwidths.push(BandwidthSummary {
                side,
                q1: quantile(&sorted, 0.25),
                median: quantile(&sorted, 0.5),
                q3: quantile(&sorted, 0.75),
                mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
                values: cv_values,
            });
        }
    }

    Ok(StudyReport {
        config: config.clone(),
        cells,
        bandwidths,
        optimal_bandwidths,
        failures,
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}

#[allow(clippy::too_many_arguments)]
fn run_replicate(
    config: &StudyConfig,
    params: &CoxModelParams,
    taper: &Taper,
    sim_config: &SimulationConfig,
    window: &Window,
    grid: &crate::geometry::FrequencyGrid,
    truth_field: &HermitianField,
    cv_config: &CvConfig,
    b_opt: f64,
    side_idx: usize,
    rep: usize,
) -> Result<RepOutput, BenchError> {
    // Counter-based replicate seed: independent of scheduling order.
    let mut seeder = ChaCha8Rng::seed_from_u64(config.seed);
    seeder.set_stream(((side_idx as u64) << 32) | rep as u64);
    let sim_seed = seeder.random::<u64>();
    let sim = sample_cox_pattern(params, window, sim_config, sim_seed)?;
    let model = match scheme_family(config.intensity, params) {
        Some(family) => fit_intensity(&sim.pattern, &family, 64)?.model,
        None => IntensityModel::zero(2),
    };
    let periodogram = feasible_periodogram(&sim.pattern, taper, &model, grid)?;
    let mut fields = Vec::with_capacity(config.estimators.len());
    let mut b_cv = None;
    for est in &config.estimators {
        let field = match est {
            EstimatorKind::Raw => periodogram.field().clone(),
            EstimatorKind::KernelOpt => {
                let spec = KernelSpec::triangular_scalar(b_opt, 2)?;
                kernel_smooth(&periodogram, &spec)?.field
            }
            EstimatorKind::KernelCv => {
                let sel = select_bandwidth_cv(&periodogram, cv_config)?;
                b_cv = Some(sel.b_cv);
                let spec = KernelSpec::triangular_scalar(sel.b_cv, 2)?;
                kernel_smooth(&periodogram, &spec)?.field
            }
            EstimatorKind::InjectTruth => truth_field.clone(),
        };
        fields.push(field);
    }
    Ok(RepOutput { fields, b_cv })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use crate::geometry::{make_frequency_grid, CMat};

    fn constant_field(grid: &crate::geometry::FrequencyGrid, c: f64) -> HermitianField {
        let values = vec![CMat::from_element(1, 1, Complex64::new(c, 0.0)); grid.len()];
        HermitianField::new(grid.clone(), 1, values).unwrap()
    }

    #[test]
    fn metrics_zero_for_truth_equal_estimates() {
        let w = Window::square(10.0, 2).unwrap();
        let grid = make_frequency_grid(&w, 4.0 / 3.0, 1.5 * PI).unwrap();
        let truth = constant_field(&grid, 2.0);
        let ests = vec![truth.clone(), truth.clone()];
        let dom = MetricDomain::default();
        assert_eq!(ibias2(&ests, &truth, (0, 0), &dom).unwrap().value, 0.0);
        assert_eq!(imse(&ests, &truth, (0, 0), &dom).unwrap().value, 0.0);
    }

    #[test]
    fn single_scaled_estimate_gives_unit_bias() {
        // Estimates all equal to 2x truth: IBIAS² = (2-1)² = 1.
        let w = Window::square(10.0, 2).unwrap();
        let grid = make_frequency_grid(&w, 4.0 / 3.0, 1.5 * PI).unwrap();
        let truth = constant_field(&grid, 1.5);
        let ests = vec![constant_field(&grid, 3.0), constant_field(&grid, 3.0)];
        let dom = MetricDomain::default();
        assert_abs_diff_eq!(ibias2(&ests, &truth, (0, 0), &dom).unwrap().value, 1.0);
        assert_abs_diff_eq!(imse(&ests, &truth, (0, 0), &dom).unwrap().value, 1.0);
    }

    #[test]
    fn hand_computed_two_replicate_example() {
        // Truth 1, replicates {0.5, 1.5}: mean ratio 1 so IBIAS² = 0 while
        // IMSE = ((0.5-1)² + (1.5-1)²)/2 = 0.25.
        let w = Window::square(6.0, 2).unwrap();
        let grid = make_frequency_grid(&w, 4.0 / 3.0, PI).unwrap();
        let truth = constant_field(&grid, 1.0);
        let ests = vec![constant_field(&grid, 0.5), constant_field(&grid, 1.5)];
        let dom = MetricDomain {
            min_norm: 0.0,
            max_norm: PI,
        };
        assert_abs_diff_eq!(
            ibias2(&ests, &truth, (0, 0), &dom).unwrap().value,
            0.0,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            imse(&ests, &truth, (0, 0), &dom).unwrap().value,
            0.25,
            epsilon = 1e-14
        );
    }

    #[test]
    fn imse_dominates_ibias2_and_scaling_bound() {
        // Same-sample variance decomposition plus the bias lower bound
        // IMSE ≥ ε² when every estimate is (1+ε) x truth.
        let w = Window::square(6.0, 2).unwrap();
        let grid = make_frequency_grid(&w, 4.0 / 3.0, PI).unwrap();
        let truth = constant_field(&grid, 1.0);
        let eps = 0.3;
        let ests = vec![
            constant_field(&grid, 1.0 + eps),
            constant_field(&grid, 1.0 + eps),
            constant_field(&grid, 0.9),
        ];
        let dom = MetricDomain {
            min_norm: 0.0,
            max_norm: PI,
        };
        let b = ibias2(&ests, &truth, (0, 0), &dom).unwrap().value;
        let v = imse(&ests, &truth, (0, 0), &dom).unwrap().value;
        assert!(v >= b - 1e-12);
        let all_scaled = vec![
            constant_field(&grid, 1.0 + eps),
            constant_field(&grid, 1.0 + eps),
        ];
        let v2 = imse(&all_scaled, &truth, (0, 0), &dom).unwrap().value;
        assert!(v2 >= eps * eps - 1e-12);
    }

    #[test]
    fn metrics_require_two_replicates() {
        let w = Window::square(6.0, 2).unwrap();
        let grid = make_frequency_grid(&w, 4.0 / 3.0, PI).unwrap();
        let truth = constant_field(&grid, 1.0);
        let ests = vec![constant_field(&grid, 1.0)];
        let dom = MetricDomain::default();
        assert!(ibias2(&ests, &truth, (0, 0), &dom).is_err());
    }

    #[test]
    fn radial_average_of_constant_field() {
        let w = Window::square(10.0, 2).unwrap();
        let grid = make_frequency_grid(&w, 4.0 / 3.0, 1.5 * PI).unwrap();
        let field = constant_field(&grid, 4.2);
        let rings = radial_average(&field, (0, 0), 3.0 * grid.max_spacing()).unwrap();
        assert!(rings.len() > 2);
        for (_, v) in rings {
            assert_abs_diff_eq!(v, 4.2, epsilon = 1e-12);
        }
        // Ring width at or below the spacing is rejected.
        assert!(radial_average(&field, (0, 0), 0.5 * grid.max_spacing()).is_err());
    }

    #[test]
    fn radial_average_recovers_isotropic_profile() {
        // Analytic oracle: sample an isotropic field on the grid and compare
        // ring means against the radial profile at ring centers.
        let w = Window::square(40.0, 2).unwrap();
        let grid = make_frequency_grid(&w, 4.0 / 3.0, 1.5 * PI).unwrap();
        let profile = |q: f64| 0.05 + 0.4 * (-0.5 * q * q).exp();
        let values: Vec<CMat> = (0..grid.len())
            .map(|idx| {
                let node = grid.node(&grid.multi_index(idx));
                let q = (node[0] * node[0] + node[1] * node[1]).sqrt();
                CMat::from_element(1, 1, Complex64::new(profile(q), 0.0))
            })
            .collect();
        let field = HermitianField::new(grid.clone(), 1, values).unwrap();
        let width = 2.5 * grid.max_spacing();
        let rings = radial_average(&field, (0, 0), width).unwrap();
        // Oracle: area-weighted annulus average of the profile (grid nodes
        // are uniform in the plane), for annuli fully inside the grid.
        for (r, v) in rings.iter().skip(1) {
            let (r1, r2) = (r - width / 2.0, r + width / 2.0);
            if r2 > 1.5 * PI {
                break;
            }
            let num = crate::numeric::integrate_adaptive(
                &|q: f64| profile(q) * q,
                r1,
                r2,
                1e-10,
            )
            .unwrap();
            let want = 2.0 * num / (r2 * r2 - r1 * r1);
            assert!(
                (v - want).abs() <= 0.02 * want.abs(),
                "ring at {r}: {v} vs annulus mean {want}"
            );
        }
    }

    #[test]
    fn truth_injected_study_has_zero_error() {
        let config = StudyConfig {
            sides: vec![6.0],
            reps: 2,
            estimators: vec![EstimatorKind::InjectTruth],
            cell_size: 0.1,
            ..Default::default()
        };
        let report = run_study(&config).unwrap();
        assert!(report.failures.is_empty(), "{:?}", report.failures);
        for cell in &report.cells {
            assert_eq!(cell.ibias2, 0.0);
            assert_eq!(cell.imse, 0.0);
        }
    }

    #[test]
    fn replicate_failures_are_recorded_not_fatal() {
        // At side 2 the default grid spacing (≈2.36) pushes the derived CV
        // search interval past half the domain extent, so every replicate's
        // bandwidth selection fails; the study still returns a report with
        // the failures listed and no metric cells.
        let config = StudyConfig {
            sides: vec![2.0],
            reps: 2,
            estimators: vec![EstimatorKind::KernelCv],
            cell_size: 0.1,
            ..Default::default()
        };
        let report = run_study(&config).unwrap();
        assert_eq!(report.failures.len(), 3, "{:?}", report.failures);
        assert!(report.cells.is_empty());
    }

    #[test]
    fn study_is_deterministic() {
        let config = StudyConfig {
            sides: vec![6.0],
            reps: 3,
            estimators: vec![EstimatorKind::Raw],
            cell_size: 0.1,
            ..Default::default()
        };
        let a = run_study(&config).unwrap();
        let b = run_study(&config).unwrap();
        for (x, y) in a.cells.iter().zip(b.cells.iter()) {
            assert_eq!(x.ibias2.to_bits(), y.ibias2.to_bits());
            assert_eq!(x.imse.to_bits(), y.imse.to_bits());
        }
    }

    #[test]
    fn coherence_symmetry_and_range_on_smoothed_estimate() {
        let params = CoxModelParams::preset(CoxPreset::M1);
        let w = Window::square(10.0, 2).unwrap();
        let taper = Taper::cosine_bell(0.025, 2).unwrap();
        let grid = make_frequency_grid(&w, 4.0 / 3.0, 1.5 * PI).unwrap();
        let sim = sample_cox_pattern(&params, &w, &SimulationConfig::default(), 314).unwrap();
        let fit = fit_intensity(&sim.pattern, &IntensityFamily::Constant, 8).unwrap();
        let p = feasible_periodogram(&sim.pattern, &taper, &fit.model, &grid).unwrap();
        let spec = KernelSpec::triangular_scalar(1.0, 2).unwrap();
        let sm = kernel_smooth(&p, &spec).unwrap();
        let rep = empirical_coherence(&sm, &fit.model, &taper).unwrap();
        assert_eq!(rep.nodes.len(), 49);
        for node in 0..rep.nodes.len() {
            let r = &rep.coherence[node];
            assert_abs_diff_eq!(r[0][1], r[1][0], epsilon = 1e-12);
        }
        assert_abs_diff_eq!(rep.max_r_squared[0][1], rep.max_r_squared[1][0], epsilon = 1e-12);
    }
}
