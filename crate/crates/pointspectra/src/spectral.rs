//! Tapered DFTs, feasible (bias-corrected) periodograms, and the
//! self-normalized kernel smoothers on the frequency grid.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{CMat, FrequencyGrid, GeometryError, HermitianField, MultitypePattern};
use crate::intensity::{dft_bias_field, dft_bias_vector, IntensityError, IntensityModel};
use crate::taper::Taper;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("bandwidth {bandwidth:?} leaves node {node:?} with an empty smoothing window")]
    InvalidBandwidth { node: Vec<i64>, bandwidth: Vec<f64> },
    #[error(transparent)]
    Intensity(#[from] IntensityError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

// ---------------------------------------------------------------------------
// Tapered DFT
// ---------------------------------------------------------------------------

/// Raw and bias-corrected DFT at one frequency.
#[derive(Debug, Clone)]
pub struct DftVector {
    pub omega: Vec<f64>,
    /// 𝒥_{h,n}(ω): the plain tapered point sum.
    pub raw: Vec<Complex64>,
    /// Ĵ_{h,n}(ω) = raw - estimated mean.
    pub centered: Vec<Complex64>,
}

/// Per-type point coordinates with precomputed taper weights, the working
/// form for DFT sums over many frequencies.
struct TaperedPoints {
    d: usize,
    coords: Vec<Vec<f64>>,
    weights: Vec<Vec<f64>>,
    norm: f64,
}

impl TaperedPoints {
    fn build(pattern: &MultitypePattern, taper: &Taper) -> Self {
        let d = pattern.window().dim();
        let m = pattern.num_types();
        let mut coords = vec![Vec::new(); m];
        let mut weights = vec![Vec::new(); m];
        let mut u = vec![0.0; d];
        for i in 0..pattern.len() {
            let x = pattern.point(i);
            let j = pattern.type_of(i);
            pattern.window().to_unit_cube(x, &mut u);
            coords[j].extend_from_slice(x);
            weights[j].push(taper.value(&u));
        }
        let norm = (2.0 * PI).powf(-(d as f64) / 2.0) * taper.h2().powf(-0.5)
            / pattern.window().volume().sqrt();
        Self {
            d,
            coords,
            weights,
            norm,
        }
    }

    fn dft(&self, omega: &[f64], out: &mut [Complex64]) {
        let d = self.d;
        for (j, slot) in out.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            let coords = &self.coords[j];
            for (i, &w) in self.weights[j].iter().enumerate() {
                let x = &coords[i * d..(i + 1) * d];
                let mut phase = 0.0;
                for k in 0..d {
                    phase -= x[k] * omega[k];
                }
                let (s, c) = phase.sin_cos();
                acc += Complex64::new(w * c, w * s);
            }
            *slot = acc * self.norm;
        }
    }
}

/// 𝒥_{h,n}(ω): the tapered DFT of the pattern at a single frequency,
/// (2π)^{-d/2} H_{h,2}^{-1/2} |D_n|^{-1/2} Σ_{x∈X_j} h(x ⊘ A) e^{-i xᵀω}
/// per type. Empty types yield zero entries.
pub fn compute_dft(pattern: &MultitypePattern, taper: &Taper, omega: &[f64]) -> Vec<Complex64> {
    let pts = TaperedPoints::build(pattern, taper);
    let mut out = vec![Complex64::new(0.0, 0.0); pattern.num_types()];
    pts.dft(omega, &mut out);
    out
}

/// Raw + centered DFT under the given intensity model.
pub fn dft_vector(
    pattern: &MultitypePattern,
    taper: &Taper,
    model: &IntensityModel,
    omega: &[f64],
) -> Result<DftVector, SpectralError> {
    let raw = compute_dft(pattern, taper, omega);
    let bias = dft_bias_vector(model, taper, pattern.window(), omega)?;
    let centered = raw.iter().zip(bias.iter()).map(|(r, b)| r - b).collect();
    Ok(DftVector {
        omega: omega.to_vec(),
        raw,
        centered,
    })
}

/// Raw DFT at every node of a grid, `[node][type]`, parallel over nodes.
pub fn dft_field(
    pattern: &MultitypePattern,
    taper: &Taper,
    grid: &FrequencyGrid,
) -> Vec<Vec<Complex64>> {
    let pts = TaperedPoints::build(pattern, taper);
    let m = pattern.num_types();
    let d = grid.dim();
    (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let mut omega = vec![0.0; d];
            grid.node_into(&grid.multi_index(idx), &mut omega);
            let mut row = vec![Complex64::new(0.0, 0.0); m];
            pts.dft(&omega, &mut row);
            row
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Feasible periodogram
// ---------------------------------------------------------------------------

/// The feasible periodogram Î_{h,n}: at each node the outer product of the
/// bias-corrected DFT, a rank-one Hermitian PSD matrix.
#[derive(Debug, Clone)]
pub struct Periodogram {
    field: HermitianField,
}

impl Periodogram {
    /// Wrap an existing Hermitian field as a periodogram-shaped estimate
    /// (used by toy constructions and test hooks; [`feasible_periodogram`]
    /// is the estimator proper).
    pub fn from_field(field: HermitianField) -> Self {
        Self { field }
    }

    pub fn field(&self) -> &HermitianField {
        &self.field
    }

    pub fn grid(&self) -> &FrequencyGrid {
        self.field.grid()
    }

    pub fn num_types(&self) -> usize {
        self.field.num_types()
    }

    pub fn into_field(self) -> HermitianField {
        self.field
    }
}

/// Î_{h,n} on a grid: centered = raw - bias(model), matrix = centered·centered*.
pub fn feasible_periodogram(
    pattern: &MultitypePattern,
    taper: &Taper,
    model: &IntensityModel,
    grid: &FrequencyGrid,
) -> Result<Periodogram, SpectralError> {
    if model.num_types() != pattern.num_types() {
        return Err(SpectralError::InvalidArgument(format!(
            "model has {} types but the pattern has {}",
            model.num_types(),
            pattern.num_types()
        )));
    }
    let raw = dft_field(pattern, taper, grid);
    let bias = dft_bias_field(model, taper, pattern.window(), grid)?;
    let m = pattern.num_types();
    let values: Vec<CMat> = raw
        .par_iter()
        .zip(bias.par_iter())
        .map(|(r, b)| {
            let centered =
                DVector::from_iterator(m, r.iter().zip(b.iter()).map(|(x, y)| x - y));
            &centered * centered.adjoint()
        })
        .collect();
    let field = HermitianField::new(grid.clone(), m, values)?;
    Ok(Periodogram { field })
}

// ---------------------------------------------------------------------------
// Kernel smoothing
// ---------------------------------------------------------------------------

/// Shared handle for user-supplied kernel functions.
pub type KernelFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Base smoothing kernel on [-1, 1]^d.
#[derive(Clone)]
pub enum KernelKind {
    /// K(x) = Π max(1 - |x_j|, 0); the default throughout.
    Triangular,
    /// User-supplied symmetric nonnegative kernel with unit integral
    /// (checked on construction by midpoint quadrature to 1e-6).
    Custom(KernelFn),
}

impl std::fmt::Debug for KernelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KernelKind::Triangular => write!(f, "Triangular"),
            KernelKind::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl KernelKind {
    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            KernelKind::Triangular => x.iter().map(|&c| (1.0 - c.abs()).max(0.0)).product(),
            KernelKind::Custom(f) => {
                if x.iter().any(|&c| c.abs() > 1.0) {
                    0.0
                } else {
                    f(x)
                }
            }
        }
    }
}

/// A base kernel plus a per-axis bandwidth; K_b(x) = (Π b_j)^{-1} K(x ⊘ b).
#[derive(Debug, Clone)]
pub struct KernelSpec {
    kind: KernelKind,
    bandwidth: Vec<f64>,
}

impl KernelSpec {
    pub fn triangular(bandwidth: Vec<f64>) -> Result<Self, SpectralError> {
        Self::with_kind(KernelKind::Triangular, bandwidth)
    }

    /// Common scalar bandwidth in every coordinate.
    pub fn triangular_scalar(b: f64, d: usize) -> Result<Self, SpectralError> {
        Self::triangular(vec![b; d])
    }

    pub fn with_kind(kind: KernelKind, bandwidth: Vec<f64>) -> Result<Self, SpectralError> {
        if bandwidth.is_empty() || bandwidth.iter().any(|&b| !(b > 0.0)) {
            return Err(SpectralError::InvalidArgument(format!(
                "bandwidths must be positive, got {bandwidth:?}"
            )));
        }
        if let KernelKind::Custom(f) = &kind {
            validate_custom_kernel(f, bandwidth.len())?;
        }
        Ok(Self { kind, bandwidth })
    }

    pub fn bandwidth(&self) -> &[f64] {
        &self.bandwidth
    }

    pub fn kind(&self) -> &KernelKind {
        &self.kind
    }

    /// K_b(delta).
    pub fn weight(&self, delta: &[f64]) -> f64 {
        let mut scaled = [0.0; 4];
        let d = delta.len();
        for j in 0..d {
            scaled[j] = delta[j] / self.bandwidth[j];
        }
        let norm: f64 = self.bandwidth.iter().product();
        self.kind.eval(&scaled[..d]) / norm
    }
}

fn validate_custom_kernel(f: &KernelFn, d: usize) -> Result<(), SpectralError> {
    let res = match d {
        1 => 4096,
        2 => 256,
        _ => 32,
    };
    let mut idx = vec![0usize; d];
    let mut integral = 0.0;
    let cell = (2.0 / res as f64).powi(d as i32);
    loop {
        let x: Vec<f64> = idx
            .iter()
            .map(|&i| -1.0 + (i as f64 + 0.5) * 2.0 / res as f64)
            .collect();
        let v = f(&x);
        if v < 0.0 {
            return Err(SpectralError::InvalidArgument(format!(
                "custom kernel is negative at {x:?}"
            )));
        }
        let neg: Vec<f64> = x.iter().map(|&c| -c).collect();
        if (v - f(&neg)).abs() > 1e-8 * (1.0 + v.abs()) {
            return Err(SpectralError::InvalidArgument(format!(
                "custom kernel is not symmetric at {x:?}"
            )));
        }
        integral += v * cell;
        let mut j = 0;
        loop {
            if j == d {
                if (integral - 1.0).abs() > 1e-6 {
                    return Err(SpectralError::InvalidArgument(format!(
                        "custom kernel integrates to {integral}, expected 1 within 1e-6"
                    )));
                }
                return Ok(());
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

/// Provenance of a spectrum estimate.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Provenance {
    RawPeriodogram,
    Kernel { bandwidth: Vec<f64>, kernel: String },
    LeaveOneOut { bandwidth: Vec<f64> },
    /// Not an estimate: analytic ground truth exported for comparison.
    Analytic { description: String },
}

/// A pseudo-spectrum estimate: a Hermitian field plus how it was produced.
#[derive(Debug, Clone)]
pub struct SpectrumEstimate {
    pub field: HermitianField,
    pub provenance: Provenance,
}

impl SpectrumEstimate {
    pub fn from_periodogram(p: Periodogram) -> Self {
        Self {
            field: p.into_field(),
            provenance: Provenance::RawPeriodogram,
        }
    }
}

/// Index window radii covering the kernel support on the grid.
fn support_radii(grid: &FrequencyGrid, bandwidth: &[f64]) -> Vec<i64> {
    (0..grid.dim())
        .map(|j| (bandwidth[j] / grid.spacing(j)).floor() as i64 + 1)
        .collect()
}

/// Smooth a node: accumulate Σ w·M over the index window, optionally
/// skipping the center, and divide by Σ w.
fn smooth_node(
    field: &HermitianField,
    spec: &KernelSpec,
    t: &[i64],
    skip_center: bool,
) -> Option<CMat> {
    let grid = field.grid();
    let d = grid.dim();
    let m = field.num_types();
    let radii = support_radii(grid, spec.bandwidth());
    let mut acc = CMat::zeros(m, m);
    let mut wsum = 0.0;
    let mut k = vec![0i64; d];
    let mut delta = vec![0.0; d];
    // Iterate the index box around t clipped to the grid.
    let lo: Vec<i64> = (0..d).map(|j| (t[j] - radii[j]).max(-grid.k_max()[j])).collect();
    let hi: Vec<i64> = (0..d).map(|j| (t[j] + radii[j]).min(grid.k_max()[j])).collect();
    k.copy_from_slice(&lo);
    'outer: loop {
        let is_center = k.iter().zip(t.iter()).all(|(a, b)| a == b);
        if !(skip_center && is_center) {
            for j in 0..d {
                delta[j] = (t[j] - k[j]) as f64 * grid.spacing(j);
            }
            let w = spec.weight(&delta);
            if w > 0.0 {
                let idx = grid.flat_index(&k).expect("index in clipped box");
                let mat = field.value(idx);
                for (a, v) in acc.iter_mut().zip(mat.iter()) {
                    *a += w * v;
                }
                wsum += w;
            }
        }
        for j in 0..d {
            k[j] += 1;
            if k[j] <= hi[j] {
                continue 'outer;
            }
            k[j] = lo[j];
        }
        break;
    }
    if wsum > 0.0 {
        Some(acc.unscale(wsum))
    } else {
        None
    }
}

/// The self-normalized Riemann-sum smoother over the periodogram's own grid:
/// F̂(ω_t) = Σ_k K_b(ω_t - ω_k) Î(ω_k) / Σ_k K_b(ω_t - ω_k).
pub fn kernel_smooth(
    periodogram: &Periodogram,
    spec: &KernelSpec,
) -> Result<SpectrumEstimate, SpectralError> {
    let field = kernel_smooth_field(periodogram.field(), spec, false)?;
    Ok(SpectrumEstimate {
        field,
        provenance: Provenance::Kernel {
            bandwidth: spec.bandwidth().to_vec(),
            kernel: format!("{:?}", spec.kind()),
        },
    })
}

pub(crate) fn kernel_smooth_field(
    field: &HermitianField,
    spec: &KernelSpec,
    skip_center: bool,
) -> Result<HermitianField, SpectralError> {
    let grid = field.grid();
    if spec.bandwidth().len() != grid.dim() {
        return Err(SpectralError::InvalidArgument(format!(
            "bandwidth dimension {} does not match grid dimension {}",
            spec.bandwidth().len(),
            grid.dim()
        )));
    }
    let results: Vec<Option<CMat>> = (0..grid.len())
        .into_par_iter()
        .map(|idx| smooth_node(field, spec, &grid.multi_index(idx), skip_center))
        .collect();
    let mut values = Vec::with_capacity(results.len());
    for (idx, r) in results.into_iter().enumerate() {
        match r {
            Some(mat) => values.push(mat),
            None => {
                return Err(SpectralError::InvalidBandwidth {
                    node: grid.multi_index(idx),
                    bandwidth: spec.bandwidth().to_vec(),
                })
            }
        }
    }
    Ok(HermitianField::new(grid.clone(), field.num_types(), values)?)
}

/// Leave-one-out smoother at node `t`: the same self-normalized average with
/// the k = t term removed from numerator and denominator.
pub fn leave_one_out_smooth(
    periodogram: &Periodogram,
    spec: &KernelSpec,
    t: &[i64],
) -> Result<CMat, SpectralError> {
    let grid = periodogram.grid();
    if grid.flat_index(t).is_none() {
        return Err(SpectralError::InvalidArgument(format!(
            "node {t:?} is not on the grid"
        )));
    }
    smooth_node(periodogram.field(), spec, t, true).ok_or_else(|| SpectralError::InvalidBandwidth {
        node: t.to_vec(),
        bandwidth: spec.bandwidth().to_vec(),
    })
}

/// Leave-one-out smoother at every node (parallel), the workhorse of the
/// cross-validation objective.
pub fn leave_one_out_field(
    periodogram: &Periodogram,
    spec: &KernelSpec,
) -> Result<HermitianField, SpectralError> {
    kernel_smooth_field(periodogram.field(), spec, true)
}

/// [`leave_one_out_field`] packaged as an estimate with its provenance.
pub fn leave_one_out_estimate(
    periodogram: &Periodogram,
    spec: &KernelSpec,
) -> Result<SpectrumEstimate, SpectralError> {
    Ok(SpectrumEstimate {
        field: leave_one_out_field(periodogram, spec)?,
        provenance: Provenance::LeaveOneOut {
            bandwidth: spec.bandwidth().to_vec(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{
        assert_hermitian_psd, hermitian_part_eigenvalues, make_frequency_grid, Window,
    };
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single_type_pattern(window: Window, coords: Vec<f64>) -> MultitypePattern {
        let n = coords.len() / window.dim();
        MultitypePattern::new(window, 1, coords, vec![0; n]).unwrap()
    }

    #[test]
    fn dft_single_point_at_origin() {
        let w = Window::square(1.0, 2).unwrap();
        let p = single_type_pattern(w, vec![0.0, 0.0]);
        let t = Taper::unit(2);
        for omega in [[0.0, 0.0], [1.3, -0.4], [6.0, 2.0]] {
            let j = compute_dft(&p, &t, &omega);
            assert_abs_diff_eq!(j[0].re, 1.0 / (2.0 * PI), epsilon = 1e-14);
            assert_abs_diff_eq!(j[0].im, 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn dft_empty_pattern_is_zero() {
        let w = Window::square(4.0, 2).unwrap();
        let p = MultitypePattern::empty(w, 3);
        let j = compute_dft(&p, &Taper::unit(2), &[0.7, 0.7]);
        assert!(j.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn dft_two_point_cancellation() {
        // Hand oracle: (2π)^{-1}(e^{-iπ/2} + e^{iπ/2}) = 0.
        let w = Window::square(1.0, 2).unwrap();
        let p = single_type_pattern(w, vec![0.25, 0.0, -0.25, 0.0]);
        let j = compute_dft(&p, &Taper::unit(2), &[2.0 * PI, 0.0]);
        assert_abs_diff_eq!(j[0].norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn zero_model_reproduces_raw_outer_product() {
        let w = Window::square(6.0, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut coords = Vec::new();
        let mut types = Vec::new();
        for _ in 0..40 {
            coords.push(rng.random_range(-3.0..3.0));
            coords.push(rng.random_range(-3.0..3.0));
            types.push(rng.random_range(0..2usize));
        }
        let p = MultitypePattern::new(w.clone(), 2, coords, types).unwrap();
        let taper = Taper::cosine_bell(0.025, 2).unwrap();
        let grid = make_frequency_grid(&w, 4.0 / 3.0, PI).unwrap();
        let per = feasible_periodogram(&p, &taper, &IntensityModel::zero(2), &grid).unwrap();
        let raw = dft_field(&p, &taper, &grid);
        for idx in [0usize, 5, grid.len() - 1] {
            let v = DVector::from_vec(raw[idx].clone());
            let outer = &v * v.adjoint();
            let got = per.field().value(idx);
            for (a, b) in got.iter().zip(outer.iter()) {
                assert_abs_diff_eq!(a.re, b.re, epsilon = 1e-13);
                assert_abs_diff_eq!(a.im, b.im, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn periodogram_nodes_are_rank_one_hermitian_psd() {
        let w = Window::square(8.0, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut coords = Vec::new();
        let mut types = Vec::new();
        for _ in 0..120 {
            coords.push(rng.random_range(-4.0..4.0));
            coords.push(rng.random_range(-4.0..4.0));
            types.push(rng.random_range(0..2usize));
        }
        let p = MultitypePattern::new(w.clone(), 2, coords, types).unwrap();
        let taper = Taper::cosine_bell(0.025, 2).unwrap();
        let grid = make_frequency_grid(&w, 4.0 / 3.0, PI).unwrap();
        let fit = crate::intensity::fit_intensity(&p, &crate::intensity::IntensityFamily::Constant, 8)
            .unwrap();
        let per = feasible_periodogram(&p, &taper, &fit.model, &grid).unwrap();
        per.field().validate_conjugate_symmetry(1e-10).unwrap();
        for mat in per.field().values() {
            assert!(assert_hermitian_psd(mat, 1e-10));
            let eig = hermitian_part_eigenvalues(mat);
            let trace = mat.diagonal().iter().map(|c| c.re).sum::<f64>();
            // Rank one: all but the top eigenvalue numerically vanish.
            for &e in &eig[..eig.len() - 1] {
                assert!(e.abs() <= 1e-8 * trace.max(1e-300), "eig {e} vs trace {trace}");
            }
        }
    }

    #[test]
    fn translation_shifts_phase_and_preserves_periodogram() {
        // Points kept inside a margin so the shifted pattern stays in the
        // window; with the unit taper and identical bias handling the raw
        // periodogram is translation invariant.
        let side = 12.0;
        let w = Window::square(side, 2).unwrap();
        let shift = [0.6, -0.35];
        let margin = 0.7;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut coords = Vec::new();
        for _ in 0..80 {
            coords.push(rng.random_range(-side / 2.0 + margin..side / 2.0 - margin));
            coords.push(rng.random_range(-side / 2.0 + margin..side / 2.0 - margin));
        }
        let shifted: Vec<f64> = coords
            .chunks(2)
            .flat_map(|xy| [xy[0] + shift[0], xy[1] + shift[1]])
            .collect();
        let p1 = single_type_pattern(w.clone(), coords);
        let p2 = single_type_pattern(w.clone(), shifted);
        let taper = Taper::unit(2);
        for omega in [[0.9, 0.0], [1.7, -2.1]] {
            let j1 = compute_dft(&p1, &taper, &omega)[0];
            let j2 = compute_dft(&p2, &taper, &omega)[0];
            let phase = -(shift[0] * omega[0] + shift[1] * omega[1]);
            let expected = j1 * Complex64::new(phase.cos(), phase.sin());
            assert_abs_diff_eq!(j2.re, expected.re, epsilon = 1e-10);
            assert_abs_diff_eq!(j2.im, expected.im, epsilon = 1e-10);
            assert_abs_diff_eq!(j1.norm_sqr(), j2.norm_sqr(), epsilon = 1e-10);
        }
    }

    /// Monte Carlo against the flat Poisson spectrum (2π)^{-2} λ: the mean
    /// feasible periodogram on a ring ‖ω‖ ≈ π matches within 10%.
    #[test]
    fn poisson_periodogram_mean_matches_flat_spectrum() {
        let lambda = 2.0;
        let side = 15.0;
        let w = Window::square(side, 2).unwrap();
        let taper = Taper::unit(2);
        let grid = make_frequency_grid(&w, 4.0 / 3.0, 1.2 * PI).unwrap();
        // Ring nodes with ‖ω‖ in [0.9π, 1.1π], one representative per ± pair.
        let mut ring = Vec::new();
        for idx in 0..grid.len() {
            let k = grid.multi_index(idx);
            let node = grid.node(&k);
            let norm = node.iter().map(|c| c * c).sum::<f64>().sqrt();
            let positive = k.iter().find(|&&c| c != 0).map(|&c| c > 0).unwrap_or(false);
            if (0.9 * PI..=1.1 * PI).contains(&norm) && positive {
                ring.push(k);
            }
        }
        assert!(ring.len() > 20);
        let reps = 200;
        let mut mean = 0.0;
        for rep in 0..reps {
            let mut rng = ChaCha8Rng::seed_from_u64(500 + rep);
            let n = rand_distr::Distribution::sample(
                &rand_distr::Poisson::new(lambda * w.volume()).unwrap(),
                &mut rng,
            ) as usize;
            let mut coords = Vec::with_capacity(2 * n);
            for _ in 0..n {
                coords.push(rng.random_range(-side / 2.0..side / 2.0));
                coords.push(rng.random_range(-side / 2.0..side / 2.0));
            }
            let p = single_type_pattern(w.clone(), coords);
            let fit =
                crate::intensity::fit_intensity(&p, &crate::intensity::IntensityFamily::Constant, 8)
                    .unwrap();
            for k in &ring {
                let omega = grid.node(k);
                let dv = dft_vector(&p, &taper, &fit.model, &omega).unwrap();
                mean += dv.centered[0].norm_sqr();
            }
        }
        mean /= (reps as usize * ring.len()) as f64;
        let truth = lambda / (2.0 * PI).powi(2);
        assert!(
            (mean
                - truth)
                .abs()
                < 0.1 * truth,
            "mean {mean} vs truth {truth}"
        );
    }

    // -- smoothing ----------------------------------------------------------

    fn toy_field_1d(values: Vec<f64>, spacing: f64) -> HermitianField {
        let omega_vec = vec![2.0 * PI / spacing];
        let k_max = vec![(values.len() as i64 - 1) / 2];
        let grid = FrequencyGrid::new(omega_vec, k_max).unwrap();
        let mats = values
            .into_iter()
            .map(|v| CMat::from_element(1, 1, Complex64::new(v, 0.0)))
            .collect();
        HermitianField::new(grid, 1, mats).unwrap()
    }

    #[test]
    fn smoothing_constant_field_is_identity() {
        let field = toy_field_1d(vec![2.5; 7], 0.3);
        let p = Periodogram { field };
        let spec = KernelSpec::triangular_scalar(0.95, 1).unwrap();
        let sm = kernel_smooth(&p, &spec).unwrap();
        for mat in sm.field.values() {
            assert_abs_diff_eq!(mat[(0, 0)].re, 2.5, epsilon = 1e-12);
        }
        // Leave-one-out of a constant field is also the identity.
        let loo = leave_one_out_smooth(&p, &spec, &[0]).unwrap();
        assert_abs_diff_eq!(loo[(0, 0)].re, 2.5, epsilon = 1e-12);
    }

    #[test]
    fn smoothing_at_bandwidth_floor_returns_input() {
        // Kernel support below the grid spacing: only the self weight
        // survives and the smoother reduces to the periodogram.
        let field = toy_field_1d(vec![1.0, 3.0, 0.5, 2.0, 4.0], 0.5);
        let p = Periodogram { field };
        let spec = KernelSpec::triangular_scalar(0.25, 1).unwrap();
        let sm = kernel_smooth(&p, &spec).unwrap();
        let expect = [1.0, 3.0, 0.5, 2.0, 4.0];
        for (mat, want) in sm.field.values().iter().zip(expect) {
            assert_abs_diff_eq!(mat[(0, 0)].re, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn three_node_toy_matches_hand_computation() {
        // Grid {-δ, 0, δ}, triangular kernel, b = 1.5δ, values {0, 3, 0}.
        // Center: 3·K_b(0) / (K_b(0) + 2 K_b(δ)) = 3/(1 + 2/3) = 1.8.
        let delta = 0.4;
        let field = toy_field_1d(vec![0.0, 3.0, 0.0], delta);
        let p = Periodogram { field };
        let spec = KernelSpec::triangular_scalar(1.5 * delta, 1).unwrap();
        let sm = kernel_smooth(&p, &spec).unwrap();
        assert_abs_diff_eq!(sm.field.value(1)[(0, 0)].re, 1.8, epsilon = 1e-12);
        // Leave-one-out at the center sees only the two zero neighbors.
        let loo = leave_one_out_smooth(&p, &spec, &[0]).unwrap();
        assert_abs_diff_eq!(loo[(0, 0)].re, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn leave_one_out_without_neighbors_errors() {
        let field = toy_field_1d(vec![1.0, 2.0, 3.0], 0.5);
        let p = Periodogram { field };
        // Support 0.3 < spacing 0.5: no neighbor reachable.
        let spec = KernelSpec::triangular_scalar(0.3, 1).unwrap();
        let err = leave_one_out_smooth(&p, &spec, &[0]).unwrap_err();
        assert!(matches!(err, SpectralError::InvalidBandwidth { .. }));
    }

    #[test]
    fn smoothed_random_rank_one_fields_stay_psd() {
        let w = Window::square(5.0, 2).unwrap();
        let grid = make_frequency_grid(&w, 1.0, PI).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let values: Vec<CMat> = (0..grid.len())
                .map(|_| {
                    let v = DVector::from_vec(vec![
                        Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5),
                        Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5),
                    ]);
                    &v * v.adjoint()
                })
                .collect();
            let field = HermitianField::new(grid.clone(), 2, values).unwrap();
            let p = Periodogram { field };
            let spec = KernelSpec::triangular_scalar(2.0 * grid.spacing(0), 2).unwrap();
            let sm = kernel_smooth(&p, &spec).unwrap();
            let loo = leave_one_out_field(&p, &spec).unwrap();
            for idx in [0, grid.len() / 2, grid.len() - 1] {
                assert!(assert_hermitian_psd(sm.field.value(idx), 1e-10));
                assert!(assert_hermitian_psd(loo.value(idx), 1e-10));
            }
        }
    }

    #[test]
    fn zero_denominator_names_the_node() {
        // A ring-shaped kernel vanishing at the origin: with support below
        // the grid spacing no weight survives anywhere.
        let ring = KernelSpec::with_kind(
            KernelKind::Custom(Arc::new(|x: &[f64]| {
                let a = x[0].abs();
                if (0.5..=1.0).contains(&a) {
                    1.0
                } else {
                    0.0
                }
            })),
            vec![0.2],
        )
        .unwrap();
        let field = toy_field_1d(vec![1.0, 2.0, 3.0], 0.5);
        let p = Periodogram { field };
        let err = kernel_smooth(&p, &ring).unwrap_err();
        match err {
            SpectralError::InvalidBandwidth { node, bandwidth } => {
                assert_eq!(node.len(), 1);
                assert_eq!(bandwidth, vec![0.2]);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn custom_kernel_validation() {
        // A valid box kernel in 1-D.
        let box_kernel = KernelSpec::with_kind(
            KernelKind::Custom(Arc::new(|x: &[f64]| if x[0].abs() <= 1.0 { 0.5 } else { 0.0 })),
            vec![1.0],
        );
        assert!(box_kernel.is_ok());
        // Wrong mass.
        let bad = KernelSpec::with_kind(
            KernelKind::Custom(Arc::new(|_: &[f64]| 0.75)),
            vec![1.0],
        );
        assert!(bad.is_err());
        // Asymmetric.
        let asym = KernelSpec::with_kind(
            KernelKind::Custom(Arc::new(|x: &[f64]| if x[0] > 0.0 { 1.0 } else { 0.0 })),
            vec![1.0],
        );
        assert!(asym.is_err());
        // Nonpositive bandwidth.
        assert!(KernelSpec::triangular_scalar(0.0, 1).is_err());
    }
}
