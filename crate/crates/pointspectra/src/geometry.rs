//! Observation windows, multitype point patterns, symmetric frequency grids,
//! and complex Hermitian matrix fields shared by every other module.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Shorthand for the dense complex matrices used throughout.
pub type CMat = DMatrix<Complex64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("point {point:?} lies outside the window")]
    PointOutsideWindow { point: Vec<f64> },
    #[error("type index {index} out of range 0..{m}")]
    TypeOutOfRange { index: usize, m: usize },
    #[error("Hermitian field invariant violated: {0}")]
    FieldInvariant(String),
}

// ---------------------------------------------------------------------------
// Window
// ---------------------------------------------------------------------------

/// Centered rectangular observation window [-A_1/2, A_1/2] x ... x [-A_d/2, A_d/2].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    side_lengths: Vec<f64>,
}

impl Window {
    pub fn new(side_lengths: Vec<f64>) -> Result<Self, GeometryError> {
        if side_lengths.is_empty() {
            return Err(GeometryError::InvalidArgument(
                "window needs at least one side length".into(),
            ));
        }
        if side_lengths.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
            return Err(GeometryError::InvalidArgument(format!(
                "side lengths must be positive and finite, got {side_lengths:?}"
            )));
        }
        Ok(Self { side_lengths })
    }

    /// Square window of side `a` in dimension `d`.
    pub fn square(a: f64, d: usize) -> Result<Self, GeometryError> {
        Self::new(vec![a; d])
    }

    pub fn dim(&self) -> usize {
        self.side_lengths.len()
    }

    pub fn side_lengths(&self) -> &[f64] {
        &self.side_lengths
    }

    /// |D_n| = prod A_j.
    pub fn volume(&self) -> f64 {
        self.side_lengths.iter().product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(&self.side_lengths)
                .all(|(&xi, &ai)| xi >= -ai / 2.0 && xi <= ai / 2.0)
    }

    /// Rescale a window point to unit-cube coordinates u = x ⊘ A.
    pub fn to_unit_cube(&self, x: &[f64], out: &mut [f64]) {
        for j in 0..self.dim() {
            out[j] = x[j] / self.side_lengths[j];
        }
    }
}

// ---------------------------------------------------------------------------
// Multitype point pattern
// ---------------------------------------------------------------------------

/// An m-variate point pattern observed in a common window.
///
/// Coordinates are stored flat (length = points * dim); type indices are
/// zero-based internally (the CSV interface is one-based).
#[derive(Debug, Clone, PartialEq)]
pub struct MultitypePattern {
    window: Window,
    m: usize,
    coords: Vec<f64>,
    types: Vec<usize>,
}

impl MultitypePattern {
    pub fn new(
        window: Window,
        m: usize,
        coords: Vec<f64>,
        types: Vec<usize>,
    ) -> Result<Self, GeometryError> {
        if m == 0 {
            return Err(GeometryError::InvalidArgument("m must be >= 1".into()));
        }
        let d = window.dim();
        if coords.len() != types.len() * d {
            return Err(GeometryError::InvalidArgument(format!(
                "coordinate buffer length {} does not match {} points in dimension {}",
                coords.len(),
                types.len(),
                d
            )));
        }
        for (i, &t) in types.iter().enumerate() {
            if t >= m {
                return Err(GeometryError::TypeOutOfRange { index: t, m });
            }
            let p = &coords[i * d..(i + 1) * d];
            if !window.contains(p) {
                return Err(GeometryError::PointOutsideWindow { point: p.to_vec() });
            }
        }
        Ok(Self {
            window,
            m,
            coords,
            types,
        })
    }

    pub fn empty(window: Window, m: usize) -> Self {
        Self {
            window,
            m,
            coords: Vec::new(),
            types: Vec::new(),
        }
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn num_types(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.window.dim();
        &self.coords[i * d..(i + 1) * d]
    }

    pub fn type_of(&self, i: usize) -> usize {
        self.types[i]
    }

    /// N_j(D_n) for every type j.
    pub fn counts_by_type(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.m];
        for &t in &self.types {
            counts[t] += 1;
        }
        counts
    }

    pub fn points_of_type(&self, j: usize) -> impl Iterator<Item = &[f64]> + '_ {
        let d = self.window.dim();
        self.types
            .iter()
            .enumerate()
            .filter(move |(_, &t)| t == j)
            .map(move |(i, _)| &self.coords[i * d..(i + 1) * d])
    }
}

// ---------------------------------------------------------------------------
// Frequency grid
// ---------------------------------------------------------------------------

/// Symmetric rectangular frequency grid with nodes ω_{k,Ω} = 2π k ⊘ Ω.
///
/// Frequencies are addressed by the integer index k, so the grid's symmetry
/// about the origin is exact: negating an index negates the node with no
/// floating-point mismatch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    omega_vec: Vec<f64>,
    k_max: Vec<i64>,
}

impl FrequencyGrid {
    pub fn new(omega_vec: Vec<f64>, k_max: Vec<i64>) -> Result<Self, GeometryError> {
        if omega_vec.len() != k_max.len() || omega_vec.is_empty() {
            return Err(GeometryError::InvalidArgument(
                "grid vector and index ranges must have equal nonzero length".into(),
            ));
        }
        if omega_vec.iter().any(|&o| !(o > 0.0)) {
            return Err(GeometryError::InvalidArgument(
                "grid vector entries must be positive".into(),
            ));
        }
        if k_max.iter().any(|&k| k < 0) {
            return Err(GeometryError::InvalidArgument(
                "index ranges must be nonnegative".into(),
            ));
        }
        Ok(Self { omega_vec, k_max })
    }

    pub fn dim(&self) -> usize {
        self.omega_vec.len()
    }

    /// The grid vector Ω.
    pub fn omega_vec(&self) -> &[f64] {
        &self.omega_vec
    }

    pub fn k_max(&self) -> &[i64] {
        &self.k_max
    }

    /// Grid spacing 2π/Ω_j along axis j.
    pub fn spacing(&self, axis: usize) -> f64 {
        2.0 * PI / self.omega_vec[axis]
    }

    pub fn max_spacing(&self) -> f64 {
        (0..self.dim()).map(|j| self.spacing(j)).fold(0.0, f64::max)
    }

    /// Number of grid nodes.
    pub fn len(&self) -> usize {
        self.k_max.iter().map(|&k| (2 * k + 1) as usize).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Node coordinates ω = 2π k ⊘ Ω.
    pub fn node(&self, k: &[i64]) -> Vec<f64> {
        k.iter()
            .zip(&self.omega_vec)
            .map(|(&kj, &oj)| 2.0 * PI * kj as f64 / oj)
            .collect()
    }

    pub fn node_into(&self, k: &[i64], out: &mut [f64]) {
        for j in 0..self.dim() {
            out[j] = 2.0 * PI * k[j] as f64 / self.omega_vec[j];
        }
    }

    /// Flat storage index of a multi-index, if in range.
    pub fn flat_index(&self, k: &[i64]) -> Option<usize> {
        let mut idx = 0usize;
        for j in 0..self.dim() {
            if k[j].abs() > self.k_max[j] {
                return None;
            }
            let dim_j = (2 * self.k_max[j] + 1) as usize;
            idx = idx * dim_j + (k[j] + self.k_max[j]) as usize;
        }
        Some(idx)
    }

    /// Multi-index of a flat storage index.
    pub fn multi_index(&self, mut idx: usize) -> Vec<i64> {
        let d = self.dim();
        let mut k = vec![0i64; d];
        for j in (0..d).rev() {
            let dim_j = (2 * self.k_max[j] + 1) as usize;
            k[j] = (idx % dim_j) as i64 - self.k_max[j];
            idx /= dim_j;
        }
        k
    }

    /// Flat index of -k given the flat index of k.
    pub fn negated_index(&self, idx: usize) -> usize {
        let k = self.multi_index(idx);
        let neg: Vec<i64> = k.iter().map(|&x| -x).collect();
        self.flat_index(&neg).expect("symmetric grid")
    }

    /// Iterate all multi-indices in flat-storage order.
    pub fn iter_indices(&self) -> impl Iterator<Item = Vec<i64>> + '_ {
        (0..self.len()).map(|i| self.multi_index(i))
    }

    /// Sup-norm of the node at flat index `idx`.
    pub fn node_norm_inf(&self, idx: usize) -> f64 {
        let k = self.multi_index(idx);
        k.iter()
            .enumerate()
            .map(|(j, &kj)| (2.0 * PI * kj.abs() as f64) / self.omega_vec[j])
            .fold(0.0, f64::max)
    }
}

/// Build the grid Ω = scale · A with all indices k such that
/// ‖ω_{k,Ω}‖_∞ ≤ max_norm.
pub fn make_frequency_grid(
    window: &Window,
    scale: f64,
    max_norm: f64,
) -> Result<FrequencyGrid, GeometryError> {
    if !(scale > 0.0) {
        return Err(GeometryError::InvalidArgument(format!(
            "grid scale must be positive, got {scale}"
        )));
    }
    if !(max_norm > 0.0) {
        return Err(GeometryError::InvalidArgument(format!(
            "max frequency norm must be positive, got {max_norm}"
        )));
    }
    let omega_vec: Vec<f64> = window.side_lengths().iter().map(|&a| scale * a).collect();
    // ‖ω‖∞ ≤ max_norm axis by axis: k_max = floor(max_norm Ω_j / 2π), with a
    // small epsilon so exact boundary nodes are kept.
    let k_max: Vec<i64> = omega_vec
        .iter()
        .map(|&oj| (max_norm * oj / (2.0 * PI) + 1e-9).floor() as i64)
        .collect();
    FrequencyGrid::new(omega_vec, k_max)
}

// ---------------------------------------------------------------------------
// Hermitian matrix fields
// ---------------------------------------------------------------------------

/// Entry-wise tolerance for the Hermitian-ness checks of stored fields.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Relative eigenvalue floor for positive semidefiniteness checks.
pub const PSD_FLOOR: f64 = 1e-8;

/// A frequency grid together with one m x m complex matrix per node.
#[derive(Debug, Clone)]
pub struct HermitianField {
    grid: FrequencyGrid,
    m: usize,
    values: Vec<CMat>,
}

impl HermitianField {
    /// Wrap per-node matrices, checking the Hermitian invariant entrywise.
    pub fn new(grid: FrequencyGrid, m: usize, values: Vec<CMat>) -> Result<Self, GeometryError> {
        if values.len() != grid.len() {
            return Err(GeometryError::FieldInvariant(format!(
                "expected {} matrices, got {}",
                grid.len(),
                values.len()
            )));
        }
        for (idx, v) in values.iter().enumerate() {
            if v.nrows() != m || v.ncols() != m {
                return Err(GeometryError::FieldInvariant(format!(
                    "matrix at node {idx} is {}x{}, expected {m}x{m}",
                    v.nrows(),
                    v.ncols()
                )));
            }
            if hermitian_defect(v) > HERMITIAN_TOL {
                return Err(GeometryError::FieldInvariant(format!(
                    "matrix at node {:?} deviates from Hermitian symmetry by {:.3e}",
                    grid.multi_index(idx),
                    hermitian_defect(v)
                )));
            }
        }
        Ok(Self { grid, m, values })
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn num_types(&self) -> usize {
        self.m
    }

    pub fn value(&self, idx: usize) -> &CMat {
        &self.values[idx]
    }

    pub fn value_at(&self, k: &[i64]) -> Option<&CMat> {
        self.grid.flat_index(k).map(|i| &self.values[i])
    }

    pub fn values(&self) -> &[CMat] {
        &self.values
    }

    /// Check the field symmetry value(-ω) = conj(value(ω)).
    pub fn validate_conjugate_symmetry(&self, tol: f64) -> Result<(), GeometryError> {
        for idx in 0..self.values.len() {
            let neg = self.grid.negated_index(idx);
            let a = &self.values[idx];
            let b = &self.values[neg];
            let defect = a
                .iter()
                .zip(b.iter())
                .map(|(x, y)| (x - y.conj()).norm())
                .fold(0.0, f64::max);
            if defect > tol {
                return Err(GeometryError::FieldInvariant(format!(
                    "conjugate symmetry violated at node {:?} by {defect:.3e}",
                    self.grid.multi_index(idx)
                )));
            }
        }
        Ok(())
    }
}

/// Max entrywise deviation of M from its conjugate transpose.
pub fn hermitian_defect(m: &CMat) -> f64 {
    let mut defect: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            defect = defect.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    defect
}

/// Eigenvalues of the Hermitian part (M + M*)/2, ascending.
pub fn hermitian_part_eigenvalues(m: &CMat) -> Vec<f64> {
    let herm = (m + m.adjoint()).scale(0.5);
    let mut eig: Vec<f64> = herm.symmetric_eigen().eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
    eig
}

/// True iff ‖M - M*‖∞ ≤ tol and every eigenvalue of (M + M*)/2 is ≥ -tol.
pub fn assert_hermitian_psd(m: &CMat, tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    if hermitian_defect(m) > tol {
        return false;
    }
    hermitian_part_eigenvalues(m)
        .first()
        .map(|&lo| lo >= -tol)
        .unwrap_or(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64 as C;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    #[test]
    fn window_rejects_nonpositive_sides() {
        assert!(Window::new(vec![10.0, 0.0]).is_err());
        assert!(Window::new(vec![-1.0]).is_err());
        let w = Window::new(vec![10.0, 20.0]).unwrap();
        assert_abs_diff_eq!(w.volume(), 200.0);
        assert!(w.contains(&[5.0, -10.0]));
        assert!(!w.contains(&[5.1, 0.0]));
    }

    #[test]
    fn pattern_validates_points_and_types() {
        let w = Window::square(10.0, 2).unwrap();
        assert!(MultitypePattern::new(w.clone(), 2, vec![0.0, 0.0], vec![0]).is_ok());
        assert!(matches!(
            MultitypePattern::new(w.clone(), 2, vec![6.0, 0.0], vec![0]),
            Err(GeometryError::PointOutsideWindow { .. })
        ));
        assert!(matches!(
            MultitypePattern::new(w, 2, vec![0.0, 0.0], vec![2]),
            Err(GeometryError::TypeOutOfRange { .. })
        ));
    }

    #[test]
    fn grid_matches_simulation_convention() {
        // Ω = (4/3)A and max_norm = 1.5π give nodes (1.5π t / A) with
        // t in {-A..A} for a square window of integer side A.
        let w = Window::square(10.0, 2).unwrap();
        let g = make_frequency_grid(&w, 4.0 / 3.0, 1.5 * PI).unwrap();
        assert_eq!(g.k_max(), &[10, 10]);
        assert_eq!(g.len(), 21 * 21);
        let node = g.node(&[3, -7]);
        assert_abs_diff_eq!(node[0], 1.5 * PI * 3.0 / 10.0, epsilon = 1e-13);
        assert_abs_diff_eq!(node[1], -1.5 * PI * 7.0 / 10.0, epsilon = 1e-13);
    }

    #[test]
    fn grid_boundary_index_included() {
        let w = Window::square(1.0, 1).unwrap();
        assert!(make_frequency_grid(&w, 1.0, 0.0).is_err());
        let g = make_frequency_grid(&w, 1.0, 2.0 * PI).unwrap();
        assert_eq!(g.k_max(), &[1]);
    }

    #[test]
    fn grid_symmetry_is_exact() {
        let w = Window::new(vec![12.0, 7.0]).unwrap();
        let g = make_frequency_grid(&w, 4.0 / 3.0, 1.5 * PI).unwrap();
        for idx in 0..g.len() {
            let k = g.multi_index(idx);
            let neg: Vec<i64> = k.iter().map(|&x| -x).collect();
            let node = g.node(&k);
            let node_neg = g.node(&neg);
            for j in 0..2 {
                assert_eq!(node[j], -node_neg[j]);
            }
            assert_eq!(g.negated_index(g.negated_index(idx)), idx);
        }
    }

    #[test]
    fn hermitian_psd_accepts_identity_rejects_nonhermitian() {
        let id = CMat::identity(3, 3);
        assert!(assert_hermitian_psd(&id, 1e-12));
        let bad = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        assert!(!assert_hermitian_psd(&bad, 1e-12));
    }

    #[test]
    fn rank_one_outer_product_is_psd() {
        // vv* has eigenvalues {‖v‖², 0, ...}: PSD by direct computation.
        let v = nalgebra::DVector::from_vec(vec![c(0.3, -1.2), c(2.0, 0.4), c(-0.7, 0.9)]);
        let outer = &v * v.adjoint();
        assert!(assert_hermitian_psd(&outer, 1e-12));
        let eig = hermitian_part_eigenvalues(&outer);
        assert_abs_diff_eq!(eig[2], v.norm_squared(), epsilon = 1e-12);
        assert_abs_diff_eq!(eig[0], 0.0, epsilon = 1e-12);
        let negdef = outer.scale(-1.0);
        assert!(!assert_hermitian_psd(&negdef, 1e-12));
    }

    #[test]
    fn hermitian_psd_invariant_under_unitary_conjugation() {
        // Rotate a PSD matrix by a unitary built from a complex Householder
        // reflection; the predicate's answer must not change.
        let v = nalgebra::DVector::from_vec(vec![c(1.0, 0.5), c(-0.3, 0.2)]);
        let m = &v * v.adjoint() + CMat::identity(2, 2).scale(0.1);
        let u_vec = nalgebra::DVector::from_vec(vec![c(0.6, 0.3), c(1.0, -0.4)]);
        let u_norm = u_vec.norm();
        let un = u_vec.scale(1.0 / u_norm);
        let unitary = CMat::identity(2, 2) - (&un * un.adjoint()).scale(2.0);
        let rotated = &unitary * &m * unitary.adjoint();
        assert!(assert_hermitian_psd(&m, 1e-10));
        assert!(assert_hermitian_psd(&rotated, 1e-10));
    }

    #[test]
    fn field_checks_hermitian_invariant() {
        let w = Window::square(4.0, 1).unwrap();
        let g = make_frequency_grid(&w, 1.0, PI).unwrap();
        let n = g.len();
        let good = vec![CMat::identity(2, 2); n];
        let field = HermitianField::new(g.clone(), 2, good).unwrap();
        field.validate_conjugate_symmetry(1e-12).unwrap();
        let mut bad = vec![CMat::identity(2, 2); n];
        bad[0][(0, 1)] = c(1.0, 0.0);
        assert!(HermitianField::new(g, 2, bad).is_err());
    }
}
