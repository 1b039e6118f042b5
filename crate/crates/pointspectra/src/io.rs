//! File formats: point-pattern CSV with a JSON window sidecar, spectrum
//! JSON, and the study-report CSV table.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::StudyReport;
use crate::geometry::{FrequencyGrid, GeometryError, HermitianField, MultitypePattern, Window};
use crate::spectral::{Provenance, SpectrumEstimate};

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

// ---------------------------------------------------------------------------
// Pattern CSV + window sidecar
// ---------------------------------------------------------------------------

/// The JSON sidecar describing a pattern file's window and type count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowMeta {
    pub side_lengths: Vec<f64>,
    pub m: usize,
}

impl WindowMeta {
    pub fn for_pattern(pattern: &MultitypePattern) -> Self {
        Self {
            side_lengths: pattern.window().side_lengths().to_vec(),
            m: pattern.num_types(),
        }
    }

    pub fn window(&self) -> Result<Window, IoError> {
        Ok(Window::new(self.side_lengths.clone())?)
    }
}

pub fn write_window_meta(path: &Path, meta: &WindowMeta) -> Result<(), IoError> {
    let mut f = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, meta)?;
    f.write_all(b"\n")?;
    Ok(())
}

pub fn read_window_meta(path: &Path) -> Result<WindowMeta, IoError> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

const COORD_NAMES: [&str; 4] = ["x", "y", "z", "w"];

/// Write `x,y[,z,w],type` rows; coordinates in window units, types 1-based.
pub fn write_pattern_csv(path: &Path, pattern: &MultitypePattern) -> Result<(), IoError> {
    let d = pattern.window().dim();
    if d > 4 {
        return Err(IoError::Format(format!(
            "pattern CSV supports up to 4 coordinates, got {d}"
        )));
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = COORD_NAMES[..d].to_vec();
    header.push("type");
    w.write_record(&header)?;
    for i in 0..pattern.len() {
        let mut row: Vec<String> = pattern.point(i).iter().map(|c| format!("{c}")).collect();
        row.push(format!("{}", pattern.type_of(i) + 1));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a pattern CSV against its window sidecar.
pub fn read_pattern_csv(path: &Path, meta: &WindowMeta) -> Result<MultitypePattern, IoError> {
    let window = meta.window()?;
    let d = window.dim();
    let mut rdr = csv::Reader::from_path(path)?;
    {
        let headers = rdr.headers()?;
        if headers.len() != d + 1 || &headers[d] != "type" {
            return Err(IoError::Format(format!(
                "expected header {:?} then `type`, got {headers:?}",
                &COORD_NAMES[..d]
            )));
        }
    }
    let mut coords = Vec::new();
    let mut types = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != d + 1 {
            return Err(IoError::Format(format!(
                "row {} has {} fields, expected {}",
                line + 2,
                rec.len(),
                d + 1
            )));
        }
        for j in 0..d {
            let v: f64 = rec[j]
                .parse()
                .map_err(|e| IoError::Format(format!("row {}: {e}", line + 2)))?;
            coords.push(v);
        }
        let t: usize = rec[d]
            .parse()
            .map_err(|e| IoError::Format(format!("row {}: {e}", line + 2)))?;
        if t == 0 || t > meta.m {
            return Err(IoError::Format(format!(
                "row {}: type {t} outside 1..={}",
                line + 2,
                meta.m
            )));
        }
        types.push(t - 1);
    }
    Ok(MultitypePattern::new(window, meta.m, coords, types)?)
}

// ---------------------------------------------------------------------------
// Spectrum JSON
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridMeta {
    pub omega_vec: Vec<f64>,
    pub k_max: Vec<i64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumNode {
    pub k: Vec<i64>,
    pub omega: Vec<f64>,
    /// Row-major real parts of the m x m matrix.
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumJson {
    pub grid: GridMeta,
    pub m: usize,
    pub provenance: Provenance,
    /// The intensity model used to demean the DFT, when one was fitted.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fitted_intensity: Option<crate::intensity::IntensityModel>,
    pub nodes: Vec<SpectrumNode>,
}

pub fn spectrum_to_json(estimate: &SpectrumEstimate) -> SpectrumJson {
    field_to_json(&estimate.field, estimate.provenance.clone())
}

pub fn field_to_json(field: &HermitianField, provenance: Provenance) -> SpectrumJson {
    let grid = field.grid();
    let m = field.num_types();
    let nodes = (0..grid.len())
        .map(|idx| {
            let k = grid.multi_index(idx);
            let omega = grid.node(&k);
            let mat = field.value(idx);
            let re = (0..m)
                .map(|i| (0..m).map(|j| mat[(i, j)].re).collect())
                .collect();
            let im = (0..m)
                .map(|i| (0..m).map(|j| mat[(i, j)].im).collect())
                .collect();
            SpectrumNode { k, omega, re, im }
        })
        .collect();
    SpectrumJson {
        grid: GridMeta {
            omega_vec: grid.omega_vec().to_vec(),
            k_max: grid.k_max().to_vec(),
        },
        m,
        provenance,
        fitted_intensity: None,
        nodes,
    }
}

pub fn json_to_field(json: &SpectrumJson) -> Result<HermitianField, IoError> {
    let grid = FrequencyGrid::new(json.grid.omega_vec.clone(), json.grid.k_max.clone())?;
    let mut values = vec![crate::geometry::CMat::zeros(json.m, json.m); grid.len()];
    if json.nodes.len() != grid.len() {
        return Err(IoError::Format(format!(
            "spectrum JSON has {} nodes but the grid has {}",
            json.nodes.len(),
            grid.len()
        )));
    }
    for node in &json.nodes {
        let idx = grid
            .flat_index(&node.k)
            .ok_or_else(|| IoError::Format(format!("node index {:?} off the grid", node.k)))?;
        let mut mat = crate::geometry::CMat::zeros(json.m, json.m);
        for i in 0..json.m {
            for j in 0..json.m {
                mat[(i, j)] = num_complex::Complex64::new(node.re[i][j], node.im[i][j]);
            }
        }
        values[idx] = mat;
    }
    Ok(HermitianField::new(grid, json.m, values)?)
}

pub fn write_spectrum_json(path: &Path, json: &SpectrumJson) -> Result<(), IoError> {
    let mut f = fs::File::create(path)?;
    serde_json::to_writer(&mut f, json)?;
    f.write_all(b"\n")?;
    Ok(())
}

pub fn read_spectrum_json(path: &Path) -> Result<SpectrumJson, IoError> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

// ---------------------------------------------------------------------------
// Study report output
// ---------------------------------------------------------------------------

pub fn write_json_pretty<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut f = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Per-cell CSV in the layout of the simulation tables: one row per
/// (side, entry, estimator) with IBIAS² and IMSE columns.
pub fn write_study_csv(path: &Path, report: &StudyReport) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["model", "side", "entry", "estimator", "ibias2", "imse", "skipped_nodes"])?;
    for cell in &report.cells {
        w.write_record(&[
            format!("{:?}", report.config.model),
            format!("{}", cell.side),
            format!("({},{})", cell.entry.0 + 1, cell.entry.1 + 1),
            cell.estimator.name().to_string(),
            format!("{:.6}", cell.ibias2),
            format!("{:.6}", cell.imse),
            format!("{}", cell.skipped_nodes),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Radial profiles of one entry of a field as CSV rows (r, value).
pub fn write_radial_csv(
    path: &Path,
    rings: &[(f64, f64)],
    label: &str,
) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["r", label])?;
    for (r, v) in rings {
        w.write_record(&[format!("{r}"), format!("{v}")])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Provenance;
    use approx::assert_abs_diff_eq;
    use tempfile::tempdir;

    #[test]
    fn pattern_csv_round_trip() {
        let dir = tempdir().unwrap();
        let w = Window::new(vec![10.0, 6.0]).unwrap();
        let pattern = MultitypePattern::new(
            w,
            3,
            vec![0.25, -1.5, 4.99, 3.0, -5.0, -3.0],
            vec![0, 2, 1],
        )
        .unwrap();
        let csv_path = dir.path().join("pattern.csv");
        let meta_path = dir.path().join("window.json");
        write_pattern_csv(&csv_path, &pattern).unwrap();
        write_window_meta(&meta_path, &WindowMeta::for_pattern(&pattern)).unwrap();
        let meta = read_window_meta(&meta_path).unwrap();
        let back = read_pattern_csv(&csv_path, &meta).unwrap();
        assert_eq!(back, pattern);
        // Header check: 1-based types on disk.
        let text = std::fs::read_to_string(&csv_path).unwrap();
        assert!(text.starts_with("x,y,type\n"));
        assert!(text.contains(",3\n"));
    }

    #[test]
    fn pattern_csv_rejects_bad_type() {
        let dir = tempdir().unwrap();
        let csv_path = dir.path().join("bad.csv");
        std::fs::write(&csv_path, "x,y,type\n0.0,0.0,0\n").unwrap();
        let meta = WindowMeta {
            side_lengths: vec![2.0, 2.0],
            m: 2,
        };
        assert!(matches!(
            read_pattern_csv(&csv_path, &meta),
            Err(IoError::Format(_))
        ));
    }

    #[test]
    fn spectrum_json_round_trip() {
        let dir = tempdir().unwrap();
        let w = Window::square(4.0, 2).unwrap();
        let grid = crate::geometry::make_frequency_grid(&w, 1.0, std::f64::consts::PI).unwrap();
        let values: Vec<crate::geometry::CMat> = (0..grid.len())
            .map(|idx| {
                let k = grid.multi_index(idx);
                let phase = 0.3 * k[0] as f64;
                let mut m = crate::geometry::CMat::identity(2, 2);
                m[(0, 1)] = num_complex::Complex64::new(phase.cos(), phase.sin()) * 0.4;
                m[(1, 0)] = m[(0, 1)].conj();
                m
            })
            .collect();
        let field = HermitianField::new(grid, 2, values).unwrap();
        let json = field_to_json(&field, Provenance::RawPeriodogram);
        let path = dir.path().join("spec.json");
        write_spectrum_json(&path, &json).unwrap();
        let back = read_spectrum_json(&path).unwrap();
        let field2 = json_to_field(&back).unwrap();
        for idx in 0..field.grid().len() {
            for (a, b) in field.value(idx).iter().zip(field2.value(idx).iter()) {
                assert_abs_diff_eq!(a.re, b.re);
                assert_abs_diff_eq!(a.im, b.im);
            }
        }
    }
}
