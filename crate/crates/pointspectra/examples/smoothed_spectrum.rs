//! Kernel-smoothed pseudo-spectrum estimation on one M1 replication, with
//! both bandwidth rules, compared against the analytic truth on the radial
//! average.
//!
//! Run with: cargo run --release --example smoothed_spectrum

use std::f64::consts::PI;

use pointspectra::bandwidth::{optimal_bandwidth, select_bandwidth_cv, CvConfig};
use pointspectra::bench::radial_average;
use pointspectra::geometry::{make_frequency_grid, Window};
use pointspectra::intensity::{fit_intensity, IntensityFamily};
use pointspectra::sim::{
    reweighted_covariance, sample_cox_pattern, CoxModelParams, CoxPreset, SimulationConfig,
};
use pointspectra::spectral::{feasible_periodogram, kernel_smooth, KernelSpec};
use pointspectra::taper::Taper;
use pointspectra::theory::AnalyticPseudoSpectrum;

fn main() {
    let params = CoxModelParams::preset(CoxPreset::M1);
    let window = Window::square(20.0, 2).unwrap();
    let grid = make_frequency_grid(&window, 4.0 / 3.0, 1.5 * PI).unwrap();
    let taper = Taper::cosine_bell(0.025, 2).unwrap();

    let sim = sample_cox_pattern(&params, &window, &SimulationConfig::default(), 42).unwrap();
    let fit = fit_intensity(&sim.pattern, &IntensityFamily::Constant, 8).unwrap();
    let periodogram = feasible_periodogram(&sim.pattern, &taper, &fit.model, &grid).unwrap();

    let b_opt = optimal_bandwidth(&window).unwrap();
    let opt = kernel_smooth(
        &periodogram,
        &KernelSpec::triangular_scalar(b_opt, 2).unwrap(),
    )
    .unwrap();

    let sel = select_bandwidth_cv(&periodogram, &CvConfig::for_grid(&grid)).unwrap();
    let cv = kernel_smooth(
        &periodogram,
        &KernelSpec::triangular_scalar(sel.b_cv, 2).unwrap(),
    )
    .unwrap();
    println!("bandwidths: optimal rule {b_opt:.3}, cross-validated {:.3}", sel.b_cv);

    let truth = AnalyticPseudoSpectrum::new(
        taper,
        params.lambda.clone(),
        reweighted_covariance(&params).unwrap(),
    )
    .unwrap()
    .eval_grid(&grid)
    .unwrap();

    let width = 3.0 * grid.max_spacing();
    let raw_rings = radial_average(periodogram.field(), (0, 0), width).unwrap();
    let opt_rings = radial_average(&opt.field, (0, 0), width).unwrap();
    let cv_rings = radial_average(&cv.field, (0, 0), width).unwrap();
    let truth_rings = radial_average(&truth, (0, 0), width).unwrap();

    println!("radial average of F^(1,1):");
    println!("{:>8} {:>10} {:>10} {:>10} {:>10}", "‖ω‖", "raw", "opt", "cv", "truth");
    for i in 0..raw_rings.len().min(8) {
        println!(
            "{:8.3} {:10.4} {:10.4} {:10.4} {:10.4}",
            raw_rings[i].0, raw_rings[i].1, opt_rings[i].1, cv_rings[i].1, truth_rings[i].1
        );
    }
}
