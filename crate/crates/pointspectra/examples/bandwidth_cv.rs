//! Trace the cross-validated spectral divergence L(b) on one M1 replication
//! and report the selected bandwidth next to the optimal-rate value.
//!
//! Run with: cargo run --release --example bandwidth_cv

use std::f64::consts::PI;

use pointspectra::bandwidth::{optimal_bandwidth, select_bandwidth_cv, CvConfig};
use pointspectra::geometry::{make_frequency_grid, Window};
use pointspectra::intensity::{fit_intensity, IntensityFamily};
use pointspectra::sim::{sample_cox_pattern, CoxModelParams, CoxPreset, SimulationConfig};
use pointspectra::spectral::feasible_periodogram;
use pointspectra::taper::Taper;

fn main() {
    let params = CoxModelParams::preset(CoxPreset::M1);
    let window = Window::square(20.0, 2).unwrap();
    let grid = make_frequency_grid(&window, 4.0 / 3.0, 1.5 * PI).unwrap();
    let taper = Taper::cosine_bell(0.025, 2).unwrap();
    let sim = sample_cox_pattern(&params, &window, &SimulationConfig::default(), 7).unwrap();
    let fit = fit_intensity(&sim.pattern, &IntensityFamily::Constant, 8).unwrap();
    let periodogram = feasible_periodogram(&sim.pattern, &taper, &fit.model, &grid).unwrap();

    let config = CvConfig::for_grid(&grid);
    let sel = select_bandwidth_cv(&periodogram, &config).unwrap();
    println!("L(b) scan over [{:.3}, {:.3}]:", config.b_min, config.b_max);
    for (b, l) in &sel.curve {
        let marker = if (b - sel.b_cv).abs() < 1e-9 { "  <- selected" } else { "" };
        println!("  b = {b:7.4}   L = {l:14.3}{marker}");
    }
    println!(
        "selected b_CV = {:.4}; optimal-rate rule gives {:.4}",
        sel.b_cv,
        optimal_bandwidth(&window).unwrap()
    );
}
