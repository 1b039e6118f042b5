//! Coherence diagnostics: theoretical R̃/D̃ curves for the Cox presets and
//! the plug-in estimates on simulated data against a null Monte Carlo band
//! from independent Poisson pairs.
//!
//! Run with: cargo run --release --example coherence

use std::f64::consts::PI;

use pointspectra::bench::{coherence_null_band, empirical_coherence};
use pointspectra::geometry::{make_frequency_grid, Window};
use pointspectra::intensity::{fit_intensity, IntensityFamily, IntensityModel};
use pointspectra::sim::{
    reweighted_covariance, sample_cox_pattern, CoxModelParams, CoxPreset, SimulationConfig,
};
use pointspectra::spectral::{feasible_periodogram, kernel_smooth, KernelSpec};
use pointspectra::taper::Taper;
use pointspectra::theory::reweighted_spectrum_and_coherence;

fn main() {
    // Theoretical coherence of the reweighted process.
    for preset in [CoxPreset::M1, CoxPreset::M3] {
        let l2 = reweighted_covariance(&CoxModelParams::preset(preset)).unwrap();
        println!("{preset:?} theoretical R̃^(1,2)(ω) (equal to D̃ for m = 2):");
        for q in [0.0, 0.5, 1.0, 2.0] {
            let (_, r, _) = reweighted_spectrum_and_coherence(&l2, &[q, 0.0]).unwrap();
            println!("  ‖ω‖ = {q:4.1}: {:.4}", r[(0, 1)]);
        }
    }

    // Empirical coherence on an M1 realization.
    let params = CoxModelParams::preset(CoxPreset::M1);
    let window = Window::square(20.0, 2).unwrap();
    let taper = Taper::cosine_bell(0.025, 2).unwrap();
    let grid = make_frequency_grid(&window, 4.0 / 3.0, 1.5 * PI).unwrap();
    let bandwidth = 1.4;
    let sim = sample_cox_pattern(&params, &window, &SimulationConfig::default(), 2024).unwrap();
    let fit = fit_intensity(&sim.pattern, &IntensityFamily::Constant, 8).unwrap();
    let p = feasible_periodogram(&sim.pattern, &taper, &fit.model, &grid).unwrap();
    let smoothed = kernel_smooth(&p, &KernelSpec::triangular_scalar(bandwidth, 2).unwrap()).unwrap();
    let report = empirical_coherence(&smoothed, &fit.model, &taper).unwrap();
    println!(
        "\nM1 realization: max R̂² = {:.4}, max D̂² = {:.4} over {} nodes (PSD ok: {})",
        report.max_r_squared[0][1],
        report.max_d_squared[0][1],
        report.nodes.len(),
        report.psd_ok
    );

    // Null band from independent Poisson pairs under the fitted intensity,
    // and one more independent pair to place against it.
    let null_model = IntensityModel::constant(vec![0.5, 1.5]).unwrap();
    let band = coherence_null_band(
        &null_model,
        &window,
        &taper,
        bandwidth,
        4.0 / 3.0,
        1.5 * PI,
        40,
        99,
        0.95,
    )
    .unwrap();
    println!("null 95th percentile of max R̂² (independent Poisson pairs): {band:.4}");
    let indep = pointspectra::sim::sample_poisson_pattern(&null_model, &window, 555).unwrap();
    let fit0 = fit_intensity(&indep.pattern, &IntensityFamily::Constant, 8).unwrap();
    let p0 = feasible_periodogram(&indep.pattern, &taper, &fit0.model, &grid).unwrap();
    let sm0 =
        kernel_smooth(&p0, &KernelSpec::triangular_scalar(bandwidth, 2).unwrap()).unwrap();
    let rep0 = empirical_coherence(&sm0, &fit0.model, &taper).unwrap();
    println!(
        "independent pair max R̂² = {:.4} (below the null band: {})",
        rep0.max_r_squared[0][1],
        rep0.max_r_squared[0][1] < band
    );
}
