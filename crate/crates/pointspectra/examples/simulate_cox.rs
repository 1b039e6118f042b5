//! Simulate the three product-shot-noise Cox presets and check the
//! first-moment identity E[N_j] = λ^(j) |D| empirically.
//!
//! Run with: cargo run --release --example simulate_cox

use pointspectra::geometry::Window;
use pointspectra::sim::{sample_cox_pattern, CoxModelParams, CoxPreset, SimulationConfig};

fn main() {
    let window = Window::square(20.0, 2).unwrap();
    let config = SimulationConfig::default();
    for preset in [CoxPreset::M1, CoxPreset::M2, CoxPreset::M3] {
        let params = CoxModelParams::preset(preset);
        let reps = 20;
        let mut mean = [0.0f64; 2];
        for seed in 0..reps {
            let sim = sample_cox_pattern(&params, &window, &config, seed).unwrap();
            let counts = sim.pattern.counts_by_type();
            mean[0] += counts[0] as f64 / reps as f64;
            mean[1] += counts[1] as f64 / reps as f64;
        }
        // Expected counts: |D| × the unit-cube average of λ^(j).
        let n = 200;
        let mut expect = [0.0f64; 2];
        for i in 0..n {
            for j in 0..n {
                let u = [
                    -0.5 + (i as f64 + 0.5) / n as f64,
                    -0.5 + (j as f64 + 0.5) / n as f64,
                ];
                for (t, slot) in expect.iter_mut().enumerate() {
                    *slot += params.lambda.evaluate(&u, t).unwrap() / (n * n) as f64;
                }
            }
        }
        println!(
            "{preset:?}: mean counts over {reps} draws = ({:.1}, {:.1}); first-moment target = ({:.1}, {:.1})",
            mean[0],
            mean[1],
            expect[0] * window.volume(),
            expect[1] * window.volume()
        );
    }
}
