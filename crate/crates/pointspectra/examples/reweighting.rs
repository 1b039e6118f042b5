//! The weighted-process construction: reweighting a simulated inhomogeneous
//! pattern by 1/λ yields a unit-intensity process (superposition of
//! independent copies plus thinning).
//!
//! Run with: cargo run --release --example reweighting

use pointspectra::geometry::Window;
use pointspectra::intensity::{BasisFn, IntensityModel};
use pointspectra::sim::{reweight_by_thinning, sample_poisson_pattern};

fn main() {
    let window = Window::square(12.0, 2).unwrap();
    // The inhomogeneous intensity of the M2 first component.
    let lambda = IntensityModel::log_linear(
        vec![BasisFn::Const, BasisFn::X1Sq, BasisFn::X2Sq],
        vec![vec![3.0_f64.ln(), -2.0, -2.0]],
    )
    .unwrap();

    let reps = 100;
    let mut raw_mean = 0.0;
    let mut rew_mean = 0.0;
    for seed in 0..reps {
        let sim = sample_poisson_pattern(&lambda, &window, 10_000 + seed).unwrap();
        raw_mean += sim.pattern.len() as f64 / reps as f64;
        let rew = reweight_by_thinning(&sim, &lambda, 20_000 + seed).unwrap();
        rew_mean += rew.len() as f64 / reps as f64;
    }
    println!("window volume |D| = {}", window.volume());
    println!("mean count before reweighting: {raw_mean:.1}");
    println!("mean count after reweighting:  {rew_mean:.1} (unit intensity target {})", window.volume());

    // Observed (non-simulated) data is refused: the construction needs
    // independent copies of the generating process.
    let observed = pointspectra::sim::SimulatedPattern::observed(
        pointspectra::geometry::MultitypePattern::empty(window, 1),
    );
    match reweight_by_thinning(&observed, &lambda, 1) {
        Err(e) => println!("observed pattern rejected as expected: {e}"),
        Ok(_) => unreachable!(),
    }
}
