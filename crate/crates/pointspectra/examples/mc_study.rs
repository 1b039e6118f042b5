//! A miniature Monte Carlo study: IBIAS² and IMSE of the three estimators
//! on M1 at two window sizes, printed in the simulation-table layout.
//!
//! Run with: cargo run --release --example mc_study

use pointspectra::bench::{run_study, EstimatorKind, IntensityScheme, StudyConfig};
use pointspectra::sim::CoxPreset;

fn main() {
    let config = StudyConfig {
        model: CoxPreset::M1,
        sides: vec![10.0, 20.0],
        reps: 20,
        estimators: vec![
            EstimatorKind::Raw,
            EstimatorKind::KernelOpt,
            EstimatorKind::KernelCv,
        ],
        intensity: IntensityScheme::Correct,
        seed: 7,
        ..Default::default()
    };
    println!(
        "running {} replicates of {:?} at A = {:?} ...",
        config.reps, config.model, config.sides
    );
    let report = run_study(&config).unwrap();
    println!(
        "done in {:.1}s ({} failures)\n",
        report.runtime_seconds,
        report.failures.len()
    );
    println!(
        "{:>6} {:>8} {:>12} {:>10} {:>10}",
        "side", "entry", "estimator", "IBIAS²", "IMSE"
    );
    for cell in &report.cells {
        println!(
            "{:>6} {:>8} {:>12} {:>10.4} {:>10.4}",
            cell.side,
            format!("({},{})", cell.entry.0 + 1, cell.entry.1 + 1),
            cell.estimator.name(),
            cell.ibias2,
            cell.imse
        );
    }
    println!();
    for bw in &report.bandwidths {
        println!(
            "A = {}: b_CV quartiles ({:.3}, {:.3}, {:.3}), mean {:.3}",
            bw.side, bw.q1, bw.median, bw.q3, bw.mean
        );
    }
    for (side, b) in &report.optimal_bandwidths {
        println!("A = {side}: optimal-rate bandwidth {b:.3}");
    }
}
