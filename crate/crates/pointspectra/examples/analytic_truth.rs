//! Analytic machinery: pseudo-spectra of M1-M3 from their closed-form
//! reduced covariances, local spectra, the taper-weighted integral identity,
//! and the clustering/repulsion sign of the cross term.
//!
//! Run with: cargo run --release --example analytic_truth

use std::f64::consts::PI;

use pointspectra::sim::{reweighted_covariance, CoxModelParams, CoxPreset};
use pointspectra::taper::Taper;
use pointspectra::theory::{
    inverse_fourier_l2_matrix, local_spectrum, AnalyticPseudoSpectrum,
};

fn main() {
    let taper = Taper::cosine_bell(0.025, 2).unwrap();
    for preset in [CoxPreset::M1, CoxPreset::M2, CoxPreset::M3] {
        let params = CoxModelParams::preset(preset);
        let l2 = reweighted_covariance(&params).unwrap();
        let ps = AnalyticPseudoSpectrum::new(taper.clone(), params.lambda.clone(), l2.clone())
            .unwrap();
        println!("{preset:?} (L₂ support radius {:.1}):", l2.support_radius());
        println!(
            "{:>8} {:>10} {:>10} {:>10}",
            "‖ω‖", "F^(1,1)", "F^(2,2)", "F^(1,2)"
        );
        for q in [0.0, 0.5, 1.0, 2.0, 3.0 * PI] {
            let f = ps.eval(&[q, 0.0]).unwrap();
            println!(
                "{q:8.3} {:10.5} {:10.5} {:10.5}",
                f[(0, 0)].re,
                f[(1, 1)].re,
                f[(0, 1)].re
            );
        }
        // Cross-term sign near the origin tells clustering from repulsion.
        let g = inverse_fourier_l2_matrix(&l2, &[0.25, 0.0]).unwrap();
        println!(
            "  sign of F^-1(ℓ₂^(1,2)) near 0: {}",
            if g[(0, 1)].re > 0.0 { "positive (clustering)" } else { "negative (repulsion)" }
        );
        // Local spectra at the center and a corner of the unit cube.
        if preset == CoxPreset::M2 {
            for u in [[0.0, 0.0], [0.45, 0.45]] {
                let f_u = local_spectrum(&params.lambda, &l2, &u, &[0.5, 0.0]).unwrap();
                println!(
                    "  local F^u(0.5, 0) at u = ({:.2}, {:.2}): diag = ({:.5}, {:.5})",
                    u[0],
                    u[1],
                    f_u[(0, 0)].re,
                    f_u[(1, 1)].re
                );
            }
        }
        println!();
    }
}
