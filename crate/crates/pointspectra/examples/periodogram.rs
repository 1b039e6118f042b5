//! Compute the tapered DFT and the feasible (bias-corrected) periodogram of
//! a homogeneous Poisson sample, and compare its band average to the flat
//! spectrum (2π)^{-2} λ.
//!
//! Run with: cargo run --release --example periodogram

use std::f64::consts::PI;

use pointspectra::geometry::{make_frequency_grid, MultitypePattern, Window};
use pointspectra::intensity::{fit_intensity, IntensityFamily};
use pointspectra::spectral::{compute_dft, feasible_periodogram};
use pointspectra::taper::Taper;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let lambda = 2.0;
    let side = 20.0;
    let window = Window::square(side, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = rand_distr::Distribution::sample(
        &rand_distr::Poisson::new(lambda * window.volume()).unwrap(),
        &mut rng,
    ) as usize;
    let mut coords = Vec::with_capacity(2 * n);
    for _ in 0..n {
        coords.push(rng.random_range(-side / 2.0..side / 2.0));
        coords.push(rng.random_range(-side / 2.0..side / 2.0));
    }
    let pattern = MultitypePattern::new(window.clone(), 1, coords, vec![0; n]).unwrap();
    println!("sampled {n} points of a Poisson process with λ = {lambda}");

    let taper = Taper::cosine_bell(0.025, 2).unwrap();
    let j = compute_dft(&pattern, &taper, &[PI, 0.0]);
    println!("tapered DFT at ω = (π, 0): {:.5} + {:.5}i", j[0].re, j[0].im);

    let grid = make_frequency_grid(&window, 4.0 / 3.0, 1.5 * PI).unwrap();
    let fit = fit_intensity(&pattern, &IntensityFamily::Constant, 8).unwrap();
    println!("fitted constant intensity: {:.4}", fit.model.beta()[0][0]);
    let p = feasible_periodogram(&pattern, &taper, &fit.model, &grid).unwrap();

    let mut acc = 0.0;
    let mut count = 0usize;
    for idx in 0..grid.len() {
        let norm = grid.node_norm_inf(idx);
        if (0.1 * PI..=1.5 * PI).contains(&norm) {
            acc += p.field().value(idx)[(0, 0)].re;
            count += 1;
        }
    }
    let truth = lambda / (2.0 * PI).powi(2);
    println!(
        "band-averaged periodogram over {count} nodes: {:.5} (flat spectrum {:.5})",
        acc / count as f64,
        truth
    );
}
