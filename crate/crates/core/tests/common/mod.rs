#![allow(dead_code)]

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use solscope_core::radial::{from_spectral, Grid, RadialField, SpectralField};

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Random nodal values, no smoothness.
pub fn rough_field(grid: &Arc<Grid>, seed: u64) -> RadialField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    RadialField::from_fn(grid, |_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

/// Random combination of the lowest `modes` eigenfunctions.
pub fn smooth_field(grid: &Arc<Grid>, seed: u64, modes: usize) -> RadialField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coeffs = vec![c(0.0, 0.0); grid.num_points()];
    for v in coeffs.iter_mut().take(modes) {
        *v = c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    }
    from_spectral(&SpectralField::new(grid.clone(), coeffs).unwrap())
}

/// Smooth compactly localized random packet: Gaussian envelope at a random
/// center times a random phase `e^{ik₀r}`.
pub fn random_packet(grid: &Arc<Grid>, seed: u64, r_hi: f64, k_hi: f64) -> RadialField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r0 = rng.gen_range(0.0..r_hi);
    let w = rng.gen_range(0.7..2.0);
    let k0 = rng.gen_range(-k_hi..k_hi);
    let a = c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    RadialField::from_fn(grid, |r| {
        let e = (-(r - r0).powi(2) / (2.0 * w * w)).exp();
        a * e * Complex64::from_polar(1.0, k0 * r)
    })
}

/// Closed-form free Schrödinger flow of `e^{-r²/2}` in dimension n.
pub fn gaussian_exact(n: usize, t: f64, r: f64) -> Complex64 {
    let a = c(1.0, 2.0 * t);
    a.powf(-(n as f64) / 2.0) * (-(r * r) / (2.0 * a)).exp()
}

pub fn rel_err_within(f: &RadialField, g: impl Fn(f64) -> Complex64, r_cap: f64) -> f64 {
    let grid = f.grid();
    let mut num = 0.0;
    let mut den = 0.0;
    for ((v, &r), m) in f.values().iter().zip(grid.nodes()).zip(grid.measure()) {
        if r <= r_cap {
            let e = g(r);
            num += (v - e).norm_sqr() * m;
            den += e.norm_sqr() * m;
        }
    }
    (num / den).sqrt()
}

pub fn dist(a: &RadialField, b: &RadialField) -> f64 {
    a.sub(b).unwrap().norm()
}
