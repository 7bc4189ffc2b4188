//! Synthetic two-dye transmittance cubes.
//!
//! Each pixel carries nonnegative abundances of two absorbing dyes with
//! Gaussian absorption spectra; transmittance follows the exponential
//! absorption law, so values always land in (0, 1] and spectra across the
//! image span a low-dimensional family that a trained sensing pipeline
//! can exploit.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cube::SpectralCube;
use crate::error::Result;

fn gaussian(lambda: f64, center: f64, sigma: f64) -> f64 {
    let d = (lambda - center) / sigma;
    (-0.5 * d * d).exp()
}

/// Absorption spectrum of the first dye (amplitude 1.2, centered 560 nm,
/// sigma 50 nm).
pub fn absorption_a(lambda: f64) -> f64 {
    1.2 * gaussian(lambda, 560.0, 50.0)
}

/// Absorption spectrum of the second dye (amplitude 1.0, centered 525 nm,
/// sigma 35 nm).
pub fn absorption_b(lambda: f64) -> f64 {
    gaussian(lambda, 525.0, 35.0)
}

/// Transmittance of a pixel with dye abundances `(a, b)` at `lambda`:
/// exp of the negated total absorption. Strictly positive, at most 1 for
/// nonnegative abundances.
pub fn hne_transmittance(a: f64, b: f64, lambda: f64) -> f64 {
    (-(a * absorption_a(lambda) + b * absorption_b(lambda))).exp()
}

/// One separable box-blur pass with the given radius, replicate edges.
fn blur_pass(field: &mut [f64], width: usize, height: usize, radius: usize) {
    let r = radius as isize;
    let norm = 1.0 / (2 * radius + 1) as f64;
    let mut tmp = vec![0.0; field.len()];
    for y in 0..height as isize {
        for x in 0..width as isize {
            let mut acc = 0.0;
            for dx in -r..=r {
                let sx = (x + dx).clamp(0, width as isize - 1);
                acc += field[y as usize * width + sx as usize];
            }
            tmp[y as usize * width + x as usize] = acc * norm;
        }
    }
    for y in 0..height as isize {
        for x in 0..width as isize {
            let mut acc = 0.0;
            for dy in -r..=r {
                let sy = (y + dy).clamp(0, height as isize - 1);
                acc += tmp[sy as usize * width + x as usize];
            }
            field[y as usize * width + x as usize] = acc * norm;
        }
    }
}

/// Smoothed noise in [0, 1] plus many small raised blobs, all nonnegative,
/// scaled so the maximum equals `amplitude`. The blur radius and blob sizes
/// are fixed in pixels, mimicking cell-scale structure that does not grow
/// with the field of view; the resulting fields keep substantial
/// pixel-scale variation, which is what makes the choice of sensing
/// weights matter downstream.
fn abundance_field(rng: &mut ChaCha8Rng, width: usize, height: usize, amplitude: f64) -> Vec<f64> {
    let mut field: Vec<f64> = (0..width * height).map(|_| rng.random::<f64>()).collect();
    blur_pass(&mut field, width, height, 1);
    blur_pass(&mut field, width, height, 1);

    let blobs = (width * height / 64).max(2);
    for _ in 0..blobs {
        let cx = rng.random::<f64>() * width as f64;
        let cy = rng.random::<f64>() * height as f64;
        let sigma = 1.0 + rng.random::<f64>() * 2.5;
        let peak = 0.5 + rng.random::<f64>() * 0.9;
        // Gaussians decay fast; limit each blob to a 3-sigma window.
        let reach = (3.0 * sigma).ceil() as isize;
        let (cxi, cyi) = (cx as isize, cy as isize);
        for y in (cyi - reach).max(0)..(cyi + reach + 1).min(height as isize) {
            for x in (cxi - reach).max(0)..(cxi + reach + 1).min(width as isize) {
                let dx = (x as f64 - cx) / sigma;
                let dy = (y as f64 - cy) / sigma;
                field[y as usize * width + x as usize] += peak * (-0.5 * (dx * dx + dy * dy)).exp();
            }
        }
    }

    let max = field.iter().cloned().fold(f64::MIN, f64::max);
    let scale = if max > 0.0 { amplitude / max } else { 0.0 };
    field.iter_mut().for_each(|v| *v *= scale);
    field
}

/// Deterministic synthetic transmittance cube: two nonnegative abundance
/// fields of smoothed noise and blob structure drive the two-dye
/// absorption model at each wavelength. A fixed seed reproduces the cube
/// exactly.
pub fn synth_hne(
    width: usize,
    height: usize,
    wavelengths: &[f64],
    seed: u64,
) -> Result<SpectralCube> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = abundance_field(&mut rng, width, height, 1.4);
    let b = abundance_field(&mut rng, width, height, 1.1);
    let mut values = Vec::with_capacity(width * height * wavelengths.len());
    for lambda in wavelengths {
        let eps_a = absorption_a(*lambda);
        let eps_b = absorption_b(*lambda);
        for i in 0..width * height {
            values.push((-(a[i] * eps_a + b[i] * eps_b)).exp());
        }
    }
    SpectralCube::new(width, height, wavelengths.to_vec(), values)
}
