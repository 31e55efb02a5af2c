//! Shared fixtures for the integration tests: synthetic objects and a
//! fully controllable stack simulator (the library simulator validates its
//! config, which deliberately excludes degenerate settings like m = 0).

#![allow(dead_code)]

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sim_core::image::{freq_value, ifft2_centered, ComplexSpectrum, FrequencyVector, RealImage};
use sim_core::otf::Otf;
use sim_core::simulate::{
    illumination_pattern, pattern_frequency, simulate_raw_frame, RawSimStack,
};

pub const THETAS_DEG: [f64; 3] = [0.0, 60.0, 120.0];
pub const NOMINAL_PHASES_DEG: [f64; 3] = [0.0, 120.0, 240.0];

/// Power-law object: |S(k)| proportional to |k|^-alpha with uniform random
/// phases on every non-DC bin, inverse-transformed and normalized to [0, 1].
pub fn powerlaw_object(n: usize, alpha: f64, seed: u64) -> RealImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spec = ComplexSpectrum::zeros(n);
    let scale = (n * n) as f64;
    for y in 0..n {
        for x in 0..n {
            let kr = freq_value(n, x).hypot(freq_value(n, y));
            let phase: f64 = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
            if kr > 1e-9 {
                spec.set(x, y, Complex64::from_polar(kr.powf(-alpha) * scale, phase));
            }
        }
    }
    normalize_object(spec)
}

/// Power-law object hard-truncated at |k| <= r_max; spectral leakage-free
/// fixture for integer-bin pattern frequencies.
pub fn bandlimited_object(n: usize, alpha: f64, r_max: f64, seed: u64) -> RealImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spec = ComplexSpectrum::zeros(n);
    let floor = 0.5 / n as f64;
    for y in 0..n {
        for x in 0..n {
            let kr = freq_value(n, x).hypot(freq_value(n, y));
            let phase: f64 = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
            if kr > floor && kr <= r_max {
                spec.set(x, y, Complex64::from_polar(kr.powf(-alpha), phase));
            }
        }
    }
    normalize_object(spec)
}

fn normalize_object(spec: ComplexSpectrum) -> RealImage {
    let (img, _) = ifft2_centered(&spec);
    let lo = img.min();
    let shifted: Vec<f64> = img.data().iter().map(|v| v - lo).collect();
    let mx = shifted.iter().cloned().fold(0.0f64, f64::max).max(1e-300);
    RealImage::from_vec(img.n(), shifted.into_iter().map(|v| v / mx).collect())
        .expect("normalized object is finite")
}

/// Realized illumination truth for one orientation.
pub struct Truth {
    pub p: FrequencyVector,
    pub phases_rad: [f64; 3],
}

/// Simulate a 9-frame stack with direct control over every parameter,
/// including settings the library config rejects (m = 0). Phase errors are
/// drawn first, then each frame's noise, from a single seeded stream.
pub fn simulate_custom(
    object: &RealImage,
    otf: &Otf,
    p_mag: f64,
    m: f64,
    phase_err_deg: f64,
    noise_pct: f64,
    seed: u64,
) -> (RawSimStack, Vec<Truth>) {
    let n = object.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut phases_deg = [[0.0f64; 3]; 3];
    for t in 0..3 {
        for j in 0..3 {
            let err = if phase_err_deg > 0.0 {
                rng.gen_range(-phase_err_deg..phase_err_deg)
            } else {
                0.0
            };
            phases_deg[t][j] = NOMINAL_PHASES_DEG[j] + err;
        }
    }
    let mut frames = Vec::with_capacity(9);
    let mut truth = Vec::with_capacity(3);
    for t in 0..3 {
        for j in 0..3 {
            let illum = illumination_pattern(n, THETAS_DEG[t], phases_deg[t][j], p_mag, m, 1.0);
            frames.push(
                simulate_raw_frame(object, &illum, otf, noise_pct, &mut rng)
                    .expect("fixture frame simulation"),
            );
        }
        truth.push(Truth {
            p: pattern_frequency(THETAS_DEG[t], p_mag),
            phases_rad: [
                phases_deg[t][0].to_radians(),
                phases_deg[t][1].to_radians(),
                phases_deg[t][2].to_radians(),
            ],
        });
    }
    (
        RawSimStack::from_frames(frames).expect("fixture stack has 9 frames"),
        truth,
    )
}

/// Relative L2 distance ||a - b|| / ||b||.
pub fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in a.iter().zip(b) {
        num += (x - y) * (x - y);
        den += y * y;
    }
    (num / den).sqrt()
}
