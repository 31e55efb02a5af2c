//! Forward model: nine raw frames from a ground-truth object under
//! sinusoidal illumination, OTF blur, and additive Gaussian noise.

use crate::error::{Result, SimError};
use crate::image::{fft2_centered, ifft2_centered, FrequencyVector, RealImage};
use crate::otf::Otf;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Acquisition parameters for a simulated 3-orientation, 3-phase stack.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    /// Pattern orientations, degrees.
    pub orientations_deg: [f64; 3],
    /// Nominal phase steps, degrees.
    pub nominal_phases_deg: [f64; 3],
    /// Per-frame phase error: uniform in +- this range, degrees.
    pub phase_error_range_deg: f64,
    /// |p| in cycles/pixel; fractional multiples of 1/N are expected.
    pub pattern_freq_magnitude: f64,
    /// Modulation depth m in (0, 1].
    pub modulation: f64,
    /// Illumination peak intensity I_o.
    pub peak_intensity: f64,
    /// Additive Gaussian noise, percent of each clean frame's std.
    pub noise_percent: f64,
    pub rng_seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            orientations_deg: [0.0, 60.0, 120.0],
            nominal_phases_deg: [0.0, 120.0, 240.0],
            phase_error_range_deg: 0.0,
            pattern_freq_magnitude: 0.1875,
            modulation: 0.8,
            peak_intensity: 1.0,
            noise_percent: 0.0,
            rng_seed: 0,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.modulation > 0.0 && self.modulation <= 1.0) {
            return Err(SimError::parameter(format!(
                "modulation must lie in (0, 1], got {}",
                self.modulation
            )));
        }
        if !(self.pattern_freq_magnitude > 0.0 && self.pattern_freq_magnitude < 0.5) {
            return Err(SimError::parameter(format!(
                "pattern_freq_magnitude must lie in (0, 0.5), got {}",
                self.pattern_freq_magnitude
            )));
        }
        if !(self.noise_percent >= 0.0) {
            return Err(SimError::parameter(format!(
                "noise_percent must be >= 0, got {}",
                self.noise_percent
            )));
        }
        if !(self.peak_intensity > 0.0) {
            return Err(SimError::parameter(format!(
                "peak_intensity must be > 0, got {}",
                self.peak_intensity
            )));
        }
        if !(self.phase_error_range_deg >= 0.0) {
            return Err(SimError::parameter(format!(
                "phase_error_range_deg must be >= 0, got {}",
                self.phase_error_range_deg
            )));
        }
        Ok(())
    }
}

/// Pattern frequency vector for an orientation angle.
pub fn pattern_frequency(theta_deg: f64, p_mag: f64) -> FrequencyVector {
    let t = theta_deg.to_radians();
    FrequencyVector::new(p_mag * t.cos(), p_mag * t.sin())
}

/// Sinusoidal illumination I(r) = I_o [1 - (m/2) cos(2 pi p.r + phi)] with
/// r = (column, row) in pixels from pixel (0, 0).
pub fn illumination_pattern(
    n: usize,
    theta_deg: f64,
    phi_deg: f64,
    p_mag: f64,
    m: f64,
    i_o: f64,
) -> RealImage {
    let p = pattern_frequency(theta_deg, p_mag);
    let phi = phi_deg.to_radians();
    let two_pi = 2.0 * std::f64::consts::PI;
    RealImage::from_fn(n, |x, y| {
        let arg = two_pi * (p.fx * x as f64 + p.fy * y as f64) + phi;
        i_o * (1.0 - 0.5 * m * arg.cos())
    })
}

/// One observed frame: blur the illuminated object through the OTF, then add
/// white Gaussian noise with sigma = (noise_percent/100) x std of the clean
/// frame.
pub fn simulate_raw_frame(
    object: &RealImage,
    illum: &RealImage,
    otf: &Otf,
    noise_percent: f64,
    rng: &mut impl Rng,
) -> Result<RealImage> {
    let n = object.n();
    if illum.n() != n || otf.n() != n {
        return Err(SimError::dimension(format!(
            "object ({n}), illumination ({}), and OTF ({}) sizes differ",
            illum.n(),
            otf.n()
        )));
    }
    let product = RealImage::from_fn(n, |x, y| object.get(x, y) * illum.get(x, y));
    let mut spec = fft2_centered(&product);
    for (v, &h) in spec.data_mut().iter_mut().zip(otf.values()) {
        *v *= h;
    }
    let (mut clean, _) = ifft2_centered(&spec);
    if noise_percent > 0.0 {
        let sigma = noise_percent / 100.0 * clean.std();
        if sigma > 0.0 {
            let normal = Normal::new(0.0, sigma).expect("sigma is positive and finite");
            for v in clean.data_mut() {
                *v += normal.sample(rng);
            }
        }
    }
    Ok(clean)
}

/// Ordered 3x3 set of raw frames, orientation-major.
#[derive(Clone, Debug)]
pub struct RawSimStack {
    n: usize,
    frames: Vec<RealImage>,
    pub config_echo: Option<SimulationConfig>,
}

impl RawSimStack {
    /// Wrap 9 equally sized frames ordered theta-major, phi-minor.
    pub fn from_frames(frames: Vec<RealImage>) -> Result<RawSimStack> {
        if frames.len() != 9 {
            return Err(SimError::dimension(format!(
                "expected 9 frames (3 orientations x 3 phases), got {}",
                frames.len()
            )));
        }
        let n = frames[0].n();
        if frames.iter().any(|f| f.n() != n) {
            return Err(SimError::dimension("raw frames differ in size"));
        }
        Ok(RawSimStack {
            n,
            frames,
            config_echo: None,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn frame(&self, orientation: usize, phase: usize) -> &RealImage {
        assert!(orientation < 3 && phase < 3, "index out of range");
        &self.frames[orientation * 3 + phase]
    }

    pub fn frames(&self) -> &[RealImage] {
        &self.frames
    }
}

/// Realized per-orientation illumination truth for estimator scoring.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OrientationTruth {
    pub p: FrequencyVector,
    /// Realized (nominal + error) phases, degrees, one per frame.
    pub phases_deg: [f64; 3],
}

/// Ground-truth record emitted alongside a simulated stack.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub per_orientation: Vec<OrientationTruth>,
    pub modulation: f64,
    pub peak_intensity: f64,
    pub pattern_freq_magnitude: f64,
    pub noise_percent: f64,
    pub rng_seed: u64,
}

/// Simulate the full 9-frame stack. Phase errors are drawn up front from one
/// RNG stream; each frame's noise comes from its own stream, so frame
/// generation parallelizes without changing the output.
pub fn simulate_stack(
    object: &RealImage,
    otf: &Otf,
    config: &SimulationConfig,
) -> Result<(RawSimStack, GroundTruthRecord)> {
    config.validate()?;
    let n = object.n();
    if otf.n() != n {
        return Err(SimError::dimension(format!(
            "object ({n}) and OTF ({}) sizes differ",
            otf.n()
        )));
    }

    let mut phase_rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    phase_rng.set_stream(0);
    let err = config.phase_error_range_deg;
    let mut realized = [[0.0f64; 3]; 3];
    for t in 0..3 {
        for p in 0..3 {
            let e = if err > 0.0 {
                phase_rng.gen_range(-err..err)
            } else {
                0.0
            };
            realized[t][p] = config.nominal_phases_deg[p] + e;
        }
    }

    let frames: Vec<RealImage> = (0..9usize)
        .into_par_iter()
        .map(|idx| {
            let (t, p) = (idx / 3, idx % 3);
            let illum = illumination_pattern(
                n,
                config.orientations_deg[t],
                realized[t][p],
                config.pattern_freq_magnitude,
                config.modulation,
                config.peak_intensity,
            );
            let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
            rng.set_stream(1 + idx as u64);
            simulate_raw_frame(object, &illum, otf, config.noise_percent, &mut rng)
        })
        .collect::<Result<_>>()?;

    let mut stack = RawSimStack::from_frames(frames)?;
    stack.config_echo = Some(config.clone());
    let truth = GroundTruthRecord {
        per_orientation: (0..3)
            .map(|t| OrientationTruth {
                p: pattern_frequency(
                    config.orientations_deg[t],
                    config.pattern_freq_magnitude,
                ),
                phases_deg: realized[t],
            })
            .collect(),
        modulation: config.modulation,
        peak_intensity: config.peak_intensity,
        pattern_freq_magnitude: config.pattern_freq_magnitude,
        noise_percent: config.noise_percent,
        rng_seed: config.rng_seed,
    };
    Ok((stack, truth))
}
