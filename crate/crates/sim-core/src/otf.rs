//! System OTF model: synthesis, PSF conversion, bead-based estimation, and
//! rounded-frequency shifted OTF power.

use crate::error::{Result, SimError};
use crate::image::{
    fft2_centered, fftshift_vec, freq_value, ifft2_centered, ifftshift_vec, roll_2d,
    ComplexSpectrum, FrequencyVector, RealImage,
};
use num_complex::Complex64;

/// Real, DC-centered optical transfer function on an n x n grid.
#[derive(Clone, Debug)]
pub struct Otf {
    n: usize,
    k_cutoff: f64,
    h: Vec<f64>,
}

impl Otf {
    /// Wrap precomputed OTF values (row-major, DC at (n/2, n/2)).
    pub fn from_values(n: usize, k_cutoff: f64, h: Vec<f64>) -> Result<Otf> {
        if n == 0 || h.len() != n * n {
            return Err(SimError::dimension(format!(
                "expected {n}x{n} OTF values, got {}",
                h.len()
            )));
        }
        if !h.iter().all(|v| v.is_finite()) {
            return Err(SimError::parameter("OTF contains non-finite values"));
        }
        if !(k_cutoff > 0.0 && k_cutoff <= 0.5) {
            return Err(SimError::parameter(format!(
                "k_cutoff must lie in (0, 0.5], got {k_cutoff}"
            )));
        }
        Ok(Otf { n, k_cutoff, h })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k_cutoff(&self) -> f64 {
        self.k_cutoff
    }

    pub fn values(&self) -> &[f64] {
        &self.h
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.h[y * self.n + x]
    }

    /// Boolean support grid: |k| <= k_cutoff.
    pub fn support_mask(&self) -> Vec<bool> {
        let n = self.n;
        let mut mask = vec![false; n * n];
        for y in 0..n {
            let fy = freq_value(n, y);
            for x in 0..n {
                mask[y * n + x] = freq_value(n, x).hypot(fy) <= self.k_cutoff;
            }
        }
        mask
    }
}

/// Diffraction-limited incoherent circular-aperture OTF value at radius
/// `k_radius`: (2/pi)(arccos(rho) - rho sqrt(1 - rho^2)) with
/// rho = k_radius / k_cutoff, zero for rho >= 1.
pub fn circular_aperture_otf_value(k_radius: f64, k_cutoff: f64) -> f64 {
    let rho = (k_radius / k_cutoff).clamp(0.0, 1.0);
    (2.0 / std::f64::consts::PI) * (rho.acos() - rho * (1.0 - rho * rho).sqrt())
}

/// Synthesize the circular-aperture OTF on an n x n grid.
pub fn synthesize_otf(n: usize, k_cutoff: f64) -> Result<Otf> {
    if !(k_cutoff > 0.0 && k_cutoff <= 0.5) {
        return Err(SimError::parameter(format!(
            "k_cutoff must lie in (0, 0.5], got {k_cutoff}"
        )));
    }
    if n == 0 {
        return Err(SimError::parameter("OTF grid side must be positive"));
    }
    let mut h = vec![0.0; n * n];
    for y in 0..n {
        let fy = freq_value(n, y);
        for x in 0..n {
            let kr = freq_value(n, x).hypot(fy);
            h[y * n + x] = circular_aperture_otf_value(kr, k_cutoff);
        }
    }
    Ok(Otf { n, k_cutoff, h })
}

/// Centered PSF (peak at (n/2, n/2), normalized to unit peak) of an OTF.
pub fn psf_from_otf(otf: &Otf) -> RealImage {
    let n = otf.n;
    let spec = ComplexSpectrum::from_vec(
        n,
        otf.h.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
    )
    .expect("OTF grid is square");
    let (img, _) = ifft2_centered(&spec);
    let centered = fftshift_vec(img.data(), n);
    let peak = centered.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scale = 1.0 / if peak.abs() > 1e-300 { peak } else { 1.0 };
    RealImage::from_vec(n, centered.iter().map(|&v| v * scale).collect())
        .expect("PSF values are finite")
}

/// OTF of a centered PSF (real part of the centered transform, DC normalized).
/// The returned k_cutoff is the grid Nyquist limit 0.5; callers with a known
/// physical cutoff can rewrap via [`Otf::from_values`].
pub fn otf_from_psf(psf: &RealImage) -> Otf {
    let n = psf.n();
    let unshifted =
        RealImage::from_vec(n, ifftshift_vec(psf.data(), n)).expect("shift preserves values");
    let spec = fft2_centered(&unshifted);
    let dc = spec.get(n / 2, n / 2).re;
    let scale = 1.0 / if dc.abs() > 1e-300 { dc } else { 1.0 };
    let h: Vec<f64> = spec.data().iter().map(|v| v.re * scale).collect();
    Otf {
        n,
        k_cutoff: 0.5,
        h,
    }
}

/// Result of bead-based OTF estimation.
#[derive(Clone, Debug)]
pub struct BeadOtfEstimate {
    /// Circumsymmetrized OTF on the bead-window grid (k_cutoff = 0.5).
    pub otf: Otf,
    /// Integer-bin radial profile of the OTF, DC bin first, normalized to 1.
    pub radial: Vec<f64>,
    /// Number of bead windows averaged.
    pub windows_used: usize,
}

/// Integer-bin radial average of a DC-centered n x n grid: bin b collects all
/// pixels with round(|index - center|) == b.
pub fn integer_radial_profile(values: &[f64], n: usize) -> Result<Vec<f64>> {
    if values.len() != n * n {
        return Err(SimError::dimension(format!(
            "expected {n}x{n} values, got {}",
            values.len()
        )));
    }
    let c = (n / 2) as f64;
    let n_bins = {
        let d = (n - 1) as f64 - c;
        let m = c.max(d);
        (m.hypot(m)).round() as usize + 1
    };
    let mut sums = vec![0.0f64; n_bins];
    let mut counts = vec![0usize; n_bins];
    for y in 0..n {
        for x in 0..n {
            let b = (x as f64 - c).hypot(y as f64 - c).round() as usize;
            sums[b] += values[y * n + x];
            counts[b] += 1;
        }
    }
    Ok((0..n_bins)
        .map(|b| sums[b] / counts[b].max(1) as f64)
        .collect())
}

/// Estimate the system OTF from sparse-bead images: detect local maxima above
/// `threshold`, extract `window` x `window` regions re-centered on their
/// brightest pixel, average them, subtract the window median as background,
/// transform, and radially average. The caller should prefer stacks yielding
/// more than 100 windows (check [`BeadOtfEstimate::windows_used`]).
pub fn estimate_otf_from_beads(
    images: &[RealImage],
    threshold: f64,
    window: usize,
) -> Result<BeadOtfEstimate> {
    if images.is_empty() {
        return Err(SimError::parameter("bead estimation needs at least 1 image"));
    }
    if window < 3 || window % 2 == 0 {
        return Err(SimError::parameter(format!(
            "bead window must be odd and >= 3, got {window}"
        )));
    }
    let n = images[0].n();
    if images.iter().any(|im| im.n() != n) {
        return Err(SimError::dimension("bead images differ in size"));
    }
    if window >= n {
        return Err(SimError::parameter(format!(
            "bead window {window} does not fit inside {n}x{n} images"
        )));
    }

    let half = window / 2;
    let mut accum = vec![0.0f64; window * window];
    let mut windows_used = 0usize;
    for img in images {
        for (py, px) in detect_maxima(img, threshold) {
            if py < half || py + half >= n || px < half || px + half >= n {
                continue;
            }
            // Re-center on the brightest pixel of the window so overlapping
            // shoulders cannot bias the alignment.
            let (by, bx) = window_argmax(img, px, py, half);
            let (cy, cx) = (py + by - half, px + bx - half);
            if cy < half || cy + half >= n || cx < half || cx + half >= n {
                continue;
            }
            for wy in 0..window {
                for wx in 0..window {
                    accum[wy * window + wx] += img.get(cx + wx - half, cy + wy - half);
                }
            }
            windows_used += 1;
        }
    }
    if windows_used == 0 {
        return Err(SimError::estimation(
            "bead-detect",
            format!("no bead maxima above threshold {threshold}; lower the threshold"),
        ));
    }
    let inv = 1.0 / windows_used as f64;
    for v in &mut accum {
        *v *= inv;
    }
    let med = median(&accum);
    for v in &mut accum {
        *v -= med;
    }

    let avg = RealImage::from_vec(window, ifftshift_vec(&accum, window))
        .expect("window average is finite");
    let spec = fft2_centered(&avg);
    let otf_grid: Vec<f64> = spec.data().iter().map(|v| v.re).collect();
    let mut radial = integer_radial_profile(&otf_grid, window)?;
    let dc = radial[0];
    if dc.abs() < 1e-300 {
        return Err(SimError::estimation(
            "bead-average",
            "averaged bead window has zero net energy",
        ));
    }
    for v in &mut radial {
        *v /= dc;
    }
    let c = (window / 2) as f64;
    let mut h = vec![0.0; window * window];
    for y in 0..window {
        for x in 0..window {
            let b = (x as f64 - c).hypot(y as f64 - c).round() as usize;
            h[y * window + x] = radial[b];
        }
    }
    Ok(BeadOtfEstimate {
        otf: Otf {
            n: window,
            k_cutoff: 0.5,
            h,
        },
        radial,
        windows_used,
    })
}

/// Pixels strictly above `threshold` that are >= all 8 neighbours
/// (periodic boundary), in row-major order.
fn detect_maxima(img: &RealImage, threshold: f64) -> Vec<(usize, usize)> {
    let n = img.n() as isize;
    let mut out = Vec::new();
    for y in 0..img.n() {
        for x in 0..img.n() {
            let v = img.get(x, y);
            if !(v > threshold) {
                continue;
            }
            let mut is_max = true;
            'scan: for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let xn = (x as isize + dx).rem_euclid(n) as usize;
                    let yn = (y as isize + dy).rem_euclid(n) as usize;
                    if v < img.get(xn, yn) {
                        is_max = false;
                        break 'scan;
                    }
                }
            }
            if is_max {
                out.push((y, x));
            }
        }
    }
    out
}

/// Offsets (wy, wx) of the brightest pixel in the window centered at (px, py);
/// ties resolve to the first in row-major order.
fn window_argmax(img: &RealImage, px: usize, py: usize, half: usize) -> (usize, usize) {
    let mut best = f64::NEG_INFINITY;
    let mut at = (half, half);
    let w = 2 * half + 1;
    for wy in 0..w {
        for wx in 0..w {
            let v = img.get(px + wx - half, py + wy - half);
            if v > best {
                best = v;
                at = (wy, wx);
            }
        }
    }
    at
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// |H(k + sign*p_rounded)|^2 where each component of p is rounded to the
/// nearest multiple of 1/n and the displacement is an exact circular roll
/// (no fractional interpolation).
pub fn shifted_otf_power(otf: &Otf, p: FrequencyVector, sign: i32) -> Result<Vec<f64>> {
    if p.magnitude() >= 0.5 {
        return Err(SimError::parameter(format!(
            "|p| = {} exceeds the representable range (< 0.5 cycles/pixel)",
            p.magnitude()
        )));
    }
    if sign != 1 && sign != -1 {
        return Err(SimError::parameter("shift sign must be +1 or -1"));
    }
    let n = otf.n;
    let rbx = (p.fx * n as f64).round() as isize;
    let rby = (p.fy * n as f64).round() as isize;
    let h2: Vec<f64> = otf.h.iter().map(|&v| v * v).collect();
    // Value at bin k must equal H^2 at bin k + s*rb, i.e. content rolls by -s*rb.
    let s = sign as isize;
    Ok(roll_2d(&h2, n, -s * rbx, -s * rby))
}
