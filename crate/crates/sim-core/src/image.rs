//! Square real/complex grids, centered 2-D FFTs, and frequency geometry.
//!
//! Conventions (used everywhere downstream):
//! - Real-space pixel coordinates r = (x, y) = (column, row), origin at pixel
//!   (0, 0), row-major storage.
//! - Spectra are DC-centered: bin (n/2, n/2) is k = 0; axis frequencies run
//!   over [-0.5, 0.5) cycles/pixel in steps of 1/n.
//! - Forward transform unscaled, inverse scaled by 1/n^2, so
//!   sum |x|^2 = (1/n^2) sum |X|^2 (Parseval).

use crate::error::{Result, SimError};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Square real-valued image, row-major samples.
#[derive(Clone, Debug, PartialEq)]
pub struct RealImage {
    n: usize,
    data: Vec<f64>,
}

impl RealImage {
    /// All-zero image of side `n`.
    pub fn zeros(n: usize) -> RealImage {
        assert!(n > 0, "image side must be positive");
        RealImage {
            n,
            data: vec![0.0; n * n],
        }
    }

    /// Wrap row-major samples; enforces squareness and finiteness.
    pub fn from_vec(n: usize, data: Vec<f64>) -> Result<RealImage> {
        if n == 0 || data.len() != n * n {
            return Err(SimError::dimension(format!(
                "expected {n}x{n} = {} samples, got {}",
                n * n,
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(SimError::parameter("image contains non-finite samples"));
        }
        Ok(RealImage { n, data })
    }

    /// Build from a function of (x, y) pixel coordinates.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> RealImage {
        let mut img = RealImage::zeros(n);
        for y in 0..n {
            for x in 0..n {
                img.data[y * n + x] = f(x, y);
            }
        }
        img
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.n + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.n + x] = v;
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Population standard deviation.
    pub fn std(&self) -> f64 {
        let m = self.mean();
        let var = self.data.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.data.len() as f64;
        var.sqrt()
    }

    pub fn min(&self) -> f64 {
        self.data.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Square complex spectrum, DC bin at (n/2, n/2), row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSpectrum {
    n: usize,
    data: Vec<Complex64>,
}

impl ComplexSpectrum {
    pub fn zeros(n: usize) -> ComplexSpectrum {
        assert!(n > 0, "spectrum side must be positive");
        ComplexSpectrum {
            n,
            data: vec![Complex64::new(0.0, 0.0); n * n],
        }
    }

    pub fn from_vec(n: usize, data: Vec<Complex64>) -> Result<ComplexSpectrum> {
        if n == 0 || data.len() != n * n {
            return Err(SimError::dimension(format!(
                "expected {n}x{n} = {} values, got {}",
                n * n,
                data.len()
            )));
        }
        Ok(ComplexSpectrum { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Complex64 {
        self.data[y * self.n + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: Complex64) {
        self.data[y * self.n + x] = v;
    }

    /// Frequency (cycles/pixel) of axis index `i`.
    #[inline]
    pub fn freq(&self, i: usize) -> f64 {
        freq_value(self.n, i)
    }

    /// |k| at bin (x, y) in cycles/pixel.
    #[inline]
    pub fn k_radius(&self, x: usize, y: usize) -> f64 {
        self.freq(x).hypot(self.freq(y))
    }

    /// Max relative deviation from conjugate symmetry about the DC bin.
    pub fn conjugate_asymmetry(&self) -> f64 {
        let n = self.n;
        let peak = self
            .data
            .iter()
            .map(|v| v.norm())
            .fold(0.0f64, f64::max)
            .max(1e-300);
        let mut worst = 0.0f64;
        for y in 0..n {
            for x in 0..n {
                // Mirror bin of (x, y) about DC; indices without a mirror on
                // even grids (Nyquist row/col) map to themselves modulo n.
                let xm = (2 * (n / 2) + n - x) % n;
                let ym = (2 * (n / 2) + n - y) % n;
                let d = (self.get(x, y) - self.get(xm, ym).conj()).norm();
                worst = worst.max(d / peak);
            }
        }
        worst
    }
}

/// Fractional spatial frequency in cycles/pixel; components need not be
/// multiples of 1/n. Serializes as the two-element array [fx, fy].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrequencyVector {
    pub fx: f64,
    pub fy: f64,
}

impl Serialize for FrequencyVector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        [self.fx, self.fy].serialize(s)
    }
}

impl<'de> Deserialize<'de> for FrequencyVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let [fx, fy] = <[f64; 2]>::deserialize(d)?;
        Ok(FrequencyVector { fx, fy })
    }
}

impl FrequencyVector {
    pub fn new(fx: f64, fy: f64) -> FrequencyVector {
        FrequencyVector { fx, fy }
    }

    pub fn magnitude(&self) -> f64 {
        self.fx.hypot(self.fy)
    }

    pub fn neg(&self) -> FrequencyVector {
        FrequencyVector::new(-self.fx, -self.fy)
    }
}

/// Frequency of index `i` on a DC-centered axis of length `n`.
#[inline]
pub fn freq_value(n: usize, i: usize) -> f64 {
    (i as f64 - (n / 2) as f64) / n as f64
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, bool), Arc<dyn Fft<f64>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().unwrap();
    map.entry((n, inverse))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            if inverse {
                planner.plan_fft_inverse(n)
            } else {
                planner.plan_fft_forward(n)
            }
        })
        .clone()
}

fn transpose_square(data: &mut [Complex64], n: usize) {
    for y in 0..n {
        for x in (y + 1)..n {
            data.swap(y * n + x, x * n + y);
        }
    }
}

/// Unshifted 2-D FFT in place (rows, transpose, rows, transpose).
fn fft2_inplace(data: &mut [Complex64], n: usize, inverse: bool) {
    let fft = plan(n, inverse);
    fft.process(data);
    transpose_square(data, n);
    fft.process(data);
    transpose_square(data, n);
}

/// Circular roll: out(x, y) = in((x - dx) mod n, (y - dy) mod n).
pub(crate) fn roll_2d<T: Copy + Default>(data: &[T], n: usize, dx: isize, dy: isize) -> Vec<T> {
    let m = n as isize;
    let dx = dx.rem_euclid(m) as usize;
    let dy = dy.rem_euclid(m) as usize;
    let mut out = vec![T::default(); n * n];
    for y in 0..n {
        let sy = (y + n - dy) % n;
        let dst = &mut out[y * n..y * n + n];
        let src = &data[sy * n..sy * n + n];
        // split copy instead of per-pixel modulo
        dst[dx..].copy_from_slice(&src[..n - dx]);
        dst[..dx].copy_from_slice(&src[n - dx..]);
    }
    out
}

pub(crate) fn fftshift_vec<T: Copy + Default>(data: &[T], n: usize) -> Vec<T> {
    let h = (n / 2) as isize;
    roll_2d(data, n, h, h)
}

pub(crate) fn ifftshift_vec<T: Copy + Default>(data: &[T], n: usize) -> Vec<T> {
    let h = (n / 2) as isize;
    roll_2d(data, n, -h, -h)
}

/// Forward centered transform of a real image (unscaled).
pub fn fft2_centered(img: &RealImage) -> ComplexSpectrum {
    let n = img.n;
    let mut buf: Vec<Complex64> = img.data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2_inplace(&mut buf, n, false);
    ComplexSpectrum {
        n,
        data: fftshift_vec(&buf, n),
    }
}

/// Forward centered transform of a complex real-space field (unscaled).
pub fn fft2_centered_complex(field: &[Complex64], n: usize) -> Result<ComplexSpectrum> {
    if field.len() != n * n {
        return Err(SimError::dimension(format!(
            "field length {} != {n}x{n}",
            field.len()
        )));
    }
    let mut buf = field.to_vec();
    fft2_inplace(&mut buf, n, false);
    Ok(ComplexSpectrum {
        n,
        data: fftshift_vec(&buf, n),
    })
}

/// Inverse centered transform scaled by 1/n^2; returns the real part plus the
/// max imaginary magnitude relative to the max real magnitude (diagnostic for
/// physically real results).
pub fn ifft2_centered(spec: &ComplexSpectrum) -> (RealImage, f64) {
    let field = ifft2_centered_complex(spec);
    let n = spec.n;
    let mut max_re = 0.0f64;
    let mut max_im = 0.0f64;
    for v in &field {
        max_re = max_re.max(v.re.abs());
        max_im = max_im.max(v.im.abs());
    }
    let img = RealImage {
        n,
        data: field.iter().map(|v| v.re).collect(),
    };
    (img, max_im / max_re.max(1e-300))
}

/// Inverse centered transform to a complex real-space field (1/n^2 scaling,
/// spatially unshifted: sample (x, y) corresponds to pixel (x, y)).
pub fn ifft2_centered_complex(spec: &ComplexSpectrum) -> Vec<Complex64> {
    let n = spec.n;
    let mut buf = ifftshift_vec(&spec.data, n);
    fft2_inplace(&mut buf, n, true);
    let scale = 1.0 / (n * n) as f64;
    for v in &mut buf {
        *v *= scale;
    }
    buf
}

/// Halve an even-sided image by non-overlapping 2x2 averaging.
pub fn downsample_2x(img: &RealImage) -> Result<RealImage> {
    let n = img.n();
    if n % 2 != 0 {
        return Err(SimError::dimension(format!(
            "2x downsampling needs an even side, got {n}"
        )));
    }
    let h = n / 2;
    Ok(RealImage::from_fn(h, |x, y| {
        0.25 * (img.get(2 * x, 2 * y)
            + img.get(2 * x + 1, 2 * y)
            + img.get(2 * x, 2 * y + 1)
            + img.get(2 * x + 1, 2 * y + 1))
    }))
}

/// Periodic 2-D Hann window (separable product of 0.5 - 0.5 cos(2 pi i / n)).
pub fn hann2(n: usize) -> RealImage {
    let w1: Vec<f64> = (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect();
    RealImage::from_fn(n, |x, y| w1[x] * w1[y])
}

/// One populated bin of a radial power profile.
#[derive(Clone, Copy, Debug)]
pub struct RadialBin {
    /// Nominal bin-center radius, cycles/pixel.
    pub k_center: f64,
    /// Mean |value|^2 over the bin.
    pub mean_power: f64,
    pub count: usize,
}

/// Radial power profile over |k| in [0, 0.5), bin width 0.5/n_bins.
/// Empty bins are absent from the result; corner bins beyond 0.5 are ignored.
pub fn radial_profile(spec: &ComplexSpectrum, n_bins: usize) -> Result<Vec<RadialBin>> {
    if n_bins < 8 {
        return Err(SimError::parameter(format!(
            "radial profile needs n_bins >= 8, got {n_bins}"
        )));
    }
    let n = spec.n;
    let width = 0.5 / n_bins as f64;
    let mut sums = vec![0.0f64; n_bins];
    let mut counts = vec![0usize; n_bins];
    for y in 0..n {
        let fy = spec.freq(y);
        for x in 0..n {
            let r = spec.freq(x).hypot(fy);
            if r >= 0.5 {
                continue;
            }
            let b = (r / width) as usize;
            let b = b.min(n_bins - 1);
            sums[b] += spec.get(x, y).norm_sqr();
            counts[b] += 1;
        }
    }
    Ok((0..n_bins)
        .filter(|&b| counts[b] > 0)
        .map(|b| RadialBin {
            k_center: (b as f64 + 0.5) * width,
            mean_power: sums[b] / counts[b] as f64,
            count: counts[b],
        })
        .collect())
}

/// Evaluate the real-space signal behind a DC-centered spectrum at a
/// fractional pixel position by direct trigonometric interpolation:
/// Re[(1/n^2) sum_k spec(k) exp(+2 pi i k . r / px_per_sample)].
/// `px_per_sample` converts grid samples to pixel units (0.5 on a doubled
/// grid indexed in original pixels).
pub fn dtft_real_at(spec: &ComplexSpectrum, x: f64, y: f64, px_per_sample: f64) -> f64 {
    let n = spec.n;
    let two_pi = 2.0 * std::f64::consts::PI;
    let xs = x / px_per_sample;
    let ys = y / px_per_sample;
    let ex: Vec<Complex64> = (0..n)
        .map(|i| Complex64::from_polar(1.0, two_pi * freq_value(n, i) * xs))
        .collect();
    let ey: Vec<Complex64> = (0..n)
        .map(|i| Complex64::from_polar(1.0, two_pi * freq_value(n, i) * ys))
        .collect();
    let mut total = Complex64::new(0.0, 0.0);
    for (iy, row_e) in ey.iter().enumerate() {
        let row = &spec.data[iy * n..iy * n + n];
        let mut acc = Complex64::new(0.0, 0.0);
        for (v, e) in row.iter().zip(&ex) {
            acc += v * e;
        }
        total += acc * row_e;
    }
    (total / (n * n) as f64).re
}

/// Sum of field(x, y) * exp(+2 pi i (px x + py y)): the Fourier-shift
/// projection used by the correlation-maximizing estimators.
pub(crate) fn project(field: &[Complex64], n: usize, p: FrequencyVector) -> Complex64 {
    let rx: Vec<Complex64> = (0..n)
        .map(|i| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * p.fx * i as f64))
        .collect();
    let ry: Vec<Complex64> = (0..n)
        .map(|i| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * p.fy * i as f64))
        .collect();
    let mut total = Complex64::new(0.0, 0.0);
    for y in 0..n {
        let row = &field[y * n..y * n + n];
        let mut acc = Complex64::new(0.0, 0.0);
        for x in 0..n {
            acc += row[x] * rx[x];
        }
        total += acc * ry[y];
    }
    total
}
