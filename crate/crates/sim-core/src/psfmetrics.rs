//! Effective-PSF estimation and resolution metrics: build the linear system
//! linking a known object to a produced image, solve it by regularized
//! normal equations, and measure FWHM ratios against the system PSF.

use crate::error::{Result, SimError};
use crate::image::RealImage;
use ndarray::{Array1, Array2};
use ndarray_linalg::SolveH;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

/// Ridge scale for the normal equations: lambda = scale * trace(O^T O) / p^2.
/// Small enough to stay below 1e-6 in planted-kernel recovery error.
pub const DEFAULT_RIDGE_SCALE: f64 = 1e-8;

/// Effective PSF solved from (object, image) pairs.
#[derive(Clone, Debug)]
pub struct PsfEstimate {
    /// p x p kernel, p odd (an even request is padded up by one).
    pub psf: RealImage,
    /// Full width at half maximum of the radially averaged kernel, pixels.
    pub fwhm_px: f64,
    /// Number of independent solves averaged.
    pub n_solves: usize,
}

/// Solver parameters; the defaults match common practice for a 2x-upsampled
/// reconstruction probed at kernel size 40.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct PsfSolveOptions {
    /// Requested kernel side p (padded to odd internally).
    pub psf_size: usize,
    /// Sampled rows r; must exceed p^2.
    pub rows: usize,
    /// Independent solves to average.
    pub repeats: usize,
    pub seed: u64,
}

impl Default for PsfSolveOptions {
    fn default() -> Self {
        PsfSolveOptions {
            psf_size: 40,
            rows: 7 * 40 * 40,
            repeats: 100,
            seed: 0,
        }
    }
}

fn oddify(p: usize) -> usize {
    if p % 2 == 0 {
        p + 1
    } else {
        p
    }
}

/// Build the convolution design matrix: each row holds one randomly selected
/// pixel's p x p object window (row-major), and the observation vector holds
/// the image value at that pixel. Sampled pixels keep more than half the
/// kernel width away from the image edge. Same RNG state, same rows.
pub fn build_convolution_system(
    object: &RealImage,
    image: &RealImage,
    psf_size: usize,
    n_rows: usize,
    rng: &mut impl Rng,
) -> Result<(Array2<f64>, Array1<f64>)> {
    let n = object.n();
    if image.n() != n {
        return Err(SimError::dimension(format!(
            "object ({n}) and image ({}) grids differ",
            image.n()
        )));
    }
    let p = psf_size;
    if p < 3 || p % 2 == 0 {
        return Err(SimError::parameter(format!(
            "kernel side must be odd and >= 3, got {p}"
        )));
    }
    if n_rows <= p * p {
        return Err(SimError::parameter(format!(
            "need more rows than unknowns: r = {n_rows} <= p^2 = {}",
            p * p
        )));
    }
    let lo = p / 2 + 1;
    if 2 * lo >= n {
        return Err(SimError::parameter(format!(
            "kernel side {p} leaves no valid interior on an n = {n} grid"
        )));
    }
    let span = n - 2 * lo;
    let valid = span * span;
    if n_rows > valid {
        return Err(SimError::parameter(format!(
            "r = {n_rows} exceeds the {valid} pixels more than half a kernel \
             away from the edge"
        )));
    }

    let c = p / 2;
    let picks = rand::seq::index::sample(rng, valid, n_rows);
    let mut o = Array2::<f64>::zeros((n_rows, p * p));
    let mut b = Array1::<f64>::zeros(n_rows);
    for (row, pick) in picks.iter().enumerate() {
        let py = lo + pick / span;
        let px = lo + pick % span;
        b[row] = image.get(px, py);
        for uy in 0..p {
            for ux in 0..p {
                o[[row, uy * p + ux]] = object.get(px + c - ux, py + c - uy);
            }
        }
    }
    Ok((o, b))
}

/// One regularized normal-equations solve O^T O x = O^T b, ridge
/// lambda = ridge_scale * trace(O^T O)/p^2 on the diagonal. Returns the
/// kernel row-major.
pub fn solve_psf_rows(
    o: &Array2<f64>,
    b: &Array1<f64>,
    psf_size: usize,
    ridge_scale: f64,
) -> Result<Vec<f64>> {
    let p2 = psf_size * psf_size;
    if o.ncols() != p2 || o.nrows() != b.len() {
        return Err(SimError::dimension(format!(
            "design matrix is {}x{}, expected rows x {p2}",
            o.nrows(),
            o.ncols()
        )));
    }
    let mut a = o.t().dot(o);
    let tr: f64 = a.diag().sum();
    let lam = ridge_scale * tr / p2 as f64;
    for i in 0..p2 {
        a[[i, i]] += lam;
    }
    let atb = o.t().dot(b);
    let x = a.solveh_into(atb).map_err(|e| {
        SimError::Fit(format!(
            "normal-equations solve failed ({e}); object may be degenerate"
        ))
    })?;
    Ok(x.to_vec())
}

/// Solve the effective PSF by averaging `repeats` independent regularized
/// least-squares solves, each on a fresh random row set (split RNG streams,
/// so the result does not depend on scheduling).
pub fn solve_effective_psf(
    object: &RealImage,
    image: &RealImage,
    opts: &PsfSolveOptions,
) -> Result<PsfEstimate> {
    if opts.repeats == 0 {
        return Err(SimError::parameter("repeats must be >= 1"));
    }
    if object.max() - object.min() <= 0.0 {
        return Err(SimError::Fit(
            "degenerate object: constant image carries no information about \
             the kernel"
                .into(),
        ));
    }
    let p = oddify(opts.psf_size);
    let solutions: Vec<Vec<f64>> = (0..opts.repeats)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(rep as u64);
            let (o, b) = build_convolution_system(object, image, p, opts.rows, &mut rng)?;
            solve_psf_rows(&o, &b, p, DEFAULT_RIDGE_SCALE)
        })
        .collect::<Result<_>>()?;
    let mut avg = vec![0.0f64; p * p];
    for sol in &solutions {
        for (acc, &v) in avg.iter_mut().zip(sol) {
            *acc += v / opts.repeats as f64;
        }
    }
    let psf = RealImage::from_vec(p, avg)?;
    let fwhm_px = fwhm(&psf)?;
    Ok(PsfEstimate {
        psf,
        fwhm_px,
        n_solves: opts.repeats,
    })
}

/// FWHM of a PSF image: locate the peak on a 3x3-mean smoothed copy (ties
/// resolved by their centroid), radially average the raw values about it in
/// unit-width rings, and report twice the interpolated radius of the first
/// crossing below half the central value.
pub fn fwhm(psf: &RealImage) -> Result<f64> {
    let n = psf.n();
    let mut smooth = vec![0.0f64; n * n];
    for y in 0..n {
        for x in 0..n {
            let mut sum = 0.0;
            let mut cnt = 0usize;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (sx, sy) = (x as i64 + dx, y as i64 + dy);
                    if sx >= 0 && sy >= 0 && (sx as usize) < n && (sy as usize) < n {
                        sum += psf.get(sx as usize, sy as usize);
                        cnt += 1;
                    }
                }
            }
            smooth[y * n + x] = sum / cnt as f64;
        }
    }
    let peak = smooth
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let mut cx = 0.0f64;
    let mut cy = 0.0f64;
    let mut ties = 0usize;
    for y in 0..n {
        for x in 0..n {
            if smooth[y * n + x] == peak {
                cx += x as f64;
                cy += y as f64;
                ties += 1;
            }
        }
    }
    cx /= ties as f64;
    cy /= ties as f64;

    let max_bin = (2.0 * n as f64) as usize + 2;
    let mut sums = vec![0.0f64; max_bin];
    let mut rads = vec![0.0f64; max_bin];
    let mut counts = vec![0usize; max_bin];
    for y in 0..n {
        for x in 0..n {
            let d = (x as f64 - cx).hypot(y as f64 - cy);
            let b = d.round() as usize;
            sums[b] += psf.get(x, y);
            rads[b] += d;
            counts[b] += 1;
        }
    }
    let mut prof: Vec<(f64, f64)> = Vec::new();
    for b in 0..max_bin {
        if counts[b] > 0 {
            prof.push((rads[b] / counts[b] as f64, sums[b] / counts[b] as f64));
        }
    }
    let center_val = prof[0].1;
    if !(center_val > 0.0) {
        return Err(SimError::Fit(format!(
            "PSF peak value {center_val} is not positive"
        )));
    }
    let half = 0.5 * center_val;
    for i in 1..prof.len() {
        let (r0, v0) = prof[i - 1];
        let (r1, v1) = prof[i];
        if v1 <= half {
            let r = if v0 > v1 {
                r0 + (v0 - half) * (r1 - r0) / (v0 - v1)
            } else {
                r1
            };
            return Ok(2.0 * r);
        }
    }
    Err(SimError::Fit(
        "radial profile never falls below half maximum; the kernel window is \
         narrower than the PSF"
            .into(),
    ))
}

/// Resolution metrics for one reconstruction run.
#[derive(Clone, Debug, Serialize)]
pub struct ResolutionReport {
    pub fwhm_system_px: f64,
    pub fwhm_widefield_deconv_px: f64,
    pub fwhm_sim_px: f64,
    /// FWHM(PSF_deconvWF) / FWHM(PSF_system).
    pub ratio_widefield_deconv: f64,
    /// FWHM(PSF_SIM) / FWHM(PSF_system).
    pub ratio_sim: f64,
    /// FWHM restated in units of the incoherent diffraction limit
    /// 1/k_cutoff pixels (the classic half-wavelength-over-NA length).
    pub system_vs_diffraction_limit: f64,
    pub widefield_deconv_vs_diffraction_limit: f64,
    pub sim_vs_diffraction_limit: f64,
    pub psf_size: usize,
    pub rows: usize,
    pub repeats: usize,
    /// True when the input was averaged 2x down to the object grid first.
    pub sim_downsampled: bool,
    pub widefield_downsampled: bool,
}

/// Report plus the solved kernels (for saving alongside the JSON).
pub struct ResolutionOutcome {
    pub report: ResolutionReport,
    pub psf_widefield: PsfEstimate,
    pub psf_sim: PsfEstimate,
}

fn to_object_grid(img: &RealImage, n: usize) -> Result<(RealImage, bool)> {
    if img.n() == n {
        Ok((img.clone(), false))
    } else if img.n() == 2 * n {
        Ok((crate::image::downsample_2x(img)?, true))
    } else {
        Err(SimError::dimension(format!(
            "image grid {} is neither the object grid {n} nor its double",
            img.n()
        )))
    }
}

/// Solve effective PSFs for the deconvolved-widefield and reconstructed
/// images against the known object (same seed for both, so identical inputs
/// give identical kernels) and compare their widths with the system PSF.
pub fn resolution_report(
    object: &RealImage,
    widefield_deconv: &RealImage,
    sim_image: &RealImage,
    system_psf: &RealImage,
    k_cutoff: f64,
    opts: &PsfSolveOptions,
) -> Result<ResolutionOutcome> {
    if !(k_cutoff > 0.0 && k_cutoff <= 0.5) {
        return Err(SimError::parameter(format!(
            "k_cutoff must lie in (0, 0.5], got {k_cutoff}"
        )));
    }
    let n = object.n();
    let (wf, wf_down) = to_object_grid(widefield_deconv, n)?;
    let (sim, sim_down) = to_object_grid(sim_image, n)?;
    let psf_widefield = solve_effective_psf(object, &wf, opts)?;
    let psf_sim = solve_effective_psf(object, &sim, opts)?;
    let f_sys = fwhm(system_psf)?;
    // one diffraction-limit unit = 1/k_cutoff pixels
    let dl = 1.0 / k_cutoff;
    let report = ResolutionReport {
        fwhm_system_px: f_sys,
        fwhm_widefield_deconv_px: psf_widefield.fwhm_px,
        fwhm_sim_px: psf_sim.fwhm_px,
        ratio_widefield_deconv: psf_widefield.fwhm_px / f_sys,
        ratio_sim: psf_sim.fwhm_px / f_sys,
        system_vs_diffraction_limit: f_sys / dl,
        widefield_deconv_vs_diffraction_limit: psf_widefield.fwhm_px / dl,
        sim_vs_diffraction_limit: psf_sim.fwhm_px / dl,
        psf_size: oddify(opts.psf_size),
        rows: opts.rows,
        repeats: opts.repeats,
        sim_downsampled: sim_down,
        widefield_downsampled: wf_down,
    };
    Ok(ResolutionOutcome {
        report,
        psf_widefield,
        psf_sim,
    })
}
