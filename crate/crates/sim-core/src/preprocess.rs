//! Raw-stack conditioning: per-frame intensity normalization and
//! background removal by grayscale morphological opening.

use crate::error::{Result, SimError};
use crate::image::RealImage;
use crate::simulate::RawSimStack;
use rayon::prelude::*;

/// Affinely rescale every frame to the stack-wide target mean and standard
/// deviation (the averages of the per-frame statistics).
pub fn normalize_stack(stack: &RawSimStack) -> Result<RawSimStack> {
    let stats: Vec<(f64, f64)> = stack
        .frames()
        .iter()
        .map(|f| (f.mean(), f.std()))
        .collect();
    for (i, (frame, &(_, s))) in stack.frames().iter().zip(&stats).enumerate() {
        // range check: a constant frame has no contrast to gain-match, and
        // its computed std can round to a nonzero subnormal
        if s <= 0.0 || frame.max() - frame.min() <= 0.0 {
            return Err(SimError::parameter(format!(
                "frame {} (orientation {}, phase {}) has zero standard deviation; cannot normalize",
                i,
                i / 3,
                i % 3
            )));
        }
    }
    let target_mean = stats.iter().map(|s| s.0).sum::<f64>() / 9.0;
    let target_std = stats.iter().map(|s| s.1).sum::<f64>() / 9.0;
    let frames: Vec<RealImage> = stack
        .frames()
        .iter()
        .zip(&stats)
        .map(|(f, &(mu, sd))| {
            let gain = target_std / sd;
            RealImage::from_vec(
                f.n(),
                f.data()
                    .iter()
                    .map(|&v| (v - mu) * gain + target_mean)
                    .collect(),
            )
            .expect("affine map of finite samples is finite")
        })
        .collect();
    let mut out = RawSimStack::from_frames(frames)?;
    out.config_echo = stack.config_echo.clone();
    Ok(out)
}

/// Disk structuring element: offsets with dx^2 + dy^2 <= radius^2.
fn disk_offsets(radius: usize) -> Vec<(isize, isize)> {
    let r = radius as isize;
    let r2 = r * r;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r2 {
                out.push((dx, dy));
            }
        }
    }
    out
}

/// Min or max filter over a disk with replicated (clamped) edges.
fn disk_filter(img: &RealImage, offsets: &[(isize, isize)], take_max: bool) -> RealImage {
    let n = img.n() as isize;
    RealImage::from_fn(img.n(), |x, y| {
        let mut acc = if take_max {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        };
        for &(dx, dy) in offsets {
            let xs = (x as isize + dx).clamp(0, n - 1) as usize;
            let ys = (y as isize + dy).clamp(0, n - 1) as usize;
            let v = img.get(xs, ys);
            acc = if take_max { acc.max(v) } else { acc.min(v) };
        }
        acc
    })
}

/// Grayscale opening (erosion then dilation) with a disk element.
/// Anti-extensive: the result never exceeds the input pointwise.
pub fn morphological_opening(img: &RealImage, radius: usize) -> Result<RealImage> {
    if radius < 1 {
        return Err(SimError::parameter("opening radius must be >= 1"));
    }
    if radius >= img.n() / 2 {
        return Err(SimError::parameter(format!(
            "opening radius {radius} too large for a {0}x{0} image (must be < {1})",
            img.n(),
            img.n() / 2
        )));
    }
    let offsets = disk_offsets(radius);
    let eroded = disk_filter(img, &offsets, false);
    Ok(disk_filter(&eroded, &offsets, true))
}

/// Background-subtracted image: img - opening(img, disk(radius)).
/// The result is non-negative wherever the input dominates its opening,
/// which anti-extensivity guarantees everywhere.
pub fn remove_background(img: &RealImage, radius: usize) -> Result<RealImage> {
    let opened = morphological_opening(img, radius)?;
    RealImage::from_vec(
        img.n(),
        img.data()
            .iter()
            .zip(opened.data())
            .map(|(&a, &b)| a - b)
            .collect(),
    )
}

/// Apply [`remove_background`] to every frame of a stack in parallel.
pub fn remove_background_stack(stack: &RawSimStack, radius: usize) -> Result<RawSimStack> {
    let frames: Vec<RealImage> = stack
        .frames()
        .par_iter()
        .map(|f| remove_background(f, radius))
        .collect::<Result<_>>()?;
    let mut out = RawSimStack::from_frames(frames)?;
    out.config_echo = stack.config_echo.clone();
    Ok(out)
}
