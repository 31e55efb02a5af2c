//! Image file reading and writing.
//!
//! Reads PNG (8/16-bit gray or RGB) and TIFF (8/16-bit integer, 32-bit
//! float). Writes 32-bit float TIFF as the primary output format and 16-bit
//! PNG as a preview format, each with a JSON sidecar recording the grid size,
//! value range, and FFT convention.

use crate::error::{Result, SimError};
use crate::image::{ComplexSpectrum, RealImage};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

/// Options for [`load_image`].
#[derive(Clone, Copy, Debug, Default)]
pub struct LoadOptions {
    /// Keep integer samples as stored instead of mapping to [0, 1].
    pub raw_range: bool,
    /// Crop to the central square of this side before the squareness check.
    pub center_crop: Option<usize>,
}

/// Sidecar metadata written next to every saved image.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ImageSidecar {
    pub n: usize,
    pub value_range: [f64; 2],
    pub fft_convention: String,
}

const FFT_CONVENTION: &str = "dc-centered, inverse 1/N^2";

fn extension_of(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

/// Load a grayscale image. Multi-channel inputs are averaged across color
/// channels; integer samples are mapped to [0, 1] unless `raw_range` is set
/// (float TIFF samples are always taken as stored).
pub fn load_image(path: &Path, options: &LoadOptions) -> Result<RealImage> {
    let (w, h, data) = match extension_of(path).as_str() {
        "png" => load_png(path, options.raw_range)?,
        "tif" | "tiff" => load_tiff(path, options.raw_range)?,
        other => {
            return Err(SimError::parameter(format!(
                "unsupported image format \".{other}\" for {}; use PNG or TIFF",
                path.display()
            )))
        }
    };
    finish_load(w, h, data, options)
}

fn finish_load(w: usize, h: usize, data: Vec<f64>, options: &LoadOptions) -> Result<RealImage> {
    let (mut w, mut h, mut data) = (w, h, data);
    if let Some(c) = options.center_crop {
        if c == 0 || c > w || c > h {
            return Err(SimError::parameter(format!(
                "center-crop {c} does not fit inside a {w}x{h} image"
            )));
        }
        let x0 = (w - c) / 2;
        let y0 = (h - c) / 2;
        let mut out = Vec::with_capacity(c * c);
        for y in 0..c {
            let start = (y0 + y) * w + x0;
            out.extend_from_slice(&data[start..start + c]);
        }
        data = out;
        w = c;
        h = c;
    }
    if w != h {
        return Err(SimError::dimension(format!(
            "image is {w}x{h}, not square; pass --center-crop to select a square region"
        )));
    }
    RealImage::from_vec(w, data)
}

fn load_png(path: &Path, raw_range: bool) -> Result<(usize, usize, Vec<f64>)> {
    let img = image::open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let s8 = if raw_range { 1.0 } else { 1.0 / 255.0 };
    let s16 = if raw_range { 1.0 } else { 1.0 / 65535.0 };
    use image::DynamicImage::*;
    let data: Vec<f64> = match img {
        ImageLuma8(b) => b.pixels().map(|p| p.0[0] as f64 * s8).collect(),
        ImageLumaA8(b) => b.pixels().map(|p| p.0[0] as f64 * s8).collect(),
        ImageLuma16(b) => b.pixels().map(|p| p.0[0] as f64 * s16).collect(),
        ImageLumaA16(b) => b.pixels().map(|p| p.0[0] as f64 * s16).collect(),
        ImageRgb8(b) => b
            .pixels()
            .map(|p| (p.0[0] as f64 + p.0[1] as f64 + p.0[2] as f64) / 3.0 * s8)
            .collect(),
        ImageRgba8(b) => b
            .pixels()
            .map(|p| (p.0[0] as f64 + p.0[1] as f64 + p.0[2] as f64) / 3.0 * s8)
            .collect(),
        ImageRgb16(b) => b
            .pixels()
            .map(|p| (p.0[0] as f64 + p.0[1] as f64 + p.0[2] as f64) / 3.0 * s16)
            .collect(),
        ImageRgba16(b) => b
            .pixels()
            .map(|p| (p.0[0] as f64 + p.0[1] as f64 + p.0[2] as f64) / 3.0 * s16)
            .collect(),
        other => {
            let b = other.to_rgba32f();
            b.pixels()
                .map(|p| (p.0[0] as f64 + p.0[1] as f64 + p.0[2] as f64) / 3.0)
                .collect()
        }
    };
    Ok((w, h, data))
}

fn load_tiff(path: &Path, raw_range: bool) -> Result<(usize, usize, Vec<f64>)> {
    let file = File::open(path)?;
    let mut dec = tiff::decoder::Decoder::new(BufReader::new(file))?;
    let (w, h) = dec.dimensions()?;
    let channels = match dec.colortype()? {
        tiff::ColorType::Gray(_) => 1usize,
        tiff::ColorType::RGB(_) => 3,
        tiff::ColorType::RGBA(_) => 4,
        other => {
            return Err(SimError::Codec(format!(
                "unsupported TIFF color type {other:?} in {}",
                path.display()
            )))
        }
    };
    use tiff::decoder::DecodingResult as R;
    let raw: Vec<f64> = match dec.read_image()? {
        R::U8(v) => {
            let s = if raw_range { 1.0 } else { 1.0 / 255.0 };
            v.iter().map(|&x| x as f64 * s).collect()
        }
        R::U16(v) => {
            let s = if raw_range { 1.0 } else { 1.0 / 65535.0 };
            v.iter().map(|&x| x as f64 * s).collect()
        }
        R::U32(v) => {
            let s = if raw_range { 1.0 } else { 1.0 / u32::MAX as f64 };
            v.iter().map(|&x| x as f64 * s).collect()
        }
        R::F32(v) => v.iter().map(|&x| x as f64).collect(),
        R::F64(v) => v,
        _ => {
            return Err(SimError::Codec(format!(
                "unsupported TIFF sample type in {}",
                path.display()
            )))
        }
    };
    let data = if channels == 1 {
        raw
    } else {
        raw.chunks(channels)
            .map(|c| (c[0] + c[1] + c[2]) / 3.0)
            .collect()
    };
    Ok((w as usize, h as usize, data))
}

/// Save an image as 32-bit float TIFF (`.tif`/`.tiff`, samples as stored) or
/// 16-bit grayscale PNG (`.png`, min-max rescaled). A JSON sidecar with the
/// grid size and value range is written next to the image.
pub fn save_image(img: &RealImage, path: &Path) -> Result<()> {
    let lo = img.min();
    let hi = img.max();
    match extension_of(path).as_str() {
        "tif" | "tiff" => {
            let file = File::create(path)?;
            let mut enc = tiff::encoder::TiffEncoder::new(BufWriter::new(file))?;
            let data: Vec<f32> = img.data().iter().map(|&v| v as f32).collect();
            enc.write_image::<tiff::encoder::colortype::Gray32Float>(
                img.n() as u32,
                img.n() as u32,
                &data,
            )?;
        }
        "png" => {
            let span = (hi - lo).max(1e-300);
            let buf: Vec<u16> = img
                .data()
                .iter()
                .map(|&v| (((v - lo) / span) * 65535.0).round().clamp(0.0, 65535.0) as u16)
                .collect();
            let ib = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_raw(
                img.n() as u32,
                img.n() as u32,
                buf,
            )
            .expect("buffer sized to n*n");
            ib.save_with_format(path, image::ImageFormat::Png)?;
        }
        other => {
            return Err(SimError::parameter(format!(
                "unsupported output format \".{other}\"; use .tif or .png"
            )))
        }
    }
    write_sidecar(path, img.n(), [lo, hi])
}

fn write_sidecar(image_path: &Path, n: usize, value_range: [f64; 2]) -> Result<()> {
    let sidecar = ImageSidecar {
        n,
        value_range,
        fft_convention: FFT_CONVENTION.to_string(),
    };
    let file = File::create(sidecar_path(image_path))?;
    serde_json::to_writer_pretty(BufWriter::new(file), &sidecar)
        .map_err(|e| SimError::Codec(format!("sidecar serialization: {e}")))?;
    Ok(())
}

/// Path of the JSON sidecar written alongside `image_path`.
pub fn sidecar_path(image_path: &Path) -> PathBuf {
    image_path.with_extension("json")
}

/// Write an 8-bit PNG preview of a real image: values are shifted to be
/// non-negative, compressed with log1p, and max-normalized.
pub fn save_preview_png(img: &RealImage, path: &Path) -> Result<()> {
    let lo = img.min();
    let vals: Vec<f64> = img.data().iter().map(|&v| (v - lo).ln_1p()).collect();
    save_u8_png(&vals, img.n(), path)
}

/// Write an 8-bit PNG preview of a spectrum: log1p of magnitude,
/// max-normalized.
pub fn save_spectrum_preview_png(spec: &ComplexSpectrum, path: &Path) -> Result<()> {
    let vals: Vec<f64> = spec.data().iter().map(|v| v.norm().ln_1p()).collect();
    save_u8_png(&vals, spec.n(), path)
}

fn save_u8_png(vals: &[f64], n: usize, path: &Path) -> Result<()> {
    let mx = vals.iter().cloned().fold(0.0f64, f64::max).max(1e-300);
    let buf: Vec<u8> = vals
        .iter()
        .map(|&v| ((v / mx) * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    let ib = image::ImageBuffer::<image::Luma<u8>, Vec<u8>>::from_raw(n as u32, n as u32, buf)
        .expect("buffer sized to n*n");
    ib.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}
