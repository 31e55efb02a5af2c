//! Image load/save roundtrips, sidecar metadata, and format error handling.

use num_complex::Complex64;
use sim_core::image::{ComplexSpectrum, RealImage};
use sim_core::io::{
    load_image, save_image, save_preview_png, save_spectrum_preview_png, sidecar_path,
    ImageSidecar, LoadOptions,
};
use tempfile::tempdir;

fn gradient_image(n: usize) -> RealImage {
    RealImage::from_fn(n, |x, y| -0.25 + 1.7 * (y * n + x) as f64 / (n * n) as f64)
}

#[test]
fn float_tiff_roundtrip_preserves_f32_samples() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("img.tif");
    let img = gradient_image(16);
    save_image(&img, &path).unwrap();
    let back = load_image(&path, &LoadOptions::default()).unwrap();
    assert_eq!(back.n(), 16);
    for (a, b) in img.data().iter().zip(back.data()) {
        // float TIFF stores f32 samples as-is, no range remapping
        assert_eq!(*b, *a as f32 as f64);
    }
}

#[test]
fn sidecar_records_size_range_and_convention() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("img.tif");
    let img = gradient_image(8);
    save_image(&img, &path).unwrap();
    let sc = sidecar_path(&path);
    assert_eq!(sc, dir.path().join("img.json"));
    let sidecar: ImageSidecar =
        serde_json::from_reader(std::fs::File::open(&sc).unwrap()).unwrap();
    assert_eq!(sidecar.n, 8);
    assert!((sidecar.value_range[0] - img.min()).abs() < 1e-12);
    assert!((sidecar.value_range[1] - img.max()).abs() < 1e-12);
    assert!(sidecar.fft_convention.contains("dc-centered"));
}

#[test]
fn png_output_is_min_max_rescaled_u16() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("img.png");
    let img = gradient_image(8);
    save_image(&img, &path).unwrap();
    // raw sample values span the full u16 range
    let raw = load_image(
        &path,
        &LoadOptions {
            raw_range: true,
            center_crop: None,
        },
    )
    .unwrap();
    assert_eq!(raw.min(), 0.0);
    assert_eq!(raw.max(), 65535.0);
    // default load maps back to [0, 1]; compare against the rescale formula
    let unit = load_image(&path, &LoadOptions::default()).unwrap();
    let (lo, hi) = (img.min(), img.max());
    for (orig, got) in img.data().iter().zip(unit.data()) {
        let expect = ((orig - lo) / (hi - lo) * 65535.0).round() / 65535.0;
        assert!((got - expect).abs() < 1e-12);
    }
}

#[test]
fn multichannel_png_loads_as_channel_average() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("rgb.png");
    let buf: Vec<u8> = std::iter::repeat([10u8, 20, 30]).take(36).flatten().collect();
    image::ImageBuffer::<image::Rgb<u8>, Vec<u8>>::from_raw(6, 6, buf)
        .unwrap()
        .save_with_format(&path, image::ImageFormat::Png)
        .unwrap();
    let img = load_image(&path, &LoadOptions::default()).unwrap();
    assert_eq!(img.n(), 6);
    let expect = (10.0 + 20.0 + 30.0) / 3.0 / 255.0;
    for v in img.data() {
        assert!((v - expect).abs() < 1e-12);
    }
}

#[test]
fn non_square_input_errors_unless_center_cropped() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("wide.png");
    let (w, h) = (8u32, 6u32);
    let buf: Vec<u8> = (0..w * h).map(|i| i as u8).collect();
    image::ImageBuffer::<image::Luma<u8>, Vec<u8>>::from_raw(w, h, buf)
        .unwrap()
        .save_with_format(&path, image::ImageFormat::Png)
        .unwrap();

    let err = load_image(&path, &LoadOptions::default()).unwrap_err();
    assert!(
        err.to_string().contains("--center-crop"),
        "error should point at the remedy: {err}"
    );

    let img = load_image(
        &path,
        &LoadOptions {
            raw_range: true,
            center_crop: Some(4),
        },
    )
    .unwrap();
    assert_eq!(img.n(), 4);
    // central 4x4 block of the 8x6 gradient: x0 = 2, y0 = 1
    for y in 0..4 {
        for x in 0..4 {
            let expect = ((y + 1) * 8 + (x + 2)) as f64;
            assert_eq!(img.get(x, y), expect);
        }
    }

    let err = load_image(
        &path,
        &LoadOptions {
            raw_range: false,
            center_crop: Some(9),
        },
    )
    .unwrap_err();
    assert!(err.to_string().contains("does not fit"));
}

#[test]
fn unsupported_extensions_are_rejected() {
    let dir = tempdir().unwrap();
    let err = load_image(&dir.path().join("x.bmp"), &LoadOptions::default()).unwrap_err();
    assert!(err.to_string().contains("unsupported image format"));
    let err = save_image(&gradient_image(4), &dir.path().join("x.bmp")).unwrap_err();
    assert!(err.to_string().contains("unsupported output format"));
}

#[test]
fn previews_are_loadable_and_max_normalized() {
    let dir = tempdir().unwrap();
    let img_path = dir.path().join("prev.png");
    save_preview_png(&gradient_image(12), &img_path).unwrap();
    let prev = load_image(&img_path, &LoadOptions::default()).unwrap();
    assert_eq!(prev.n(), 12);
    assert!(prev.min() >= 0.0);
    assert_eq!(prev.max(), 1.0);

    let spec_path = dir.path().join("spec.png");
    let spec = ComplexSpectrum::from_vec(
        4,
        (0..16).map(|i| Complex64::new(i as f64, -(i as f64))).collect(),
    )
    .unwrap();
    save_spectrum_preview_png(&spec, &spec_path).unwrap();
    let prev = load_image(&spec_path, &LoadOptions::default()).unwrap();
    assert_eq!(prev.n(), 4);
    assert_eq!(prev.max(), 1.0);
}

#[test]
fn tiff_preserves_values_outside_unit_range() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("big.tif");
    let img = RealImage::from_fn(4, |x, y| -300.0 + 80.0 * (x as f64) + 7.5 * (y as f64));
    save_image(&img, &path).unwrap();
    let back = load_image(&path, &LoadOptions::default()).unwrap();
    for (a, b) in img.data().iter().zip(back.data()) {
        assert_eq!(*b, *a as f32 as f64);
    }
}
