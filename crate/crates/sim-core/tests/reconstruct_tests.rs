//! Band separation, per-band filtering, the doubled-grid merge, and the
//! exact-parameter reconstruction oracle.

mod common;

use common::{powerlaw_object, relative_l2, simulate_custom};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sim_core::estimate::{
    estimate_modulation, estimate_noise_power, fit_object_power_spectrum, IlluminationParams,
    NoisePowers, OrientationParams,
};
use sim_core::image::{
    downsample_2x, fft2_centered, ifft2_centered, ComplexSpectrum, FrequencyVector, RealImage,
};
use sim_core::otf::{synthesize_otf, Otf};
use sim_core::reconstruct::{
    apodize, embed_double, notch_filter, phase_match, reconstruct_sim, reconstruct_with_params,
    separate_components, separation_matrix, shift_band, wiener_filter_bands, wiener_widefield,
    BandSet, MergeConfig,
};

fn random_spectrum(n: usize, seed: u64) -> ComplexSpectrum {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let img = RealImage::from_vec(n, (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .unwrap();
    fft2_centered(&img)
}

fn max_norm(s: &ComplexSpectrum) -> f64 {
    s.data().iter().map(|v| v.norm()).fold(0.0, f64::max)
}

fn max_diff(a: &ComplexSpectrum, b: &ComplexSpectrum) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

// --- separation -----------------------------------------------------------

#[test]
fn equally_spaced_phases_invert_to_machine_precision() {
    let phases = [0.0, 2.0 * std::f64::consts::PI / 3.0, 4.0 * std::f64::consts::PI / 3.0];
    let m = separation_matrix(phases, 1.0).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..3 {
                acc += m.inverse[i][k] * m.forward[k][j];
            }
            let expect = if i == j { 1.0 } else { 0.0 };
            assert!(
                (acc - expect).norm() < 1e-14,
                "inverse*forward[{i}][{j}] = {acc}"
            );
        }
    }
}

#[test]
fn separation_rejects_degenerate_inputs() {
    assert!(separation_matrix([0.1, 0.1, 2.0], 0.8).is_err());
    assert!(separation_matrix([0.0, 2.0, 4.0], 0.0).is_err());
    assert!(separation_matrix([0.0, 2.0, 4.0], -0.5).is_err());
    // a full turn apart is the same phase
    let wrapped = [0.3, 0.3 + 2.0 * std::f64::consts::PI, 2.0];
    assert!(separation_matrix(wrapped, 0.8).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn random_phase_triples_roundtrip(
        base in -3.14f64..3.14,
        j1 in -0.4f64..0.4,
        j2 in -0.4f64..0.4,
        m in 0.2f64..1.0,
    ) {
        let phases = [base, base + 2.0 + j1, base + 4.2 + j2];
        let mat = separation_matrix(phases, m).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..3 {
                    acc += mat.forward[i][k] * mat.inverse[k][j];
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                prop_assert!((acc - expect).norm() < 1e-12);
            }
        }
    }
}

#[test]
fn separation_recovers_planted_bands() {
    let n = 32;
    let phases = [0.1, 2.2, 4.1];
    let m = 0.7;
    let mat = separation_matrix(phases, m).unwrap();
    let planted = [
        random_spectrum(n, 1),
        random_spectrum(n, 2),
        random_spectrum(n, 3),
    ];
    // forward-mix the bands into three frame spectra
    let mut frames = Vec::new();
    for row in &mat.forward {
        let mut f = ComplexSpectrum::zeros(n);
        for idx in 0..n * n {
            f.data_mut()[idx] = row[0] * planted[0].data()[idx]
                + row[1] * planted[1].data()[idx]
                + row[2] * planted[2].data()[idx];
        }
        frames.push(f);
    }
    let frames: [ComplexSpectrum; 3] = frames.try_into().unwrap();
    let bands = separate_components(&frames, &mat).unwrap();
    let scale = max_norm(&planted[0]);
    assert!(max_diff(&bands.center, &planted[0]) / scale < 1e-10);
    assert!(max_diff(&bands.minus, &planted[1]) / scale < 1e-10);
    assert!(max_diff(&bands.plus, &planted[2]) / scale < 1e-10);
}

// --- per-band operators ----------------------------------------------------

#[test]
fn wiener_gains_at_zero_noise_are_inverse_otf_and_inverse_m() {
    let n = 32;
    let otf = Otf::from_values(n, 0.25, vec![1.0; n * n]).unwrap();
    let bands = BandSet {
        center: random_spectrum(n, 10),
        minus: random_spectrum(n, 11),
        plus: random_spectrum(n, 12),
    };
    let p = FrequencyVector::new(0.12, 0.03);
    let m = 0.8;
    let zero = NoisePowers {
        o: 0.0,
        p: 0.0,
        q: 0.0,
    };
    let out = wiener_filter_bands(&bands, p, m, zero, 1.0, 0.8, &otf).unwrap();
    let scale = max_norm(&bands.center);
    // flat unit OTF, no noise: center gain 1, side gain 1/m
    assert!(max_diff(&out.center, &bands.center) / scale < 1e-14);
    for idx in 0..n * n {
        let expect_m = bands.minus.data()[idx] / m;
        assert!((out.minus.data()[idx] - expect_m).norm() / scale < 1e-14);
        let expect_p = bands.plus.data()[idx] / m;
        assert!((out.plus.data()[idx] - expect_p).norm() / scale < 1e-14);
    }

    // positive noise power strictly damps every non-empty bin
    let noisy = NoisePowers {
        o: 0.5,
        p: 0.5,
        q: 0.5,
    };
    let damped = wiener_filter_bands(&bands, p, m, noisy, 1.0, 0.8, &otf).unwrap();
    for idx in 0..n * n {
        assert!(damped.center.data()[idx].norm() < bands.center.data()[idx].norm() + 1e-15);
    }

    assert!(wiener_filter_bands(&bands, p, 0.0, zero, 1.0, 0.8, &otf).is_err());
}

#[test]
fn notch_matches_its_radial_formula() {
    let n = 64;
    let ones = ComplexSpectrum::from_vec(n, vec![Complex64::new(1.0, 0.0); n * n]).unwrap();
    let (a_o, beta) = (0.05, 1.2);

    let dc = notch_filter(&ones, a_o, beta, FrequencyVector::new(0.0, 0.0));
    assert_eq!(dc.get(n / 2, n / 2), Complex64::new(0.0, 0.0));
    for &(dx, dy) in &[(1i32, 0i32), (0, 1), (9, 4), (20, 15)] {
        let x = (n as i32 / 2 + dx) as usize;
        let y = (n as i32 / 2 + dy) as usize;
        let bins = ((dx * dx + dy * dy) as f64).sqrt();
        let expect = 1.0 - (-a_o * bins.powf(beta)).exp();
        assert!(
            (dc.get(x, y).re - expect).abs() < 1e-12,
            "bin offset ({dx}, {dy})"
        );
    }
    // one bin away the suppression is mild, far away nearly total
    assert!((dc.get(n / 2 + 1, n / 2).re - 0.04877057549928599).abs() < 1e-12);
    let far = 1.0 - (-a_o * 40.0f64.powf(beta)).exp();
    assert!(far > 0.97);

    // displaced center zeroes the displaced bin
    let off = notch_filter(&ones, a_o, beta, FrequencyVector::new(8.0 / n as f64, 0.0));
    assert_eq!(off.get(n / 2 + 8, n / 2), Complex64::new(0.0, 0.0));
    assert!((off.get(n / 2, n / 2).re - (1.0 - (-a_o * 8.0f64.powf(beta)).exp())).abs() < 1e-12);
}

#[test]
fn integer_shift_is_a_circular_roll() {
    let n = 32;
    let spec = random_spectrum(n, 20);
    let p = FrequencyVector::new(5.0 / n as f64, 0.0);
    let shifted = shift_band(&spec, p, 1);
    let scale = max_norm(&spec);
    for y in 0..n {
        for x in 0..n {
            // out(k) = in(k - p): content moves +5 bins along x
            let expect = spec.get((x + n - 5) % n, y);
            assert!(
                (shifted.get(x, y) - expect).norm() / scale < 1e-9,
                "bin ({x}, {y})"
            );
        }
    }
}

#[test]
fn fractional_shifts_invert_exactly() {
    let n = 48;
    let spec = random_spectrum(n, 21);
    let p = FrequencyVector::new(0.113, -0.071);
    let back = shift_band(&shift_band(&spec, p, 1), p, -1);
    assert!(max_diff(&back, &spec) / max_norm(&spec) < 1e-12);
}

#[test]
fn phase_match_recovers_a_planted_rotation() {
    let n = 64;
    let s0 = random_spectrum(n, 30);
    let gamma = 0.3;
    let mut rotated = s0.clone();
    for v in rotated.data_mut() {
        *v *= Complex64::from_polar(1.0, gamma);
    }
    let p = FrequencyVector::new(0.1, 0.0375);
    let got = phase_match(&s0, &rotated, p, 0.2).unwrap();
    assert!((got - gamma).abs() < 1e-9, "phase {got}");

    // disjoint supports leave nothing to align
    let err = phase_match(&s0, &rotated, FrequencyVector::new(0.45, 0.0), 0.1).unwrap_err();
    assert!(err.to_string().contains("phase-match"));
}

#[test]
fn apodization_window_endpoints() {
    let n = 64;
    let ones = ComplexSpectrum::from_vec(n, vec![Complex64::new(1.0, 0.0); n * n]).unwrap();
    let k_max = 0.3;

    let tri = apodize(&ones, 1.0, k_max);
    assert_eq!(tri.get(n / 2, n / 2), Complex64::new(1.0, 0.0));
    let kr = 9.0 / n as f64;
    assert!((tri.get(n / 2 + 9, n / 2).re - (1.0 - kr / k_max)).abs() < 1e-12);
    // outside the apodization support the spectrum is exactly zero
    assert_eq!(tri.get(n / 2 + 20, n / 2), Complex64::new(0.0, 0.0));

    // gamma = 0 must behave as a hard disk, not 0^0 = 1 leakage
    let disk = apodize(&ones, 0.0, k_max);
    assert_eq!(disk.get(n / 2 + 9, n / 2), Complex64::new(1.0, 0.0));
    assert_eq!(disk.get(n / 2 + 20, n / 2), Complex64::new(0.0, 0.0));
}

#[test]
fn embedding_doubles_the_grid_around_dc() {
    let n = 8;
    let spec = random_spectrum(n, 40);
    let big = embed_double(&spec);
    assert_eq!(big.n(), 2 * n);
    for y in 0..2 * n {
        for x in 0..2 * n {
            let inside = (n / 2..n / 2 + n).contains(&x) && (n / 2..n / 2 + n).contains(&y);
            let expect = if inside {
                spec.get(x - n / 2, y - n / 2)
            } else {
                Complex64::new(0.0, 0.0)
            };
            assert_eq!(big.get(x, y), expect, "bin ({x}, {y})");
        }
    }
    // DC stays at the grid center
    assert_eq!(big.get(n, n), spec.get(n / 2, n / 2));
}

#[test]
fn widefield_wiener_with_flat_otf_is_identity() {
    let n = 64;
    let img = powerlaw_object(n, 0.8, 9);
    let otf = Otf::from_values(n, 0.25, vec![1.0; n * n]).unwrap();
    let wf = wiener_widefield(&[fft2_centered(&img)], 1.0, 0.8, 0.0, &otf).unwrap();
    assert!(relative_l2(wf.data(), img.data()) < 1e-12);
}

// --- full merge ------------------------------------------------------------

struct ExactSeparation {
    params: IlluminationParams,
    centrals: Vec<ComplexSpectrum>,
}

/// Separate a stack at m = 1 with the true phases and fit the object power
/// law on the averaged central band, mirroring the known-parameter
/// reconstruction path.
fn exact_params(
    stack: &sim_core::simulate::RawSimStack,
    truth: &[common::Truth],
    otf: &Otf,
    m_for_merge: f64,
    noisy: bool,
) -> ExactSeparation {
    let n = stack.n();
    let mut centrals = Vec::new();
    let mut all_bands = Vec::new();
    for (t, tr) in truth.iter().enumerate() {
        let frames: [ComplexSpectrum; 3] = [
            fft2_centered(stack.frame(t, 0)),
            fft2_centered(stack.frame(t, 1)),
            fft2_centered(stack.frame(t, 2)),
        ];
        let mat = separation_matrix(tr.phases_rad, 1.0).unwrap();
        let bands = separate_components(&frames, &mat).unwrap();
        centrals.push(bands.center.clone());
        all_bands.push(bands);
    }
    let mut avg = ComplexSpectrum::zeros(n);
    for c in &centrals {
        for (a, v) in avg.data_mut().iter_mut().zip(c.data()) {
            *a += v / 3.0;
        }
    }
    let psi_fit = if noisy {
        estimate_noise_power(&avg, otf).unwrap()
    } else {
        0.0
    };
    let (a, alpha) = fit_object_power_spectrum(&avg, otf, psi_fit).unwrap();
    let per_orientation = truth
        .iter()
        .zip(&all_bands)
        .map(|(tr, bands)| {
            let psi = if noisy {
                NoisePowers {
                    o: estimate_noise_power(&bands.center, otf).unwrap(),
                    p: estimate_noise_power(&bands.minus, otf).unwrap(),
                    q: estimate_noise_power(&bands.plus, otf).unwrap(),
                }
            } else {
                NoisePowers {
                    o: 0.0,
                    p: 0.0,
                    q: 0.0,
                }
            };
            let m = if m_for_merge > 0.0 {
                m_for_merge
            } else {
                estimate_modulation(&bands.minus, tr.p, a, alpha, otf, psi.p).unwrap()
            };
            OrientationParams {
                p: tr.p,
                phases: tr.phases_rad,
                m,
                psi,
            }
        })
        .collect();
    ExactSeparation {
        params: IlluminationParams {
            per_orientation,
            a,
            alpha,
        },
        centrals,
    }
}

#[test]
fn exact_params_noise_free_matches_passband_reference() {
    let n = 512;
    let kc = 0.25;
    let p_mag = 0.75 * kc;
    let obj = powerlaw_object(n, 0.8, 42);
    let otf = synthesize_otf(n, kc).unwrap();
    let (stack, truth) = simulate_custom(&obj, &otf, p_mag, 0.8, 15.0, 0.0, 42);
    let exact = exact_params(&stack, &truth, &otf, 0.8, false);

    let config = MergeConfig::default();
    let out = reconstruct_with_params(&stack, &otf, &exact.params, &config).unwrap();
    assert_eq!(out.image.n(), 2 * n);
    assert!(
        out.report.residual_imag_ratio < 1e-6,
        "imaginary residual {}",
        out.report.residual_imag_ratio
    );

    // reference: the object spectrum pushed through the merge's own passband
    let mut ref_spec = embed_double(&fft2_centered(&obj));
    for (v, &den) in ref_spec.data_mut().iter_mut().zip(&out.weight_sum) {
        *v *= den / (config.w + den);
    }
    let (ref_img, _) = ifft2_centered(&ref_spec);
    let rms = relative_l2(out.image.data(), ref_img.data());
    assert!(rms < 0.01, "normalized RMS vs passband reference: {rms}");

    // the merged spectrum of real frames stays conjugate-symmetric
    assert!(out.spectrum.conjugate_asymmetry() < 1e-9);

    // merge support is bounded by kc + |p|: weights and spectrum vanish outside
    let bound = kc + p_mag + 2.5 / n as f64;
    let n2 = out.spectrum.n();
    for y in 0..n2 {
        for x in 0..n2 {
            let kr_original_units = 2.0 * out.spectrum.k_radius(x, y);
            if kr_original_units > bound {
                assert_eq!(out.spectrum.get(x, y), Complex64::new(0.0, 0.0));
                assert_eq!(out.weight_sum[y * n2 + x], 0.0);
            }
        }
    }
    // passband gain never exceeds 1
    for &den in &out.weight_sum {
        assert!(den >= 0.0);
        assert!(den / (config.w + den) <= 1.0);
    }
}

#[test]
fn zero_modulation_merge_degenerates_to_wiener_widefield() {
    let n = 512;
    let kc = 0.25;
    let p_mag = 0.75 * kc;
    let obj = powerlaw_object(n, 0.8, 42);
    let otf = synthesize_otf(n, kc).unwrap();
    // m = 0: the side bands carry no signal, only separation leakage noise
    let (stack, truth) = simulate_custom(&obj, &otf, p_mag, 0.0, 15.0, 10.0, 44);
    let exact = exact_params(&stack, &truth, &otf, 0.0, true);
    for o in &exact.params.per_orientation {
        assert!(
            o.m < 0.05,
            "modulation estimate on an unmodulated stack: {}",
            o.m
        );
    }

    let out =
        reconstruct_with_params(&stack, &otf, &exact.params, &MergeConfig::default()).unwrap();
    let merged_n = downsample_2x(&out.image).unwrap();

    let mut avg = ComplexSpectrum::zeros(n);
    for c in &exact.centrals {
        for (a, v) in avg.data_mut().iter_mut().zip(c.data()) {
            *a += v / 3.0;
        }
    }
    let psi_o = estimate_noise_power(&avg, &otf).unwrap();
    let wf = wiener_widefield(
        &exact.centrals,
        exact.params.a,
        exact.params.alpha,
        psi_o,
        &otf,
    )
    .unwrap();
    let rms = relative_l2(merged_n.data(), wf.data());
    assert!(rms < 0.02, "merge-vs-widefield RMS at m = 0: {rms}");
}

#[test]
fn high_frequency_energy_decreases_with_w() {
    let n = 256;
    let kc = 0.25;
    let obj = powerlaw_object(n, 0.8, 7);
    let otf = synthesize_otf(n, kc).unwrap();
    let (stack, truth) = simulate_custom(&obj, &otf, 0.75 * kc, 0.8, 15.0, 0.0, 7);
    let exact = exact_params(&stack, &truth, &otf, 0.8, false);

    let hf_energy = |w: f64| -> f64 {
        let config = MergeConfig {
            w,
            ..MergeConfig::default()
        };
        let out = reconstruct_with_params(&stack, &otf, &exact.params, &config).unwrap();
        let n2 = out.spectrum.n();
        let mut e = 0.0;
        for y in 0..n2 {
            for x in 0..n2 {
                if 2.0 * out.spectrum.k_radius(x, y) > 1.05 * kc {
                    e += out.spectrum.get(x, y).norm_sqr();
                }
            }
        }
        e
    };
    let (e1, e2, e3) = (hf_energy(0.1), hf_energy(0.5), hf_energy(1.0));
    assert!(
        e1 > e2 && e2 > e3,
        "HF energy not monotone in w: {e1} {e2} {e3}"
    );
}

#[test]
fn blind_reconstruction_is_deterministic() {
    let n = 256;
    let obj = powerlaw_object(n, 0.8, 11);
    let otf = synthesize_otf(n, 0.25).unwrap();
    let (stack, _) = simulate_custom(&obj, &otf, 0.75 * 0.25, 0.8, 15.0, 10.0, 11);
    let config = MergeConfig::default();
    let a = reconstruct_sim(&stack, &otf, &config).unwrap();
    let b = reconstruct_sim(&stack, &otf, &config).unwrap();
    assert_eq!(a.image.data(), b.image.data());
    assert_eq!(a.spectrum.data(), b.spectrum.data());
    assert_eq!(a.weight_sum, b.weight_sum);
}

#[test]
fn all_zero_weights_is_an_error() {
    let n = 64;
    let obj = powerlaw_object(n, 0.8, 3);
    let dead_otf = Otf::from_values(n, 0.25, vec![0.0; n * n]).unwrap();
    let live_otf = synthesize_otf(n, 0.25).unwrap();
    let (stack, truth) = simulate_custom(&obj, &live_otf, 0.1875, 0.8, 0.0, 0.0, 3);
    let params = IlluminationParams {
        per_orientation: truth
            .iter()
            .map(|tr| OrientationParams {
                p: tr.p,
                phases: tr.phases_rad,
                m: 0.8,
                psi: NoisePowers {
                    o: 0.0,
                    p: 0.0,
                    q: 0.0,
                },
            })
            .collect(),
        a: 1.0,
        alpha: 0.8,
    };
    let err = match reconstruct_with_params(&stack, &dead_otf, &params, &MergeConfig::default()) {
        Ok(_) => panic!("merge with an all-zero OTF should fail"),
        Err(e) => e,
    };
    assert!(err.to_string().contains("merge"), "got: {err}");
}

#[test]
fn merge_config_validation() {
    let mut config = MergeConfig::default();
    config.validate().unwrap();
    config.w = 0.0;
    assert!(config.validate().is_err());
    config.w = 1.5;
    assert!(config.validate().is_err());
    config.w = 0.4;
    config.apodization.enabled = true;
    config.apodization.gamma = -1.0;
    assert!(config.validate().is_err());
}
