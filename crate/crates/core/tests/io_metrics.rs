mod common;

use tgv_core::io::{read_field_csv, read_image, write_field_csv, write_pgm, PgmDepth};
use tgv_core::metrics::{psnr, ssim};
use tgv_core::synth::{add_gaussian_noise, make_phantom, PhantomKind};
use tgv_core::{GridMode, GridSpec, ScalarField};

fn pair(n: usize, m: usize) -> (ScalarField, ScalarField) {
    let g = GridSpec::primal_dual(n, m).unwrap();
    let x = ScalarField::from_fn(g, |i, j| {
        let (i, j) = (i as f64, j as f64);
        0.5 + 0.3 * (0.3 * i + 0.1 * j).sin() + 0.1 * (0.7 * j).cos()
    });
    let y = ScalarField::from_fn(g, |i, j| x.get(i, j) + 0.05 * (1.3 * (i * j) as f64 + 0.2).sin());
    (x, y)
}

// Reference values from scikit-image 0.25 `structural_similarity` with
// gaussian_weights, sigma 1.5, population covariance and data_range 1.
#[test]
fn ssim_and_psnr_match_scikit_image() {
    for (n, m, s_ref, p_ref) in
        [(24, 32, 0.9447020983423807, 29.319450076296505), (40, 40, 0.9457715638488583, 29.28378277253474)]
    {
        let (x, y) = pair(n, m);
        let s = ssim(&y, &x).unwrap();
        let p = psnr(&y, &x, 1.0).unwrap();
        assert!((s - s_ref).abs() < 1e-10, "{n}x{m}: ssim {s} vs {s_ref}");
        assert!((p - p_ref).abs() < 1e-10, "{n}x{m}: psnr {p} vs {p_ref}");
    }
}

#[test]
fn ssim_of_identical_images_is_one() {
    let (x, _) = pair(20, 20);
    assert!((ssim(&x, &x).unwrap() - 1.0).abs() < 1e-14);
    assert_eq!(psnr(&x, &x, 1.0).unwrap(), f64::INFINITY);
}

#[test]
fn noise_has_requested_variance() {
    let g = GridSpec::primal_dual(256, 256).unwrap();
    let zero = ScalarField::zeros(g);
    for (sigma2, seed) in [(0.01, 0), (0.005, 17), (0.1, 99)] {
        let eta = add_gaussian_noise(&zero, sigma2, seed).unwrap();
        let mean = eta.mean();
        let var = eta.values().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / g.len() as f64;
        assert!((var / sigma2 - 1.0).abs() < 0.03, "sigma2 {sigma2}: sample variance {var}");
        assert!(mean.abs() < 4.0 * (sigma2 / g.len() as f64).sqrt());
    }
}

#[test]
fn noise_is_deterministic_per_seed() {
    let g = GridSpec::dual(16, 16).unwrap();
    let t = make_phantom(PhantomKind::PiecewiseAffine, g);
    let a = add_gaussian_noise(&t, 0.01, 42).unwrap();
    assert_eq!(a, add_gaussian_noise(&t, 0.01, 42).unwrap());
    assert_ne!(a, add_gaussian_noise(&t, 0.01, 43).unwrap());
}

#[test]
fn files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let g = GridSpec::dual(13, 21).unwrap();
    let mut r = common::rng(8);
    let u = common::random_field(&mut r, g).map(|v| 0.5 + 0.5 * v);

    let csv = dir.path().join("u.csv");
    write_field_csv(&csv, &u).unwrap();
    assert_eq!(read_field_csv(&csv, GridMode::Dual).unwrap(), u);

    for (depth, q) in [(PgmDepth::Eight, 255.0), (PgmDepth::Sixteen, 65535.0)] {
        let pgm = dir.path().join(format!("u{}.pgm", depth.maxval()));
        write_pgm(&pgm, &u, depth).unwrap();
        let back = read_image(&pgm, GridMode::Dual).unwrap();
        assert_eq!(back.grid(), u.grid());
        assert!(back.sub(&u).max_abs() <= 0.5 / q + 1e-15);
    }

    let garbage = dir.path().join("bad.pgm");
    std::fs::write(&garbage, b"P2\n1 1\n255\n0\n").unwrap();
    assert!(read_image(&garbage, GridMode::Dual).is_err());
}
