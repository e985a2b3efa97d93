//! 256x256 benchmarks, ignored by default:
//! `cargo test --release --test full_scale -- --ignored --nocapture`.

use std::path::Path;
use std::time::Instant;

use tgv_core::bilevel_pd::{run_bilevel_pd_tracked, BilevelPdConfig};
use tgv_core::io::read_image;
use tgv_core::metrics::{psnr, ssim};
use tgv_core::synth::{add_gaussian_noise, make_phantom, PhantomKind};
use tgv_core::upper::CorridorSpec;
use tgv_core::{GridMode, GridSpec, ScalarField};

fn bench(label: &str, truth: &ScalarField) {
    let f = add_gaussian_noise(truth, 0.01, 0).unwrap();
    let spec = CorridorSpec::new(0.01, 7).unwrap();
    let start = Instant::now();
    let r = run_bilevel_pd_tracked(&f, &BilevelPdConfig::default(), &spec, Some(truth)).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let objectives = r.history.objectives();
    let (p0, p1) = (psnr(&f, truth, 1.0).unwrap(), psnr(&r.u, truth, 1.0).unwrap());
    println!(
        "{label}: {} iterations, {} lower solves, F {:.3e} -> {:.3e}, PSNR {p0:.2} -> {p1:.2} dB, SSIM {:.4} -> {:.4}, \
         alpha1 in [{:.4}, {:.4}], {secs:.0} s",
        r.history.rows.len(),
        r.history.total_lower_solves(),
        r.history.initial.objective,
        r.history.last().objective,
        ssim(&f, truth).unwrap(),
        ssim(&r.u, truth).unwrap(),
        r.alpha1.min(),
        r.alpha1.max(),
    );
    assert!(objectives.windows(2).all(|w| w[1] <= w[0]));
    assert!(p1 > p0 + 3.0, "{label}: PSNR gain {:.2} dB", p1 - p0);
}

#[test]
#[ignore = "about forty minutes in release mode"]
fn camera_256() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/camera256.pgm");
    bench("camera 256x256", &read_image(&path, GridMode::PrimalDual).unwrap());
}

#[test]
#[ignore = "about forty minutes in release mode"]
fn phantom_256() {
    let g = GridSpec::primal_dual(256, 256).unwrap();
    bench("piecewise-affine phantom 256x256", &make_phantom(PhantomKind::PiecewiseAffine, g));
}
