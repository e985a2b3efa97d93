//! Scalar-weight TGV denoising with the primal-dual Newton solver.
//!
//! `cargo run --release --example denoise_pd [alpha0 alpha1]`

use tgv_core::lower_pd::{pd_newton_solve, PdSolverConfig};
use tgv_core::metrics::{psnr, ssim};
use tgv_core::smoothing::Weight;
use tgv_core::synth::{add_gaussian_noise, make_phantom, PhantomKind};
use tgv_core::{GridSpec, ScalarField};

fn main() -> tgv_core::Result<()> {
    let mut args = std::env::args().skip(1).map(|s| s.parse::<f64>().expect("weights are numbers"));
    let alpha0 = args.next().unwrap_or(0.2);
    let alpha1 = args.next().unwrap_or(0.25);

    let g = GridSpec::primal_dual(64, 64)?;
    let truth = make_phantom(PhantomKind::PiecewiseAffine, g);
    let f = add_gaussian_noise(&truth, 0.01, 0)?;

    let a1 = ScalarField::constant(g, alpha1);
    let sol = pd_newton_solve(&f, &Weight::Scalar(alpha0), &a1, &PdSolverConfig::default(), None)?;
    println!("Newton iterations: {}", sol.iterations);
    for (k, r) in sol.history.iter().enumerate() {
        println!("  {k:>2}: residuals {:.2e} {:.2e} {:.2e} {:.2e}", r[0], r[1], r[2], r[3]);
    }
    println!("noisy:    PSNR {:.2} dB  SSIM {:.4}", psnr(&f, &truth, 1.0)?, ssim(&f, &truth)?);
    println!("denoised: PSNR {:.2} dB  SSIM {:.4}", psnr(&sol.state.u, &truth, 1.0)?, ssim(&sol.state.u, &truth)?);
    Ok(())
}
