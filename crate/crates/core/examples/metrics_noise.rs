//! Seeded noise, PSNR/SSIM and the localized variance objective on every
//! built-in phantom.

use tgv_core::metrics::{psnr, ssim};
use tgv_core::synth::{add_gaussian_noise, make_phantom, PhantomKind};
use tgv_core::upper::{localized_residual, objective_f, sigma_corridor, CorridorSpec};
use tgv_core::GridSpec;

fn main() -> tgv_core::Result<()> {
    let sigma2 = 0.01;
    let (lo, hi) = sigma_corridor(sigma2, 7)?;
    println!("variance corridor for sigma2 = {sigma2}, 7x7 windows: [{lo:.6}, {hi:.6}]");

    let g = GridSpec::primal_dual(128, 128)?;
    let spec = CorridorSpec::new(sigma2, 7)?;
    for kind in PhantomKind::ALL {
        let truth = make_phantom(kind, g);
        let f = add_gaussian_noise(&truth, sigma2, 7)?;
        let var = f.sub(&truth).values().iter().map(|v| v * v).sum::<f64>() / g.len() as f64;
        // F at the truth is small: its residual is pure noise
        let f_truth = objective_f(&localized_residual(&truth, &f, &spec)?, &spec);
        let f_data = objective_f(&localized_residual(&f, &f, &spec)?, &spec);
        println!(
            "{:<19} noise var {var:.5}  PSNR {:.2}  SSIM {:.4}  F(truth) {f_truth:.3e}  F(f) {f_data:.3e}",
            kind.name(),
            psnr(&f, &truth, 1.0)?,
            ssim(&f, &truth)?
        );
    }
    Ok(())
}
