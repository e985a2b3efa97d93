//! Scans a small grid of scalar weights and compares the best PSNR with the
//! least upper-level objective.

use tgv_core::gridsearch::{gridsearch, GridSolver};
use tgv_core::lower_pd::PdSolverConfig;
use tgv_core::synth::{add_gaussian_noise, make_phantom, PhantomKind};
use tgv_core::upper::CorridorSpec;
use tgv_core::GridSpec;

fn main() -> tgv_core::Result<()> {
    let g = GridSpec::primal_dual(32, 32)?;
    let truth = make_phantom(PhantomKind::PiecewiseAffine, g);
    let f = add_gaussian_noise(&truth, 0.01, 0)?;
    let spec = CorridorSpec::new(0.01, 7)?;

    let alpha0: Vec<f64> = (0..4).map(|k| 0.05 * 2f64.powi(k)).collect();
    let alpha1: Vec<f64> = (0..4).map(|k| 0.0625 * 2f64.powi(k)).collect();
    let table = gridsearch(&f, &truth, &alpha0, &alpha1, &GridSolver::Pd(PdSolverConfig::default()), &spec)?;
    print!("{}", table.to_csv()?);
    for (name, row) in [("best PSNR", table.best_psnr()), ("best SSIM", table.best_ssim()), ("least F", table.best_f())]
    {
        if let Some(r) = row {
            println!(
                "{name:>9}: alpha0 {:<5} alpha1 {:<6} PSNR {:.2} SSIM {:.4} F {:.3e}",
                r.alpha0, r.alpha1, r.psnr, r.ssim, r.f_value
            );
        }
    }
    Ok(())
}
