//! Learns a spatial `alpha1` and a scalar `alpha0` with the primal-dual
//! bilevel loop and prints the per-iteration history.
//!
//! `cargo run --release --example bilevel_pd [size] [max_outer]`

use tgv_core::bilevel_pd::{run_bilevel_pd_tracked, BilevelPdConfig};
use tgv_core::smoothing::Weight;
use tgv_core::synth::{add_gaussian_noise, make_phantom, PhantomKind};
use tgv_core::upper::CorridorSpec;
use tgv_core::GridSpec;

fn main() -> tgv_core::Result<()> {
    let mut args = std::env::args().skip(1).map(|s| s.parse::<usize>().expect("integer arguments"));
    let size = args.next().unwrap_or(48);
    let max_outer = args.next().unwrap_or(15);

    let g = GridSpec::primal_dual(size, size)?;
    let truth = make_phantom(PhantomKind::PiecewiseAffine, g);
    let f = add_gaussian_noise(&truth, 0.01, 0)?;
    let spec = CorridorSpec::new(0.01, 7)?;

    let mut cfg = BilevelPdConfig::default();
    cfg.steps.max_outer = max_outer;
    let r = run_bilevel_pd_tracked(&f, &cfg, &spec, Some(&truth))?;

    println!("iter  objective    tau0      tau1      psnr");
    for row in &r.history.rows {
        println!(
            "{:>4}  {:.4e}  {:.2e}  {:.2e}  {:.2}",
            row.iteration,
            row.objective,
            row.tau0,
            row.tau1,
            row.psnr.unwrap_or(f64::NAN)
        );
    }
    if let Weight::Scalar(a0) = r.alpha0 {
        println!("alpha0 = {a0:.4}");
    }
    println!("alpha1 in [{:.4}, {:.4}], mean {:.4}", r.alpha1.min(), r.alpha1.max(), r.alpha1.mean());
    println!("{} lower-level solves", r.history.total_lower_solves());
    Ok(())
}
