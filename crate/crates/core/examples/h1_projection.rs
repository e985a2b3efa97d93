//! Penalized projection of a weight field onto a box in the H1 geometry,
//! compared with a plain pointwise clamp.

use tgv_core::projection::{clamp_scalar, project_h1, ProjectionSpec};
use tgv_core::{GridSpec, ScalarField};

fn main() -> tgv_core::Result<()> {
    let g = GridSpec::primal_dual(16, 16)?;
    let raw = ScalarField::from_fn(g, |i, j| 0.5 + 0.8 * ((i as f64) / 3.0).sin() * ((j as f64) / 4.0).cos());
    let (lo, hi) = (0.1, 1.0);
    for w in [0.0, 1.0, 10.0] {
        let p = project_h1(&raw, &ProjectionSpec::new(lo, hi, 1e-8, w))?;
        let clamp = raw.map(|v| clamp_scalar(v, lo, hi));
        println!(
            "lap weight {w:>4}: {} Newton steps, range [{:.4}, {:.4}], distance to clamp {:.3e}",
            p.iterations,
            p.alpha.min(),
            p.alpha.max(),
            p.alpha.sub(&clamp).max_abs()
        );
    }
    Ok(())
}
