//! The finite-difference operators: adjoint pairs, the bi-Laplacian stencil
//! and the two discretizations of a quadratic's second derivatives.

use tgv_core::operators::{bilaplacian, divergence, gradient, primal_divergence, primal_gradient, second_gradient};
use tgv_core::{GridSpec, ScalarField};

fn pairing_gap(k: &tgv_core::SparseOperator, kt: &tgv_core::SparseOperator) -> f64 {
    let x: Vec<f64> = (0..k.cols()).map(|i| ((i * 37 % 101) as f64 / 50.0) - 1.0).collect();
    let y: Vec<f64> = (0..k.rows()).map(|i| ((i * 53 % 97) as f64 / 48.0) - 1.0).collect();
    let a: f64 = k.apply(&x).iter().zip(&y).map(|(p, q)| p * q).sum();
    let b: f64 = x.iter().zip(kt.apply(&y)).map(|(p, q)| p * q).sum();
    (a - b).abs()
}

fn main() -> tgv_core::Result<()> {
    let g = GridSpec::new(12, 10, 0.1)?;
    println!(
        "<grad u, q> + <u, div q>:     {:.1e}",
        pairing_gap(&primal_gradient(&g), &primal_divergence(&g).scale(-1.0))
    );
    println!("<grad v, p> + <v, div p>:     {:.1e}", pairing_gap(&gradient(&g), &divergence(&g).scale(-1.0)));

    let b = bilaplacian(&g);
    let c = g.idx(6, 5);
    println!("bi-Laplacian row at an interior pixel (times h^4):");
    for di in -2i64..=2 {
        let row: Vec<String> = (-2i64..=2)
            .map(|dj| {
                let k = g.idx((6 + di) as usize, (5 + dj) as usize);
                format!("{:>4}", (b.get(c, k) * g.h.powi(4)).round())
            })
            .collect();
        println!("  {}", row.join(" "));
    }

    // the first coordinate runs down the rows; x^2 + 3xy has (2, 3, 0)
    let q = ScalarField::from_fn(g, |i, j| {
        let (x, y) = (i as f64 * g.h, j as f64 * g.h);
        x * x + 3.0 * x * y
    });
    let d2 = second_gradient(&g).apply(q.values());
    let n = g.len();
    println!("grad^2 (x^2 + 3xy) at an interior pixel: ({:.3}, {:.3}, {:.3})", d2[c], d2[n + c], d2[2 * n + c]);
    Ok(())
}
