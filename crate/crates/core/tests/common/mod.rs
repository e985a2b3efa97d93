//! Shared helpers for the integration tests: seeded random fields, finite
//! differences, and a first-order primal-dual (Chambolle-Pock) TGV oracle.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tgv_core::operators::{divergence, primal_gradient, second_gradient, sym_gradient};
use tgv_core::{GridSpec, ScalarField, SparseOperator};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(r: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| r.random_range(-1.0..1.0)).collect()
}

pub fn random_field(r: &mut ChaCha8Rng, g: GridSpec) -> ScalarField {
    ScalarField::from_vec(g, random_vec(r, g.len())).unwrap()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn rel_l2(a: &ScalarField, b: &ScalarField) -> f64 {
    norm(&a.sub(b).into_vec()) / norm(b.values())
}

/// Central difference `(f(x + t) - f(x - t)) / 2t`.
pub fn central(f: impl Fn(f64) -> f64, t: f64) -> f64 {
    (f(t) - f(-t)) / (2.0 * t)
}

fn op_norm(k: &SparseOperator) -> f64 {
    let mut x = vec![1.0; k.cols()];
    let mut lam = 0.0;
    for _ in 0..200 {
        let y = k.apply_transpose(&k.apply(&x));
        lam = norm(&y);
        x = y.iter().map(|v| v / lam).collect();
    }
    lam.sqrt()
}

/// `min_x 1/2 |u - f|^2 + sum_b F_b(K_b x)` with `x = (u, rest)` and
/// `prox_dual` the projection onto the dual feasible set (all `F_b` are
/// norms). Plain Chambolle-Pock with `tau = sigma = 0.99 / |K|`, stopped
/// when `u` changes by less than `tol` (relative) over 500 iterations.
fn chambolle_pock(
    k: &SparseOperator,
    f: &[f64],
    prox_dual: impl Fn(&mut [f64]),
    tol: f64,
    max_iter: usize,
) -> Vec<f64> {
    let n = f.len();
    let l = op_norm(k) * 1.01;
    let (tau, sigma) = (1.0 / l, 1.0 / l);
    let mut x = vec![0.0; k.cols()];
    x[..n].copy_from_slice(f);
    let mut xbar = x.clone();
    let mut y = vec![0.0; k.rows()];
    let mut anchor = x[..n].to_vec();
    for it in 1..=max_iter {
        let kx = k.apply(&xbar);
        y.iter_mut().zip(&kx).for_each(|(a, b)| *a += sigma * b);
        prox_dual(&mut y);
        let kty = k.apply_transpose(&y);
        let old = x.clone();
        for (i, v) in x.iter_mut().enumerate() {
            let z = *v - tau * kty[i];
            *v = if i < n { (z + tau * f[i]) / (1.0 + tau) } else { z };
        }
        for i in 0..x.len() {
            xbar[i] = 2.0 * x[i] - old[i];
        }
        if it % 500 == 0 {
            let d: Vec<f64> = x[..n].iter().zip(&anchor).map(|(a, b)| a - b).collect();
            if norm(&d) <= tol * norm(&x[..n]) {
                break;
            }
            anchor = x[..n].to_vec();
        }
    }
    x.truncate(n);
    x
}

fn stack(blocks: &[Vec<Option<&SparseOperator>>]) -> SparseOperator {
    SparseOperator::block(blocks).unwrap()
}

/// Exact TGV in the discretization of the predual solver, with weights in
/// unit-mesh scaling: `min 1/2|u-f|^2 + a1 |w|_1 + a0 |grad^2 u - Xw|_{1,F}`
/// where `<Xw, p>_F = <w, div p>` and every norm is componentwise, which is
/// what the box constraints `|p_c| <= a0`, `|(div p)_k| <= a1` dualize to.
pub fn tgv_oracle_dual_discretization(f: &ScalarField, a0: f64, a1: f64) -> ScalarField {
    let g = GridSpec::new(f.grid().n, f.grid().m, 1.0).unwrap();
    let n = g.len();
    let mut half = vec![1.0; 3 * n];
    half[n..2 * n].iter_mut().for_each(|v| *v = 0.5);
    let xw = divergence(&g).transpose().scale_rows(&half);
    // Doubling the mixed row turns the Frobenius-weighted l1 norm into a plain one.
    let mut twice = vec![1.0; 3 * n];
    twice[n..2 * n].iter_mut().for_each(|v| *v = 2.0);
    let p_u = second_gradient(&g).scale_rows(&twice);
    let p_w = xw.scale(-1.0).scale_rows(&twice);
    let k = stack(&[
        vec![Some(&SparseOperator::zeros(2 * n, n)), Some(&SparseOperator::identity(2 * n))],
        vec![Some(&p_u), Some(&p_w)],
    ]);
    let u = chambolle_pock(
        &k,
        f.values(),
        |y| {
            for (i, v) in y.iter_mut().enumerate() {
                let a = if i < 2 * n { a1 } else { a0 };
                *v = v.clamp(-a, a);
            }
        },
        1e-9,
        400_000,
    );
    ScalarField::from_vec(*f.grid(), u).unwrap()
}

/// Exact isotropic TGV in the discretization of the primal-dual solver:
/// `min 1/2|u-f|^2 + a1 |grad u - v|_2 + a0 |E v|_F` (pixelwise norms).
pub fn tgv_oracle_primal_discretization(f: &ScalarField, a0: f64, a1: f64) -> ScalarField {
    let g = GridSpec::new(f.grid().n, f.grid().m, 1.0).unwrap();
    let n = g.len();
    let grad = primal_gradient(&g);
    let mut sq2 = vec![1.0; 3 * n];
    sq2[n..2 * n].iter_mut().for_each(|v| *v = std::f64::consts::SQRT_2);
    let e = sym_gradient(&g).scale_rows(&sq2);
    let minus_eye = SparseOperator::identity(2 * n).scale(-1.0);
    let k = stack(&[vec![Some(&grad), Some(&minus_eye)], vec![Some(&SparseOperator::zeros(3 * n, n)), Some(&e)]]);
    let u = chambolle_pock(
        &k,
        f.values(),
        |y| {
            for i in 0..n {
                let r = (y[i] * y[i] + y[n + i] * y[n + i]).sqrt();
                if r > a1 {
                    y[i] *= a1 / r;
                    y[n + i] *= a1 / r;
                }
                let o = 2 * n;
                let r = (y[o + i].powi(2) + y[o + n + i].powi(2) + y[o + 2 * n + i].powi(2)).sqrt();
                if r > a0 {
                    for c in 0..3 {
                        y[o + c * n + i] *= a0 / r;
                    }
                }
            }
        },
        1e-9,
        400_000,
    );
    ScalarField::from_vec(*f.grid(), u).unwrap()
}
