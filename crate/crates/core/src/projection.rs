//! Penalized H1 box projection and the Riesz map of the H1 inner product.

use crate::error::{param, Result, TgvError};
use crate::field::ScalarField;
use crate::operators::neumann_laplacian;
use crate::smoothing::Weight;
use crate::sparse::{Factorization, SparseOperator};

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionSpec {
    pub lower: Weight,
    pub upper: Weight,
    pub eps_alpha: f64,
    /// Multiplier of the Neumann Laplacian inside the H1 inner product.
    pub lap_weight: f64,
    /// Tolerance on the `l2` norm of the optimality residual.
    pub tol: f64,
    pub max_iter: usize,
}

impl ProjectionSpec {
    pub fn new(lower: f64, upper: f64, eps_alpha: f64, lap_weight: f64) -> Self {
        ProjectionSpec {
            lower: Weight::Scalar(lower),
            upper: Weight::Scalar(upper),
            eps_alpha,
            lap_weight,
            tol: 1e-9,
            max_iter: 100,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if !(self.eps_alpha > 0.0 && self.lap_weight >= 0.0 && self.max_iter > 0) {
            return param("projection needs eps_alpha > 0, lap_weight >= 0 and max_iter > 0");
        }
        if (0..n).any(|k| !(self.lower.at(k) < self.upper.at(k))) {
            return param("projection bounds must satisfy lower < upper");
        }
        Ok(())
    }
}

/// `I - w Lap_N` on the grid of `a`.
pub fn riesz_operator(a: &ScalarField, lap_weight: f64) -> SparseOperator {
    let n = a.grid().len();
    SparseOperator::identity(n).sub(&neumann_laplacian(a.grid()).scale(lap_weight)).expect("square")
}

/// `(I - w Lap_N)^{-1} r`.
pub fn riesz_inverse(r: &ScalarField, lap_weight: f64) -> Result<ScalarField> {
    let op = riesz_operator(r, lap_weight);
    let x = Factorization::cholesky(&op)?.solve(r.values())?;
    Ok(ScalarField::from_raw(*r.grid(), x))
}

/// Output of [`project_h1`].
#[derive(Clone, Debug)]
pub struct Projection {
    pub alpha: ScalarField,
    pub iterations: usize,
    pub residual: f64,
}

fn residual(a: &[f64], at: &[f64], m: &SparseOperator, spec: &ProjectionSpec) -> Vec<f64> {
    let d: Vec<f64> = a.iter().zip(at).map(|(x, y)| x - y).collect();
    let md = m.apply(&d);
    (0..a.len())
        .map(|k| {
            let pen = (a[k] - spec.upper.at(k)).max(0.0) - (spec.lower.at(k) - a[k]).max(0.0);
            md[k] + pen / spec.eps_alpha
        })
        .collect()
}

/// Semismooth Newton for
/// `(I - w Lap_N)(a - at) + ((a - hi)^+ - (lo - a)^+) / eps = 0`.
pub fn project_h1(at: &ScalarField, spec: &ProjectionSpec) -> Result<Projection> {
    let g = *at.grid();
    let n = g.len();
    spec.validate(n)?;
    let m = riesz_operator(at, spec.lap_weight);
    let norm = |r: &[f64]| (g.cell() * r.iter().map(|x| x * x).sum::<f64>()).sqrt();
    let active = |a: &[f64]| -> Vec<i8> {
        (0..n)
            .map(|k| {
                if a[k] > spec.upper.at(k) {
                    1
                } else if a[k] < spec.lower.at(k) {
                    -1
                } else {
                    0
                }
            })
            .collect()
    };
    // A value sitting on a bound can flip its penalty term by one ulp of the
    // bound over eps_alpha, so the residual cannot go below that level.
    let scale = (0..n).map(|k| spec.lower.at(k).abs().max(spec.upper.at(k).abs())).fold(at.max_abs(), f64::max);
    let tol = spec.tol.max(16.0 * f64::EPSILON * scale / spec.eps_alpha * (g.cell() * n as f64).sqrt());
    let mut a = at.values().to_vec();
    let mut res = norm(&residual(&a, at.values(), &m, spec));
    let mut act = active(&a);
    let mut seen: Vec<Vec<i8>> = Vec::new();
    let mat = m.apply(at.values());
    for it in 0..spec.max_iter {
        if res <= tol {
            return Ok(Projection { alpha: ScalarField::from_raw(g, a), iterations: it, residual: res });
        }
        // on a fixed active set the optimality system is linear
        let diag: Vec<f64> = act.iter().map(|&s| if s != 0 { 1.0 / spec.eps_alpha } else { 0.0 }).collect();
        let jac = m.add(&SparseOperator::diagonal(&diag)).expect("square");
        let rhs: Vec<f64> = (0..n)
            .map(|k| match act[k] {
                1 => mat[k] + spec.upper.at(k) / spec.eps_alpha,
                -1 => mat[k] + spec.lower.at(k) / spec.eps_alpha,
                _ => mat[k],
            })
            .collect();
        a = Factorization::cholesky(&jac)?.solve(&rhs)?;
        res = norm(&residual(&a, at.values(), &m, spec));
        let next = active(&a);
        if next == act || res <= tol {
            return Ok(Projection { alpha: ScalarField::from_raw(g, a), iterations: it + 1, residual: res });
        }
        if seen.contains(&next) {
            return Err(TgvError::NonConvergence { iterations: it + 1, residual: res, history: vec![res] });
        }
        seen.push(std::mem::replace(&mut act, next));
        if seen.len() > 4 {
            seen.remove(0);
        }
    }
    Err(TgvError::NonConvergence { iterations: spec.max_iter, residual: res, history: vec![res] })
}

/// `max(min(a, upper), lower)`.
pub fn clamp_scalar(a: f64, lower: f64, upper: f64) -> f64 {
    a.min(upper).max(lower)
}
