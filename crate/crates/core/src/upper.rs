//! Localized residuals, the variance corridor and the upper-level objective.

use crate::error::{param, Result, TgvError};
use crate::field::{GridSpec, ScalarField};
use crate::operators::neumann_laplacian;
use crate::smoothing::Weight;

/// Noise variance, window size and the variance corridor derived from them.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorridorSpec {
    pub sigma2: f64,
    pub n_w: usize,
    pub sigma2_lo: f64,
    pub sigma2_hi: f64,
    /// Divide every window sum by `n_w^2` instead of by the in-domain count.
    pub zero_pad: bool,
}

impl CorridorSpec {
    pub fn new(sigma2: f64, n_w: usize) -> Result<Self> {
        if n_w.is_multiple_of(2) {
            return param(format!("filter size must be odd, got {n_w}"));
        }
        let (sigma2_lo, sigma2_hi) = sigma_corridor(sigma2, n_w)?;
        Ok(CorridorSpec { sigma2, n_w, sigma2_lo, sigma2_hi, zero_pad: false })
    }

    pub fn with_zero_pad(mut self, zero_pad: bool) -> Self {
        self.zero_pad = zero_pad;
        self
    }
}

/// `(sigma2 (1 - sqrt2/n_w), sigma2 (1 + sqrt2/n_w))`.
pub fn sigma_corridor(sigma2: f64, n_w: usize) -> Result<(f64, f64)> {
    if !(sigma2 > 0.0) || n_w == 0 {
        return param("sigma2 and n_w must be positive");
    }
    let r = std::f64::consts::SQRT_2 / n_w as f64;
    if r >= 1.0 {
        return param(format!("n_w = {n_w} leaves an empty lower corridor"));
    }
    Ok((sigma2 * (1.0 - r), sigma2 * (1.0 + r)))
}

fn window_weights(g: &GridSpec, n_w: usize, zero_pad: bool) -> Vec<f64> {
    let r = (n_w / 2) as isize;
    let span = |i: usize, len: usize| {
        let lo = (i as isize - r).max(0);
        let hi = (i as isize + r).min(len as isize - 1);
        (hi - lo + 1) as f64
    };
    (0..g.len())
        .map(|k| {
            if zero_pad {
                1.0 / (n_w * n_w) as f64
            } else {
                let (i, j) = (k / g.m, k % g.m);
                1.0 / (span(i, g.n) * span(j, g.m))
            }
        })
        .collect()
}

fn window_sum(g: &GridSpec, v: &[f64], n_w: usize) -> Vec<f64> {
    let r = (n_w / 2) as isize;
    let mut out = vec![0.0; g.len()];
    for i in 0..g.n {
        for j in 0..g.m {
            let mut s = 0.0;
            for di in -r..=r {
                let ii = i as isize + di;
                if ii < 0 || ii >= g.n as isize {
                    continue;
                }
                for dj in -r..=r {
                    let jj = j as isize + dj;
                    if jj < 0 || jj >= g.m as isize {
                        continue;
                    }
                    s += v[ii as usize * g.m + jj as usize];
                }
            }
            out[g.idx(i, j)] = s;
        }
    }
    out
}

/// Mean filter `W v` with the boundary rule of `spec`.
pub fn local_mean(v: &ScalarField, spec: &CorridorSpec) -> ScalarField {
    let g = *v.grid();
    let wts = window_weights(&g, spec.n_w, spec.zero_pad);
    let s = window_sum(&g, v.values(), spec.n_w);
    ScalarField::from_raw(g, s.iter().zip(&wts).map(|(a, b)| a * b).collect())
}

/// Transpose `W^T r` of [`local_mean`].
pub fn local_mean_adjoint(r: &ScalarField, spec: &CorridorSpec) -> ScalarField {
    let g = *r.grid();
    let wts = window_weights(&g, spec.n_w, spec.zero_pad);
    let scaled: Vec<f64> = r.values().iter().zip(&wts).map(|(a, b)| a * b).collect();
    ScalarField::from_raw(g, window_sum(&g, &scaled, spec.n_w))
}

/// `R(u) = W (u - f)^2`.
pub fn localized_residual(u: &ScalarField, f: &ScalarField, spec: &CorridorSpec) -> Result<ScalarField> {
    if u.grid() != f.grid() {
        return Err(TgvError::GridMismatch("u and f differ in shape".into()));
    }
    Ok(local_mean(&u.zip_map(f, |a, b| (a - b) * (a - b)), spec))
}

/// `1/2 |(v - hi)^+|^2 + 1/2 |(lo - v)^+|^2` in the `h^2`-weighted norm.
pub fn objective_f(v: &ScalarField, spec: &CorridorSpec) -> f64 {
    let s: f64 = v
        .values()
        .iter()
        .map(|&x| {
            let a = (x - spec.sigma2_hi).max(0.0);
            let b = (spec.sigma2_lo - x).max(0.0);
            0.5 * (a * a + b * b)
        })
        .sum();
    v.grid().cell() * s
}

/// `(v - hi)^+ - (lo - v)^+`; the derivative of [`objective_f`] is `h^2` times this.
pub fn corridor_excess(v: &ScalarField, spec: &CorridorSpec) -> ScalarField {
    v.map(|x| (x - spec.sigma2_hi).max(0.0) - (spec.sigma2_lo - x).max(0.0))
}

/// Derivative of `F(R(u))` with respect to `u`, as a plain (unweighted) partial.
pub fn objective_u_derivative(u: &ScalarField, f: &ScalarField, spec: &CorridorSpec) -> Result<ScalarField> {
    let r = localized_residual(u, f, spec)?;
    let rho = corridor_excess(&r, spec).scale(u.grid().cell());
    let wt = local_mean_adjoint(&rho, spec);
    Ok(ScalarField::from_raw(
        *u.grid(),
        (0..u.grid().len()).map(|k| 2.0 * (u.values()[k] - f.values()[k]) * wt.values()[k]).collect(),
    ))
}

/// `h^2 a^T (I - w Lap_N) a`, the squared discrete H1 norm.
pub fn h1_norm_sq(a: &ScalarField, lap_weight: f64) -> f64 {
    let la = neumann_laplacian(a.grid()).apply(a.values());
    let s: f64 = a.values().iter().zip(&la).map(|(x, l)| x * (x - lap_weight * l)).sum();
    a.grid().cell() * s
}

/// Plain derivative of `1/2 h1_norm_sq`: `h^2 (I - w Lap_N) a`.
pub fn h1_norm_sq_half_derivative(a: &ScalarField, lap_weight: f64) -> ScalarField {
    let la = neumann_laplacian(a.grid()).apply(a.values());
    let h2 = a.grid().cell();
    ScalarField::from_raw(*a.grid(), a.values().iter().zip(&la).map(|(x, l)| h2 * (x - lap_weight * l)).collect())
}

/// Value of an upper-level objective split into its parts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpperValue {
    pub total: f64,
    pub f_part: f64,
    pub reg_part: f64,
}

/// Dual formulation: `F(R(u))` with `u = f - div^2 p`, plus `lambda/2 |alpha1|_H1^2`
/// and, for a spatial `alpha0`, the same term for `alpha0`.
pub fn upper_value_dual(
    p: &crate::field::SymTensorField,
    f: &ScalarField,
    alpha0: &Weight,
    alpha1: &ScalarField,
    lambda: f64,
    lap_weight: f64,
    spec: &CorridorSpec,
) -> Result<UpperValue> {
    let u = crate::lower_dual::recover_image(p, f);
    let mut v = upper_value_pd(&u, f, &Weight::Scalar(1.0), alpha1, 0.0, lambda, lap_weight, spec)?;
    if let Weight::Field(a0) = alpha0 {
        let extra = 0.5 * lambda * h1_norm_sq(a0, lap_weight);
        v.reg_part += extra;
        v.total += extra;
    }
    Ok(v)
}

/// Primal-dual formulation: `F(R(u)) + lambda0/2 |alpha0|_H1^2 + lambda1/2 |alpha1|_H1^2`,
/// the `alpha0` term only when it is a field.
#[allow(clippy::too_many_arguments)]
pub fn upper_value_pd(
    u: &ScalarField,
    f: &ScalarField,
    alpha0: &Weight,
    alpha1: &ScalarField,
    lambda0: f64,
    lambda1: f64,
    lap_weight: f64,
    spec: &CorridorSpec,
) -> Result<UpperValue> {
    let f_part = objective_f(&localized_residual(u, f, spec)?, spec);
    let mut reg_part = 0.5 * lambda1 * h1_norm_sq(alpha1, lap_weight);
    if let Weight::Field(a0) = alpha0 {
        reg_part += 0.5 * lambda0 * h1_norm_sq(a0, lap_weight);
    }
    Ok(UpperValue { total: f_part + reg_part, f_part, reg_part })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rnd(g: GridSpec, seed: u64) -> ScalarField {
        let mut s = seed;
        ScalarField::from_fn(g, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        })
    }

    #[test]
    fn corridor_values() {
        let (lo, hi) = sigma_corridor(0.01, 7).unwrap();
        assert_eq!((lo * 1e5).round() / 1e5, 0.00798);
        assert_eq!((hi * 1e5).round() / 1e5, 0.01202);
        assert!(sigma_corridor(0.01, 1).is_err());
    }

    #[test]
    fn filter_size_one_is_pointwise() {
        let g = GridSpec::primal_dual(6, 5).unwrap();
        let (u, f) = (rnd(g, 1), rnd(g, 2));
        let spec = CorridorSpec { sigma2: 0.01, n_w: 1, sigma2_lo: 0.005, sigma2_hi: 0.015, zero_pad: false };
        let r = localized_residual(&u, &f, &spec).unwrap();
        for k in 0..g.len() {
            let d = u.values()[k] - f.values()[k];
            assert!((r.values()[k] - d * d).abs() < 1e-15);
        }
    }

    #[test]
    fn adjoint_is_transpose() {
        let g = GridSpec::primal_dual(9, 7).unwrap();
        for zp in [false, true] {
            let spec = CorridorSpec::new(0.01, 5).unwrap().with_zero_pad(zp);
            let (a, b) = (rnd(g, 3), rnd(g, 4));
            let lhs: f64 = local_mean(&a, &spec).values().iter().zip(b.values()).map(|(x, y)| x * y).sum();
            let rhs: f64 = a.values().iter().zip(local_mean_adjoint(&b, &spec).values()).map(|(x, y)| x * y).sum();
            assert!((lhs - rhs).abs() < 1e-12 * lhs.abs());
        }
    }

    #[test]
    fn uniform_excess() {
        let g = GridSpec::dual(8, 8).unwrap();
        let spec = CorridorSpec::new(0.01, 7).unwrap();
        let t = 0.003;
        let v = ScalarField::constant(g, spec.sigma2_hi + t);
        let want = 0.5 * g.cell() * 64.0 * t * t;
        assert!((objective_f(&v, &spec) - want).abs() < 1e-15);
        let inside = ScalarField::constant(g, 0.01);
        assert_eq!(objective_f(&inside, &spec), 0.0);
    }

    #[test]
    fn u_derivative_matches_differences() {
        let g = GridSpec::primal_dual(8, 8).unwrap();
        let spec = CorridorSpec::new(0.01, 3).unwrap();
        let f = rnd(g, 5);
        let u = f.zip_map(&rnd(g, 6), |a, b| a + 0.3 * (b - 0.5));
        let d = objective_u_derivative(&u, &f, &spec).unwrap();
        let e = 1e-7;
        for k in [0, 9, 27, 63] {
            let mut up = u.clone();
            up.values_mut()[k] += e;
            let mut um = u.clone();
            um.values_mut()[k] -= e;
            let fd = (objective_f(&localized_residual(&up, &f, &spec).unwrap(), &spec)
                - objective_f(&localized_residual(&um, &f, &spec).unwrap(), &spec))
                / (2.0 * e);
            assert!((fd - d.values()[k]).abs() < 1e-7 * (1.0 + fd.abs()), "{fd} vs {}", d.values()[k]);
        }
    }
}
