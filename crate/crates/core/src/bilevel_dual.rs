//! Bilevel weight learning on top of the predual Newton solver.
//!
//! The reduced objective is `J(a0, a1) = F(R(f - div^2 p)) + lambda/2 |a1|_H1^2`
//! with `p` the lower-level solution at the final penalty parameters. All
//! derivatives are plain partials of `J` with respect to the entries of the
//! weights.

use crate::descent::{projected_descent, Evaluated, Free, ReducedProblem, StepRule, WeightBounds};
use crate::error::{param, Result, TgvError};
use crate::field::{ScalarField, SymTensorField};
use crate::history::RunHistory;
use crate::lower_dual::{recover_image, solve_lower_dual_from, DualProblem, DualSolution, DualSolverConfig};
use crate::smoothing::{box_penalty_dxa, Weight};
use crate::upper::{h1_norm_sq_half_derivative, objective_u_derivative, upper_value_dual, CorridorSpec, UpperValue};

#[derive(Clone, Debug, PartialEq)]
pub struct BilevelDualConfig {
    /// H1 penalty on `alpha1`.
    pub lambda: f64,
    pub bounds: WeightBounds,
    pub steps: StepRule,
    pub alpha0_init: f64,
    pub alpha1_init: f64,
    pub lower: DualSolverConfig,
    pub warm_start: WarmStart,
}

/// How lower solves after the first one reuse the previous `p`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WarmStart {
    /// Full path from `p = 0` every time.
    Cold,
    /// Newton at the final penalty parameters only, at most this many steps.
    FinalOnly(usize),
    /// Path restarted at this penalty level.
    Path(f64),
}

impl Default for BilevelDualConfig {
    fn default() -> Self {
        BilevelDualConfig {
            lambda: 1e-11,
            bounds: WeightBounds { alpha0: (1e-7, 1e-2), alpha1: (1e-7, 1e-2), eps_alpha: 1e-10, lap_weight: 1.0 },
            steps: StepRule {
                tau0_init: 1.0,
                tau1_init: 1e4,
                c: 1e-8,
                theta_minus: 0.25,
                theta_plus: 2.0,
                max_outer: 30,
                max_shrinks: 40,
            },
            alpha0_init: 3.125e-6,
            alpha1_init: 9e-4,
            lower: DualSolverConfig::default(),
            warm_start: WarmStart::Cold,
        }
    }
}

impl BilevelDualConfig {
    pub fn validate(&self) -> Result<()> {
        self.steps.validate()?;
        self.bounds.validate()?;
        self.lower.validate()?;
        if !(self.lambda >= 0.0) {
            return param("lambda must be nonnegative");
        }
        let inside = |v: f64, (lo, hi): (f64, f64)| lo <= v && v <= hi;
        if !(inside(self.alpha0_init, self.bounds.alpha0) && inside(self.alpha1_init, self.bounds.alpha1)) {
            return param("initial weights must lie inside their bounds");
        }
        Ok(())
    }
}

fn final_problem<'a>(
    p: &SymTensorField,
    f: &'a ScalarField,
    alpha0: &'a Weight,
    alpha1: &'a ScalarField,
    cfg: &DualSolverConfig,
) -> Result<DualProblem<'a>> {
    if p.grid() != f.grid() {
        return Err(TgvError::GridMismatch("p and f differ in shape".into()));
    }
    Ok(DualProblem::new(f, alpha0, alpha1, cfg, cfg.eps0_final, cfg.eps1_final))
}

/// `-dF/ds` in scaled tensor coordinates: `div2_s^T dF/du`.
pub fn adjoint_rhs_dual(p: &SymTensorField, f: &ScalarField, spec: &CorridorSpec) -> Result<Vec<f64>> {
    let u = recover_image(p, f);
    let du = objective_u_derivative(&u, f, spec)?;
    Ok(crate::operators::dual_ops(f.grid()).div2_s.apply_transpose(du.values()))
}

/// Solves `H z = -dF/ds` with `H` the Newton matrix at `p`. The result is
/// stored as a scaled tensor: its components are the entries of `z` in the
/// coordinates `(p11, 2 p12, p22)`.
pub fn solve_adjoint_dual(
    p: &SymTensorField,
    alpha0: &Weight,
    alpha1: &ScalarField,
    f: &ScalarField,
    cfg: &DualSolverConfig,
    spec: &CorridorSpec,
) -> Result<SymTensorField> {
    let prob = final_problem(p, f, alpha0, alpha1, cfg)?;
    let rhs = adjoint_rhs_dual(p, f, spec)?;
    let g = *f.grid();
    if rhs.iter().all(|v| *v == 0.0) {
        return Ok(SymTensorField::from_slice(g, &rhs, true));
    }
    let s = p.to_scaled().to_vec();
    let h = prob.hessian(&s);
    let z = prob.factor(&h)?.solve(&rhs)?;
    Ok(SymTensorField::from_slice(g, &z, true))
}

/// `(dJ/da0, dJ/da1)` from the lower solution and the adjoint.
pub fn reduced_derivatives_dual(
    p: &SymTensorField,
    adj: &SymTensorField,
    alpha0: f64,
    alpha1: &ScalarField,
    cfg: &BilevelDualConfig,
) -> (f64, ScalarField) {
    let g = *p.grid();
    let n = g.len();
    let lc = &cfg.lower;
    let ops = crate::operators::dual_ops(&g);
    let s = p.to_scaled().to_vec();
    let z = adj.to_scaled().to_vec();
    let sc = [1.0, 0.5, 1.0];
    let d0: f64 = (0..3 * n)
        .map(|k| {
            let c = sc[k / n];
            z[k] * c * box_penalty_dxa(c * s[k], alpha0, lc.delta) / lc.eps0_final
        })
        .sum();
    let ds = ops.div_s.apply(&s);
    let dz = ops.div_s.apply(&z);
    let a1 = alpha1.values();
    let reg = h1_norm_sq_half_derivative(alpha1, cfg.bounds.lap_weight);
    let d1 = (0..n)
        .map(|i| {
            let pen: f64 =
                [i, n + i].iter().map(|&r| dz[r] * box_penalty_dxa(ds[r], a1[i], lc.delta) / lc.eps1_final).sum();
            pen + cfg.lambda * reg.values()[i]
        })
        .collect();
    (d0, ScalarField::from_raw(g, d1))
}

/// `(g0, g1) = (d0, (I - w Lap_N)^{-1} d1)`.
pub fn reduced_gradients_dual(d0: f64, d1: &ScalarField, lap_weight: f64) -> Result<(f64, ScalarField)> {
    Ok((d0, crate::projection::riesz_inverse(d1, lap_weight)?))
}

/// Lower solve plus upper-level value at `(alpha0, alpha1)`.
pub struct DualEvaluation {
    pub solution: DualSolution,
    pub value: UpperValue,
}

/// Reduced objective from a cold path-following solve.
pub fn reduced_objective_dual(
    f: &ScalarField,
    alpha0: f64,
    alpha1: &ScalarField,
    cfg: &BilevelDualConfig,
    spec: &CorridorSpec,
) -> Result<DualEvaluation> {
    let a0 = Weight::Scalar(alpha0);
    let solution = solve_lower_dual_from(f, &a0, alpha1, &cfg.lower, None, false)?;
    let value = upper_value_dual(&solution.p, f, &a0, alpha1, cfg.lambda, cfg.bounds.lap_weight, spec)?;
    Ok(DualEvaluation { solution, value })
}

struct DualReduced<'a> {
    f: &'a ScalarField,
    cfg: &'a BilevelDualConfig,
    spec: &'a CorridorSpec,
}

impl ReducedProblem for DualReduced<'_> {
    type State = SymTensorField;

    fn evaluate(
        &self,
        a0: &Weight,
        a1: &ScalarField,
        warm: Option<&SymTensorField>,
    ) -> Result<Evaluated<SymTensorField>> {
        let lc = &self.cfg.lower;
        let cold = || solve_lower_dual_from(self.f, a0, a1, lc, None, false);
        let sol = match (warm, self.cfg.warm_start) {
            (None, _) | (_, WarmStart::Cold) => cold()?,
            (Some(p), WarmStart::FinalOnly(cap)) => {
                let short = DualSolverConfig { max_newton: cap, ..lc.clone() };
                solve_lower_dual_from(self.f, a0, a1, &short, Some(p), true).or_else(|_| cold())?
            }
            (Some(p), WarmStart::Path(eps)) => {
                let tail = DualSolverConfig {
                    eps0_init: eps.clamp(lc.eps0_final, lc.eps0_init),
                    eps1_init: eps.clamp(lc.eps1_final, lc.eps1_init),
                    ..lc.clone()
                };
                solve_lower_dual_from(self.f, a0, a1, &tail, Some(p), false).or_else(|_| cold())?
            }
        };
        let value = upper_value_dual(&sol.p, self.f, a0, a1, self.cfg.lambda, self.cfg.bounds.lap_weight, self.spec)?;
        Ok(Evaluated { state: sol.p, value, iterations: sol.iterations })
    }

    fn derivatives(&self, p: &SymTensorField, a0: &Weight, a1: &ScalarField) -> Result<(Weight, ScalarField)> {
        let adj = solve_adjoint_dual(p, a0, a1, self.f, &self.cfg.lower, self.spec)?;
        let (d0, d1) = reduced_derivatives_dual(p, &adj, a0.at(0), a1, self.cfg);
        Ok((Weight::Scalar(d0), d1))
    }

    fn image(&self, p: &SymTensorField) -> ScalarField {
        recover_image(p, self.f)
    }
}

#[derive(Clone, Debug)]
pub struct BilevelDualResult {
    pub alpha0: f64,
    pub alpha1: ScalarField,
    pub p: SymTensorField,
    pub u: ScalarField,
    pub history: RunHistory,
}

/// Projected gradient loop over scalar `alpha0` and field `alpha1`.
pub fn run_bilevel_dual(f: &ScalarField, cfg: &BilevelDualConfig, spec: &CorridorSpec) -> Result<BilevelDualResult> {
    run_bilevel_dual_tracked(f, cfg, spec, None)
}

/// [`run_bilevel_dual`] that also records PSNR and SSIM against `truth`.
pub fn run_bilevel_dual_tracked(
    f: &ScalarField,
    cfg: &BilevelDualConfig,
    spec: &CorridorSpec,
    truth: Option<&ScalarField>,
) -> Result<BilevelDualResult> {
    cfg.validate()?;
    let prob = DualReduced { f, cfg, spec };
    let out = projected_descent(
        &prob,
        &cfg.steps,
        &cfg.bounds,
        Free { alpha0: true, alpha1: true },
        Weight::Scalar(cfg.alpha0_init),
        ScalarField::constant(*f.grid(), cfg.alpha1_init),
        truth,
    )?;
    let u = recover_image(&out.state, f);
    Ok(BilevelDualResult { alpha0: out.alpha0.at(0), alpha1: out.alpha1, p: out.state, u, history: out.history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::GridSpec;

    #[test]
    fn zero_adjoint_and_lambda_give_zero_derivatives() {
        let g = GridSpec::dual(6, 6).unwrap();
        let p = SymTensorField::from_slice(g, &(0..108).map(|k| (k % 5) as f64 * 1e-3).collect::<Vec<_>>(), false);
        let cfg = BilevelDualConfig { lambda: 0.0, ..Default::default() };
        let (d0, d1) =
            reduced_derivatives_dual(&p, &SymTensorField::zeros(g), 1e-3, &ScalarField::constant(g, 1e-2), &cfg);
        assert_eq!(d0, 0.0);
        assert_eq!(d1.max_abs(), 0.0);
    }

    #[test]
    fn inactive_penalties_leave_only_regularization() {
        let g = GridSpec::dual(6, 6).unwrap();
        let p = SymTensorField::from_slice(g, &(0..108).map(|k| (k % 3) as f64 * 1e-6).collect::<Vec<_>>(), false);
        let adj = SymTensorField::from_slice(g, &vec![1.0; 108], true);
        let a1 = ScalarField::from_fn(g, |i, j| 1.0 + 0.01 * (i * j) as f64);
        let cfg = BilevelDualConfig { lambda: 0.5, ..Default::default() };
        let (d0, d1) = reduced_derivatives_dual(&p, &adj, 1.0, &a1, &cfg);
        assert_eq!(d0, 0.0);
        let want = h1_norm_sq_half_derivative(&a1, 1.0).scale(0.5);
        assert!(d1.sub(&want).max_abs() < 1e-15);
    }

    #[test]
    fn riesz_of_constant_is_constant() {
        let g = GridSpec::dual(5, 7).unwrap();
        let c = ScalarField::constant(g, 3.5);
        let (g0, g1) = reduced_gradients_dual(2.0, &c, 1.0).unwrap();
        assert_eq!(g0, 2.0);
        assert!(g1.sub(&c).max_abs() < 1e-12);
    }
}
