//! Newton solver for the regularized predual TGV problem.
//!
//! The unknown is stored in scaled form `s = (p11, 2 p12, p22)`, which makes
//! every linear system symmetric. The residual returned to callers is the
//! Frobenius gradient of the energy (divided by the pixel measure `h^2`),
//! which coincides numerically with the gradient in `s`.

use std::sync::Arc;

use crate::error::{param, Result, TgvError};
use crate::field::{dot, GridSpec, ScalarField, SymTensorField};
use crate::operators::{dual_ops, DualOps};
use crate::smoothing::{box_penalty, box_penalty_dx, box_penalty_dxx, Weight};
use crate::sparse::{Factorization, SparseOperator};

#[derive(Clone, Debug, PartialEq)]
pub struct DualSolverConfig {
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub eps0_init: f64,
    pub eps1_init: f64,
    pub eps0_final: f64,
    pub eps1_final: f64,
    pub theta_eps: f64,
    /// Tolerance on the discrete `l2` norm of the residual at the final stage.
    pub newton_tol: f64,
    /// Tolerance of the first stage; later stages interpolate geometrically.
    pub stage_tol_start: f64,
    /// Newton iteration cap per stage.
    pub max_newton: usize,
    /// Damping: the full step is kept when it lowers the residual norm,
    /// otherwise the step length minimizes the energy along the direction.
    /// With it off every step is a plain Newton step.
    pub line_search: bool,
}

impl Default for DualSolverConfig {
    fn default() -> Self {
        DualSolverConfig {
            beta: 1e-3,
            gamma: 0.0,
            delta: 1e-6,
            eps0_init: 1e3,
            eps1_init: 1e3,
            eps0_final: 1e-12,
            eps1_final: 1e-12,
            theta_eps: 0.05,
            newton_tol: 1e-6,
            stage_tol_start: 1e-2,
            max_newton: 1000,
            line_search: true,
        }
    }
}

impl DualSolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return param("beta must be positive");
        }
        if !(self.gamma >= 0.0) {
            return param("gamma must be nonnegative");
        }
        if !(self.delta > 0.0) {
            return param("delta must be positive");
        }
        if !(self.theta_eps > 0.0 && self.theta_eps < 1.0) {
            return param("theta_eps must lie in (0, 1)");
        }
        if !(self.eps0_final > 0.0 && self.eps1_final > 0.0) {
            return param("final penalty parameters must be positive");
        }
        if self.eps0_final > self.eps0_init || self.eps1_final > self.eps1_init {
            return param("final penalty parameters must not exceed the initial ones");
        }
        if !(self.newton_tol > 0.0) || self.max_newton == 0 {
            return param("newton tolerance and iteration cap must be positive");
        }
        Ok(())
    }

    /// The `(eps0, eps1)` path, ending at the final values.
    pub fn eps_schedule(&self) -> Vec<(f64, f64)> {
        let (mut e0, mut e1) = (self.eps0_init, self.eps1_init);
        let mut out = vec![(e0, e1)];
        while e0 > self.eps0_final || e1 > self.eps1_final {
            e0 = (self.theta_eps * e0).max(self.eps0_final);
            e1 = (self.theta_eps * e1).max(self.eps1_final);
            out.push((e0, e1));
        }
        out
    }
}

/// One instance of the penalized predual energy at fixed `(eps0, eps1)`.
pub struct DualProblem<'a> {
    pub ops: Arc<DualOps>,
    pub f: &'a ScalarField,
    pub alpha0: &'a Weight,
    pub alpha1: &'a ScalarField,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub eps0: f64,
    pub eps1: f64,
}

/// Chain-rule factor `dp_c/ds_c` for each component.
const S_DIAG: [f64; 3] = [1.0, 0.5, 1.0];

impl<'a> DualProblem<'a> {
    pub fn new(
        f: &'a ScalarField,
        alpha0: &'a Weight,
        alpha1: &'a ScalarField,
        cfg: &DualSolverConfig,
        eps0: f64,
        eps1: f64,
    ) -> Self {
        DualProblem {
            ops: dual_ops(f.grid()),
            f,
            alpha0,
            alpha1,
            beta: cfg.beta,
            gamma: cfg.gamma,
            delta: cfg.delta,
            eps0,
            eps1,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.ops.grid
    }

    fn n(&self) -> usize {
        self.ops.grid.len()
    }

    /// Energy of the scaled vector `s`.
    pub fn energy(&self, s: &[f64]) -> f64 {
        let n = self.n();
        let bs = self.ops.bilap_s.apply(s);
        let mut e = 0.5 * self.beta * dot(s, &bs);
        if self.gamma > 0.0 {
            let w: f64 = (0..3 * n).map(|k| S_DIAG[k / n] * s[k] * s[k]).sum();
            e += 0.5 * self.gamma * w;
        }
        let ks = self.ops.div2_s.apply(s);
        e += 0.5 * self.f.values().iter().zip(&ks).map(|(f, k)| (f - k).powi(2)).sum::<f64>();
        let mut pen0 = 0.0;
        for k in 0..3 * n {
            pen0 += box_penalty(S_DIAG[k / n] * s[k], self.alpha0.at(k % n), self.delta);
        }
        let d = self.ops.div_s.apply(s);
        let a1 = self.alpha1.values();
        let pen1: f64 = (0..2 * n).map(|k| box_penalty(d[k], a1[k % n], self.delta)).sum();
        self.grid().cell() * (e + pen0 / self.eps0 + pen1 / self.eps1)
    }

    /// Gradient of `energy / h^2` with respect to `s`.
    pub fn gradient(&self, s: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut g = self.ops.bilap_s.apply(s);
        g.iter_mut().for_each(|v| *v *= self.beta);
        let ks = self.ops.div2_s.apply(s);
        let r: Vec<f64> = ks.iter().zip(self.f.values()).map(|(k, f)| k - f).collect();
        let kt = self.ops.div2_s.apply_transpose(&r);
        for k in 0..3 * n {
            let sc = S_DIAG[k / n];
            g[k] += self.gamma * sc * s[k] + kt[k];
            g[k] += sc * box_penalty_dx(sc * s[k], self.alpha0.at(k % n), self.delta) / self.eps0;
        }
        let d = self.ops.div_s.apply(s);
        let a1 = self.alpha1.values();
        let pd: Vec<f64> = (0..2 * n).map(|k| box_penalty_dx(d[k], a1[k % n], self.delta) / self.eps1).collect();
        let dt = self.ops.div_s.apply_transpose(&pd);
        for k in 0..3 * n {
            g[k] += dt[k];
        }
        g
    }

    /// Hessian of `energy / h^2` in `s`. Symmetric positive definite.
    pub fn hessian(&self, s: &[f64]) -> SparseOperator {
        let n = self.n();
        let mut diag = vec![0.0; 3 * n];
        for k in 0..3 * n {
            let sc = S_DIAG[k / n];
            diag[k] =
                self.gamma * sc + sc * sc * box_penalty_dxx(sc * s[k], self.alpha0.at(k % n), self.delta) / self.eps0;
        }
        let d = self.ops.div_s.apply(s);
        let a1 = self.alpha1.values();
        let curv: Vec<f64> = (0..2 * n).map(|k| box_penalty_dxx(d[k], a1[k % n], self.delta) / self.eps1).collect();
        let lay = &self.ops.hessian;
        let mut h = lay.pattern.clone();
        let v = h.values_mut();
        for (&p, &b) in lay.bilap_pos.iter().zip(self.ops.bilap_s.values()) {
            v[p] += self.beta * b;
        }
        for (&p, &b) in lay.ktk_pos.iter().zip(self.ops.k_t_k.values()) {
            v[p] += b;
        }
        for (&p, &d) in lay.diag_pos.iter().zip(&diag) {
            v[p] += d;
        }
        for (r, &c) in curv.iter().enumerate() {
            if c != 0.0 {
                for &(p, w) in &lay.pen[lay.pen_ptr[r]..lay.pen_ptr[r + 1]] {
                    v[p] += c * w;
                }
            }
        }
        h
    }

    /// Residual norm `sqrt(h^2 <g, g>_F)` of a gradient in scaled coordinates.
    pub fn residual_norm(&self, g: &[f64]) -> f64 {
        let n = self.n();
        let fro: f64 = (0..3 * n).map(|k| if k / n == 1 { 2.0 } else { 1.0 } * g[k] * g[k]).sum();
        (self.grid().cell() * fro).sqrt()
    }

    /// Newton direction in `s`.
    pub fn newton_direction(&self, s: &[f64]) -> Result<Vec<f64>> {
        let g = self.gradient(s);
        let h = self.hessian(s);
        let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
        self.factor(&h)?.solve(&rhs)
    }

    /// Factorizes a matrix returned by [`DualProblem::hessian`].
    pub fn factor(&self, h: &SparseOperator) -> Result<Factorization> {
        self.ops.hessian.plan.factor(h)
    }
}

fn check_inputs(f: &ScalarField, alpha0: &Weight, alpha1: &ScalarField) -> Result<()> {
    if f.grid() != alpha1.grid() {
        return Err(TgvError::GridMismatch("f and alpha1 live on different grids".into()));
    }
    if let Weight::Field(a) = alpha0 {
        if a.grid() != f.grid() {
            return Err(TgvError::GridMismatch("alpha0 field on a different grid".into()));
        }
    }
    if !(alpha0.min() > 0.0 && alpha1.min() > 0.0) {
        return param("weights must be positive");
    }
    Ok(())
}

fn scaled_vec(p: &SymTensorField) -> Vec<f64> {
    p.to_scaled().to_vec()
}

fn unscaled_field(g: GridSpec, s: &[f64]) -> SymTensorField {
    SymTensorField::from_slice(g, s, true).to_unscaled()
}

/// Predual energy at the final penalty parameters of `cfg`.
pub fn dual_energy(
    p: &SymTensorField,
    f: &ScalarField,
    alpha0: &Weight,
    alpha1: &ScalarField,
    cfg: &DualSolverConfig,
) -> f64 {
    DualProblem::new(f, alpha0, alpha1, cfg, cfg.eps0_final, cfg.eps1_final).energy(&scaled_vec(p))
}

/// Frobenius gradient of [`dual_energy`] divided by `h^2`.
pub fn dual_residual(
    p: &SymTensorField,
    f: &ScalarField,
    alpha0: &Weight,
    alpha1: &ScalarField,
    cfg: &DualSolverConfig,
) -> SymTensorField {
    let prob = DualProblem::new(f, alpha0, alpha1, cfg, cfg.eps0_final, cfg.eps1_final);
    let g = prob.gradient(&scaled_vec(p));
    SymTensorField::from_slice(*f.grid(), &g, false)
}

/// One Newton correction `dp` at the final penalty parameters.
pub fn dual_newton_step(
    p: &SymTensorField,
    f: &ScalarField,
    alpha0: &Weight,
    alpha1: &ScalarField,
    cfg: &DualSolverConfig,
) -> Result<SymTensorField> {
    let prob = DualProblem::new(f, alpha0, alpha1, cfg, cfg.eps0_final, cfg.eps1_final);
    let ds = prob.newton_direction(&scaled_vec(p))?;
    Ok(unscaled_field(*f.grid(), &ds))
}

/// `u = f - div^2 p`.
pub fn recover_image(p: &SymTensorField, f: &ScalarField) -> ScalarField {
    let ops = dual_ops(f.grid());
    let k = ops.div2_s.apply(&scaled_vec(p));
    ScalarField::from_raw(*f.grid(), f.values().iter().zip(&k).map(|(a, b)| a - b).collect())
}

/// Largest box violation `max(|p_c| - alpha0, |div p|_k - alpha1)^+`.
pub fn box_violation(p: &SymTensorField, alpha0: &Weight, alpha1: &ScalarField) -> (f64, f64) {
    let g = *p.grid();
    let n = g.len();
    let s = scaled_vec(p);
    let pu = p.to_unscaled();
    let mut v0: f64 = 0.0;
    for c in &pu.c {
        for (k, &x) in c.values().iter().enumerate() {
            v0 = v0.max(x.abs() - alpha0.at(k));
        }
    }
    let d = dual_ops(&g).div_s.apply(&s);
    let a1 = alpha1.values();
    let v1 = (0..2 * n).fold(0.0f64, |a, k| a.max(d[k].abs() - a1[k % n]));
    (v0.max(0.0), v1.max(0.0))
}

#[derive(Clone, Debug)]
pub struct DualSolution {
    /// Unscaled tensor.
    pub p: SymTensorField,
    pub iterations: usize,
    pub stage_iterations: Vec<usize>,
    /// Residual norm after every Newton step (all stages).
    pub residual_history: Vec<f64>,
    /// Residual norms of the final stage only, starting with the initial one.
    pub final_stage_history: Vec<f64>,
    /// Box violation `(p part, div p part)` at the end of each stage.
    pub stage_violation: Vec<(f64, f64)>,
    pub residual: f64,
}

impl DualSolution {
    pub fn image(&self, f: &ScalarField) -> ScalarField {
        recover_image(&self.p, f)
    }
}

/// Runs Newton on one stage. Returns the iteration count and residual trace.
fn newton_stage(
    prob: &DualProblem<'_>,
    s: &mut Vec<f64>,
    tol: f64,
    max_newton: usize,
    line_search: bool,
) -> Result<(usize, Vec<f64>)> {
    let mut g = prob.gradient(s);
    let mut res = prob.residual_norm(&g);
    let mut trace = vec![res];
    let mut it = 0;
    while res > tol {
        if it >= max_newton {
            return Err(TgvError::NonConvergence { iterations: it, residual: res, history: trace });
        }
        let h = prob.hessian(s);
        let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
        let ds = prob.factor(&h)?.solve(&rhs)?;
        let mut trial: Vec<f64> = s.iter().zip(&ds).map(|(a, b)| a + b).collect();
        let mut g_trial = prob.gradient(&trial);
        if line_search {
            // convex energy: phi'(t) = <g(s + t ds), ds> is nondecreasing
            let slope = |gv: &[f64]| gv.iter().zip(&ds).map(|(a, b)| a * b).sum::<f64>();
            let d0 = slope(&g);
            let mut d1 = slope(&g_trial);
            let full_ok = prob.residual_norm(&g_trial) <= (1.0 - 1e-4) * res;
            if !full_ok && d0 < 0.0 && d1 > 0.0 {
                let (mut lo, mut hi, mut dlo, mut dhi) = (0.0f64, 1.0f64, d0, d1);
                for _ in 0..40 {
                    let mut tt = lo - dlo * (hi - lo) / (dhi - dlo);
                    if !(tt > lo + 1e-3 * (hi - lo) && tt < hi - 1e-3 * (hi - lo)) {
                        tt = 0.5 * (lo + hi);
                    }
                    trial = s.iter().zip(&ds).map(|(a, b)| a + tt * b).collect();
                    g_trial = prob.gradient(&trial);
                    d1 = slope(&g_trial);
                    if d1.abs() <= 0.1 * d0.abs() {
                        break;
                    }
                    if d1 < 0.0 {
                        lo = tt;
                        dlo = d1;
                    } else {
                        hi = tt;
                        dhi = d1;
                    }
                }
            }
        }
        let r_trial = prob.residual_norm(&g_trial);
        *s = trial;
        g = g_trial;
        res = r_trial;
        trace.push(res);
        it += 1;
    }
    Ok((it, trace))
}

/// Path-following solve from `p = 0`.
pub fn solve_lower_dual(
    f: &ScalarField,
    alpha0: &Weight,
    alpha1: &ScalarField,
    cfg: &DualSolverConfig,
) -> Result<DualSolution> {
    solve_lower_dual_from(f, alpha0, alpha1, cfg, None, false)
}

/// Path-following solve with an optional warm start. With `final_only` the
/// path is skipped and Newton runs directly at the final penalty parameters.
pub fn solve_lower_dual_from(
    f: &ScalarField,
    alpha0: &Weight,
    alpha1: &ScalarField,
    cfg: &DualSolverConfig,
    init: Option<&SymTensorField>,
    final_only: bool,
) -> Result<DualSolution> {
    cfg.validate()?;
    check_inputs(f, alpha0, alpha1)?;
    let g = *f.grid();
    let mut s = match init {
        Some(p) => {
            if p.grid() != &g {
                return Err(TgvError::GridMismatch("warm start on a different grid".into()));
            }
            scaled_vec(p)
        }
        None => vec![0.0; 3 * g.len()],
    };
    let mut schedule = cfg.eps_schedule();
    if final_only {
        schedule = vec![*schedule.last().expect("nonempty schedule")];
    }
    let stages = schedule.len();
    let mut out = DualSolution {
        p: SymTensorField::zeros(g),
        iterations: 0,
        stage_iterations: Vec::with_capacity(stages),
        residual_history: Vec::new(),
        final_stage_history: Vec::new(),
        stage_violation: Vec::with_capacity(stages),
        residual: f64::INFINITY,
    };
    for (l, &(e0, e1)) in schedule.iter().enumerate() {
        let tol = if stages == 1 {
            cfg.newton_tol
        } else {
            let r = l as f64 / (stages - 1) as f64;
            cfg.stage_tol_start.max(cfg.newton_tol).powf(1.0 - r) * cfg.newton_tol.powf(r)
        };
        let prob = DualProblem::new(f, alpha0, alpha1, cfg, e0, e1);
        let (it, trace) = newton_stage(&prob, &mut s, tol, cfg.max_newton, cfg.line_search).map_err(|e| match e {
            TgvError::NonConvergence { iterations, residual, history } => {
                let mut h = out.residual_history.clone();
                h.extend(history);
                TgvError::NonConvergence { iterations: out.iterations + iterations, residual, history: h }
            }
            other => other,
        })?;
        out.iterations += it;
        out.stage_iterations.push(it);
        out.residual_history.extend_from_slice(&trace[1..]);
        out.residual = *trace.last().expect("nonempty trace");
        if l + 1 == stages {
            out.final_stage_history = trace;
        }
        let p = unscaled_field(g, &s);
        out.stage_violation.push(box_violation(&p, alpha0, alpha1));
    }
    out.p = unscaled_field(g, &s);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (ScalarField, Weight, ScalarField, DualSolverConfig) {
        let g = GridSpec::dual(8, 8).unwrap();
        let f = ScalarField::from_fn(g, |i, j| ((i * 3 + j * 5) % 7) as f64 / 7.0);
        let cfg = DualSolverConfig { eps0_final: 1e-2, eps1_final: 1e-2, ..Default::default() };
        (f, Weight::Scalar(2e-3), ScalarField::constant(g, 2e-2), cfg)
    }

    #[test]
    fn schedule_ends_at_final() {
        let s = DualSolverConfig::default().eps_schedule();
        assert_eq!(s[0], (1e3, 1e3));
        assert_eq!(*s.last().unwrap(), (1e-12, 1e-12));
        assert_eq!(s.len(), 13);
    }

    #[test]
    fn zero_data_zero_residual() {
        let (f, a0, a1, cfg) = setup();
        let z = ScalarField::zeros(*f.grid());
        let p = SymTensorField::zeros(*f.grid());
        assert_eq!(dual_residual(&p, &z, &a0, &a1, &cfg).max_abs(), 0.0);
        assert!((dual_energy(&p, &f, &a0, &a1, &cfg) - 0.5 * f.dot(&f)).abs() < 1e-15);
    }

    #[test]
    fn hessian_is_symmetric() {
        let (f, a0, a1, cfg) = setup();
        let prob = DualProblem::new(&f, &a0, &a1, &cfg, 1e-2, 1e-2);
        let s: Vec<f64> = (0..192).map(|k| ((k * 37 % 11) as f64 - 5.0) * 1e-3).collect();
        assert!(prob.hessian(&s).is_symmetric());
    }

    #[test]
    fn recover_image_identity_and_linearity() {
        let (f, ..) = setup();
        let g = *f.grid();
        let p = SymTensorField::zeros(g);
        assert_eq!(recover_image(&p, &f), f);
        let p2 = SymTensorField::from_slice(g, &(0..192).map(|k| k as f64 * 1e-4).collect::<Vec<_>>(), false);
        let d = recover_image(&p2, &f).sub(&f);
        let k = crate::operators::second_divergence(&g, false).apply(&p2.to_vec());
        for (a, b) in d.values().iter().zip(&k) {
            assert!((a + b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let (f, a0, a1, _) = setup();
        let z = ScalarField::zeros(*f.grid());
        let sol = solve_lower_dual(&z, &a0, &a1, &DualSolverConfig::default()).unwrap();
        assert_eq!(sol.p.max_abs(), 0.0);
        assert_eq!(sol.iterations, 0);
    }
}
