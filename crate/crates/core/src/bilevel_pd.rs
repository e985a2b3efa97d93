//! Bilevel weight learning on top of the primal-dual Newton solver.
//!
//! The reduced objective is
//! `J = F(R(u)) + lambda1/2 |a1|_H1^2 (+ lambda0/2 |a0|_H1^2 for a field a0)`
//! with the H1 norm built from `I - w Lap_N`.

use crate::descent::{projected_descent, Evaluated, Free, ReducedProblem, StepRule, WeightBounds};
use crate::error::{param, Result, TgvError};
use crate::field::{ScalarField, VectorField};
use crate::history::RunHistory;
use crate::lower_pd::{assemble_kkt_blocks, pd_newton_solve, KktState, PdSolverConfig};
use crate::operators::primal_ops;
use crate::smoothing::Weight;
use crate::sparse::Factorization;
use crate::upper::{h1_norm_sq_half_derivative, objective_u_derivative, upper_value_pd, CorridorSpec, UpperValue};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Alpha0Mode {
    #[default]
    Scalar,
    Spatial,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BilevelPdConfig {
    /// H1 penalty on a spatial `alpha0`; ignored in scalar mode.
    pub lambda0: f64,
    pub lambda1: f64,
    pub bounds: WeightBounds,
    pub steps: StepRule,
    pub alpha0_mode: Alpha0Mode,
    pub alpha0_init: f64,
    pub alpha1_init: f64,
    /// Keeps `alpha1` at this field and optimizes `alpha0` only.
    pub fixed_alpha1: Option<ScalarField>,
    pub lower: PdSolverConfig,
}

impl Default for BilevelPdConfig {
    fn default() -> Self {
        BilevelPdConfig {
            lambda0: 1e-11,
            lambda1: 1e-11,
            bounds: WeightBounds { alpha0: (1e-2, 10.0), alpha1: (1e-4, 10.0), eps_alpha: 1e-6, lap_weight: 6e4 },
            steps: StepRule {
                tau0_init: 0.05,
                tau1_init: 100.0,
                c: 1e-9,
                theta_minus: 0.25,
                theta_plus: 2.0,
                max_outer: 40,
                max_shrinks: 40,
            },
            alpha0_mode: Alpha0Mode::Scalar,
            alpha0_init: 0.2,
            alpha1_init: 0.25,
            fixed_alpha1: None,
            lower: PdSolverConfig::default(),
        }
    }
}

impl BilevelPdConfig {
    /// Second-stage protocol: `alpha1` frozen at a previous result, spatial
    /// `alpha0` started from a constant.
    pub fn spatial_alpha0(alpha1: ScalarField, alpha0_init: f64) -> Self {
        BilevelPdConfig {
            alpha0_mode: Alpha0Mode::Spatial,
            alpha0_init,
            fixed_alpha1: Some(alpha1),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.steps.validate()?;
        self.bounds.validate()?;
        self.lower.validate()?;
        if !(self.lambda0 >= 0.0 && self.lambda1 >= 0.0) {
            return param("lambda0 and lambda1 must be nonnegative");
        }
        let inside = |v: f64, (lo, hi): (f64, f64)| lo <= v && v <= hi;
        if !inside(self.alpha0_init, self.bounds.alpha0) {
            return param("alpha0_init must lie inside its bounds");
        }
        if self.fixed_alpha1.is_none() && !inside(self.alpha1_init, self.bounds.alpha1) {
            return param("alpha1_init must lie inside its bounds");
        }
        Ok(())
    }

    fn lambda0_effective(&self) -> f64 {
        match self.alpha0_mode {
            Alpha0Mode::Scalar => 0.0,
            Alpha0Mode::Spatial => self.lambda0,
        }
    }
}

/// Solves the transposed Newton system `J^T x* = (-dF/du, 0, 0, 0)` at a
/// lower-level solution by Schur elimination:
/// `(A^T - C^T D^{-1} B^T) x1* = b1*`, then `x2* = -D^{-1} B^T x1*`.
pub fn solve_adjoint_pd(
    x: &KktState,
    f: &ScalarField,
    alpha0: &Weight,
    alpha1: &ScalarField,
    cfg: &PdSolverConfig,
    spec: &CorridorSpec,
) -> Result<KktState> {
    let g = *f.grid();
    let n = g.len();
    let du = objective_u_derivative(&x.u, f, spec)?;
    let mut b1 = vec![0.0; 3 * n];
    for (b, d) in b1.iter_mut().zip(du.values()) {
        *b = -d;
    }
    if b1.iter().all(|v| *v == 0.0) {
        return Ok(KktState::from_parts(g, &b1, &vec![0.0; 5 * n]));
    }
    let bl = assemble_kkt_blocks(x, f, alpha0, alpha1, cfg)?;
    let y1 = Factorization::lu(&bl.schur())?.solve_transpose(&b1)?;
    let bty = bl.b.apply_transpose(&y1);
    let y2: Vec<f64> = bty.iter().zip(&bl.d).map(|(v, d)| -v / d).collect();
    Ok(KktState::from_parts(g, &y1, &y2))
}

/// Per-pixel derivative fields `(dJ/da0, dJ/da1)` without any aggregation:
/// `-sum_c p*_c (E w)_c + lambda0 h^2 (I - w Lap) a0` and
/// `-sum_c q*_c (grad u - w)_c + lambda1 h^2 (I - w Lap) a1`. The `lambda0`
/// term is added only for a field `alpha0`.
pub fn reduced_derivative_fields_pd(
    x: &KktState,
    adj: &KktState,
    alpha0: &Weight,
    alpha1: &ScalarField,
    cfg: &BilevelPdConfig,
) -> (ScalarField, ScalarField) {
    let g = *x.grid();
    let n = g.len();
    let ops = primal_ops(&g);
    let mut v = ops.grad.apply(x.u.values());
    let w = x.w.to_vec();
    for k in 0..2 * n {
        v[k] -= w[k];
    }
    let z = ops.sym.apply(&w);
    let qs = adj.q.to_vec();
    let ps = adj.p.to_unscaled().to_vec();
    let reg1 = h1_norm_sq_half_derivative(alpha1, cfg.bounds.lap_weight);
    let d1 = (0..n).map(|i| -(qs[i] * v[i] + qs[n + i] * v[n + i]) + cfg.lambda1 * reg1.values()[i]).collect();
    let mut d0: Vec<f64> = (0..n).map(|i| -(0..3).map(|c| ps[c * n + i] * z[c * n + i]).sum::<f64>()).collect();
    if let Weight::Field(a0) = alpha0 {
        let reg0 = h1_norm_sq_half_derivative(a0, cfg.bounds.lap_weight);
        for (d, r) in d0.iter_mut().zip(reg0.values()) {
            *d += cfg.lambda0_effective() * r;
        }
    }
    (ScalarField::from_raw(g, d0), ScalarField::from_raw(g, d1))
}

/// `(dJ/da0, dJ/da1)`; a scalar `alpha0` gets the pixel sum of its field.
pub fn reduced_derivatives_pd(
    x: &KktState,
    adj: &KktState,
    alpha0: &Weight,
    alpha1: &ScalarField,
    cfg: &BilevelPdConfig,
) -> (Weight, ScalarField) {
    let (d0, d1) = reduced_derivative_fields_pd(x, adj, alpha0, alpha1, cfg);
    let d0 = match alpha0 {
        Weight::Scalar(_) => Weight::Scalar(d0.sum()),
        Weight::Field(_) => Weight::Field(d0),
    };
    (d0, d1)
}

/// Lower solve plus upper-level value.
pub struct PdEvaluation {
    pub state: KktState,
    pub iterations: usize,
    pub value: UpperValue,
}

/// Reduced objective from a cold start.
pub fn reduced_objective_pd(
    f: &ScalarField,
    alpha0: &Weight,
    alpha1: &ScalarField,
    cfg: &BilevelPdConfig,
    spec: &CorridorSpec,
) -> Result<PdEvaluation> {
    let sol = pd_newton_solve(f, alpha0, alpha1, &cfg.lower, None)?;
    let value = upper_value_pd(
        &sol.state.u,
        f,
        alpha0,
        alpha1,
        cfg.lambda0_effective(),
        cfg.lambda1,
        cfg.bounds.lap_weight,
        spec,
    )?;
    Ok(PdEvaluation { state: sol.state, iterations: sol.iterations, value })
}

struct PdReduced<'a> {
    f: &'a ScalarField,
    cfg: &'a BilevelPdConfig,
    spec: &'a CorridorSpec,
}

#[derive(Clone)]
struct PdPoint {
    state: KktState,
    kkt: [f64; 4],
}

impl ReducedProblem for PdReduced<'_> {
    type State = PdPoint;

    fn evaluate(&self, a0: &Weight, a1: &ScalarField, warm: Option<&PdPoint>) -> Result<Evaluated<PdPoint>> {
        let lc = &self.cfg.lower;
        let sol = match warm {
            Some(w) => pd_newton_solve(self.f, a0, a1, lc, Some(&w.state))
                .or_else(|_| pd_newton_solve(self.f, a0, a1, lc, None))?,
            None => pd_newton_solve(self.f, a0, a1, lc, None)?,
        };
        let kkt = *sol.history.last().expect("nonempty history");
        let value = upper_value_pd(
            &sol.state.u,
            self.f,
            a0,
            a1,
            self.cfg.lambda0_effective(),
            self.cfg.lambda1,
            self.cfg.bounds.lap_weight,
            self.spec,
        )?;
        Ok(Evaluated { state: PdPoint { state: sol.state, kkt }, value, iterations: sol.iterations })
    }

    fn derivatives(&self, st: &PdPoint, a0: &Weight, a1: &ScalarField) -> Result<(Weight, ScalarField)> {
        let adj = solve_adjoint_pd(&st.state, self.f, a0, a1, &self.cfg.lower, self.spec)?;
        Ok(reduced_derivatives_pd(&st.state, &adj, a0, a1, self.cfg))
    }

    fn image(&self, st: &PdPoint) -> ScalarField {
        st.state.u.clone()
    }

    fn kkt(&self, st: &PdPoint) -> Option<[f64; 4]> {
        Some(st.kkt)
    }
}

#[derive(Clone, Debug)]
pub struct BilevelPdResult {
    pub alpha0: Weight,
    pub alpha1: ScalarField,
    pub u: ScalarField,
    pub state: KktState,
    pub history: RunHistory,
}

pub fn run_bilevel_pd(f: &ScalarField, cfg: &BilevelPdConfig, spec: &CorridorSpec) -> Result<BilevelPdResult> {
    run_bilevel_pd_tracked(f, cfg, spec, None)
}

/// [`run_bilevel_pd`] that also records PSNR and SSIM against `truth`.
pub fn run_bilevel_pd_tracked(
    f: &ScalarField,
    cfg: &BilevelPdConfig,
    spec: &CorridorSpec,
    truth: Option<&ScalarField>,
) -> Result<BilevelPdResult> {
    cfg.validate()?;
    let g = *f.grid();
    let alpha1 = match &cfg.fixed_alpha1 {
        Some(a) if a.grid() != &g => {
            return Err(TgvError::GridMismatch("fixed alpha1 on a different grid".into()));
        }
        Some(a) => a.clone(),
        None => ScalarField::constant(g, cfg.alpha1_init),
    };
    let alpha0 = match cfg.alpha0_mode {
        Alpha0Mode::Scalar => Weight::Scalar(cfg.alpha0_init),
        Alpha0Mode::Spatial => Weight::Field(ScalarField::constant(g, cfg.alpha0_init)),
    };
    let free = Free { alpha0: true, alpha1: cfg.fixed_alpha1.is_none() };
    let prob = PdReduced { f, cfg, spec };
    let out = projected_descent(&prob, &cfg.steps, &cfg.bounds, free, alpha0, alpha1, truth)?;
    Ok(BilevelPdResult {
        alpha0: out.alpha0,
        alpha1: out.alpha1,
        u: out.state.state.u.clone(),
        state: out.state.state,
        history: out.history,
    })
}

/// Residual of the full transposed block system for an adjoint state,
/// measured in the plain Euclidean norm.
pub fn adjoint_system_residual(
    x: &KktState,
    adj: &KktState,
    f: &ScalarField,
    alpha0: &Weight,
    alpha1: &ScalarField,
    cfg: &PdSolverConfig,
    spec: &CorridorSpec,
) -> Result<f64> {
    let n = f.grid().len();
    let bl = assemble_kkt_blocks(x, f, alpha0, alpha1, cfg)?;
    let jt = bl.jacobian().transpose();
    let mut y = adj.x1();
    y.extend(adj.x2());
    let r = jt.apply(&y);
    let du = objective_u_derivative(&x.u, f, spec)?;
    let mut s = 0.0;
    for (k, v) in r.iter().enumerate() {
        let b = if k < n { -du.values()[k] } else { 0.0 };
        s += (v - b) * (v - b);
    }
    Ok(s.sqrt())
}

/// `grad u - w` at a state.
pub fn first_order_part(x: &KktState) -> VectorField {
    let ops = primal_ops(x.grid());
    let gu = VectorField::from_slice(*x.grid(), &ops.grad.apply(x.u.values()));
    gu.sub(&x.w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::GridSpec;

    fn g() -> GridSpec {
        GridSpec::primal_dual(6, 6).unwrap()
    }

    #[test]
    fn zero_adjoint_zero_lambdas() {
        let f = ScalarField::from_fn(g(), |i, j| (i * j) as f64 / 25.0);
        let x = KktState::initial(&f);
        let adj = KktState::from_parts(g(), &vec![0.0; 108], &vec![0.0; 180]);
        let cfg = BilevelPdConfig { lambda0: 0.0, lambda1: 0.0, ..Default::default() };
        let (d0, d1) = reduced_derivatives_pd(&x, &adj, &Weight::Scalar(0.2), &ScalarField::constant(g(), 0.3), &cfg);
        assert_eq!(d0.at(0), 0.0);
        assert_eq!(d1.max_abs(), 0.0);
    }

    #[test]
    fn consistent_w_leaves_regularization() {
        let f = ScalarField::from_fn(g(), |i, j| 0.1 * i as f64 + 0.05 * j as f64);
        let ops = primal_ops(&g());
        let mut x = KktState::initial(&f);
        x.w = VectorField::from_slice(g(), &ops.grad.apply(f.values()));
        let adj = KktState::from_parts(g(), &vec![1.0; 108], &vec![1.0; 180]);
        let a1 = ScalarField::from_fn(g(), |i, _| 0.2 + 0.01 * i as f64);
        let cfg = BilevelPdConfig { lambda1: 0.3, ..Default::default() };
        let (_, d1) = reduced_derivatives_pd(&x, &adj, &Weight::Scalar(0.2), &a1, &cfg);
        let want = h1_norm_sq_half_derivative(&a1, cfg.bounds.lap_weight).scale(0.3);
        assert!(d1.sub(&want).max_abs() < 1e-12 * want.max_abs().max(1.0));
        assert_eq!(first_order_part(&x).max_abs(), 0.0);
    }

    #[test]
    fn scalar_derivative_is_sum_of_field() {
        let f = ScalarField::from_fn(g(), |i, j| ((i * 5 + j * 3) % 7) as f64 / 7.0);
        let a1 = ScalarField::constant(g(), 0.05);
        let cfg = BilevelPdConfig { lambda0: 0.0, ..Default::default() };
        let x = pd_newton_solve(&f, &Weight::Scalar(0.05), &a1, &cfg.lower, None).unwrap().state;
        let spec = CorridorSpec::new(1e-3, 3).unwrap();
        let adj = solve_adjoint_pd(&x, &f, &Weight::Scalar(0.05), &a1, &cfg.lower, &spec).unwrap();
        let (ds, _) = reduced_derivatives_pd(&x, &adj, &Weight::Scalar(0.05), &a1, &cfg);
        let field = Weight::Field(ScalarField::constant(g(), 0.05));
        let (df, _) = reduced_derivatives_pd(&x, &adj, &field, &a1, &cfg);
        let Weight::Field(df) = df else { panic!() };
        assert!((ds.at(0) - df.sum()).abs() <= 1e-10 * ds.at(0).abs().max(1e-30));
        let res = adjoint_system_residual(&x, &adj, &f, &Weight::Scalar(0.05), &a1, &cfg.lower, &spec).unwrap();
        assert!(res < 1e-10, "{res}");
    }
}
