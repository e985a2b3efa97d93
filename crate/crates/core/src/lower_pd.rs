//! Primal-dual Newton solver for the Huberized TGV denoising problem.
//!
//! Unknowns are ordered `x1 = (u, w1, w2)` and `x2 = (q1, q2, p11, p12, p22)`,
//! each block pixel-major within a component. Tensors are stored unscaled
//! and measured in the Frobenius norm.

use std::sync::Arc;

use crate::error::{param, Result, TgvError};
use crate::field::{GridSpec, ScalarField, SymTensorField, VectorField};
use crate::operators::{primal_ops, PrimalOps};
use crate::smoothing::{project_feasible, ProjectionMode, SmoothMax, Weight};
use crate::sparse::{Factorization, SparseOperator};

#[derive(Clone, Debug, PartialEq)]
pub struct PdSolverConfig {
    /// H1 weight on `u`.
    pub mu: f64,
    /// H1 weight on `w`.
    pub alpha_reg: f64,
    pub gamma0: f64,
    pub gamma1: f64,
    /// Width of the smoothed max.
    pub delta: f64,
    /// Tolerance on each of the four residual norms.
    pub kkt_tol: f64,
    pub max_newton: usize,
    pub projection: ProjectionMode,
}

impl Default for PdSolverConfig {
    fn default() -> Self {
        PdSolverConfig {
            mu: 0.1,
            alpha_reg: 1.0,
            gamma0: 1e-3,
            gamma1: 1e-3,
            delta: 1e-5,
            kkt_tol: 1e-4,
            max_newton: 50,
            projection: ProjectionMode::PixelRadial,
        }
    }
}

impl PdSolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.alpha_reg > 0.0) {
            return param("mu and alpha_reg must be positive");
        }
        SmoothMax::new(self.gamma0, self.delta)?;
        SmoothMax::new(self.gamma1, self.delta)?;
        if !(self.kkt_tol > 0.0) || self.max_newton == 0 {
            return param("kkt tolerance and iteration cap must be positive");
        }
        Ok(())
    }

    fn maxes(&self) -> (SmoothMax, SmoothMax) {
        (SmoothMax { gamma: self.gamma0, delta: self.delta }, SmoothMax { gamma: self.gamma1, delta: self.delta })
    }
}

/// Primal and dual iterate of the KKT system.
#[derive(Clone, Debug, PartialEq)]
pub struct KktState {
    pub u: ScalarField,
    pub w: VectorField,
    pub q: VectorField,
    pub p: SymTensorField,
    /// Set when `|q| <= alpha1` and `|p| <= alpha0` hold pointwise.
    pub feasible: bool,
}

impl KktState {
    /// `(f, 0, 0, 0)`.
    pub fn initial(f: &ScalarField) -> Self {
        let g = *f.grid();
        KktState {
            u: f.clone(),
            w: VectorField::zeros(g),
            q: VectorField::zeros(g),
            p: SymTensorField::zeros(g),
            feasible: true,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        self.u.grid()
    }

    pub fn x1(&self) -> Vec<f64> {
        let mut v = self.u.values().to_vec();
        v.extend(self.w.to_vec());
        v
    }

    pub fn x2(&self) -> Vec<f64> {
        let mut v = self.q.to_vec();
        v.extend(self.p.to_unscaled().to_vec());
        v
    }

    pub fn from_parts(grid: GridSpec, x1: &[f64], x2: &[f64]) -> Self {
        let n = grid.len();
        KktState {
            u: ScalarField::from_raw(grid, x1[..n].to_vec()),
            w: VectorField::from_slice(grid, &x1[n..]),
            q: VectorField::from_slice(grid, &x2[..2 * n]),
            p: SymTensorField::from_slice(grid, &x2[2 * n..], false),
            feasible: false,
        }
    }

    fn check(&self, f: &ScalarField, alpha0: &Weight, alpha1: &ScalarField) -> Result<()> {
        let g = f.grid();
        if self.grid() != g || alpha1.grid() != g {
            return Err(TgvError::GridMismatch("state, data and alpha1 differ in shape".into()));
        }
        if let Weight::Field(a) = alpha0 {
            if a.grid() != g {
                return Err(TgvError::GridMismatch("alpha0 field on a different grid".into()));
            }
        }
        if !(alpha0.min() > 0.0 && alpha1.min() > 0.0) {
            return param("weights must be positive");
        }
        Ok(())
    }
}

/// The four optimality residuals and their discrete `l2` norms.
#[derive(Clone, Debug)]
pub struct KktResidual {
    pub r1: ScalarField,
    pub r2: VectorField,
    pub r3: VectorField,
    pub r4: SymTensorField,
    pub norms: [f64; 4],
}

impl KktResidual {
    pub fn max_norm(&self) -> f64 {
        self.norms.iter().cloned().fold(0.0, f64::max)
    }
}

/// Pointwise quantities shared by the residual and the Jacobian.
struct Local {
    /// `grad u - w`.
    v: Vec<f64>,
    /// `E w`, unscaled.
    z: Vec<f64>,
    nv: Vec<f64>,
    nz: Vec<f64>,
}

fn local(ops: &PrimalOps, x1: &[f64]) -> Local {
    let n = ops.grid.len();
    let mut v = ops.grad.apply(&x1[..n]);
    for k in 0..2 * n {
        v[k] -= x1[n + k];
    }
    let z = ops.sym.apply(&x1[n..]);
    let nv = (0..n).map(|k| v[k].hypot(v[n + k])).collect();
    let nz = (0..n).map(|k| (z[k] * z[k] + 2.0 * z[n + k] * z[n + k] + z[2 * n + k] * z[2 * n + k]).sqrt()).collect();
    Local { v, z, nv, nz }
}

fn l2(g: &GridSpec, v: &[f64], tensor: bool) -> f64 {
    let n = g.len();
    let s: f64 = v.iter().enumerate().map(|(k, x)| if tensor && k / n == 1 { 2.0 * x * x } else { x * x }).sum();
    (g.cell() * s).sqrt()
}

/// Residuals of the four optimality equations at `x`.
pub fn kkt_residual(
    x: &KktState,
    f: &ScalarField,
    alpha0: &Weight,
    alpha1: &ScalarField,
    cfg: &PdSolverConfig,
) -> Result<KktResidual> {
    x.check(f, alpha0, alpha1)?;
    let g = *f.grid();
    let n = g.len();
    let ops = primal_ops(&g);
    let (m0, m1) = cfg.maxes();
    let (x1, x2) = (x.x1(), x.x2());
    let loc = local(&ops, &x1);
    let (u, w) = (&x1[..n], &x1[n..]);
    let (q, p) = (&x2[..2 * n], &x2[2 * n..]);

    let lu = ops.lap_n.apply(u);
    let gtq = ops.grad.apply_transpose(q);
    let r1: Vec<f64> = (0..n).map(|k| u[k] - cfg.mu * lu[k] + gtq[k] - f.values()[k]).collect();

    let lw = ops.lap_n_vec.apply(w);
    let esp = ops.sym_adj.apply(p);
    let r2: Vec<f64> = (0..2 * n).map(|k| cfg.alpha_reg * (w[k] - lw[k]) - q[k] + esp[k]).collect();

    let r3: Vec<f64> = (0..2 * n)
        .map(|k| {
            let px = k % n;
            m1.value(loc.nv[px]) * q[k] - alpha1.values()[px] * loc.v[k]
        })
        .collect();
    let r4: Vec<f64> = (0..3 * n)
        .map(|k| {
            let px = k % n;
            m0.value(loc.nz[px]) * p[k] - alpha0.at(px) * loc.z[k]
        })
        .collect();

    let norms = [l2(&g, &r1, false), l2(&g, &r2, false), l2(&g, &r3, false), l2(&g, &r4, true)];
    Ok(KktResidual {
        r1: ScalarField::from_raw(g, r1),
        r2: VectorField::from_slice(g, &r2),
        r3: VectorField::from_slice(g, &r3),
        r4: SymTensorField::from_slice(g, &r4, false),
        norms,
    })
}

/// Blocks of the Newton system `[A B; C D] (x1, x2) = (b1, b2)`.
#[derive(Clone, Debug)]
pub struct KktBlocks {
    pub a: SparseOperator,
    pub b: SparseOperator,
    pub c: SparseOperator,
    /// Diagonal of `D`.
    pub d: Vec<f64>,
    pub b1: Vec<f64>,
    pub b2: Vec<f64>,
}

impl KktBlocks {
    /// Schur complement `A - B D^{-1} C`.
    pub fn schur(&self) -> SparseOperator {
        let dinv: Vec<f64> = self.d.iter().map(|v| 1.0 / v).collect();
        let bdc = self.b.scale_cols(&dinv).mul(&self.c).expect("block shapes agree");
        self.a.sub(&bdc).expect("block shapes agree")
    }

    /// Right-hand side `b1 - B D^{-1} b2` of the Schur system.
    pub fn schur_rhs(&self) -> Vec<f64> {
        let t: Vec<f64> = self.b2.iter().zip(&self.d).map(|(a, b)| a / b).collect();
        let bt = self.b.apply(&t);
        self.b1.iter().zip(&bt).map(|(a, b)| a - b).collect()
    }

    /// Recovers `x2 = D^{-1}(b2 - C x1)`.
    pub fn dual_update(&self, x1: &[f64]) -> Vec<f64> {
        let cx = self.c.apply(x1);
        (0..self.d.len()).map(|k| (self.b2[k] - cx[k]) / self.d[k]).collect()
    }

    /// The full Jacobian `[A B; C D]`.
    pub fn jacobian(&self) -> SparseOperator {
        let d = SparseOperator::diagonal(&self.d);
        SparseOperator::block(&[vec![Some(&self.a), Some(&self.b)], vec![Some(&self.c), Some(&d)]])
            .expect("block shapes agree")
    }
}

/// Assembles the Newton blocks at `x`.
pub fn assemble_kkt_blocks(
    x: &KktState,
    f: &ScalarField,
    alpha0: &Weight,
    alpha1: &ScalarField,
    cfg: &PdSolverConfig,
) -> Result<KktBlocks> {
    x.check(f, alpha0, alpha1)?;
    let ops = primal_ops(f.grid());
    Ok(blocks(&ops, &x.x1(), &x.x2(), f, alpha0, alpha1, cfg))
}

fn a_block(ops: &PrimalOps, cfg: &PdSolverConfig) -> SparseOperator {
    let n = ops.grid.len();
    let a_u = SparseOperator::identity(n).sub(&ops.lap_n.scale(cfg.mu)).expect("square");
    let a_w = SparseOperator::identity(2 * n).sub(&ops.lap_n_vec).expect("square").scale(cfg.alpha_reg);
    SparseOperator::block(&[vec![Some(&a_u), None], vec![None, Some(&a_w)]]).expect("square")
}

fn b_block(ops: &PrimalOps) -> SparseOperator {
    let n = ops.grid.len();
    let gt = ops.grad.transpose();
    let neg = SparseOperator::identity(2 * n).scale(-1.0);
    SparseOperator::block(&[vec![Some(&gt), None], vec![Some(&neg), Some(&ops.sym_adj)]]).expect("consistent blocks")
}

fn blocks(
    ops: &Arc<PrimalOps>,
    x1: &[f64],
    x2: &[f64],
    f: &ScalarField,
    alpha0: &Weight,
    alpha1: &ScalarField,
    cfg: &PdSolverConfig,
) -> KktBlocks {
    let n = ops.grid.len();
    let (m0, m1) = cfg.maxes();
    let loc = local(ops, x1);
    let (q, p) = (&x2[..2 * n], &x2[2 * n..]);

    let mut d = vec![0.0; 5 * n];
    let mut b2 = vec![0.0; 5 * n];
    let mut trip = Vec::with_capacity(40 * n);
    for px in 0..n {
        // rows of the q equations: M1 [grad, -I] with M1 = q X vhat^T - alpha1 I
        let nv = loc.nv[px];
        let x1d = m1.deriv(nv);
        let vhat = if x1d > 0.0 {
            let s = nv.max(f64::EPSILON);
            [loc.v[px] / s, loc.v[n + px] / s]
        } else {
            [0.0; 2]
        };
        let a1 = alpha1.values()[px];
        for c in 0..2 {
            let qc = q[c * n + px];
            let r = c * n + px;
            d[r] = m1.value(nv);
            b2[r] = qc * x1d * nv;
            for dd in 0..2 {
                let mcd = qc * x1d * vhat[dd] - if c == dd { a1 } else { 0.0 };
                if mcd == 0.0 {
                    continue;
                }
                for (col, val) in ops.grad.row(dd * n + px) {
                    trip.push((r, col, mcd * val));
                }
                trip.push((r, n + dd * n + px, -mcd));
            }
        }
        // rows of the p equations: M0 E with M0 = p X zhat_F^T - alpha0 I
        let nz = loc.nz[px];
        let x0d = m0.deriv(nz);
        let zhat = if x0d > 0.0 {
            let s = nz.max(f64::EPSILON);
            [loc.z[px] / s, 2.0 * loc.z[n + px] / s, loc.z[2 * n + px] / s]
        } else {
            [0.0; 3]
        };
        let a0 = alpha0.at(px);
        for c in 0..3 {
            let pc = p[c * n + px];
            let r = 2 * n + c * n + px;
            d[r] = m0.value(nz);
            b2[r] = pc * x0d * nz;
            for dd in 0..3 {
                let mcd = pc * x0d * zhat[dd] - if c == dd { a0 } else { 0.0 };
                if mcd == 0.0 {
                    continue;
                }
                for (col, val) in ops.sym.row(dd * n + px) {
                    trip.push((r, n + col, mcd * val));
                }
            }
        }
    }
    let c = SparseOperator::from_triplets(5 * n, 3 * n, trip, crate::sparse::Boundary::Mixed);
    let mut b1 = f.values().to_vec();
    b1.resize(3 * n, 0.0);
    KktBlocks { a: a_block(ops, cfg), b: b_block(ops), c, d, b1, b2 }
}

/// Result of a primal-dual solve.
#[derive(Clone, Debug)]
pub struct PdSolution {
    pub state: KktState,
    pub iterations: usize,
    /// Residual norms before each iteration and at the end.
    pub history: Vec<[f64; 4]>,
}

/// Newton iteration with Schur elimination and feasibility projection.
pub fn pd_newton_solve(
    f: &ScalarField,
    alpha0: &Weight,
    alpha1: &ScalarField,
    cfg: &PdSolverConfig,
    init: Option<&KktState>,
) -> Result<PdSolution> {
    cfg.validate()?;
    let g = *f.grid();
    let ops = primal_ops(&g);
    let mut x = match init {
        Some(s) => s.clone(),
        None => KktState::initial(f),
    };
    x.check(f, alpha0, alpha1)?;
    let (q0, p0) = project_feasible(&x.q, &x.p, alpha1, alpha0, cfg.projection);
    x.q = q0;
    x.p = p0;
    x.feasible = true;
    let mut history = Vec::new();
    for it in 0..=cfg.max_newton {
        let res = kkt_residual(&x, f, alpha0, alpha1, cfg)?;
        history.push(res.norms);
        if res.norms.iter().any(|v| !v.is_finite()) {
            return Err(TgvError::NonFinite(it));
        }
        if res.max_norm() <= cfg.kkt_tol {
            return Ok(PdSolution { state: x, iterations: it, history });
        }
        if it == cfg.max_newton {
            break;
        }
        let bl = blocks(&ops, &x.x1(), &x.x2(), f, alpha0, alpha1, cfg);
        let x1 = Factorization::lu(&bl.schur())?.solve(&bl.schur_rhs())?;
        let x2 = bl.dual_update(&x1);
        let mut nx = KktState::from_parts(g, &x1, &x2);
        let (q, p) = project_feasible(&nx.q, &nx.p, alpha1, alpha0, cfg.projection);
        nx.q = q;
        nx.p = p;
        nx.feasible = true;
        x = nx;
    }
    let last = *history.last().expect("nonempty history");
    Err(TgvError::NonConvergence {
        iterations: cfg.max_newton,
        residual: last.iter().cloned().fold(0.0, f64::max),
        history: history.iter().map(|r| r.iter().cloned().fold(0.0, f64::max)).collect(),
    })
}

/// Doubly regularized primal energy
/// `1/2|u-f|^2 + alpha1 psi1(grad u - w) + alpha0 psi0(E w) + mu/2 |grad u|^2
/// + alpha/2 (|w|^2 + |grad w|^2)`, with `psi` the potential of the smoothed max.
pub fn primal_energy(
    u: &ScalarField,
    w: &VectorField,
    f: &ScalarField,
    alpha0: &Weight,
    alpha1: &ScalarField,
    cfg: &PdSolverConfig,
) -> Result<f64> {
    let g = *f.grid();
    if u.grid() != &g || w.grid() != &g || alpha1.grid() != &g {
        return Err(TgvError::GridMismatch("energy inputs differ in shape".into()));
    }
    let n = g.len();
    let ops = primal_ops(&g);
    let (m0, m1) = cfg.maxes();
    let mut x1 = u.values().to_vec();
    x1.extend(w.to_vec());
    let loc = local(&ops, &x1);
    let gu = ops.grad.apply(u.values());
    let gw1 = ops.grad.apply(&x1[n..2 * n]);
    let gw2 = ops.grad.apply(&x1[2 * n..]);
    let sq = |v: &[f64]| v.iter().map(|t| t * t).sum::<f64>();
    let mut e = 0.5 * u.values().iter().zip(f.values()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    for px in 0..n {
        e += alpha1.values()[px] * m1.potential(loc.nv[px]);
        e += alpha0.at(px) * m0.potential(loc.nz[px]);
    }
    e += 0.5 * cfg.mu * sq(&gu);
    e += 0.5 * cfg.alpha_reg * (sq(&x1[n..]) + sq(&gw1) + sq(&gw2));
    Ok(g.cell() * e)
}

/// Gradient of [`primal_energy`] in the `h^2`-weighted inner product.
pub fn primal_energy_gradient(
    u: &ScalarField,
    w: &VectorField,
    f: &ScalarField,
    alpha0: &Weight,
    alpha1: &ScalarField,
    cfg: &PdSolverConfig,
) -> Result<(ScalarField, VectorField)> {
    let g = *f.grid();
    let n = g.len();
    let ops = primal_ops(&g);
    let (m0, m1) = cfg.maxes();
    let mut x1 = u.values().to_vec();
    x1.extend(w.to_vec());
    let loc = local(&ops, &x1);
    let q: Vec<f64> = (0..2 * n).map(|k| alpha1.values()[k % n] * loc.v[k] / m1.value(loc.nv[k % n])).collect();
    let p: Vec<f64> = (0..3 * n).map(|k| alpha0.at(k % n) * loc.z[k] / m0.value(loc.nz[k % n])).collect();
    let lu = ops.lap_n.apply(u.values());
    let gtq = ops.grad.apply_transpose(&q);
    let gu: Vec<f64> = (0..n).map(|k| u.values()[k] - f.values()[k] - cfg.mu * lu[k] + gtq[k]).collect();
    let lw = ops.lap_n_vec.apply(&x1[n..]);
    let esp = ops.sym_adj.apply(&p);
    let gw: Vec<f64> = (0..2 * n).map(|k| cfg.alpha_reg * (x1[n + k] - lw[k]) - q[k] + esp[k]).collect();
    Ok((ScalarField::from_raw(g, gu), VectorField::from_slice(g, &gw)))
}
