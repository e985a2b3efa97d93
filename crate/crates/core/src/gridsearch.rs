//! Exhaustive search over pairs of scalar weights.

use rayon::prelude::*;

use crate::error::{param, Result, TgvError};
use crate::field::{GridMode, ScalarField};
use crate::io::fmt_f64;
use crate::lower_dual::{solve_lower_dual, DualSolverConfig};
use crate::lower_pd::{pd_newton_solve, PdSolverConfig};
use crate::metrics::{psnr, ssim};
use crate::smoothing::Weight;
use crate::upper::{localized_residual, objective_f, CorridorSpec};

/// Lower-level solver and its settings. Weights are read in the scaling of
/// the chosen formulation.
#[derive(Clone, Debug)]
pub enum GridSolver {
    Dual(DualSolverConfig),
    Pd(PdSolverConfig),
}

impl GridSolver {
    pub fn grid_mode(&self) -> GridMode {
        match self {
            GridSolver::Dual(_) => GridMode::Dual,
            GridSolver::Pd(_) => GridMode::PrimalDual,
        }
    }

    /// Reconstruction and iteration count at scalar weights.
    pub fn solve(&self, f: &ScalarField, alpha0: f64, alpha1: f64) -> Result<(ScalarField, usize)> {
        let a0 = Weight::Scalar(alpha0);
        let a1 = ScalarField::constant(*f.grid(), alpha1);
        match self {
            GridSolver::Dual(c) => solve_lower_dual(f, &a0, &a1, c).map(|s| (s.image(f), s.iterations)),
            GridSolver::Pd(c) => pd_newton_solve(f, &a0, &a1, c, None).map(|s| (s.state.u, s.iterations)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridRow {
    pub alpha0: f64,
    pub alpha1: f64,
    pub psnr: f64,
    pub ssim: f64,
    /// `F(R(u))`.
    pub f_value: f64,
    pub iterations: usize,
    /// Solver error of a failed row; its numbers are NaN.
    pub failure: Option<String>,
}

impl GridRow {
    pub fn ok(&self) -> bool {
        self.failure.is_none()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridTable {
    /// `alpha0`-major order.
    pub rows: Vec<GridRow>,
}

impl GridTable {
    fn best_by(&self, key: impl Fn(&GridRow) -> f64) -> Option<&GridRow> {
        self.rows.iter().filter(|r| r.ok()).max_by(|a, b| key(a).total_cmp(&key(b)))
    }

    pub fn best_psnr(&self) -> Option<&GridRow> {
        self.best_by(|r| r.psnr)
    }

    pub fn best_ssim(&self) -> Option<&GridRow> {
        self.best_by(|r| r.ssim)
    }

    pub fn best_f(&self) -> Option<&GridRow> {
        self.best_by(|r| -r.f_value)
    }

    pub fn to_csv(&self) -> Result<String> {
        let err = |e: csv::Error| TgvError::Format(e.to_string());
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["alpha0", "alpha1", "psnr", "ssim", "f_value", "iterations", "status"]).map_err(err)?;
        for r in &self.rows {
            w.write_record([
                fmt_f64(r.alpha0),
                fmt_f64(r.alpha1),
                fmt_f64(r.psnr),
                fmt_f64(r.ssim),
                fmt_f64(r.f_value),
                r.iterations.to_string(),
                r.failure.clone().map_or("ok".into(), |m| format!("failed: {m}")),
            ])
            .map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| TgvError::Format(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| TgvError::Format(e.to_string()))
    }
}

/// Solves every `(alpha0, alpha1)` pair in parallel. A failed solve gives a
/// flagged row and the search goes on. `f` and `truth` are regridded to the
/// solver's mesh size.
pub fn gridsearch(
    f: &ScalarField,
    truth: &ScalarField,
    alpha0: &[f64],
    alpha1: &[f64],
    solver: &GridSolver,
    spec: &CorridorSpec,
) -> Result<GridTable> {
    if alpha0.is_empty() || alpha1.is_empty() {
        return param("grid search needs nonempty weight lists");
    }
    if !f.grid().same_shape(truth.grid()) {
        return Err(TgvError::GridMismatch("data and truth differ in shape".into()));
    }
    let g = crate::field::GridSpec::with_mode(f.grid().n, f.grid().m, solver.grid_mode())?;
    let f = f.regrid(g)?;
    let truth = truth.regrid(g)?;
    let pairs: Vec<(f64, f64)> = alpha0.iter().flat_map(|&a| alpha1.iter().map(move |&b| (a, b))).collect();
    let rows = pairs
        .par_iter()
        .map(|&(a0, a1)| {
            let scored = solver.solve(&f, a0, a1).and_then(|(u, it)| {
                let v = objective_f(&localized_residual(&u, &f, spec)?, spec);
                Ok((psnr(&u, &truth, 1.0)?, ssim(&u, &truth)?, v, it))
            });
            match scored {
                Ok((p, s, v, it)) => {
                    GridRow { alpha0: a0, alpha1: a1, psnr: p, ssim: s, f_value: v, iterations: it, failure: None }
                }
                Err(e) => GridRow {
                    alpha0: a0,
                    alpha1: a1,
                    psnr: f64::NAN,
                    ssim: f64::NAN,
                    f_value: f64::NAN,
                    iterations: 0,
                    failure: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(GridTable { rows })
}
