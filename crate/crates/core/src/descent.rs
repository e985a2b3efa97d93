//! Projected gradient descent with Armijo backtracking, shared by both
//! bilevel formulations.

use crate::error::{param, Result};
use crate::field::ScalarField;
use crate::history::{HistoryRow, RunHistory};
use crate::metrics::{psnr, ssim};
use crate::projection::{clamp_scalar, project_h1, riesz_inverse, ProjectionSpec};
use crate::smoothing::Weight;
use crate::upper::UpperValue;

/// Step-size control of the projected gradient loop.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRule {
    pub tau0_init: f64,
    pub tau1_init: f64,
    /// Armijo constant.
    pub c: f64,
    pub theta_minus: f64,
    pub theta_plus: f64,
    pub max_outer: usize,
    /// Backtracking cap per outer iteration; the loop stops when it is hit.
    pub max_shrinks: usize,
}

impl StepRule {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c < 1.0) {
            return param("Armijo constant must lie in (0, 1)");
        }
        if !(self.theta_minus > 0.0 && self.theta_minus < 1.0 && self.theta_plus >= 1.0) {
            return param("step factors need 0 < theta_minus < 1 <= theta_plus");
        }
        if !(self.tau0_init > 0.0 && self.tau1_init > 0.0) {
            return param("initial step sizes must be positive");
        }
        Ok(())
    }
}

/// Admissible boxes and the H1 geometry used for gradients and projections.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightBounds {
    pub alpha0: (f64, f64),
    pub alpha1: (f64, f64),
    pub eps_alpha: f64,
    /// Multiplier of the Neumann Laplacian in the H1 inner product.
    pub lap_weight: f64,
}

impl WeightBounds {
    pub fn validate(&self) -> Result<()> {
        let ok = |(lo, hi): (f64, f64)| lo > 0.0 && lo < hi;
        if !(ok(self.alpha0) && ok(self.alpha1)) {
            return param("weight bounds need 0 < lower < upper");
        }
        if !(self.eps_alpha > 0.0 && self.lap_weight > 0.0) {
            return param("eps_alpha and lap_weight must be positive");
        }
        Ok(())
    }

    fn spec(&self, (lo, hi): (f64, f64)) -> ProjectionSpec {
        ProjectionSpec::new(lo, hi, self.eps_alpha, self.lap_weight)
    }

    /// `P(a)`: box clamp for a scalar, penalized H1 projection for a field.
    pub fn project0(&self, a: &Weight) -> Result<Weight> {
        Ok(match a {
            Weight::Scalar(v) => Weight::Scalar(clamp_scalar(*v, self.alpha0.0, self.alpha0.1)),
            Weight::Field(f) => Weight::Field(project_h1(f, &self.spec(self.alpha0))?.alpha),
        })
    }

    pub fn project1(&self, a: &ScalarField) -> Result<ScalarField> {
        Ok(project_h1(a, &self.spec(self.alpha1))?.alpha)
    }

    /// Gradient from a derivative: identity for a scalar, inverse Riesz map for a field.
    pub fn riesz(&self, d: &Weight) -> Result<Weight> {
        Ok(match d {
            Weight::Scalar(v) => Weight::Scalar(*v),
            Weight::Field(f) => Weight::Field(riesz_inverse(f, self.lap_weight)?),
        })
    }
}

/// Plain inner product of a derivative with a weight increment.
pub fn weight_pairing(d: &Weight, new: &Weight, old: &Weight) -> f64 {
    let n = [d, new, old]
        .iter()
        .find_map(|w| match w {
            Weight::Field(f) => Some(f.grid().len()),
            Weight::Scalar(_) => None,
        })
        .unwrap_or(1);
    (0..n).map(|k| d.at(k) * (new.at(k) - old.at(k))).sum()
}

fn axpy_weight(a: &Weight, t: f64, g: &Weight) -> Weight {
    match (a, g) {
        (Weight::Scalar(x), Weight::Scalar(y)) => Weight::Scalar(x - t * y),
        (Weight::Field(x), _) => Weight::Field(ScalarField::from_fn(*x.grid(), |i, j| {
            let k = x.grid().idx(i, j);
            x.values()[k] - t * g.at(k)
        })),
        (Weight::Scalar(_), Weight::Field(_)) => unreachable!("gradient kind follows the weight"),
    }
}

/// A lower-level solution together with its upper-level value.
pub(crate) struct Evaluated<S> {
    pub state: S,
    pub value: UpperValue,
    pub iterations: usize,
}

/// The pieces each formulation supplies to the descent loop.
pub(crate) trait ReducedProblem {
    type State: Clone;

    fn evaluate(&self, a0: &Weight, a1: &ScalarField, warm: Option<&Self::State>) -> Result<Evaluated<Self::State>>;

    /// Plain partial derivatives `(dJ/da0, dJ/da1)` at an evaluated point.
    fn derivatives(&self, st: &Self::State, a0: &Weight, a1: &ScalarField) -> Result<(Weight, ScalarField)>;

    fn image(&self, st: &Self::State) -> ScalarField;

    fn kkt(&self, _st: &Self::State) -> Option<[f64; 4]> {
        None
    }
}

pub(crate) struct DescentOutcome<S> {
    pub alpha0: Weight,
    pub alpha1: ScalarField,
    pub state: S,
    pub history: RunHistory,
}

/// Which weights move.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Free {
    pub alpha0: bool,
    pub alpha1: bool,
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn projected_descent<P: ReducedProblem>(
    prob: &P,
    rule: &StepRule,
    bounds: &WeightBounds,
    free: Free,
    alpha0: Weight,
    alpha1: ScalarField,
    truth: Option<&ScalarField>,
) -> Result<DescentOutcome<P::State>> {
    rule.validate()?;
    bounds.validate()?;
    let quality = |st: &P::State| -> Result<(Option<f64>, Option<f64>)> {
        match truth {
            Some(t) => {
                let u = prob.image(st);
                Ok((Some(psnr(&u, t, 1.0)?), Some(ssim(&u, t)?)))
            }
            None => Ok((None, None)),
        }
    };
    let (mut a0, mut a1) = (alpha0, alpha1);
    let mut cur = prob.evaluate(&a0, &a1, None)?;
    let (ps, ss) = quality(&cur.state)?;
    let mut history = RunHistory {
        initial: HistoryRow {
            iteration: 0,
            objective: cur.value.total,
            f_part: cur.value.f_part,
            reg_part: cur.value.reg_part,
            tau0: rule.tau0_init,
            tau1: rule.tau1_init,
            shrinks: 0,
            lower_solves: 1,
            lower_iterations: cur.iterations,
            psnr: ps,
            ssim: ss,
            kkt: prob.kkt(&cur.state),
        },
        rows: Vec::with_capacity(rule.max_outer),
    };
    let (mut tau0, mut tau1) = (rule.tau0_init, rule.tau1_init);
    'outer: for k in 1..=rule.max_outer {
        let (d0, d1) = prob.derivatives(&cur.state, &a0, &a1)?;
        let g0 = bounds.riesz(&d0)?;
        let g1 = bounds.riesz(&Weight::Field(d1.clone()))?;
        let d1w = Weight::Field(d1);
        let a1w = Weight::Field(a1.clone());
        let mut shrinks = 0;
        let mut solves = 0;
        let accepted = loop {
            let t0 = if free.alpha0 { bounds.project0(&axpy_weight(&a0, tau0, &g0))? } else { a0.clone() };
            let t1 = if free.alpha1 {
                let Weight::Field(step) = axpy_weight(&a1w, tau1, &g1) else { unreachable!() };
                bounds.project1(&step)?
            } else {
                a1.clone()
            };
            let pred = weight_pairing(&d0, &t0, &a0) + weight_pairing(&d1w, &Weight::Field(t1.clone()), &a1w);
            solves += 1;
            if let Ok(trial) = prob.evaluate(&t0, &t1, Some(&cur.state)) {
                let v = trial.value.total;
                if v.is_finite() && v <= cur.value.total + rule.c * pred && v <= cur.value.total {
                    break Some((t0, t1, trial));
                }
            }
            if shrinks == rule.max_shrinks {
                break None;
            }
            shrinks += 1;
            tau0 *= rule.theta_minus;
            tau1 *= rule.theta_minus;
        };
        let Some((t0, t1, trial)) = accepted else {
            break 'outer;
        };
        a0 = t0;
        a1 = t1;
        cur = trial;
        let (ps, ss) = quality(&cur.state)?;
        history.rows.push(HistoryRow {
            iteration: k,
            objective: cur.value.total,
            f_part: cur.value.f_part,
            reg_part: cur.value.reg_part,
            tau0,
            tau1,
            shrinks,
            lower_solves: solves,
            lower_iterations: cur.iterations,
            psnr: ps,
            ssim: ss,
            kkt: prob.kkt(&cur.state),
        });
        tau0 *= rule.theta_plus;
        tau1 *= rule.theta_plus;
    }
    Ok(DescentOutcome { alpha0: a0, alpha1: a1, state: cur.state, history })
}
