//! Pointwise smoothing functions, box penalties and feasibility projections.

use crate::error::{param, Result};
use crate::field::{ScalarField, SymTensorField, VectorField};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HuberParam {
    pub gamma: f64,
}

impl HuberParam {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) {
            return param(format!("huber radius must be positive, got {gamma}"));
        }
        Ok(HuberParam { gamma })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PenaltyParam {
    pub delta: f64,
    pub eps0: f64,
    pub eps1: f64,
}

impl PenaltyParam {
    pub fn new(delta: f64, eps0: f64, eps1: f64) -> Result<Self> {
        if !(delta > 0.0 && eps0 > 0.0 && eps1 > 0.0) {
            return param("penalty parameters must be positive");
        }
        Ok(PenaltyParam { delta, eps0, eps1 })
    }
}

/// Huber function of a magnitude `r >= 0`.
#[inline]
pub fn huber_scalar(r: f64, gamma: f64) -> f64 {
    if r >= gamma {
        r - 0.5 * gamma
    } else {
        r * r / (2.0 * gamma)
    }
}

/// Derivative of [`huber_scalar`] in `r`.
#[inline]
pub fn huber_scalar_prime(r: f64, gamma: f64) -> f64 {
    if r >= gamma {
        1.0
    } else {
        r / gamma
    }
}

/// Pointwise Huber of the Euclidean magnitude of `v`.
pub fn huber(v: &VectorField, gamma: f64) -> ScalarField {
    v.magnitude().map(|r| huber_scalar(r, gamma))
}

/// Pointwise Huber of the Frobenius magnitude of `p`.
pub fn huber_tensor(p: &SymTensorField, gamma: f64) -> ScalarField {
    p.magnitude().map(|r| huber_scalar(r, gamma))
}

/// One-sided `C^2` penalty: zero for `t <= 0`, cubic on `(0, delta)`,
/// quadratic beyond.
#[inline]
pub fn g_delta(t: f64, delta: f64) -> f64 {
    if t >= delta {
        0.5 * t * t - 0.5 * delta * t + delta * delta / 6.0
    } else if t > 0.0 {
        t * t * t / (6.0 * delta)
    } else {
        0.0
    }
}

#[inline]
pub fn g_delta_prime(t: f64, delta: f64) -> f64 {
    if t >= delta {
        t - 0.5 * delta
    } else if t > 0.0 {
        t * t / (2.0 * delta)
    } else {
        0.0
    }
}

#[inline]
pub fn g_delta_second(t: f64, delta: f64) -> f64 {
    if t >= delta {
        1.0
    } else if t > 0.0 {
        t / delta
    } else {
        0.0
    }
}

/// Two-sided box penalty of one value against the box `[-a, a]`.
#[inline]
pub fn box_penalty(x: f64, a: f64, delta: f64) -> f64 {
    g_delta(-x - a, delta) + g_delta(x - a, delta)
}

/// Derivative of [`box_penalty`] in `x`.
#[inline]
pub fn box_penalty_dx(x: f64, a: f64, delta: f64) -> f64 {
    g_delta_prime(x - a, delta) - g_delta_prime(-x - a, delta)
}

/// Derivative of [`box_penalty`] in `a`.
#[inline]
pub fn box_penalty_da(x: f64, a: f64, delta: f64) -> f64 {
    -g_delta_prime(x - a, delta) - g_delta_prime(-x - a, delta)
}

/// Second derivative of [`box_penalty`] in `x`.
#[inline]
pub fn box_penalty_dxx(x: f64, a: f64, delta: f64) -> f64 {
    g_delta_second(x - a, delta) + g_delta_second(-x - a, delta)
}

/// Mixed derivative of [`box_penalty`] in `x` then `a`.
#[inline]
pub fn box_penalty_dxa(x: f64, a: f64, delta: f64) -> f64 {
    -g_delta_second(x - a, delta) + g_delta_second(-x - a, delta)
}

/// Weight `alpha0` is either one number or a field.
#[derive(Clone, Debug, PartialEq)]
pub enum Weight {
    Scalar(f64),
    Field(ScalarField),
}

impl Weight {
    #[inline]
    pub fn at(&self, k: usize) -> f64 {
        match self {
            Weight::Scalar(a) => *a,
            Weight::Field(f) => f.values()[k],
        }
    }

    pub fn min(&self) -> f64 {
        match self {
            Weight::Scalar(a) => *a,
            Weight::Field(f) => f.min(),
        }
    }

    pub fn max(&self) -> f64 {
        match self {
            Weight::Scalar(a) => *a,
            Weight::Field(f) => f.max(),
        }
    }
}

/// `h^2 sum` of the box penalty over both components of `q` against `alpha1`.
pub fn penalty_p(q: &VectorField, alpha1: &ScalarField, delta: f64) -> f64 {
    let a = alpha1.values();
    let s: f64 =
        q.c.iter().map(|c| c.values().iter().zip(a).map(|(&x, &w)| box_penalty(x, w, delta)).sum::<f64>()).sum();
    q.grid().cell() * s
}

/// `h^2 sum` of the box penalty over `p11, p12, p22` against `alpha0`.
pub fn penalty_q(p: &SymTensorField, alpha0: &Weight, delta: f64) -> f64 {
    let p = p.to_unscaled();
    let mut s = 0.0;
    for c in &p.c {
        for (k, &x) in c.values().iter().enumerate() {
            s += box_penalty(x, alpha0.at(k), delta);
        }
    }
    p.grid().cell() * s
}

/// Pointwise penalty derivatives.
///
/// `p_delta`/`q_delta` are the derivatives of the integrands in the
/// constrained variable, `d_alpha1`/`d_alpha0` those in the weight, summed
/// over components.
#[derive(Clone, Debug)]
pub struct PenaltyGradients {
    pub p_delta: VectorField,
    pub q_delta: SymTensorField,
    pub d_alpha1: ScalarField,
    pub d_alpha0: ScalarField,
}

pub fn penalty_gradients(
    q: &VectorField,
    p: &SymTensorField,
    alpha0: &Weight,
    alpha1: &ScalarField,
    delta: f64,
) -> PenaltyGradients {
    let g = *q.grid();
    let a1 = alpha1.values();
    let mut d1 = vec![0.0; g.len()];
    let pd = q.c.clone().map(|c| {
        let v = c
            .values()
            .iter()
            .enumerate()
            .map(|(k, &x)| {
                d1[k] += box_penalty_da(x, a1[k], delta);
                box_penalty_dx(x, a1[k], delta)
            })
            .collect();
        ScalarField::from_raw(g, v)
    });
    let pu = p.to_unscaled();
    let mut d0 = vec![0.0; g.len()];
    let qd = pu.c.clone().map(|c| {
        let v = c
            .values()
            .iter()
            .enumerate()
            .map(|(k, &x)| {
                let a = alpha0.at(k);
                d0[k] += box_penalty_da(x, a, delta);
                box_penalty_dx(x, a, delta)
            })
            .collect();
        ScalarField::from_raw(g, v)
    });
    PenaltyGradients {
        p_delta: VectorField { c: pd },
        q_delta: SymTensorField { c: qd, scaled: false },
        d_alpha1: ScalarField::from_raw(g, d1),
        d_alpha0: ScalarField::from_raw(g, d0),
    }
}

/// Smoothed `max(r, gamma)` with a quadratic blend of width `delta`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothMax {
    pub gamma: f64,
    pub delta: f64,
}

impl SmoothMax {
    pub fn new(gamma: f64, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && 0.5 * delta < gamma) {
            return param(format!("smoothed max needs 0 < delta/2 < gamma, got delta={delta}, gamma={gamma}"));
        }
        Ok(SmoothMax { gamma, delta })
    }

    #[inline]
    pub fn value(&self, r: f64) -> f64 {
        let (g, d) = (self.gamma, self.delta);
        if r <= g - 0.5 * d {
            g
        } else if r < g + 0.5 * d {
            let t = r + 0.5 * d - g;
            t * t / (2.0 * d) + g
        } else {
            r
        }
    }

    #[inline]
    pub fn deriv(&self, r: f64) -> f64 {
        let (g, d) = (self.gamma, self.delta);
        if r <= g - 0.5 * d {
            0.0
        } else if r < g + 0.5 * d {
            (r + 0.5 * d - g) / d
        } else {
            1.0
        }
    }
}

impl SmoothMax {
    /// Antiderivative `psi(r) = int_0^r s / max_delta(s) ds`, a Huber-type
    /// potential whose gradient in `v` is `v / max_delta(|v|)`.
    pub fn potential(&self, r: f64) -> f64 {
        let (g, d) = (self.gamma, self.delta);
        let (a, b) = (g - 0.5 * d, g + 0.5 * d);
        let r = r.abs();
        if r <= a {
            return r * r / (2.0 * g);
        }
        let k = (2.0 * d * g).sqrt();
        let blend = |t: f64| d * (t * t / (2.0 * d) + g).ln() + 2.0 * a * d / k * (t / k).atan();
        let psi_a = a * a / (2.0 * g);
        let base = blend(0.0);
        if r < b {
            psi_a + blend(r - a) - base
        } else {
            psi_a + blend(d) - base + (r - b)
        }
    }
}

pub fn smooth_max(r: f64, gamma: f64, delta: f64) -> Result<f64> {
    Ok(SmoothMax::new(gamma, delta)?.value(r))
}

pub fn smooth_max_deriv(r: f64, gamma: f64, delta: f64) -> Result<f64> {
    Ok(SmoothMax::new(gamma, delta)?.deriv(r))
}

/// How the dual feasibility projection treats a pixel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ProjectionMode {
    /// Radial scaling of the whole pixel vector/tensor.
    #[default]
    PixelRadial,
    /// Independent clamping of every scalar component.
    Componentwise,
}

/// Projects `q` onto `|q| <= alpha1` and `p` onto `|p|_F <= alpha0`.
pub fn project_feasible(
    qt: &VectorField,
    pt: &SymTensorField,
    alpha1: &ScalarField,
    alpha0: &Weight,
    mode: ProjectionMode,
) -> (VectorField, SymTensorField) {
    let g = *qt.grid();
    let pt = pt.to_unscaled();
    let mut q = qt.clone();
    let mut p = pt.clone();
    for k in 0..g.len() {
        let a1 = alpha1.values()[k];
        let a0 = alpha0.at(k);
        match mode {
            ProjectionMode::PixelRadial => {
                let (x, y) = (qt.c[0].values()[k], qt.c[1].values()[k]);
                let s = (x.hypot(y) / a1).max(1.0);
                q.c[0].values_mut()[k] = x / s;
                q.c[1].values_mut()[k] = y / s;
                let (a, b, c) = (pt.c[0].values()[k], pt.c[1].values()[k], pt.c[2].values()[k]);
                let s = ((a * a + 2.0 * b * b + c * c).sqrt() / a0).max(1.0);
                p.c[0].values_mut()[k] = a / s;
                p.c[1].values_mut()[k] = b / s;
                p.c[2].values_mut()[k] = c / s;
            }
            ProjectionMode::Componentwise => {
                for c in q.c.iter_mut() {
                    let v = &mut c.values_mut()[k];
                    *v = v.clamp(-a1, a1);
                }
                for c in p.c.iter_mut() {
                    let v = &mut c.values_mut()[k];
                    *v = v.clamp(-a0, a0);
                }
            }
        }
    }
    (q, p)
}
