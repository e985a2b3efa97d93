//! Grid functions on an `n x m` pixel grid.
//!
//! Storage is row-major: pixel `(i, j)` lives at `i * m + j`. Rows are the
//! `x` direction and columns the `y` direction throughout the crate.

use crate::error::{param, Result, TgvError};
use crate::sparse::{Factorization, SparseOperator};

/// Which discretization a grid belongs to. Only the mesh size differs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridMode {
    /// `h = 1/sqrt(n m)`
    Dual,
    /// `h = 1`
    PrimalDual,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub n: usize,
    pub m: usize,
    pub h: f64,
}

impl GridSpec {
    pub fn new(n: usize, m: usize, h: f64) -> Result<Self> {
        if n < 2 || m < 2 {
            return param(format!("grid must be at least 2x2, got {n}x{m}"));
        }
        if !(h > 0.0 && h.is_finite()) {
            return param(format!("mesh size must be positive, got {h}"));
        }
        Ok(GridSpec { n, m, h })
    }

    pub fn with_mode(n: usize, m: usize, mode: GridMode) -> Result<Self> {
        match mode {
            GridMode::Dual => Self::new(n, m, 1.0 / ((n * m) as f64).sqrt()),
            GridMode::PrimalDual => Self::new(n, m, 1.0),
        }
    }

    pub fn dual(n: usize, m: usize) -> Result<Self> {
        Self::with_mode(n, m, GridMode::Dual)
    }

    pub fn primal_dual(n: usize, m: usize) -> Result<Self> {
        Self::with_mode(n, m, GridMode::PrimalDual)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.m
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.m + j
    }

    /// Same pixel layout, different mesh size.
    pub fn with_h(&self, h: f64) -> Result<Self> {
        Self::new(self.n, self.m, h)
    }

    pub fn same_shape(&self, other: &GridSpec) -> bool {
        self.n == other.n && self.m == other.m
    }

    /// Pixel measure `h^2` used by every discrete integral.
    #[inline]
    pub fn cell(&self) -> f64 {
        self.h * self.h
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: GridSpec) -> Self {
        ScalarField { grid, data: vec![0.0; grid.len()] }
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        ScalarField { grid, data: vec![c; grid.len()] }
    }

    pub fn from_fn(grid: GridSpec, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(grid.len());
        for i in 0..grid.n {
            for j in 0..grid.m {
                data.push(f(i, j));
            }
        }
        ScalarField { grid, data }
    }

    /// Checked constructor: rejects wrong lengths and non-finite values.
    pub fn from_vec(grid: GridSpec, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(TgvError::GridMismatch(format!("expected {} values, got {}", grid.len(), data.len())));
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(TgvError::NonFinite(k));
        }
        Ok(ScalarField { grid, data })
    }

    /// Unchecked variant for internal hot paths where finiteness is known.
    pub(crate) fn from_raw(grid: GridSpec, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), grid.len());
        ScalarField { grid, data }
    }

    #[inline]
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.grid.idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.grid.idx(i, j);
        self.data[k] = v;
    }

    /// Reinterpret the same pixel values on a grid with a different mesh size.
    pub fn regrid(&self, grid: GridSpec) -> Result<Self> {
        if !grid.same_shape(&self.grid) {
            return Err(TgvError::GridMismatch("regrid needs equal shapes".into()));
        }
        Ok(ScalarField { grid, data: self.data.clone() })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ScalarField { grid: self.grid, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert!(self.grid.same_shape(&other.grid));
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        ScalarField { grid: self.grid, data }
    }

    pub fn add(&self, other: &ScalarField) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ScalarField) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    pub fn axpy(&mut self, a: f64, x: &ScalarField) {
        for (y, &xv) in self.data.iter_mut().zip(&x.data) {
            *y += a * xv;
        }
    }

    /// `h^2`-weighted inner product.
    pub fn dot(&self, other: &ScalarField) -> f64 {
        self.grid.cell() * dot(&self.data, &other.data)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |a, &v| a.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Element of `W_h`: two scalar components on one grid.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    pub c: [ScalarField; 2],
}

impl VectorField {
    pub fn new(a: ScalarField, b: ScalarField) -> Result<Self> {
        if a.grid != b.grid {
            return Err(TgvError::GridMismatch("vector components differ in grid".into()));
        }
        Ok(VectorField { c: [a, b] })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        VectorField { c: [ScalarField::zeros(grid), ScalarField::zeros(grid)] }
    }

    pub fn grid(&self) -> &GridSpec {
        self.c[0].grid()
    }

    /// Components stacked into one vector of length `2 n m`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.grid().len());
        v.extend_from_slice(self.c[0].values());
        v.extend_from_slice(self.c[1].values());
        v
    }

    pub fn from_slice(grid: GridSpec, v: &[f64]) -> Self {
        let n = grid.len();
        assert_eq!(v.len(), 2 * n, "vector field expects 2nm values");
        VectorField { c: [ScalarField::from_raw(grid, v[..n].to_vec()), ScalarField::from_raw(grid, v[n..].to_vec())] }
    }

    /// `h^2`-weighted Euclidean inner product.
    pub fn dot(&self, other: &VectorField) -> f64 {
        self.c[0].dot(&other.c[0]) + self.c[1].dot(&other.c[1])
    }

    /// Per-pixel Euclidean magnitude.
    pub fn magnitude(&self) -> ScalarField {
        self.c[0].zip_map(&self.c[1], |a, b| a.hypot(b))
    }

    pub fn add(&self, o: &VectorField) -> Self {
        VectorField { c: [self.c[0].add(&o.c[0]), self.c[1].add(&o.c[1])] }
    }

    pub fn sub(&self, o: &VectorField) -> Self {
        VectorField { c: [self.c[0].sub(&o.c[0]), self.c[1].sub(&o.c[1])] }
    }

    pub fn scale(&self, s: f64) -> Self {
        VectorField { c: [self.c[0].scale(s), self.c[1].scale(s)] }
    }

    pub fn max_abs(&self) -> f64 {
        self.c[0].max_abs().max(self.c[1].max_abs())
    }
}

/// Element of `V_h`: symmetric 2x2 tensor field `(p11, p12, p22)`.
///
/// With `scaled` set, the middle slot stores `2 p12`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymTensorField {
    pub c: [ScalarField; 3],
    pub scaled: bool,
}

impl SymTensorField {
    pub fn new(p11: ScalarField, p12: ScalarField, p22: ScalarField) -> Result<Self> {
        if p11.grid != p12.grid || p11.grid != p22.grid {
            return Err(TgvError::GridMismatch("tensor components differ in grid".into()));
        }
        Ok(SymTensorField { c: [p11, p12, p22], scaled: false })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        SymTensorField {
            c: [ScalarField::zeros(grid), ScalarField::zeros(grid), ScalarField::zeros(grid)],
            scaled: false,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        self.c[0].grid()
    }

    pub fn to_scaled(&self) -> Self {
        if self.scaled {
            return self.clone();
        }
        SymTensorField { c: [self.c[0].clone(), self.c[1].scale(2.0), self.c[2].clone()], scaled: true }
    }

    pub fn to_unscaled(&self) -> Self {
        if !self.scaled {
            return self.clone();
        }
        SymTensorField { c: [self.c[0].clone(), self.c[1].scale(0.5), self.c[2].clone()], scaled: false }
    }

    /// Stacked components as stored (scaled or not), length `3 n m`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(3 * self.grid().len());
        for c in &self.c {
            v.extend_from_slice(c.values());
        }
        v
    }

    pub fn from_slice(grid: GridSpec, v: &[f64], scaled: bool) -> Self {
        let n = grid.len();
        assert_eq!(v.len(), 3 * n, "tensor field expects 3nm values");
        SymTensorField {
            c: [
                ScalarField::from_raw(grid, v[..n].to_vec()),
                ScalarField::from_raw(grid, v[n..2 * n].to_vec()),
                ScalarField::from_raw(grid, v[2 * n..].to_vec()),
            ],
            scaled,
        }
    }

    /// `h^2`-weighted Frobenius inner product `p11 r11 + 2 p12 r12 + p22 r22`.
    pub fn dot(&self, other: &SymTensorField) -> f64 {
        let a = self.to_unscaled();
        let b = other.to_unscaled();
        a.c[0].dot(&b.c[0]) + 2.0 * a.c[1].dot(&b.c[1]) + a.c[2].dot(&b.c[2])
    }

    /// Per-pixel Frobenius magnitude.
    pub fn magnitude(&self) -> ScalarField {
        let p = self.to_unscaled();
        let g = *p.grid();
        let data = (0..g.len())
            .map(|k| {
                let (a, b, c) = (p.c[0].values()[k], p.c[1].values()[k], p.c[2].values()[k]);
                (a * a + 2.0 * b * b + c * c).sqrt()
            })
            .collect();
        ScalarField::from_raw(g, data)
    }

    pub fn add(&self, o: &SymTensorField) -> Self {
        let o = if o.scaled == self.scaled {
            o.clone()
        } else if self.scaled {
            o.to_scaled()
        } else {
            o.to_unscaled()
        };
        SymTensorField {
            c: [self.c[0].add(&o.c[0]), self.c[1].add(&o.c[1]), self.c[2].add(&o.c[2])],
            scaled: self.scaled,
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        SymTensorField { c: [self.c[0].scale(s), self.c[1].scale(s), self.c[2].scale(s)], scaled: self.scaled }
    }

    pub fn max_abs(&self) -> f64 {
        self.c.iter().fold(0.0, |a, c| a.max(c.max_abs()))
    }
}

/// Discrete `l2` norm `sqrt(h^2 sum u^2)`.
pub fn l2_norm(u: &ScalarField) -> f64 {
    u.dot(u).sqrt()
}

fn check_square(lap: &SparseOperator, len: usize) -> Result<()> {
    if lap.rows() != len || lap.cols() != len {
        return Err(TgvError::GridMismatch(format!(
            "operator is {}x{}, field has {len} pixels",
            lap.rows(),
            lap.cols()
        )));
    }
    Ok(())
}

/// Discrete `H^1` norm `h sqrt(a^T (I - lap) a)`.
pub fn h1_norm(a: &ScalarField, lap: &SparseOperator) -> Result<f64> {
    check_square(lap, a.grid().len())?;
    let la = lap.apply(a.values());
    let q: f64 = a.values().iter().zip(&la).map(|(x, y)| x * (x - y)).sum();
    Ok(a.grid().h * q.max(0.0).sqrt())
}

/// Dual `H^1` norm `h sqrt(r^T (I - lap)^{-1} r)`.
pub fn h1_dual_norm(r: &ScalarField, lap: &SparseOperator) -> Result<f64> {
    check_square(lap, r.grid().len())?;
    let riesz = SparseOperator::identity(lap.rows()).sub(lap)?;
    let z = Factorization::cholesky(&riesz)?.solve(r.values())?;
    let q = dot(r.values(), &z);
    Ok(r.grid().h * q.max(0.0).sqrt())
}

/// Dual `H_0^2` norm `h sqrt(v^T (I + bilap)^{-1} v)`. Diagnostic only.
pub fn h02_dual_norm(v: &ScalarField, bilap: &SparseOperator) -> Result<f64> {
    check_square(bilap, v.grid().len())?;
    let m = SparseOperator::identity(bilap.rows()).add(bilap)?;
    let z = Factorization::cholesky(&m)?.solve(v.values())?;
    Ok(v.grid().h * dot(v.values(), &z).max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::neumann_laplacian;

    #[test]
    fn grid_modes() {
        let g = GridSpec::dual(4, 16).unwrap();
        assert!((g.h - 0.125).abs() < 1e-15);
        assert_eq!(GridSpec::primal_dual(3, 3).unwrap().h, 1.0);
        assert!(GridSpec::new(1, 4, 1.0).is_err());
        assert!(GridSpec::new(4, 4, 0.0).is_err());
    }

    #[test]
    fn l2_examples() {
        let g = GridSpec::new(2, 2, 1.0).unwrap();
        assert_eq!(l2_norm(&ScalarField::zeros(g)), 0.0);
        assert_eq!(l2_norm(&ScalarField::constant(g, 1.0)), 2.0);
        let g = GridSpec::new(4, 4, 0.5).unwrap();
        assert!((l2_norm(&ScalarField::constant(g, 1.0)) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn h1_of_constant() {
        let g = GridSpec::dual(6, 5).unwrap();
        let lap = neumann_laplacian(&g);
        let a = ScalarField::constant(g, 0.7);
        assert!((h1_norm(&a, &lap).unwrap() - 0.7).abs() < 1e-12);
        assert_eq!(h1_norm(&ScalarField::zeros(g), &lap).unwrap(), 0.0);
        assert_eq!(h1_dual_norm(&ScalarField::zeros(g), &lap).unwrap(), 0.0);
    }

    #[test]
    fn from_vec_rejects_nan() {
        let g = GridSpec::new(2, 2, 1.0).unwrap();
        assert!(ScalarField::from_vec(g, vec![0.0, f64::NAN, 0.0, 0.0]).is_err());
        assert!(ScalarField::from_vec(g, vec![0.0; 3]).is_err());
    }

    #[test]
    fn scaled_round_trip_dyadic() {
        let g = GridSpec::new(3, 3, 1.0).unwrap();
        let p = SymTensorField::new(
            ScalarField::from_fn(g, |i, j| (i as f64) * 0.25 - j as f64),
            ScalarField::from_fn(g, |i, j| (i * j) as f64 * 0.125 + 3.5),
            ScalarField::from_fn(g, |i, _| -(i as f64) * 0.5),
        )
        .unwrap();
        let back = p.to_scaled().to_unscaled();
        assert_eq!(back, p);
        assert!(p.to_scaled().scaled);
        assert!((p.dot(&p) - p.to_scaled().dot(&p)).abs() < 1e-12);
    }

    #[test]
    fn frobenius_magnitude() {
        let g = GridSpec::new(2, 2, 1.0).unwrap();
        let p = SymTensorField::new(
            ScalarField::constant(g, 1.0),
            ScalarField::constant(g, 2.0),
            ScalarField::constant(g, 3.0),
        )
        .unwrap();
        let mag = p.magnitude();
        assert!((mag.get(0, 0) - (1.0f64 + 8.0 + 9.0).sqrt()).abs() < 1e-15);
        assert_eq!(p.to_scaled().magnitude(), mag);
    }
}
