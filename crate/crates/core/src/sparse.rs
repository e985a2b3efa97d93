//! Assembled sparse operators (CSR) and direct factorizations.

use std::fmt::Write as _;
use std::io::Write as _;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, Lu, SymbolicLlt};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Mat, Side};

use crate::error::{Result, TgvError};

/// Boundary treatment an operator was assembled with.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    /// Out-of-range pixels read as zero.
    GhostZero,
    /// Out-of-range pixels copy the nearest in-range pixel.
    Neumann,
    /// Algebraic combination, no single stencil rule.
    Mixed,
}

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseOperator {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
    pub boundary: Boundary,
}

impl SparseOperator {
    /// Builds from `(row, col, value)` triples. Duplicates are summed and
    /// exact zeros dropped.
    pub fn from_triplets(rows: usize, cols: usize, mut trip: Vec<(usize, usize, f64)>, boundary: Boundary) -> Self {
        trip.sort_unstable_by_key(|t| (t.0, t.1));
        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(trip.len());
        let mut data: Vec<f64> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        let mut row_of = Vec::with_capacity(trip.len());
        for (r, c, v) in trip {
            assert!(r < rows && c < cols, "triplet ({r},{c}) out of {rows}x{cols}");
            if last == Some((r, c)) {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                data.push(v);
                row_of.push(r);
                last = Some((r, c));
            }
        }
        let mut ki = Vec::with_capacity(indices.len());
        let mut kd = Vec::with_capacity(indices.len());
        for k in 0..indices.len() {
            if data[k] != 0.0 {
                indptr[row_of[k] + 1] += 1;
                ki.push(indices[k]);
                kd.push(data[k]);
            }
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        SparseOperator { rows, cols, indptr, indices: ki, data: kd, boundary }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let n = d.len();
        let trip = d.iter().enumerate().map(|(k, &v)| (k, k, v)).collect();
        Self::from_triplets(n, n, trip, Boundary::Mixed)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_triplets(rows, cols, Vec::new(), Boundary::Mixed)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for r in 0..self.rows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                out.push((r, self.indices[k], self.data[k]));
            }
        }
        out
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.indptr[r]..self.indptr[r + 1]).map(move |k| (self.indices[k], self.data[k]))
    }

    /// Slot of entry `(r, c)` in the value array, if structurally present.
    pub fn position(&self, r: usize, c: usize) -> Option<usize> {
        let (lo, hi) = (self.indptr[r], self.indptr[r + 1]);
        self.indices[lo..hi].binary_search(&c).ok().map(|k| lo + k)
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Union of the sparsity patterns of `ops`, all stored values zero.
    pub fn pattern_union(ops: &[&SparseOperator]) -> Self {
        let (rows, cols) = (ops[0].rows, ops[0].cols);
        let mut trip = Vec::new();
        for op in ops {
            assert_eq!((op.rows, op.cols), (rows, cols), "pattern shapes differ");
            trip.extend(op.triplets().into_iter().map(|(r, c, _)| (r, c, 1.0)));
        }
        let mut out = Self::from_triplets(rows, cols, trip, Boundary::Mixed);
        out.data.iter_mut().for_each(|v| *v = 0.0);
        out
    }

    fn same_pattern(&self, other: &SparseOperator) -> bool {
        self.rows == other.rows && self.indptr == other.indptr && self.indices == other.indices
    }

    /// CSC view of the transpose, sharing storage.
    fn transpose_view(&self) -> SparseColMatRef<'_, usize, f64> {
        let sym = SymbolicSparseColMatRef::new_checked(self.cols, self.rows, &self.indptr, None, &self.indices);
        SparseColMatRef::new(sym, &self.data)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(cc, _)| cc == c).map_or(0.0, |(_, v)| v)
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "operand length mismatch");
        (0..self.rows).map(|r| self.row(r).map(|(c, v)| v * x[c]).sum()).collect()
    }

    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows, "operand length mismatch");
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            let yr = y[r];
            if yr != 0.0 {
                for (c, v) in self.row(r) {
                    out[c] += v * yr;
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let trip = self.triplets().into_iter().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_triplets(self.cols, self.rows, trip, self.boundary)
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// Row scaling `diag(d) * self`.
    pub fn scale_rows(&self, d: &[f64]) -> Self {
        assert_eq!(d.len(), self.rows);
        let mut out = self.clone();
        for r in 0..self.rows {
            for k in out.indptr[r]..out.indptr[r + 1] {
                out.data[k] *= d[r];
            }
        }
        out.drop_zeros()
    }

    /// Column scaling `self * diag(d)`.
    pub fn scale_cols(&self, d: &[f64]) -> Self {
        assert_eq!(d.len(), self.cols);
        let mut out = self.clone();
        for k in 0..out.data.len() {
            out.data[k] *= d[out.indices[k]];
        }
        out.drop_zeros()
    }

    fn drop_zeros(self) -> Self {
        let b = self.boundary;
        Self::from_triplets(self.rows, self.cols, self.triplets(), b)
    }

    fn check_same(&self, o: &SparseOperator) -> Result<()> {
        if self.rows != o.rows || self.cols != o.cols {
            return Err(TgvError::GridMismatch(format!(
                "operator shapes {}x{} and {}x{} differ",
                self.rows, self.cols, o.rows, o.cols
            )));
        }
        Ok(())
    }

    pub fn add(&self, o: &SparseOperator) -> Result<Self> {
        self.check_same(o)?;
        let mut t = self.triplets();
        t.extend(o.triplets());
        let b = if self.boundary == o.boundary { self.boundary } else { Boundary::Mixed };
        Ok(Self::from_triplets(self.rows, self.cols, t, b))
    }

    pub fn sub(&self, o: &SparseOperator) -> Result<Self> {
        self.add(&o.scale(-1.0))
    }

    /// Matrix product `self * o`.
    pub fn mul(&self, o: &SparseOperator) -> Result<Self> {
        if self.cols != o.rows {
            return Err(TgvError::GridMismatch(format!(
                "cannot compose {}x{} with {}x{}",
                self.rows, self.cols, o.rows, o.cols
            )));
        }
        let mut acc = vec![0.0; o.cols];
        let mut touched: Vec<usize> = Vec::new();
        let mut mark = vec![false; o.cols];
        let mut trip = Vec::new();
        for r in 0..self.rows {
            for (k, a) in self.row(r) {
                for (c, b) in o.row(k) {
                    if !mark[c] {
                        mark[c] = true;
                        touched.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            for &c in &touched {
                trip.push((r, c, acc[c]));
                acc[c] = 0.0;
                mark[c] = false;
            }
            touched.clear();
        }
        let b = if self.boundary == o.boundary { self.boundary } else { Boundary::Mixed };
        Ok(Self::from_triplets(self.rows, o.cols, trip, b))
    }

    /// Assembles a block matrix; `None` blocks are zero. Every block row must
    /// have at least one `Some` to fix its height, likewise every block column.
    pub fn block(blocks: &[Vec<Option<&SparseOperator>>]) -> Result<Self> {
        let br = blocks.len();
        let bc = blocks.first().map_or(0, |r| r.len());
        let mut heights = vec![None; br];
        let mut widths = vec![None; bc];
        for (i, row) in blocks.iter().enumerate() {
            if row.len() != bc {
                return Err(TgvError::GridMismatch("ragged block layout".into()));
            }
            for (j, b) in row.iter().enumerate() {
                if let Some(b) = b {
                    for (slot, v) in [(&mut heights[i], b.rows), (&mut widths[j], b.cols)] {
                        match *slot {
                            None => *slot = Some(v),
                            Some(w) if w != v => return Err(TgvError::GridMismatch("block sizes disagree".into())),
                            _ => {}
                        }
                    }
                }
            }
        }
        let heights: Vec<usize> = heights
            .into_iter()
            .map(|h| h.ok_or_else(|| TgvError::GridMismatch("empty block row".into())))
            .collect::<Result<_>>()?;
        let widths: Vec<usize> = widths
            .into_iter()
            .map(|w| w.ok_or_else(|| TgvError::GridMismatch("empty block column".into())))
            .collect::<Result<_>>()?;
        let mut trip = Vec::new();
        let mut r0 = 0;
        for (i, row) in blocks.iter().enumerate() {
            let mut c0 = 0;
            for (j, b) in row.iter().enumerate() {
                if let Some(b) = b {
                    trip.extend(b.triplets().into_iter().map(|(r, c, v)| (r + r0, c + c0, v)));
                }
                c0 += widths[j];
            }
            r0 += heights[i];
        }
        Ok(Self::from_triplets(heights.iter().sum(), widths.iter().sum(), trip, Boundary::Mixed))
    }

    /// Exact structural and numerical symmetry.
    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols && *self == self.transpose_with_boundary(self.boundary)
    }

    fn transpose_with_boundary(&self, b: Boundary) -> Self {
        let mut t = self.transpose();
        t.boundary = b;
        t
    }

    /// Largest absolute entry of `self - self^T`.
    pub fn asymmetry(&self) -> f64 {
        let t = self.transpose();
        match self.sub(&t) {
            Ok(d) => d.data.iter().fold(0.0, |a, v| a.max(v.abs())),
            Err(_) => f64::INFINITY,
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|r| self.row(r).map(|(_, v)| v).sum()).collect()
    }

    /// Dense row-major copy. Intended for small test problems.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.cols]; self.rows];
        for (r, c, v) in self.triplets() {
            d[r][c] = v;
        }
        d
    }

    /// Text dump: one `row col value` line per stored entry.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for (r, c, v) in self.triplets() {
            let _ = writeln!(s, "{r} {c} {v:.17e}");
        }
        s
    }

    pub fn write_dump(&self, path: &std::path::Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(self.dump().as_bytes())?;
        Ok(())
    }
}

/// Pins faer to sequential kernels so that every solve runs on one thread
/// and repeats bit for bit. Parallelism lives one level up, across solves.
fn sequential() {
    static ONCE: std::sync::Once = std::sync::Once::new();
    ONCE.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
}

/// Symbolic Cholesky analysis reused across matrices sharing one pattern.
pub struct CholeskyPlan {
    pattern: SparseOperator,
    symbolic: SymbolicLlt<usize>,
}

impl CholeskyPlan {
    /// Analyses the pattern of a symmetric operator.
    pub fn new(a: &SparseOperator) -> Result<Self> {
        if a.rows != a.cols {
            return Err(TgvError::Solver("cholesky needs a square matrix".into()));
        }
        sequential();
        let symbolic = SymbolicLlt::try_new(a.transpose_view().symbolic(), Side::Lower)
            .map_err(|e| TgvError::Solver(format!("symbolic analysis failed: {e:?}")))?;
        Ok(CholeskyPlan { pattern: a.clone(), symbolic })
    }

    /// Numeric Cholesky of a symmetric `a`; falls back to a fresh
    /// factorization (LU if needed) when the pattern differs or `a` is not
    /// numerically positive definite.
    pub fn factor(&self, a: &SparseOperator) -> Result<Factorization> {
        if a.same_pattern(&self.pattern) {
            if let Ok(f) = Llt::try_new_with_symbolic(self.symbolic.clone(), a.transpose_view(), Side::Lower) {
                return Ok(Factorization::Cholesky(f));
            }
        }
        Factorization::spd_or_lu(a)
    }
}

/// Sparse direct factorization of a square operator.
pub enum Factorization {
    Cholesky(Llt<usize, f64>),
    Lu(Lu<usize, f64>),
}

impl Factorization {
    /// Cholesky factorization; the operator must be symmetric positive definite.
    pub fn cholesky(a: &SparseOperator) -> Result<Self> {
        if a.rows != a.cols {
            return Err(TgvError::Solver("cholesky needs a square matrix".into()));
        }
        sequential();
        let t = a.transpose();
        t.transpose_view()
            .sp_cholesky(Side::Lower)
            .map(Factorization::Cholesky)
            .map_err(|e| TgvError::Solver(format!("cholesky failed: {e:?}")))
    }

    /// LU factorization with partial pivoting.
    pub fn lu(a: &SparseOperator) -> Result<Self> {
        if a.rows != a.cols {
            return Err(TgvError::Solver("lu needs a square matrix".into()));
        }
        sequential();
        let t = a.transpose();
        t.transpose_view().sp_lu().map(Factorization::Lu).map_err(|e| TgvError::Solver(format!("lu failed: {e:?}")))
    }

    /// Cholesky with an LU fallback when the matrix is not numerically SPD.
    pub fn spd_or_lu(a: &SparseOperator) -> Result<Self> {
        Self::cholesky(a).or_else(|_| Self::lu(a))
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let rhs = Mat::<f64>::from_fn(b.len(), 1, |i, _| b[i]);
        let x = match self {
            Factorization::Cholesky(f) => f.solve(&rhs),
            Factorization::Lu(f) => f.solve(&rhs),
        };
        collect(&x)
    }

    /// Solves with the transposed matrix.
    pub fn solve_transpose(&self, b: &[f64]) -> Result<Vec<f64>> {
        let rhs = Mat::<f64>::from_fn(b.len(), 1, |i, _| b[i]);
        let x = match self {
            Factorization::Cholesky(f) => f.solve(&rhs),
            Factorization::Lu(f) => f.solve_transpose(&rhs),
        };
        collect(&x)
    }
}

fn collect(x: &Mat<f64>) -> Result<Vec<f64>> {
    let v: Vec<f64> = (0..x.nrows()).map(|i| x[(i, 0)]).collect();
    if v.iter().any(|t| !t.is_finite()) {
        return Err(TgvError::Solver("solution contains non-finite values".into()));
    }
    Ok(v)
}
