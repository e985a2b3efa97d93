//! Finite-difference operators.
//!
//! Two families live here:
//!
//! * the `V_h`/`W_h` side used by the dual solver, where every out-of-range
//!   value is zero (`Boundary::GhostZero`);
//! * the primal side used by the primal-dual solver and the weight
//!   regularization, with forward differences and replicated boundary values
//!   (`Boundary::Neumann`).
//!
//! Tensor fields are stacked as `[p11; p12; p22]`, vector fields as `[w1; w2]`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::field::GridSpec;
use crate::sparse::{Boundary, CholeskyPlan, SparseOperator};

/// Stencil entry `(di, dj, coefficient)`; `di` runs along rows (`x`).
pub type Stencil = [(i64, i64, f64)];

/// Applies the same stencil at every pixel, dropping out-of-range taps.
pub fn stencil_operator(grid: &GridSpec, st: &Stencil, scale: f64) -> SparseOperator {
    let (n, m) = (grid.n as i64, grid.m as i64);
    let mut trip = Vec::with_capacity(grid.len() * st.len());
    for i in 0..n {
        for j in 0..m {
            let r = (i * m + j) as usize;
            for &(di, dj, c) in st {
                let (ii, jj) = (i + di, j + dj);
                if ii >= 0 && ii < n && jj >= 0 && jj < m {
                    trip.push((r, (ii * m + jj) as usize, c * scale));
                }
            }
        }
    }
    SparseOperator::from_triplets(grid.len(), grid.len(), trip, Boundary::GhostZero)
}

pub const D_XX: [(i64, i64, f64); 3] = [(-1, 0, 1.0), (0, 0, -2.0), (1, 0, 1.0)];
pub const D_YY: [(i64, i64, f64); 3] = [(0, -1, 1.0), (0, 0, -2.0), (0, 1, 1.0)];
pub const D_XY: [(i64, i64, f64); 7] =
    [(0, 0, 1.0), (0, -1, -0.5), (0, 1, -0.5), (-1, 0, -0.5), (1, 0, -0.5), (-1, -1, 0.5), (1, 1, 0.5)];
pub const BILAP: [(i64, i64, f64); 13] = [
    (0, 0, 20.0),
    (-1, 0, -8.0),
    (1, 0, -8.0),
    (0, -1, -8.0),
    (0, 1, -8.0),
    (-1, -1, 2.0),
    (-1, 1, 2.0),
    (1, -1, 2.0),
    (1, 1, 2.0),
    (-2, 0, 1.0),
    (2, 0, 1.0),
    (0, -2, 1.0),
    (0, 2, 1.0),
];
pub const D_XXXX: [(i64, i64, f64); 5] = [(-2, 0, 1.0), (-1, 0, -4.0), (0, 0, 6.0), (1, 0, -4.0), (2, 0, 1.0)];
pub const D_YYYY: [(i64, i64, f64); 5] = [(0, -2, 1.0), (0, -1, -4.0), (0, 0, 6.0), (0, 1, -4.0), (0, 2, 1.0)];
pub const D_YYXX: [(i64, i64, f64); 9] = [
    (0, 0, 4.0),
    (0, -1, -2.0),
    (0, 1, -2.0),
    (-1, 0, -2.0),
    (1, 0, -2.0),
    (-1, -1, 1.0),
    (-1, 1, 1.0),
    (1, -1, 1.0),
    (1, 1, 1.0),
];
pub const D_XXXY: [(i64, i64, f64); 13] = [
    (0, -1, 1.5),
    (0, 0, -3.0),
    (0, 1, 1.5),
    (-1, -1, -1.5),
    (-1, 0, 2.0),
    (-1, 1, -0.5),
    (1, -1, -0.5),
    (1, 0, 2.0),
    (1, 1, -1.5),
    (-2, -1, 0.5),
    (-2, 0, -0.5),
    (2, 0, -0.5),
    (2, 1, 0.5),
];
pub const D_XYYY: [(i64, i64, f64); 13] = [
    (0, -2, -0.5),
    (0, -1, 2.0),
    (0, 0, -3.0),
    (0, 1, 2.0),
    (0, 2, -0.5),
    (-1, -2, 0.5),
    (-1, -1, -1.5),
    (-1, 0, 1.5),
    (-1, 1, -0.5),
    (1, -1, -0.5),
    (1, 0, 1.5),
    (1, 1, -1.5),
    (1, 2, 0.5),
];

pub fn dxx(g: &GridSpec) -> SparseOperator {
    stencil_operator(g, &D_XX, 1.0 / g.cell())
}

pub fn dyy(g: &GridSpec) -> SparseOperator {
    stencil_operator(g, &D_YY, 1.0 / g.cell())
}

pub fn dxy(g: &GridSpec) -> SparseOperator {
    stencil_operator(g, &D_XY, 1.0 / g.cell())
}

fn h4(g: &GridSpec) -> f64 {
    1.0 / (g.cell() * g.cell())
}

pub fn dxxxx(g: &GridSpec) -> SparseOperator {
    stencil_operator(g, &D_XXXX, h4(g))
}

pub fn dyyyy(g: &GridSpec) -> SparseOperator {
    stencil_operator(g, &D_YYYY, h4(g))
}

pub fn dyyxx(g: &GridSpec) -> SparseOperator {
    stencil_operator(g, &D_YYXX, h4(g))
}

pub fn dxxxy(g: &GridSpec) -> SparseOperator {
    stencil_operator(g, &D_XXXY, h4(g))
}

pub fn dxyyy(g: &GridSpec) -> SparseOperator {
    stencil_operator(g, &D_XYYY, h4(g))
}

/// Scalar 13-point bi-Laplacian with zero ghost values.
pub fn bilaplacian(g: &GridSpec) -> SparseOperator {
    stencil_operator(g, &BILAP, h4(g))
}

/// Componentwise bi-Laplacian on `V_h`. In scaled storage the middle block
/// carries a factor one half.
pub fn bilaplacian_tensor(g: &GridSpec, scaled: bool) -> SparseOperator {
    let b = bilaplacian(g);
    let mid = if scaled { b.scale(0.5) } else { b.clone() };
    let mut out =
        SparseOperator::block(&[vec![Some(&b), None, None], vec![None, Some(&mid), None], vec![None, None, Some(&b)]])
            .expect("square blocks");
    out.boundary = Boundary::GhostZero;
    out
}

fn with_boundary(mut op: SparseOperator, b: Boundary) -> SparseOperator {
    op.boundary = b;
    op
}

/// Backward difference along rows with zero ghost values, scaled by `1/h`.
fn backward_x(g: &GridSpec) -> SparseOperator {
    stencil_operator(g, &[(0, 0, 1.0), (-1, 0, -1.0)], 1.0 / g.h)
}

fn backward_y(g: &GridSpec) -> SparseOperator {
    stencil_operator(g, &[(0, 0, 1.0), (0, -1, -1.0)], 1.0 / g.h)
}

/// `div: V_h -> W_h` on unscaled tensors.
pub fn divergence(g: &GridSpec) -> SparseOperator {
    let (bx, by) = (backward_x(g), backward_y(g));
    with_boundary(
        SparseOperator::block(&[vec![Some(&bx), Some(&by), None], vec![None, Some(&bx), Some(&by)]])
            .expect("consistent blocks"),
        Boundary::GhostZero,
    )
}

/// `grad = -div^T: W_h -> V_h`.
pub fn gradient(g: &GridSpec) -> SparseOperator {
    divergence(g).transpose().scale(-1.0)
}

/// `grad^2 = (Dxx, Dxy, Dyy): U_h -> V_h`.
pub fn second_gradient(g: &GridSpec) -> SparseOperator {
    let (a, b, c) = (dxx(g), dxy(g), dyy(g));
    with_boundary(
        SparseOperator::block(&[vec![Some(&a)], vec![Some(&b)], vec![Some(&c)]]).expect("consistent blocks"),
        Boundary::GhostZero,
    )
}

/// `div^2 p = Dxx p11 + 2 Dxy p12 + Dyy p22`; with `scaled` the operand is
/// `(p11, 2 p12, p22)` and the factor two is absorbed.
pub fn second_divergence(g: &GridSpec, scaled: bool) -> SparseOperator {
    let (a, c) = (dxx(g), dyy(g));
    let b = if scaled { dxy(g) } else { dxy(g).scale(2.0) };
    with_boundary(
        SparseOperator::block(&[vec![Some(&a), Some(&b), Some(&c)]]).expect("consistent blocks"),
        Boundary::GhostZero,
    )
}

/// Fourth-order block operator `grad^2 div^2` assembled from the dedicated
/// stencils. Scaled storage drops the factor two on the middle column, which
/// makes the matrix symmetric.
pub fn grad2_div2(g: &GridSpec, scaled: bool) -> SparseOperator {
    let xxxx = dxxxx(g);
    let yyyy = dyyyy(g);
    let xxyy = dyyxx(g);
    let xxxy = dxxxy(g);
    let xyyy = dxyyy(g);
    let f = if scaled { 1.0 } else { 2.0 };
    let (xxxy2, xxyy2, xyyy2) = (xxxy.scale(f), xxyy.scale(f), xyyy.scale(f));
    with_boundary(
        SparseOperator::block(&[
            vec![Some(&xxxx), Some(&xxxy2), Some(&xxyy)],
            vec![Some(&xxxy), Some(&xxyy2), Some(&xyyy)],
            vec![Some(&xxyy), Some(&xyyy2), Some(&yyyy)],
        ])
        .expect("consistent blocks"),
        Boundary::GhostZero,
    )
}

/// Forward difference along rows; zero on the last row (replicated ghost).
pub fn forward_x(g: &GridSpec) -> SparseOperator {
    let (n, m) = (g.n, g.m);
    let mut t = Vec::with_capacity(2 * g.len());
    for i in 0..n - 1 {
        for j in 0..m {
            let r = g.idx(i, j);
            t.push((r, r, -1.0 / g.h));
            t.push((r, g.idx(i + 1, j), 1.0 / g.h));
        }
    }
    SparseOperator::from_triplets(g.len(), g.len(), t, Boundary::Neumann)
}

/// Forward difference along columns; zero on the last column.
pub fn forward_y(g: &GridSpec) -> SparseOperator {
    let (n, m) = (g.n, g.m);
    let mut t = Vec::with_capacity(2 * g.len());
    for i in 0..n {
        for j in 0..m - 1 {
            let r = g.idx(i, j);
            t.push((r, r, -1.0 / g.h));
            t.push((r, g.idx(i, j + 1), 1.0 / g.h));
        }
    }
    SparseOperator::from_triplets(g.len(), g.len(), t, Boundary::Neumann)
}

/// Primal gradient `U_h -> W_h`, forward differences.
pub fn primal_gradient(g: &GridSpec) -> SparseOperator {
    let (fx, fy) = (forward_x(g), forward_y(g));
    with_boundary(
        SparseOperator::block(&[vec![Some(&fx)], vec![Some(&fy)]]).expect("consistent blocks"),
        Boundary::Neumann,
    )
}

/// Primal divergence `-grad^T: W_h -> U_h`.
pub fn primal_divergence(g: &GridSpec) -> SparseOperator {
    primal_gradient(g).transpose().scale(-1.0)
}

/// Five-point Laplacian with replicated ghost values, `-grad^T grad`.
pub fn neumann_laplacian(g: &GridSpec) -> SparseOperator {
    let (fx, fy) = (forward_x(g), forward_y(g));
    let lx = fx.transpose().mul(&fx).expect("square");
    let ly = fy.transpose().mul(&fy).expect("square");
    with_boundary(lx.add(&ly).expect("same shape").scale(-1.0), Boundary::Neumann)
}

/// Componentwise Neumann Laplacian on `W_h`.
pub fn neumann_laplacian_vec(g: &GridSpec) -> SparseOperator {
    let l = neumann_laplacian(g);
    with_boundary(
        SparseOperator::block(&[vec![Some(&l), None], vec![None, Some(&l)]]).expect("square"),
        Boundary::Neumann,
    )
}

/// Symmetrized gradient `E w = (dx w1, (dy w1 + dx w2)/2, dy w2)`.
pub fn sym_gradient(g: &GridSpec) -> SparseOperator {
    let (fx, fy) = (forward_x(g), forward_y(g));
    let (hx, hy) = (fx.scale(0.5), fy.scale(0.5));
    with_boundary(
        SparseOperator::block(&[vec![Some(&fx), None], vec![Some(&hy), Some(&hx)], vec![None, Some(&fy)]])
            .expect("consistent blocks"),
        Boundary::Neumann,
    )
}

/// Adjoint of `E` for the Frobenius pairing on `V_h`: `E^T diag(1, 2, 1)`.
pub fn sym_gradient_adjoint(g: &GridSpec) -> SparseOperator {
    let n = g.len();
    let mut wts = vec![1.0; 3 * n];
    wts[n..2 * n].iter_mut().for_each(|v| *v = 2.0);
    sym_gradient(g).transpose().scale_cols(&wts)
}

/// Dual-side operators for one grid, in scaled tensor storage.
pub struct DualOps {
    pub grid: GridSpec,
    /// `div` acting on scaled tensors `(p11, 2 p12, p22)`.
    pub div_s: SparseOperator,
    /// `div^2` acting on scaled tensors.
    pub div2_s: SparseOperator,
    /// `(bilap, bilap/2, bilap)`.
    pub bilap_s: SparseOperator,
    /// `div2_s^T div2_s`, the exact fidelity Hessian.
    pub k_t_k: SparseOperator,
    pub lap_n: SparseOperator,
    pub(crate) hessian: HessianLayout,
}

/// Fixed sparsity layout of the dual Newton matrix
/// `beta B + K^T K + diag + div_s^T diag(c) div_s`.
pub(crate) struct HessianLayout {
    pub pattern: SparseOperator,
    pub bilap_pos: Vec<usize>,
    pub ktk_pos: Vec<usize>,
    pub diag_pos: Vec<usize>,
    /// Per row `r` of `div_s`, the `(slot, a_ri a_rj)` contributions.
    pub pen_ptr: Vec<usize>,
    pub pen: Vec<(usize, f64)>,
    pub plan: CholeskyPlan,
}

impl HessianLayout {
    fn new(bilap_s: &SparseOperator, k_t_k: &SparseOperator, div_s: &SparseOperator) -> Self {
        let dim = bilap_s.rows();
        let eye = SparseOperator::identity(dim);
        let dtd = div_s.transpose().mul(div_s).expect("shapes agree");
        let pattern = SparseOperator::pattern_union(&[bilap_s, k_t_k, &eye, &dtd]);
        let slots = |op: &SparseOperator| -> Vec<usize> {
            op.triplets().into_iter().map(|(r, c, _)| pattern.position(r, c).expect("in union")).collect()
        };
        let bilap_pos = slots(bilap_s);
        let ktk_pos = slots(k_t_k);
        let diag_pos = (0..dim).map(|k| pattern.position(k, k).expect("diagonal")).collect();
        let mut pen_ptr = vec![0];
        let mut pen = Vec::new();
        for r in 0..div_s.rows() {
            let row: Vec<(usize, f64)> = div_s.row(r).collect();
            for &(i, a) in &row {
                for &(j, b) in &row {
                    pen.push((pattern.position(i, j).expect("in union"), a * b));
                }
            }
            pen_ptr.push(pen.len());
        }
        let plan = CholeskyPlan::new(&pattern).expect("square pattern");
        HessianLayout { pattern, bilap_pos, ktk_pos, diag_pos, pen_ptr, pen, plan }
    }
}

impl DualOps {
    pub fn new(grid: GridSpec) -> Self {
        let n = grid.len();
        let mut half = vec![1.0; 3 * n];
        half[n..2 * n].iter_mut().for_each(|v| *v = 0.5);
        let div_s = divergence(&grid).scale_cols(&half);
        let div2_s = second_divergence(&grid, true);
        let k_t_k = div2_s.transpose().mul(&div2_s).expect("shapes agree");
        let bilap_s = bilaplacian_tensor(&grid, true);
        let hessian = HessianLayout::new(&bilap_s, &k_t_k, &div_s);
        DualOps { grid, div_s, div2_s, bilap_s, k_t_k, lap_n: neumann_laplacian(&grid), hessian }
    }
}

/// Primal-side operators for one grid.
pub struct PrimalOps {
    pub grid: GridSpec,
    pub grad: SparseOperator,
    pub sym: SparseOperator,
    pub sym_adj: SparseOperator,
    pub lap_n: SparseOperator,
    pub lap_n_vec: SparseOperator,
}

impl PrimalOps {
    pub fn new(grid: GridSpec) -> Self {
        PrimalOps {
            grid,
            grad: primal_gradient(&grid),
            sym: sym_gradient(&grid),
            sym_adj: sym_gradient_adjoint(&grid),
            lap_n: neumann_laplacian(&grid),
            lap_n_vec: neumann_laplacian_vec(&grid),
        }
    }
}

type Key = (usize, usize, u64);

fn key(g: &GridSpec) -> Key {
    (g.n, g.m, g.h.to_bits())
}

static DUAL_CACHE: OnceLock<Mutex<HashMap<Key, Arc<DualOps>>>> = OnceLock::new();
static PRIMAL_CACHE: OnceLock<Mutex<HashMap<Key, Arc<PrimalOps>>>> = OnceLock::new();

/// Cached dual-side operators; assembled on first use per grid.
pub fn dual_ops(g: &GridSpec) -> Arc<DualOps> {
    let cache = DUAL_CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(ops) = cache.lock().expect("cache lock").get(&key(g)) {
        return ops.clone();
    }
    let ops = Arc::new(DualOps::new(*g));
    cache.lock().expect("cache lock").entry(key(g)).or_insert(ops).clone()
}

/// Cached primal-side operators.
pub fn primal_ops(g: &GridSpec) -> Arc<PrimalOps> {
    let cache = PRIMAL_CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(ops) = cache.lock().expect("cache lock").get(&key(g)) {
        return ops.clone();
    }
    let ops = Arc::new(PrimalOps::new(*g));
    cache.lock().expect("cache lock").entry(key(g)).or_insert(ops).clone()
}
