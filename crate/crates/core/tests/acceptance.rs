//! Acceptance suite. Prints one line per criterion and exits nonzero when a
//! criterion fails that is not listed in `KNOWN_FAILURES`.
//!
//! Run a subset with `cargo test --test acceptance -- 1 4 7`.

mod common;

use std::path::Path;
use std::time::Instant;

use rand::Rng;

use common::*;
use tgv_core::bilevel_dual::{reduced_derivatives_dual, reduced_objective_dual, solve_adjoint_dual, BilevelDualConfig};
use tgv_core::bilevel_pd::{
    reduced_derivatives_pd, reduced_objective_pd, run_bilevel_pd_tracked, solve_adjoint_pd, Alpha0Mode, BilevelPdConfig,
};
use tgv_core::gridsearch::{gridsearch, GridSolver};
use tgv_core::io::read_pgm;
use tgv_core::lower_dual::{dual_energy, dual_residual, solve_lower_dual, DualSolverConfig};
use tgv_core::lower_pd::{pd_newton_solve, PdSolverConfig};
use tgv_core::metrics::psnr;
use tgv_core::operators::{
    bilaplacian, divergence, dxx, dxxxx, dyy, dyyxx, dyyyy, gradient, primal_divergence, primal_gradient,
    second_divergence, second_gradient, sym_gradient, sym_gradient_adjoint,
};
use tgv_core::smoothing::{
    box_penalty, box_penalty_da, box_penalty_dx, box_penalty_dxa, box_penalty_dxx, g_delta, g_delta_prime,
    g_delta_second, huber_scalar, huber_scalar_prime, SmoothMax, Weight,
};
use tgv_core::synth::{add_gaussian_noise, make_phantom, PhantomKind};
use tgv_core::upper::{sigma_corridor, CorridorSpec};
use tgv_core::{GridMode, GridSpec, ScalarField, SymTensorField};

/// Criteria whose failure is understood and written up in the README.
const KNOWN_FAILURES: &[u32] = &[11, 12];

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn frob(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() / 3;
    a.iter().zip(b).enumerate().map(|(k, (x, y))| if k / n == 1 { 2.0 * x * y } else { x * y }).sum()
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&d) / norm(b).max(f64::MIN_POSITIVE)
}

// Independent loop versions of the first-order stencils.

/// Forward difference with replicated ghost values, `h = 1`.
fn loop_forward(u: &[f64], n: usize, m: usize, along_rows: bool) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            let (ii, jj) = if along_rows { (i + 1, j) } else { (i, j + 1) };
            if ii < n && jj < m {
                out[i * m + j] = u[ii * m + jj] - u[i * m + j];
            }
        }
    }
    out
}

/// Backward difference with zero ghost values, `h = 1`.
fn loop_backward(u: &[f64], n: usize, m: usize, along_rows: bool) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            let prev = if along_rows {
                if i > 0 {
                    u[(i - 1) * m + j]
                } else {
                    0.0
                }
            } else if j > 0 {
                u[i * m + j - 1]
            } else {
                0.0
            };
            out[i * m + j] = u[i * m + j] - prev;
        }
    }
    out
}

fn criterion_1() -> Outcome {
    let (n, m) = (16, 16);
    let g = GridSpec::new(n, m, 1.0).unwrap();
    let len = g.len();
    let mut r = rng(101);
    let (grad_p, div_p) = (primal_gradient(&g), primal_divergence(&g));
    let (grad_d, div_d) = (gradient(&g), divergence(&g));
    let (g2, d2) = (second_gradient(&g), second_divergence(&g, false));
    let (e, es) = (sym_gradient(&g), sym_gradient_adjoint(&g));
    let mut worst = [0.0f64; 4];
    let mut stencil_err = 0.0f64;
    for _ in 0..20 {
        let u = random_vec(&mut r, len);
        let v = random_vec(&mut r, 2 * len);
        let w = random_vec(&mut r, 2 * len);
        let p = random_vec(&mut r, 3 * len);

        worst[0] = worst[0].max((dot(&grad_p.apply(&u), &v) + dot(&u, &div_p.apply(&v))).abs());
        worst[1] = worst[1].max((dot(&grad_d.apply(&w), &p) + dot(&w, &div_d.apply(&p))).abs());
        worst[2] = worst[2].max((frob(&g2.apply(&u), &p) - dot(&u, &d2.apply(&p))).abs());
        worst[3] = worst[3].max((frob(&e.apply(&w), &p) - dot(&w, &es.apply(&p))).abs());

        // The operators above agree with plain loops over the stencils.
        let mut want = loop_forward(&u, n, m, true);
        want.extend(loop_forward(&u, n, m, false));
        stencil_err = stencil_err.max(max_rel(&grad_p.apply(&u), &want));
        let (p11, p12, p22) = (&p[..len], &p[len..2 * len], &p[2 * len..]);
        let bx = |x: &[f64]| loop_backward(x, n, m, true);
        let by = |x: &[f64]| loop_backward(x, n, m, false);
        let mut want: Vec<f64> = bx(p11).iter().zip(by(p12)).map(|(a, b)| a + b).collect();
        want.extend(bx(p12).iter().zip(by(p22)).map(|(a, b)| a + b));
        stencil_err = stencil_err.max(max_rel(&div_d.apply(&p), &want));
        let (w1, w2) = (&w[..len], &w[len..]);
        let fx = |x: &[f64]| loop_forward(x, n, m, true);
        let fy = |x: &[f64]| loop_forward(x, n, m, false);
        let mut want = fx(w1);
        want.extend(fy(w1).iter().zip(fx(w2)).map(|(a, b)| 0.5 * (a + b)));
        want.extend(fy(w2));
        stencil_err = stencil_err.max(max_rel(&e.apply(&w), &want));
    }
    let err = worst.iter().cloned().fold(0.0, f64::max);
    verdict(
        err <= 1e-12 && stencil_err <= 1e-14,
        format!(
            "max |error| grad/div {:.1e}, tensor grad/div {:.1e}, grad2/div2 {:.1e}, E/E* {:.1e}; stencils vs loops {:.1e}",
            worst[0], worst[1], worst[2], worst[3], stencil_err
        ),
    )
}

fn criterion_2() -> Outcome {
    let g = GridSpec::dual(16, 16).unwrap();
    let h4 = g.h.powi(4);
    let b = bilaplacian(&g);
    let mut delta = vec![0.0; g.len()];
    delta[g.idx(8, 8)] = 1.0;
    let center = b.apply(&delta)[g.idx(8, 8)] * h4;

    let parts = dxxxx(&g).add(&dyyyy(&g)).unwrap().add(&dyyxx(&g).scale(2.0)).unwrap();
    let lap = dxx(&g).add(&dyy(&g)).unwrap();
    let mut r = rng(202);
    let (mut split_err, mut square_err) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let u = random_vec(&mut r, g.len());
        let bu = b.apply(&u);
        split_err = split_err.max(max_rel(&parts.apply(&u), &bu));
        // Away from the boundary the 13-point stencil is the five-point Laplacian squared.
        let ll = lap.apply(&lap.apply(&u));
        let inner = |v: &[f64]| -> Vec<f64> {
            (0..g.len()).filter(|&k| (2..14).contains(&(k / 16)) && (2..14).contains(&(k % 16))).map(|k| v[k]).collect()
        };
        square_err = square_err.max(max_rel(&inner(&bu), &inner(&ll)));
    }
    verdict(
        (center - 20.0).abs() <= 1e-12 * 20.0 && split_err <= 1e-12 && square_err <= 1e-12,
        format!("center h^4 * coeff = {center}; split rel {split_err:.1e}; interior Lap^2 rel {square_err:.1e}"),
    )
}

fn criterion_3() -> Outcome {
    let (gamma, delta) = (1e-2, 1e-3);
    let sm = SmoothMax::new(gamma, delta).unwrap();
    // One-ulp steps across a junction, minus what a function with local
    // Lipschitz bound `lip` may change over that step.
    let mut jump = 0.0f64;
    let mut at = |f: &dyn Fn(f64) -> f64, x: f64, lip: f64| {
        let scale = f(x).abs().max(1.0);
        for y in [x.next_down(), x.next_up()] {
            let excess = ((f(y) - f(x)).abs() - (y - x).abs() * lip).max(0.0);
            jump = jump.max(excess / scale);
        }
    };
    at(&|r| huber_scalar(r, gamma), gamma, 1.0);
    at(&|r| huber_scalar_prime(r, gamma), gamma, 1.0 / gamma);
    for t in [0.0, delta] {
        at(&|x| g_delta(x, delta), t, 1.0);
        at(&|x| g_delta_prime(x, delta), t, 1.0);
        at(&|x| g_delta_second(x, delta), t, 1.0 / delta);
    }
    for r in [gamma - 0.5 * delta, gamma + 0.5 * delta] {
        at(&|x| sm.value(x), r, 1.0);
        at(&|x| sm.deriv(x), r, 1.0 / delta);
        at(&|x| sm.potential(x), r, 1.0);
    }
    let a = 0.3;
    for x in [a, -a, a + delta, -a - delta] {
        at(&|y| box_penalty(y, a, delta), x, 1.0);
        at(&|y| box_penalty_dx(y, a, delta), x, 1.0);
        at(&|y| box_penalty_dxx(y, a, delta), x, 1.0 / delta);
    }

    let mut fd = 0.0f64;
    let mut check = |f: &dyn Fn(f64) -> f64, df: &dyn Fn(f64) -> f64, x: f64, t: f64| {
        let c = (f(x + t) - f(x - t)) / (2.0 * t);
        fd = fd.max((c - df(x)).abs() / df(x).abs().max(1e-300));
    };
    for r in [0.3 * gamma, 0.9 * gamma, 2.0 * gamma, 10.0] {
        check(&|x| huber_scalar(x, gamma), &|x| huber_scalar_prime(x, gamma), r, 1e-7 * r);
    }
    for t in [0.2 * delta, 0.7 * delta, 3.0 * delta, 0.5] {
        check(&|x| g_delta(x, delta), &|x| g_delta_prime(x, delta), t, 1e-6 * t);
        check(&|x| g_delta_prime(x, delta), &|x| g_delta_second(x, delta), t, 1e-6 * t);
    }
    for r in [gamma - 0.3 * delta, gamma + 0.2 * delta, 2.0 * gamma] {
        check(&|x| sm.value(x), &|x| sm.deriv(x), r, 1e-6 * delta);
    }
    for r in [0.5 * gamma, gamma - 0.4 * delta, gamma + 0.1 * delta, gamma + 0.45 * delta, 3.0 * gamma] {
        check(&|x| sm.potential(x), &|x| x / sm.value(x), r, 1e-6 * delta);
    }
    for x in [a + 0.4 * delta, -a - 0.6 * delta, a + 5.0 * delta, -a - 2.0] {
        check(&|y| box_penalty(y, a, delta), &|y| box_penalty_dx(y, a, delta), x, 1e-8);
        check(&|y| box_penalty_dx(y, a, delta), &|y| box_penalty_dxx(y, a, delta), x, 1e-8);
        check(&|b| box_penalty(x, b, delta), &|b| box_penalty_da(x, b, delta), a, 1e-8);
        check(&|b| box_penalty_dx(x, b, delta), &|b| box_penalty_dxa(x, b, delta), a, 1e-8);
    }
    verdict(
        jump <= 4.0 * f64::EPSILON && fd <= 1e-6,
        format!("largest jump at a junction {jump:.1e}; derivative vs central difference rel {fd:.1e}"),
    )
}

fn criterion_4() -> Outcome {
    let g = GridSpec::dual(8, 8).unwrap();
    let n = g.len();
    let h2 = g.cell();
    let mut r = rng(404);
    let mut worst = 0.0f64;
    for inst in 0..3 {
        let f = random_field(&mut r, g).map(|v| 0.5 + 0.5 * v);
        let a0 = Weight::Scalar(5e-3);
        let a1 = random_field(&mut r, g).map(|v| 2e-2 * (1.2 + v));
        let eps = [1e-2, 1e-4, 1e-6][inst];
        let cfg = DualSolverConfig { eps0_final: eps, eps1_final: eps, ..Default::default() };
        // Random tensor of the size of the boxes, so that both penalties are active somewhere.
        let pv: Vec<f64> = random_vec(&mut r, 3 * n).iter().map(|v| 8e-3 * v).collect();
        let p = SymTensorField::from_slice(g, &pv, false);
        let res = dual_residual(&p, &f, &a0, &a1, &cfg).to_vec();
        let mut fd = vec![0.0; 3 * n];
        for k in 0..3 * n {
            let t = 1e-7 * pv[k].abs().max(1e-4);
            let e = |s: f64| {
                let mut q = pv.clone();
                q[k] += s;
                dual_energy(&SymTensorField::from_slice(g, &q, false), &f, &a0, &a1, &cfg)
            };
            // dE/dp_c = h^2 w_c R_c with Frobenius weights w = (1, 2, 1).
            let w = if k / n == 1 { 2.0 } else { 1.0 };
            fd[k] = central(e, t) / (h2 * w);
        }
        worst = worst.max(max_rel(&res, &fd));
    }
    verdict(worst <= 1e-6, format!("3 random 8x8 instances (eps 1e-2, 1e-4, 1e-6), rel l2 {worst:.1e}"))
}

fn noisy_phantom(n: usize, mode: GridMode, seed: u64) -> (ScalarField, ScalarField) {
    let g = GridSpec::with_mode(n, n, mode).unwrap();
    let truth = make_phantom(PhantomKind::PiecewiseAffine, g);
    let f = add_gaussian_noise(&truth, 0.01, seed).unwrap();
    (truth, f)
}

fn criterion_5() -> Outcome {
    let (_, f) = noisy_phantom(32, GridMode::PrimalDual, 0);
    let g = *f.grid();
    let cfg = PdSolverConfig::default();
    match pd_newton_solve(&f, &Weight::Scalar(0.2), &ScalarField::constant(g, 0.25), &cfg, None) {
        Ok(s) => {
            let last = *s.history.last().unwrap();
            let ok = last.iter().all(|v| *v <= 1e-4) && s.iterations <= 20;
            verdict(
                ok,
                format!(
                    "{} Newton iterations, final residual norms {:.1e} {:.1e} {:.1e} {:.1e}",
                    s.iterations, last[0], last[1], last[2], last[3]
                ),
            )
        }
        Err(e) => Outcome::Fail(format!("solver error: {e}")),
    }
}

fn criterion_6() -> Outcome {
    let n = 32;
    let (a0, a1) = (0.2, 0.1);
    let (_, f) = noisy_phantom(n, GridMode::PrimalDual, 3);
    let gp = *f.grid();
    let pd = match pd_newton_solve(
        &f,
        &Weight::Scalar(a0),
        &ScalarField::constant(gp, a1),
        &PdSolverConfig::default(),
        None,
    ) {
        Ok(s) => s.state.u,
        Err(e) => return Outcome::Fail(format!("primal-dual solve: {e}")),
    };
    let gd = GridSpec::dual(n, n).unwrap();
    let fd = f.regrid(gd).unwrap();
    let h = gd.h;
    let dual = match solve_lower_dual(
        &fd,
        &Weight::Scalar(a0 * h * h),
        &ScalarField::constant(gd, a1 * h),
        &DualSolverConfig::default(),
    ) {
        Ok(s) => s.image(&fd).regrid(gp).unwrap(),
        Err(e) => return Outcome::Fail(format!("dual solve: {e}")),
    };
    let e_pd = rel_l2(&pd, &tgv_oracle_primal_discretization(&f, a0, a1));
    let e_dual = rel_l2(&dual, &tgv_oracle_dual_discretization(&f, a0, a1));
    verdict(e_pd <= 2e-2 && e_dual <= 2e-2, format!("rel l2 to oracle: dual {e_dual:.2e}, primal-dual {e_pd:.2e}"))
}

fn criterion_7() -> Outcome {
    let (lo, hi) = sigma_corridor(0.01, 7).unwrap();
    let round5 = |v: f64| (v * 1e5).round() / 1e5;
    verdict(round5(lo) == 0.00798 && round5(hi) == 0.01202, format!("corridor ({lo:.7}, {hi:.7})"))
}

fn criterion_8() -> Outcome {
    let n = 16;
    let spec = CorridorSpec::new(0.01, 7).unwrap();
    let mut r = rng(808);
    let t = 1e-4;
    let mut worst = [0.0f64; 3];

    let (_, f) = noisy_phantom(n, GridMode::Dual, 4);
    let g = *f.grid();
    let h = g.h;
    let cfg = BilevelDualConfig::default();
    let a0 = 0.2 * h * h;
    let a1 = ScalarField::from_fn(g, |i, j| 0.25 * h * (1.0 + 0.1 * ((i + 2 * j) as f64).sin()));
    let ev = match reduced_objective_dual(&f, a0, &a1, &cfg, &spec) {
        Ok(ev) => ev,
        Err(e) => return Outcome::Fail(format!("dual lower solve: {e}")),
    };
    let p = &ev.solution.p;
    let adj = solve_adjoint_dual(p, &Weight::Scalar(a0), &a1, &f, &cfg.lower, &spec).unwrap();
    let (d0, d1) = reduced_derivatives_dual(p, &adj, a0, &a1, &cfg);
    for _ in 0..5 {
        let e0 = a0 * r.random_range(-1.0..1.0);
        let e1 = random_field(&mut r, g).zip_map(&a1, |x, a| x * a);
        let predicted = d0 * e0 + dot(d1.values(), e1.values());
        let j =
            |s: f64| reduced_objective_dual(&f, a0 + s * e0, &a1.add(&e1.scale(s)), &cfg, &spec).unwrap().value.total;
        let fd = central(j, t);
        worst[0] = worst[0].max((predicted - fd).abs() / fd.abs());
    }

    let (_, f) = noisy_phantom(n, GridMode::PrimalDual, 4);
    let g = *f.grid();
    for (slot, mode) in [(1, Alpha0Mode::Scalar), (2, Alpha0Mode::Spatial)] {
        let cfg = BilevelPdConfig { alpha0_mode: mode, ..Default::default() };
        let a0 = match mode {
            Alpha0Mode::Scalar => Weight::Scalar(0.2),
            Alpha0Mode::Spatial => Weight::Field(ScalarField::from_fn(g, |i, j| 0.2 + 0.02 * ((i * j) as f64).cos())),
        };
        let a1 = ScalarField::from_fn(g, |i, j| 0.25 * (1.0 + 0.1 * ((i + 2 * j) as f64).sin()));
        let ev = match reduced_objective_pd(&f, &a0, &a1, &cfg, &spec) {
            Ok(ev) => ev,
            Err(e) => return Outcome::Fail(format!("primal-dual lower solve: {e}")),
        };
        let adj = solve_adjoint_pd(&ev.state, &f, &a0, &a1, &cfg.lower, &spec).unwrap();
        let (d0, d1) = reduced_derivatives_pd(&ev.state, &adj, &a0, &a1, &cfg);
        for _ in 0..5 {
            let (e0, lin0) = match (&a0, &d0) {
                (Weight::Scalar(a), Weight::Scalar(d)) => {
                    let e = a * r.random_range(-1.0..1.0);
                    (Weight::Scalar(e), d * e)
                }
                (Weight::Field(a), Weight::Field(d)) => {
                    let e = random_field(&mut r, g).zip_map(a, |x, y| x * y);
                    let lin = dot(d.values(), e.values());
                    (Weight::Field(e), lin)
                }
                _ => unreachable!("derivative has the shape of the weight"),
            };
            let e1 = random_field(&mut r, g).zip_map(&a1, |x, a| x * a);
            let predicted = lin0 + dot(d1.values(), e1.values());
            let j = |s: f64| {
                let b0 = match (&a0, &e0) {
                    (Weight::Scalar(a), Weight::Scalar(e)) => Weight::Scalar(a + s * e),
                    (Weight::Field(a), Weight::Field(e)) => Weight::Field(a.add(&e.scale(s))),
                    _ => unreachable!(),
                };
                reduced_objective_pd(&f, &b0, &a1.add(&e1.scale(s)), &cfg, &spec).unwrap().value.total
            };
            let fd = central(j, t);
            worst[slot] = worst[slot].max((predicted - fd).abs() / fd.abs());
        }
    }
    verdict(
        worst.iter().all(|w| *w <= 1e-2),
        format!(
            "5 directions each, max rel: dual {:.1e}, primal-dual {:.1e}, primal-dual with spatial alpha0 {:.1e}",
            worst[0], worst[1], worst[2]
        ),
    )
}

fn criterion_9() -> Outcome {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/camera64.pgm");
    let truth = read_pgm(&path, GridMode::PrimalDual).unwrap();
    let f = add_gaussian_noise(&truth, 0.01, 0).unwrap();
    let spec = CorridorSpec::new(0.01, 7).unwrap();
    let cfg = BilevelPdConfig::default();
    let res = match run_bilevel_pd_tracked(&f, &cfg, &spec, Some(&truth)) {
        Ok(r) => r,
        Err(e) => return Outcome::Fail(format!("bilevel run: {e}")),
    };
    let h = &res.history;
    let obj = h.objectives();
    let monotone = obj.windows(2).all(|w| w[1] <= w[0]);
    let f0 = h.initial.f_part;
    let f1 = h.last().f_part;
    let p0 = h.initial.psnr.unwrap();
    let p1 = psnr(&res.u, &truth, 1.0).unwrap();
    verdict(
        monotone && h.rows.len() == cfg.steps.max_outer && f0 >= 10.0 * f1 && p1 >= p0 + 0.2,
        format!(
            "{} accepted iterations, monotone {monotone}, F {f0:.3e} -> {f1:.3e} ({:.0}x), PSNR {p0:.2} -> {p1:.2} dB",
            h.rows.len(),
            f0 / f1
        ),
    )
}

fn criterion_10() -> Outcome {
    Outcome::Skip(
        "full-scale reproduction needs the original test images; `cargo test --release --test full_scale -- --ignored` runs the 256x256 benchmark"
            .into(),
    )
}

fn criterion_11() -> Outcome {
    let n = 32;
    let gp = GridSpec::primal_dual(n, n).unwrap();
    let truth = make_phantom(PhantomKind::AffineRamp, gp);
    let (a0, a1) = (0.2, 0.25);
    let pd = match pd_newton_solve(
        &truth,
        &Weight::Scalar(a0),
        &ScalarField::constant(gp, a1),
        &PdSolverConfig::default(),
        None,
    ) {
        Ok(s) => rel_l2(&s.state.u, &truth),
        Err(e) => return Outcome::Fail(format!("primal-dual solve: {e}")),
    };
    let gd = GridSpec::dual(n, n).unwrap();
    let td = truth.regrid(gd).unwrap();
    let h = gd.h;
    let dual = match solve_lower_dual(
        &td,
        &Weight::Scalar(a0 * h * h),
        &ScalarField::constant(gd, a1 * h),
        &DualSolverConfig::default(),
    ) {
        Ok(s) => rel_l2(&s.image(&td), &td),
        Err(e) => return Outcome::Fail(format!("dual solve: {e}")),
    };
    verdict(pd <= 1e-3 && dual <= 1e-3, format!("rel l2 reconstruction error: dual {dual:.2e}, primal-dual {pd:.2e}"))
}

fn criterion_12() -> Outcome {
    let (truth, f) = noisy_phantom(64, GridMode::PrimalDual, 0);
    let spec = CorridorSpec::new(0.01, 7).unwrap();
    // Six points per axis, a factor two apart, centred on the default pair (0.2, 0.25).
    let a0: Vec<f64> = (0..6).map(|k| 0.05 * 2f64.powi(k)).collect();
    let a1: Vec<f64> = (0..6).map(|k| 0.25 * 2f64.powi(k - 3)).collect();
    let table = gridsearch(&f, &truth, &a0, &a1, &GridSolver::Pd(PdSolverConfig::default()), &spec).unwrap();
    let cell = |alpha0: f64, alpha1: f64| {
        let i = a0.iter().position(|v| *v == alpha0).unwrap() as i64;
        let j = a1.iter().position(|v| *v == alpha1).unwrap() as i64;
        (i, j)
    };
    let (Some(bp), Some(bf)) = (table.best_psnr(), table.best_f()) else {
        return Outcome::Fail("every grid point failed".into());
    };
    let (ip, jp) = cell(bp.alpha0, bp.alpha1);
    let (iff, jf) = cell(bf.alpha0, bf.alpha1);
    let dist = (ip - iff).abs().max((jp - jf).abs());
    verdict(
        dist <= 1,
        format!(
            "PSNR-argmax ({}, {}) {:.2} dB, F-argmin ({}, {}) {:.2} dB, {dist} cells apart",
            bp.alpha0, bp.alpha1, bp.psnr, bf.alpha0, bf.alpha1, bf.psnr
        ),
    )
}

type Criterion = (u32, &'static str, fn() -> Outcome);

const CRITERIA: &[Criterion] = &[
    (1, "operator adjointness", criterion_1),
    (2, "bi-Laplacian stencil", criterion_2),
    (3, "piecewise smoothing functions", criterion_3),
    (4, "dual residual is the energy gradient", criterion_4),
    (5, "primal-dual Newton KKT tolerance", criterion_5),
    (6, "agreement with a first-order oracle", criterion_6),
    (7, "variance corridor", criterion_7),
    (8, "reduced gradients vs finite differences", criterion_8),
    (9, "bilevel primal-dual on a natural image", criterion_9),
    (10, "full-scale reproduction", criterion_10),
    (11, "affine kernel", criterion_11),
    (12, "grid search vs upper objective", criterion_12),
];

fn main() {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut unexpected = Vec::new();
    for &(id, title, run) in CRITERIA {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Skip(d) => ("SKIP", d),
            Outcome::Fail(d) => {
                if KNOWN_FAILURES.contains(&id) {
                    ("FAIL", format!("{d} [known, see README]"))
                } else {
                    unexpected.push(id);
                    ("FAIL", d)
                }
            }
        };
        println!("criterion {id:>2}: {tag} {title}: {detail} ({secs:.1} s)");
    }
    if !unexpected.is_empty() {
        println!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
