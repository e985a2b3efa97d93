//! Image quality measures.

use crate::error::{Result, TgvError};
use crate::field::ScalarField;

fn same_shape(a: &ScalarField, b: &ScalarField) -> Result<()> {
    if a.grid().same_shape(b.grid()) {
        Ok(())
    } else {
        Err(TgvError::GridMismatch("metric inputs differ in shape".into()))
    }
}

/// Plain per-pixel mean squared error.
pub fn mse(u: &ScalarField, truth: &ScalarField) -> Result<f64> {
    same_shape(u, truth)?;
    let s: f64 = u.values().iter().zip(truth.values()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(s / u.values().len() as f64)
}

/// `10 log10(peak^2 / mse)`; identical images give `f64::INFINITY`.
pub fn psnr(u: &ScalarField, truth: &ScalarField, peak: f64) -> Result<f64> {
    if !(peak > 0.0) {
        return crate::error::param("peak must be positive");
    }
    let e = mse(u, truth)?;
    if e == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / e).log10())
}

const SSIM_SIGMA: f64 = 1.5;
const SSIM_RADIUS: usize = 5;

fn gauss_kernel() -> [f64; 2 * SSIM_RADIUS + 1] {
    let mut k = [0.0; 2 * SSIM_RADIUS + 1];
    for (i, v) in k.iter_mut().enumerate() {
        let x = i as f64 - SSIM_RADIUS as f64;
        *v = (-0.5 * x * x / (SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Index into `0..len` with half-sample symmetric extension (`d c b a | a b c d`).
fn reflect(i: isize, len: usize) -> usize {
    let n = len as isize;
    let period = 2 * n;
    let mut r = i.rem_euclid(period);
    if r >= n {
        r = period - 1 - r;
    }
    r as usize
}

fn blur(v: &[f64], n: usize, m: usize, k: &[f64]) -> Vec<f64> {
    let r = (k.len() / 2) as isize;
    let mut tmp = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            tmp[i * m + j] =
                k.iter().enumerate().map(|(t, w)| w * v[i * m + reflect(j as isize + t as isize - r, m)]).sum();
        }
    }
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            out[i * m + j] =
                k.iter().enumerate().map(|(t, w)| w * tmp[reflect(i as isize + t as isize - r, n) * m + j]).sum();
        }
    }
    out
}

/// SSIM map with an 11x11 Gaussian window (sigma 1.5), dynamic range 1 and
/// symmetric boundary extension.
pub fn ssim_map(u: &ScalarField, truth: &ScalarField) -> Result<ScalarField> {
    same_shape(u, truth)?;
    let g = *u.grid();
    let (n, m) = (g.n, g.m);
    let k = gauss_kernel();
    let (x, y) = (u.values(), truth.values());
    let prod = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).collect::<Vec<f64>>();
    let mx = blur(x, n, m, &k);
    let my = blur(y, n, m, &k);
    let mxx = blur(&prod(x, x), n, m, &k);
    let myy = blur(&prod(y, y), n, m, &k);
    let mxy = blur(&prod(x, y), n, m, &k);
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let s = (0..n * m)
        .map(|i| {
            let vx = mxx[i] - mx[i] * mx[i];
            let vy = myy[i] - my[i] * my[i];
            let cxy = mxy[i] - mx[i] * my[i];
            ((2.0 * mx[i] * my[i] + c1) * (2.0 * cxy + c2)) / ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2))
        })
        .collect();
    Ok(ScalarField::from_raw(g, s))
}

/// Mean SSIM. The five-pixel border where the window leaves the image is
/// excluded from the mean whenever the image is larger than the window.
pub fn ssim(u: &ScalarField, truth: &ScalarField) -> Result<f64> {
    let map = ssim_map(u, truth)?;
    let g = map.grid();
    let pad = SSIM_RADIUS;
    let (ri, rj) = if g.n > 2 * pad && g.m > 2 * pad { (pad..g.n - pad, pad..g.m - pad) } else { (0..g.n, 0..g.m) };
    let mut s = 0.0;
    let mut c = 0usize;
    for i in ri {
        for j in rj.clone() {
            s += map.get(i, j);
            c += 1;
        }
    }
    Ok(s / c as f64)
}
