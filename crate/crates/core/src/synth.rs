//! Seeded Gaussian noise and synthetic test images.

use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{param, Result, TgvError};
use crate::field::{GridSpec, ScalarField};

/// `u + eta` with i.i.d. `N(0, sigma2)` entries drawn from a ChaCha8 stream.
/// No clipping.
pub fn add_gaussian_noise(u: &ScalarField, sigma2: f64, seed: u64) -> Result<ScalarField> {
    if !(sigma2 >= 0.0) {
        return param("noise variance must be nonnegative");
    }
    if sigma2 == 0.0 {
        return Ok(u.clone());
    }
    let dist = Normal::new(0.0, sigma2.sqrt()).map_err(|e| TgvError::Parameter(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = u.clone();
    out.values_mut().iter_mut().for_each(|v| *v += dist.sample(&mut rng));
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhantomKind {
    AffineRamp,
    PiecewiseConstant,
    PiecewiseAffine,
    Oscillatory,
}

impl PhantomKind {
    pub const ALL: [PhantomKind; 4] = [
        PhantomKind::AffineRamp,
        PhantomKind::PiecewiseConstant,
        PhantomKind::PiecewiseAffine,
        PhantomKind::Oscillatory,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PhantomKind::AffineRamp => "affine-ramp",
            PhantomKind::PiecewiseConstant => "piecewise-constant",
            PhantomKind::PiecewiseAffine => "piecewise-affine",
            PhantomKind::Oscillatory => "oscillatory",
        }
    }
}

impl FromStr for PhantomKind {
    type Err = TgvError;

    fn from_str(s: &str) -> Result<Self> {
        PhantomKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| TgvError::Parameter(format!("unknown phantom kind '{s}'")))
    }
}

/// Deterministic synthetic image with values in `[0, 1]`. Coordinates run
/// over `[0, 1]` along each axis whatever the grid spacing.
pub fn make_phantom(kind: PhantomKind, grid: GridSpec) -> ScalarField {
    let sx = 1.0 / (grid.m.max(2) - 1) as f64;
    let sy = 1.0 / (grid.n.max(2) - 1) as f64;
    ScalarField::from_fn(grid, |i, j| {
        let (x, y) = (j as f64 * sx, i as f64 * sy);
        match kind {
            PhantomKind::AffineRamp => 0.2 + 0.4 * x + 0.3 * y,
            PhantomKind::PiecewiseConstant => {
                let r2 = (x - 0.55).powi(2) + (y - 0.5).powi(2);
                if r2 < 0.04 {
                    0.85
                } else if (0.2..0.8).contains(&x) && (0.15..0.85).contains(&y) {
                    0.5
                } else {
                    0.15
                }
            }
            PhantomKind::PiecewiseAffine => {
                if x + 0.5 * y < 0.6 {
                    0.1 + 0.5 * x + 0.2 * y
                } else {
                    0.9 - 0.3 * x - 0.2 * y
                }
            }
            PhantomKind::Oscillatory => {
                let base = 0.25 + 0.35 * x + 0.1 * y;
                if (0.3..0.7).contains(&x) && (0.3..0.7).contains(&y) {
                    let t = std::f64::consts::TAU * 6.0;
                    base + 0.15 * (t * x).sin() * (t * y).sin()
                } else {
                    base
                }
            }
        }
    })
}
