//! Binary PGM images and CSV field files.
//!
//! PGM intensities map linearly to `[0, 1]` (`v / maxval`). CSV fields use
//! one `row,col,value` line per pixel; values are written with the shortest
//! representation that parses back to the same `f64`.

use std::fs;
use std::path::Path;

use crate::error::{Result, TgvError};
use crate::field::{GridMode, GridSpec, ScalarField};

fn fmt_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(TgvError::Format(msg.into()))
}

/// Sample depth of a written PGM.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PgmDepth {
    Eight,
    #[default]
    Sixteen,
}

impl PgmDepth {
    pub fn maxval(self) -> u16 {
        match self {
            PgmDepth::Eight => 255,
            PgmDepth::Sixteen => 65535,
        }
    }
}

/// Raw decoded PGM: `height` rows of `width` samples, top row first.
#[derive(Clone, Debug, PartialEq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return fmt_err(format!("PGM header: expected {what}"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| TgvError::Format(format!("PGM header: bad {what}")))
    }
}

impl Pgm {
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 2 || &bytes[..2] != b"P5" {
            return fmt_err("not a binary PGM (missing P5 magic)");
        }
        let mut h = Header { bytes, pos: 2 };
        let width = h.number("width")?;
        let height = h.number("height")?;
        let maxval = h.number("maxval")?;
        if width == 0 || height == 0 {
            return fmt_err("PGM has zero size");
        }
        if !(1..=65535).contains(&maxval) {
            return fmt_err(format!("PGM maxval {maxval} outside 1..=65535"));
        }
        match bytes.get(h.pos) {
            Some(c) if c.is_ascii_whitespace() => h.pos += 1,
            _ => return fmt_err("PGM header not terminated by whitespace"),
        }
        let wide = maxval > 255;
        let count = width * height;
        let data = &bytes[h.pos..];
        let need = if wide { 2 * count } else { count };
        if data.len() < need {
            return fmt_err(format!("PGM truncated: {} of {need} data bytes", data.len()));
        }
        let samples: Vec<u16> = if wide {
            data[..need].chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
        } else {
            data[..need].iter().map(|&b| b as u16).collect()
        };
        if let Some(k) = samples.iter().position(|&s| s as usize > maxval) {
            return fmt_err(format!("PGM sample {k} exceeds maxval"));
        }
        Ok(Pgm { width, height, maxval: maxval as u16, samples })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n{}\n", self.width, self.height, self.maxval).into_bytes();
        if self.maxval > 255 {
            out.extend(self.samples.iter().flat_map(|s| s.to_be_bytes()));
        } else {
            out.extend(self.samples.iter().map(|&s| s as u8));
        }
        out
    }

    pub fn to_field(&self, mode: GridMode) -> Result<ScalarField> {
        let g = GridSpec::with_mode(self.height, self.width, mode)?;
        let mv = self.maxval as f64;
        ScalarField::from_vec(g, self.samples.iter().map(|&s| s as f64 / mv).collect())
    }

    /// Quantizes `u` after clamping to `[0, 1]`.
    pub fn from_field(u: &ScalarField, depth: PgmDepth) -> Self {
        let mv = depth.maxval();
        let samples = u.values().iter().map(|&v| (v.clamp(0.0, 1.0) * mv as f64).round() as u16).collect();
        Pgm { width: u.grid().m, height: u.grid().n, maxval: mv, samples }
    }
}

pub fn read_pgm(path: &Path, mode: GridMode) -> Result<ScalarField> {
    Pgm::decode(&fs::read(path)?)?.to_field(mode)
}

pub fn write_pgm(path: &Path, u: &ScalarField, depth: PgmDepth) -> Result<()> {
    Ok(fs::write(path, Pgm::from_field(u, depth).encode())?)
}

/// Writes `u` rescaled so that `[lo, hi]` spans the full gray range. Used for
/// weight maps, whose values are far from `[0, 1]`.
pub fn write_pgm_scaled(path: &Path, u: &ScalarField, lo: f64, hi: f64) -> Result<()> {
    let span = if hi > lo { hi - lo } else { 1.0 };
    write_pgm(path, &u.map(|v| (v - lo) / span), PgmDepth::Sixteen)
}

/// Shortest round-trip text of `v`, in exponent form outside `[1e-3, 1e6)`.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && a.is_finite() && !(1e-3..1e6).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

const CSV_HEADER: [&str; 3] = ["row", "col", "value"];

pub fn field_to_csv(u: &ScalarField) -> Result<String> {
    let err = |e: csv::Error| TgvError::Format(e.to_string());
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).map_err(err)?;
    let g = u.grid();
    for i in 0..g.n {
        for j in 0..g.m {
            w.write_record([i.to_string(), j.to_string(), fmt_f64(u.get(i, j))]).map_err(err)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| TgvError::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| TgvError::Format(e.to_string()))
}

/// Parses a `row,col,value` table. Every pixel of the bounding grid must
/// appear exactly once; row order is free.
pub fn field_from_csv(text: &str, mode: GridMode) -> Result<ScalarField> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let head = r.headers().map_err(|e| TgvError::Format(e.to_string()))?;
    if head.iter().map(str::trim).ne(CSV_HEADER) {
        return fmt_err(format!("CSV field header must be {}", CSV_HEADER.join(",")));
    }
    let mut cells = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| TgvError::Format(e.to_string()))?;
        let bad = || TgvError::Format(format!("CSV field: bad record {}", line + 2));
        if rec.len() != 3 {
            return Err(bad());
        }
        let i: usize = rec[0].trim().parse().map_err(|_| bad())?;
        let j: usize = rec[1].trim().parse().map_err(|_| bad())?;
        let v: f64 = rec[2].trim().parse().map_err(|_| bad())?;
        cells.push((i, j, v));
    }
    let n = cells.iter().map(|c| c.0 + 1).max().unwrap_or(0);
    let m = cells.iter().map(|c| c.1 + 1).max().unwrap_or(0);
    if cells.len() != n * m {
        return fmt_err(format!("CSV field: {} records for a {n}x{m} grid", cells.len()));
    }
    let g = GridSpec::with_mode(n, m, mode)?;
    let mut data = vec![f64::NAN; n * m];
    let mut seen = vec![false; n * m];
    for (i, j, v) in cells {
        let k = g.idx(i, j);
        if std::mem::replace(&mut seen[k], true) {
            return fmt_err(format!("CSV field: pixel ({i},{j}) repeated"));
        }
        data[k] = v;
    }
    ScalarField::from_vec(g, data)
}

pub fn read_field_csv(path: &Path, mode: GridMode) -> Result<ScalarField> {
    field_from_csv(&fs::read_to_string(path)?, mode)
}

pub fn write_field_csv(path: &Path, u: &ScalarField) -> Result<()> {
    Ok(fs::write(path, field_to_csv(u)?)?)
}

/// Reads a PGM or a CSV field, chosen by file extension.
pub fn read_image(path: &Path, mode: GridMode) -> Result<ScalarField> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("pgm") => read_pgm(path, mode),
        Some("csv") => read_field_csv(path, mode),
        _ => fmt_err(format!("{}: expected a .pgm or .csv file", path.display())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> ScalarField {
        let g = GridSpec::primal_dual(5, 7).unwrap();
        ScalarField::from_fn(g, |i, j| (i * 7 + j) as f64 / 34.0)
    }

    #[test]
    fn pgm_round_trip_both_depths() {
        for depth in [PgmDepth::Eight, PgmDepth::Sixteen] {
            let p = Pgm::from_field(&ramp(), depth);
            let q = Pgm::decode(&p.encode()).unwrap();
            assert_eq!(p, q);
            let u = q.to_field(GridMode::PrimalDual).unwrap();
            let tol = 0.5 / depth.maxval() as f64 + 1e-15;
            assert!(u.sub(&ramp()).max_abs() <= tol);
        }
    }

    #[test]
    fn pgm_header_with_comments() {
        let mut b = b"P5 # made by hand\n2 # width\n 2\n255\n".to_vec();
        b.extend([0u8, 255, 51, 102]);
        let u = Pgm::decode(&b).unwrap().to_field(GridMode::Dual).unwrap();
        assert_eq!(u.values(), &[0.0, 1.0, 0.2, 0.4]);
        assert_eq!(u.grid().h, 0.5);
    }

    #[test]
    fn pgm_rejects_garbage() {
        assert!(Pgm::decode(b"P2\n2 2\n255\n").is_err());
        assert!(Pgm::decode(b"P5\n2 2\n255\n\x00\x01").is_err());
        assert!(Pgm::decode(b"P5\n2 2\n100\n\x00\x01\x02\xff").is_err());
    }

    #[test]
    fn csv_is_exact_and_order_free() {
        let g = GridSpec::dual(3, 4).unwrap();
        let u = ScalarField::from_fn(g, |i, j| (i as f64 + 0.1).ln() * 1e-7 + (j as f64).sqrt());
        let s = field_to_csv(&u).unwrap();
        assert_eq!(field_from_csv(&s, GridMode::Dual).unwrap(), u);
        let mut lines: Vec<&str> = s.lines().collect();
        lines[1..].reverse();
        assert_eq!(field_from_csv(&lines.join("\n"), GridMode::Dual).unwrap(), u);
        assert!(field_from_csv(&lines[..lines.len() - 1].join("\n"), GridMode::Dual).is_err());
    }
}
