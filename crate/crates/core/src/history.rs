//! Per-iteration records of the bilevel loops.

use crate::error::{Result, TgvError};
use crate::io::fmt_f64;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct HistoryRow {
    pub iteration: usize,
    pub objective: f64,
    pub f_part: f64,
    pub reg_part: f64,
    /// Step sizes that produced this iterate.
    pub tau0: f64,
    pub tau1: f64,
    /// Backtracking steps taken before acceptance.
    pub shrinks: usize,
    /// Lower-level solves spent on this iteration, trial points included.
    pub lower_solves: usize,
    /// Newton iterations of the accepted lower-level solve.
    pub lower_iterations: usize,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub kkt: Option<[f64; 4]>,
}

/// Rows of accepted iterates plus the initial state.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunHistory {
    pub initial: HistoryRow,
    pub rows: Vec<HistoryRow>,
}

const HEADER: [&str; 15] = [
    "iteration",
    "objective",
    "f_part",
    "reg_part",
    "tau0",
    "tau1",
    "shrinks",
    "lower_solves",
    "lower_iterations",
    "psnr",
    "ssim",
    "kkt1",
    "kkt2",
    "kkt3",
    "kkt4",
];

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

impl HistoryRow {
    fn record(&self) -> Vec<String> {
        let mut r = vec![
            self.iteration.to_string(),
            fmt_f64(self.objective),
            fmt_f64(self.f_part),
            fmt_f64(self.reg_part),
            fmt_f64(self.tau0),
            fmt_f64(self.tau1),
            self.shrinks.to_string(),
            self.lower_solves.to_string(),
            self.lower_iterations.to_string(),
            opt(self.psnr),
            opt(self.ssim),
        ];
        for k in 0..4 {
            r.push(opt(self.kkt.map(|v| v[k])));
        }
        r
    }
}

impl RunHistory {
    /// Objective values of the initial state and every accepted iterate.
    pub fn objectives(&self) -> Vec<f64> {
        std::iter::once(self.initial.objective).chain(self.rows.iter().map(|r| r.objective)).collect()
    }

    pub fn total_lower_solves(&self) -> usize {
        self.initial.lower_solves + self.rows.iter().map(|r| r.lower_solves).sum::<usize>()
    }

    pub fn last(&self) -> &HistoryRow {
        self.rows.last().unwrap_or(&self.initial)
    }

    /// One CSV line per accepted iterate, header first. The initial state
    /// is not a row; see [`RunHistory::to_csv_with_initial`].
    pub fn to_csv(&self) -> Result<String> {
        self.write(false)
    }

    /// Like [`RunHistory::to_csv`] with the initial state as iteration 0.
    pub fn to_csv_with_initial(&self) -> Result<String> {
        self.write(true)
    }

    fn write(&self, initial: bool) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| TgvError::Format(e.to_string());
        w.write_record(HEADER).map_err(err)?;
        if initial {
            w.write_record(self.initial.record()).map_err(err)?;
        }
        for r in &self.rows {
            w.write_record(r.record()).map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| TgvError::Format(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| TgvError::Format(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_shape() {
        let mut h = RunHistory::default();
        h.initial.objective = 3.0;
        for k in 1..=3 {
            h.rows.push(HistoryRow { iteration: k, objective: 1.0 / k as f64, ..Default::default() });
        }
        let s = h.to_csv().unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("iteration,objective"));
        assert_eq!(lines[1].split(',').count(), HEADER.len());
        assert_eq!(h.to_csv_with_initial().unwrap().lines().count(), 5);
        assert_eq!(h.objectives(), vec![3.0, 1.0, 0.5, 1.0 / 3.0]);
    }
}
