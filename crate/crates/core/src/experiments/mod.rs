//! Experiment harnesses: mean-field convergence sweeps, regularization
//! checks and propagation-of-chaos Monte Carlo. Each study returns a result
//! table whose rows carry the crate version and every constant used, plus
//! plot data where a figure is natural.
//!
//! Reported probabilities carry binomial standard errors. Lower-bound checks
//! allow 3 standard errors of slack, trend checks 2.

use std::fmt::Write as _;

pub mod chaos;
pub mod convergence;
pub mod regularization;

pub use chaos::{
    run_blobnorm_check, run_chaos_study, run_mindist_check, BlobNormReport, ChaosStudyConfig, ChaosStudyReport,
    MindistReport,
};
pub use convergence::{
    lattice_mesh, run_convergence_study, run_xi_scaling, ConvergenceStudyConfig, ConvergenceStudyReport, ReferenceRule,
    XiScalingReport,
};
pub use regularization::{run_mollifier_check, run_regularization_cauchy_check, CauchyReport, MollifierReport};

/// Stamp written into every table row.
pub const VERSION: &str = concat!("meanfield-", env!("CARGO_PKG_VERSION"));

/// `√(p(1-p)/m)`
pub fn binomial_se(p: f64, m: usize) -> f64 {
    if m == 0 {
        return f64::NAN;
    }
    (p * (1.0 - p) / m as f64).sqrt()
}

/// Shortest round-trip representation.
pub(crate) fn num(x: f64) -> String {
    format!("{x:e}")
}

/// Comma-separated result table preceded by `#` comment lines.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub title: String,
    pub notes: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(title: &str, columns: &[&str]) -> Self {
        Table {
            title: title.to_string(),
            notes: Vec::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn note(&mut self, line: impl Into<String>) {
        self.notes.push(line.into());
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        writeln!(s, "# {} {}", VERSION, self.title).unwrap();
        for n in &self.notes {
            writeln!(s, "# {n}").unwrap();
        }
        writeln!(s, "{}", self.columns.join(",")).unwrap();
        for r in &self.rows {
            writeln!(s, "{}", r.join(",")).unwrap();
        }
        s
    }

    /// Values of the named column.
    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k].as_str()).collect())
    }
}

/// `x y yerr` triples for one figure-like output.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotData {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub points: Vec<(f64, f64, f64)>,
}

impl PlotData {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        PlotData { title: title.into(), x_label: x_label.into(), y_label: y_label.into(), points: Vec::new() }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "# {} {}", VERSION, self.title).unwrap();
        writeln!(s, "# x = {}, y = {}", self.x_label, self.y_label).unwrap();
        writeln!(s, "x y yerr").unwrap();
        for (x, y, e) in &self.points {
            writeln!(s, "{} {} {}", num(*x), num(*y), num(*e)).unwrap();
        }
        s
    }
}

/// Slope of `ln y` against `ln x` by least squares.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points.iter().map(|(x, y)| (x.ln(), y.ln())).collect();
    crate::kernels::least_squares_slope(&pts)
}
