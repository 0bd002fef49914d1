//! Log-linear fits of mean exit times against `beta` or `epsilon`, and
//! comparison tables against reference exponents.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedule::StepSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitKind {
    /// `ln t = mu beta + c`.
    #[serde(rename = "exp-beta")]
    ExpBeta,
    /// `ln t = a ln beta + c`.
    #[serde(rename = "power-beta")]
    PowerBeta,
    /// `ln t = a ln(1/eps) + c` for `alpha = 1`, else `ln t = a ln|ln eps| + c`.
    #[serde(rename = "power-logeps")]
    PowerLogEps,
}

impl FromStr for FitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exp-beta" => Ok(FitKind::ExpBeta),
            "power-beta" => Ok(FitKind::PowerBeta),
            "power-logeps" => Ok(FitKind::PowerLogEps),
            _ => Err(Error::InvalidParameter(format!("unknown fit kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Cutoffs {
    /// Points with grid value below this are dropped before fitting.
    pub min_x: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub kind: FitKind,
    pub slope: f64,
    pub slope_stderr: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub expected: Option<f64>,
    pub rel_err: Option<f64>,
    pub n_points: usize,
    pub cutoffs: Cutoffs,
}

impl ScalingFit {
    pub fn with_expected(mut self, expected: f64) -> Self {
        self.expected = Some(expected);
        self.rel_err = Some((self.slope - expected).abs() / expected.abs());
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ols {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub r_squared: f64,
}

/// Ordinary least squares `y = slope x + intercept`. Needs three points and
/// at least two distinct abscissae.
pub fn ols(x: &[f64], y: &[f64]) -> Result<Ols> {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    if n < 3 {
        return Err(Error::TooFewPoints(n));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx <= f64::EPSILON * x.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE) {
        return Err(Error::DegenerateAbscissae);
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { (1.0 - sse / syy).clamp(0.0, 1.0) } else { 1.0 };
    Ok(Ols {
        slope,
        intercept,
        slope_stderr: (sse / (nf - 2.0) / sxx).sqrt(),
        r_squared,
    })
}

fn fit(kind: FitKind, points: &[(f64, f64)], min_x: Option<f64>, tx: impl Fn(f64) -> f64) -> Result<ScalingFit> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &(g, t) in points {
        if min_x.is_some_and(|m| g < m) {
            continue;
        }
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidParameter(format!("exit time {t} at {g} is not positive")));
        }
        xs.push(tx(g));
        ys.push(t.ln());
    }
    let o = ols(&xs, &ys)?;
    Ok(ScalingFit {
        kind,
        slope: o.slope,
        slope_stderr: o.slope_stderr,
        intercept: o.intercept,
        r_squared: o.r_squared,
        expected: None,
        rel_err: None,
        n_points: xs.len(),
        cutoffs: Cutoffs { min_x },
    })
}

/// Fits `ln t = mu beta + c` to `(beta, t)` points.
pub fn fit_exp_in_beta(points: &[(f64, f64)], min_beta: Option<f64>) -> Result<ScalingFit> {
    fit(FitKind::ExpBeta, points, min_beta, |b| b)
}

/// Fits `ln t = a ln beta + c`. With `alpha` in `(0, 1)` the expected slope
/// `1 / (1 - alpha)` is attached.
pub fn fit_power_in_beta(points: &[(f64, f64)], alpha: Option<f64>, min_beta: Option<f64>) -> Result<ScalingFit> {
    if points.iter().any(|&(b, _)| b <= 0.0) {
        return Err(Error::InvalidParameter("beta must be positive".into()));
    }
    let f = fit(FitKind::PowerBeta, points, min_beta, f64::ln)?;
    Ok(match alpha {
        Some(a) if a > 0.0 && a < 1.0 => f.with_expected(1.0 / (1.0 - a)),
        _ => f,
    })
}

/// Fits `(epsilon, t)` points. For `alpha = 1` the abscissa is `ln(1/eps)` and
/// the expected slope is `1 / (1 + gamma_star)`; otherwise it is `ln|ln eps|`
/// with expected slope `1 / (1 - alpha)`. `min_x` applies to `ln(1/eps)`.
pub fn fit_power_in_logeps(points: &[(f64, f64)], schedule: &StepSchedule, min_x: Option<f64>) -> Result<ScalingFit> {
    if points.iter().any(|&(e, _)| !(e > 0.0 && e < 1.0)) {
        return Err(Error::InvalidParameter("epsilon must lie in (0, 1)".into()));
    }
    // Cut on ln(1/eps) by remapping the grid value before filtering.
    let remapped: Vec<(f64, f64)> = points.iter().map(|&(e, t)| (-e.ln(), t)).collect();
    if schedule.alpha() == 1.0 {
        Ok(fit(FitKind::PowerLogEps, &remapped, min_x, |l| l)?.with_expected(1.0 / (1.0 + schedule.gamma_star())))
    } else {
        let f = fit(FitKind::PowerLogEps, &remapped, min_x, f64::ln)?;
        Ok(if schedule.is_adaptive() {
            f.with_expected(1.0 / (1.0 - schedule.alpha()))
        } else {
            f
        })
    }
}

/// Published reference exponents: `(parameter, value)` pairs.
pub mod reference {
    /// Mesh size `dx` against the power of `beta` for the plain Wang-Landau
    /// exit time.
    pub const POWER_BY_MESH: [(f64, f64); 3] = [(0.1, 2.5), (0.2, 2.5), (0.3, 2.5)];
    /// `gamma_star` against the exponential rate in `beta` for `alpha = 1`.
    pub const RATE_BY_GAMMA: [(f64, f64); 5] = [(0.0, 2.32), (1.0, 1.74), (2.0, 1.51), (4.0, 1.25), (8.0, 0.92)];
    /// `alpha` against the power of `beta` for `gamma_star = 1`.
    pub const POWER_BY_ALPHA: [(f64, f64); 6] =
        [(0.125, 1.11), (0.25, 1.30), (0.375, 1.55), (0.5, 2.02), (0.625, 2.72), (0.75, 4.06)];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    pub fitted: f64,
    pub slope_stderr: f64,
    pub expected: Option<f64>,
    pub rel_err_expected: Option<f64>,
    pub reference: Option<f64>,
    pub rel_err_reference: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
}

/// Pairs each labelled fit with a reference value. An empty `references`
/// reports the fits alone; otherwise the lengths must match.
pub fn table_report(fits: &[(String, ScalingFit)], references: &[f64]) -> Result<Report> {
    if !references.is_empty() && references.len() != fits.len() {
        return Err(Error::InvalidParameter(format!(
            "{} fits but {} reference values",
            fits.len(),
            references.len()
        )));
    }
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
    let rows = fits
        .iter()
        .enumerate()
        .map(|(i, (label, f))| {
            let reference = references.get(i).copied();
            ReportRow {
                label: label.clone(),
                fitted: f.slope,
                slope_stderr: f.slope_stderr,
                expected: f.expected,
                rel_err_expected: f.expected.map(|e| rel(f.slope, e)),
                reference,
                rel_err_reference: reference.map(|r| rel(f.slope, r)),
            }
        })
        .collect();
    Ok(Report { rows })
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
        let header = ["label", "fitted", "stderr", "expected", "rel_err", "reference", "rel_err_ref"];
        let body: Vec<[String; 7]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.label.clone(),
                    format!("{:.4}", r.fitted),
                    format!("{:.4}", r.slope_stderr),
                    opt(r.expected),
                    opt(r.rel_err_expected),
                    opt(r.reference),
                    opt(r.rel_err_reference),
                ]
            })
            .collect();
        let widths: Vec<usize> = (0..7)
            .map(|c| body.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        let mut line = |cells: &[&str]| {
            let parts: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect();
            let _ = writeln!(out, "{}", parts.join("  "));
        };
        line(&header);
        for r in &body {
            let cells: Vec<&str> = r.iter().map(String::as_str).collect();
            line(&cells);
        }
        out
    }
}
