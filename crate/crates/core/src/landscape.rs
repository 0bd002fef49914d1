//! Two-dimensional double-well landscape on `[-R, R] x R`, stratified in
//! slabs along `x1`, sampled by Gaussian random-walk Metropolis with
//! Wang-Landau reweighting.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedule::StepSchedule;
use crate::wl::{LogWeightVector, UpdateRule, WeightVector, WlModel};

pub const DEFAULT_HALF_WIDTH: f64 = 1.1;
pub const DEFAULT_STRATA: usize = 22;
pub const DEFAULT_UPSILON: f64 = 0.1;

/// Exit is declared once `|x1|` passes this value on the far side.
pub const EXIT_THRESHOLD: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position2D {
    pub x1: f64,
    pub x2: f64,
}

impl Position2D {
    pub const fn new(x1: f64, x2: f64) -> Self {
        Self { x1, x2 }
    }
}

/// The left minimum, where every exit experiment starts.
pub const START: Position2D = Position2D::new(-1.0, 0.0);

pub fn potential(p: Position2D) -> f64 {
    let Position2D { x1, x2 } = p;
    let x1s = x1 * x1;
    let a = x2 - 1.0 / 3.0;
    let b = x2 - 5.0 / 3.0;
    let x2s = x2 * x2;
    // The two wells are summed first so that U(x1, x2) == U(-x1, x2) bitwise.
    let wells = (-(x1 - 1.0).powi(2) - x2s).exp() + (-(x1 + 1.0).powi(2) - x2s).exp();
    3.0 * (-x1s - a * a).exp() - 3.0 * (-x1s - b * b).exp() - 5.0 * wells + 0.2 * x1s * x1s + 0.2 * a.powi(4)
}

pub fn potential_gradient(p: Position2D) -> (f64, f64) {
    let Position2D { x1, x2 } = p;
    let a = x2 - 1.0 / 3.0;
    let b = x2 - 5.0 / 3.0;
    let e1 = 3.0 * (-x1 * x1 - a * a).exp();
    let e2 = -3.0 * (-x1 * x1 - b * b).exp();
    let e3 = -5.0 * (-(x1 - 1.0).powi(2) - x2 * x2).exp();
    let e4 = -5.0 * (-(x1 + 1.0).powi(2) - x2 * x2).exp();
    let g1 = -2.0 * x1 * e1 - 2.0 * x1 * e2 - 2.0 * (x1 - 1.0) * e3 - 2.0 * (x1 + 1.0) * e4 + 0.8 * x1.powi(3);
    let g2 = -2.0 * a * e1 - 2.0 * b * e2 - 2.0 * x2 * e3 - 2.0 * x2 * e4 + 0.8 * a.powi(3);
    (g1, g2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Landscape {
    pub beta: f64,
    pub half_width: f64,
    pub strata: usize,
    pub upsilon: f64,
}

impl Landscape {
    pub fn new(beta: f64, half_width: f64, strata: usize, upsilon: f64) -> Result<Self> {
        let l = Self {
            beta,
            half_width,
            strata,
            upsilon,
        };
        l.validate()?;
        Ok(l)
    }

    /// `R = 1.1`, `d = 22`, `upsilon = 0.1`.
    pub fn with_defaults(beta: f64) -> Result<Self> {
        Self::new(beta, DEFAULT_HALF_WIDTH, DEFAULT_STRATA, DEFAULT_UPSILON)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::InvalidParameter(format!("beta must be > 0, got {}", self.beta)));
        }
        if !(self.half_width.is_finite() && self.half_width > EXIT_THRESHOLD) {
            return Err(Error::InvalidParameter(format!(
                "R must exceed the exit threshold {EXIT_THRESHOLD}, got {}",
                self.half_width
            )));
        }
        if self.strata < 2 {
            return Err(Error::InvalidParameter(format!("d must be >= 2, got {}", self.strata)));
        }
        if !(self.upsilon.is_finite() && self.upsilon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "upsilon must be > 0, got {}",
                self.upsilon
            )));
        }
        Ok(())
    }

    pub fn bin_width(&self) -> f64 {
        2.0 * self.half_width / self.strata as f64
    }

    /// Left edge `a_l = -R + 2 l R / d` of stratum `l` (0-based); `l = d` gives `R`.
    /// Evaluated as `R (2l - d) / d` so that `a_{d-l} = -a_l` exactly.
    pub fn boundary(&self, l: usize) -> f64 {
        let d = self.strata as f64;
        self.half_width * (2.0 * l as f64 - d) / d
    }

    /// 0-based stratum of `x1`: bins are `[a_l, a_{l+1})`, the last one closed.
    pub fn stratum_index(&self, x1: f64) -> Result<usize> {
        if !(x1.abs() <= self.half_width) {
            return Err(Error::OutOfDomain {
                x1,
                half_width: self.half_width,
            });
        }
        Ok(self.stratum_unchecked(x1))
    }

    #[inline]
    fn stratum_unchecked(&self, x1: f64) -> usize {
        let d = self.strata;
        let guess = ((x1 + self.half_width) / self.bin_width()).floor();
        let mut l = (guess.max(0.0) as usize).min(d - 1);
        // Snap to the exact boundary formula; the division can be off by one ulp.
        if l > 0 && x1 < self.boundary(l) {
            l -= 1;
        } else if l + 1 < d && x1 >= self.boundary(l + 1) {
            l += 1;
        }
        l
    }

    /// `pi(to) / pi(from)`, zero when `to` leaves the domain.
    pub fn pi_ratio(&self, from: Position2D, to: Position2D) -> f64 {
        if to.x1.abs() > self.half_width {
            return 0.0;
        }
        (-self.beta * (potential(to) - potential(from))).exp()
    }
}

impl WlModel for Landscape {
    type State = Position2D;

    fn num_strata(&self) -> usize {
        self.strata
    }

    fn stratum(&self, x: &Position2D) -> Result<usize> {
        self.stratum_index(x.x1)
    }

    fn propose<R: Rng + ?Sized>(&self, x: &Position2D, rng: &mut R) -> Position2D {
        let dx: f64 = rng.sample(StandardNormal);
        let dy: f64 = rng.sample(StandardNormal);
        Position2D::new(x.x1 + self.upsilon * dx, x.x2 + self.upsilon * dy)
    }

    fn pi_ratio(&self, from: &Position2D, to: &Position2D) -> Result<f64> {
        Ok(Landscape::pi_ratio(self, *from, *to))
    }
}

/// Wang-Landau chain on a [`Landscape`], caching the current energy and
/// stratum.
#[derive(Debug, Clone)]
pub struct Walker2d {
    landscape: Landscape,
    schedule: StepSchedule,
    rule: UpdateRule,
    position: Position2D,
    energy: f64,
    stratum: usize,
    log_weights: LogWeightVector,
    step_index: u64,
}

impl Walker2d {
    pub fn new(landscape: Landscape, schedule: StepSchedule, rule: UpdateRule, start: Position2D) -> Result<Self> {
        landscape.validate()?;
        let stratum = landscape.stratum_index(start.x1)?;
        Ok(Self {
            landscape,
            schedule,
            rule,
            position: start,
            energy: potential(start),
            stratum,
            log_weights: LogWeightVector::zeros(landscape.strata),
            step_index: 0,
        })
    }

    pub fn position(&self) -> Position2D {
        self.position
    }

    pub fn stratum(&self) -> usize {
        self.stratum
    }

    pub fn log_weights(&self) -> &LogWeightVector {
        &self.log_weights
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    /// Replaces the weights, e.g. to sample the fixed biased target
    /// `pi_theta` with a frozen schedule.
    pub fn set_log_weights(&mut self, lw: LogWeightVector) -> Result<()> {
        if lw.len() != self.landscape.strata {
            return Err(Error::InvalidWeights(format!(
                "expected {} strata, got {}",
                self.landscape.strata,
                lw.len()
            )));
        }
        self.log_weights = lw;
        Ok(())
    }

    /// Gaussian proposal, Metropolis test against `pi_theta_n` (proposals with
    /// `|y1| > R` are rejected), then the weight update on the stratum of the
    /// post-step position. Returns whether the move was accepted.
    #[inline]
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<bool> {
        let l = &self.landscape;
        let dx: f64 = rng.sample(StandardNormal);
        let dy: f64 = rng.sample(StandardNormal);
        let y = Position2D::new(self.position.x1 + l.upsilon * dx, self.position.x2 + l.upsilon * dy);
        let mut accepted = false;
        if y.x1.abs() <= l.half_width {
            let ey = potential(y);
            let to = l.stratum_unchecked(y.x1);
            let log_ratio = -l.beta * (ey - self.energy) + self.log_weights.log_ratio(self.stratum, to);
            if log_ratio >= 0.0 || rng.gen::<f64>() < log_ratio.exp() {
                self.position = y;
                self.energy = ey;
                self.stratum = to;
                accepted = true;
            }
        }
        self.step_index += 1;
        self.rule
            .apply(&mut self.log_weights, self.stratum, &self.schedule, self.step_index)?;
        Ok(accepted)
    }

    /// Steps until `x1 > threshold` (`rightward`) or `x1 < -threshold`, returning
    /// the elapsed steps. Fails once the total step count would pass `cap`.
    pub fn run_until_cross<R: Rng + ?Sized>(&mut self, rightward: bool, cap: u64, rng: &mut R) -> Result<u64> {
        let start = self.step_index;
        let crossed = |x1: f64| {
            if rightward {
                x1 > EXIT_THRESHOLD
            } else {
                x1 < -EXIT_THRESHOLD
            }
        };
        while !crossed(self.position.x1) {
            if self.step_index >= cap {
                return Err(Error::ExitNotReached { cap });
            }
            self.step(rng)?;
        }
        Ok(self.step_index - start)
    }
}

/// First index `n` with `X_{n,1} > 1`, starting from `(-1, 0)` with uniform
/// weights.
pub fn run_exit_2d<R: Rng + ?Sized>(
    landscape: &Landscape,
    schedule: &StepSchedule,
    rule: UpdateRule,
    cap: u64,
    rng: &mut R,
) -> Result<u64> {
    Walker2d::new(*landscape, *schedule, rule, START)?.run_until_cross(true, cap, rng)
}

/// Durations between successive alternating crossings of `x1 = 1` and
/// `x1 = -1` along one trajectory started at `(-1, 0)`.
pub fn run_successive_exits_2d<R: Rng + ?Sized>(
    landscape: &Landscape,
    schedule: &StepSchedule,
    rule: UpdateRule,
    k: usize,
    cap: u64,
    rng: &mut R,
) -> Result<Vec<u64>> {
    if k == 0 {
        return Err(Error::InvalidParameter("need at least one exit".into()));
    }
    let mut w = Walker2d::new(*landscape, *schedule, rule, START)?;
    (0..k).map(|j| w.run_until_cross(j % 2 == 0, cap, rng)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureOptions {
    pub x2_min: f64,
    pub x2_max: f64,
    /// Gauss-Legendre panels per stratum width, in both directions.
    pub resolution: usize,
    /// Largest relative change of any weight allowed between `resolution`
    /// and `2 * resolution`.
    pub tolerance: f64,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            x2_min: -3.0,
            x2_max: 3.5,
            resolution: 2,
            tolerance: 1e-8,
        }
    }
}

/// Stratum weights of `pi` and the associated free-energy profile.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaStar {
    pub weights: WeightVector,
    /// `ln theta_star(l)`, exact even where `weights` would be tiny.
    pub log_weights: Vec<f64>,
    pub max_relative_change: f64,
}

impl ThetaStar {
    /// `-beta^-1 ln theta_star(l)` per stratum.
    pub fn free_energy(&self, beta: f64) -> Vec<f64> {
        self.log_weights.iter().map(|lw| -lw / beta).collect()
    }
}

const GL_POINTS: usize = 8;

pub fn theta_star_quadrature(landscape: &Landscape, opts: &QuadratureOptions) -> Result<ThetaStar> {
    landscape.validate()?;
    if !(opts.x2_max > opts.x2_min) || opts.resolution == 0 || !(opts.tolerance > 0.0) {
        return Err(Error::InvalidParameter(format!("bad quadrature options {opts:?}")));
    }
    let coarse = log_stratum_masses(landscape, opts, opts.resolution);
    let fine = log_stratum_masses(landscape, opts, 2 * opts.resolution);
    let norm_c = crate::wl::log_sum_exp(&coarse);
    let norm_f = crate::wl::log_sum_exp(&fine);
    let log_weights: Vec<f64> = fine.iter().map(|m| m - norm_f).collect();
    let change = coarse
        .iter()
        .zip(&log_weights)
        .map(|(c, f)| ((c - norm_c) - f).exp_m1().abs())
        .fold(0.0, f64::max);
    if change > opts.tolerance {
        return Err(Error::QuadratureNotConverged {
            change,
            tolerance: opts.tolerance,
        });
    }
    let weights = WeightVector::new(log_weights.iter().map(|l| l.exp()).collect())?;
    Ok(ThetaStar {
        weights,
        log_weights,
        max_relative_change: change,
    })
}

/// `ln int int_{stratum} exp(-beta U)` for every stratum, by tensor
/// Gauss-Legendre on `panels` panels per bin width.
fn log_stratum_masses(landscape: &Landscape, opts: &QuadratureOptions, panels: usize) -> Vec<f64> {
    let (nodes, weights) = gauss_legendre(GL_POINTS);
    let h = landscape.bin_width() / panels as f64;
    let x2_panels = ((opts.x2_max - opts.x2_min) / h).ceil() as usize;
    let h2 = (opts.x2_max - opts.x2_min) / x2_panels as f64;

    let mut x2_nodes = Vec::with_capacity(x2_panels * GL_POINTS);
    for p in 0..x2_panels {
        let mid = opts.x2_min + (p as f64 + 0.5) * h2;
        for (t, w) in nodes.iter().zip(&weights) {
            x2_nodes.push((mid + 0.5 * h2 * t, (0.5 * h2 * w).ln()));
        }
    }

    (0..landscape.strata)
        .map(|l| {
            let a = landscape.boundary(l);
            let mut terms = Vec::with_capacity(panels * GL_POINTS * x2_nodes.len());
            for p in 0..panels {
                let mid = a + (p as f64 + 0.5) * h;
                for (t, w) in nodes.iter().zip(&weights) {
                    let x1 = mid + 0.5 * h * t;
                    let lw1 = (0.5 * h * w).ln();
                    for &(x2, lw2) in &x2_nodes {
                        terms.push(lw1 + lw2 - landscape.beta * potential(Position2D::new(x1, x2)));
                    }
                }
            }
            crate::wl::log_sum_exp(&terms)
        })
        .collect()
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        let w = 2.0 / ((1.0 - x * x) * d * d);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    (p1, nf * (x * p1 - p0) / (x * x - 1.0))
}
