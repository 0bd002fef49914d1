//! Deterministic step-size sequences `gamma_n = gamma_star * n^(-alpha)` and the
//! running products `Xi_n = prod_{k<=n} (1 + gamma_k)`, carried in log domain.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchedule", into = "RawSchedule")]
pub struct StepSchedule {
    gamma_star: f64,
    alpha: f64,
}

#[derive(Serialize, Deserialize)]
struct RawSchedule {
    gamma_star: f64,
    alpha: f64,
}

impl TryFrom<RawSchedule> for StepSchedule {
    type Error = Error;

    fn try_from(raw: RawSchedule) -> Result<Self> {
        StepSchedule::new(raw.gamma_star, raw.alpha)
    }
}

impl From<StepSchedule> for RawSchedule {
    fn from(s: StepSchedule) -> Self {
        RawSchedule {
            gamma_star: s.gamma_star,
            alpha: s.alpha,
        }
    }
}

impl StepSchedule {
    /// `gamma_star = 0` is the non-adaptive dynamics. Any `alpha` in `(0, 1]` is
    /// accepted; see [`StepSchedule::satisfies_square_summability`].
    pub fn new(gamma_star: f64, alpha: f64) -> Result<Self> {
        if !(gamma_star.is_finite() && gamma_star >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma_star must be finite and >= 0, got {gamma_star}"
            )));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 1], got {alpha}"
            )));
        }
        Ok(Self { gamma_star, alpha })
    }

    /// The non-adaptive schedule (all step sizes zero).
    pub fn frozen() -> Self {
        Self {
            gamma_star: 0.0,
            alpha: 1.0,
        }
    }

    pub fn gamma_star(&self) -> f64 {
        self.gamma_star
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn is_adaptive(&self) -> bool {
        self.gamma_star > 0.0
    }

    /// Whether `sum gamma_n^2 < inf`, i.e. `alpha > 1/2`. Schedules failing this
    /// are allowed but sit outside the standard convergence assumptions, and
    /// reports tag them as such.
    pub fn satisfies_square_summability(&self) -> bool {
        !self.is_adaptive() || self.alpha > 0.5
    }

    pub fn gamma(&self, n: u64) -> Result<f64> {
        if n == 0 {
            return Err(Error::ZeroStepIndex);
        }
        Ok(self.gamma_at(n))
    }

    /// `gamma(n)` without the `n >= 1` check, for the inner sampling loops.
    #[inline]
    pub(crate) fn gamma_at(&self, n: u64) -> f64 {
        debug_assert!(n >= 1);
        if self.gamma_star == 0.0 {
            return 0.0;
        }
        let n = n as f64;
        if self.alpha == 1.0 {
            self.gamma_star / n
        } else if self.alpha == 0.5 {
            self.gamma_star / n.sqrt()
        } else {
            self.gamma_star * n.powf(-self.alpha)
        }
    }

    /// `ln(1 + gamma_n)`, the log-weight increment of the stratum hit at step `n`.
    #[inline]
    pub(crate) fn log_increment(&self, n: u64) -> f64 {
        self.gamma_at(n).ln_1p()
    }

    /// `ln Xi_n = sum_{k=1}^n ln(1 + gamma_k)`, with `ln Xi_0 = 0`.
    pub fn log_xi(&self, n: u64) -> f64 {
        self.log_xi_range(0, n)
    }

    /// `ln prod_{k=from+1}^{to} (1 + gamma_k)`: the log-weight gained by a stratum
    /// occupied at every step from `from + 1` to `to`.
    pub fn log_xi_range(&self, from: u64, to: u64) -> f64 {
        let mut acc = NeumaierSum::default();
        for k in (from + 1)..=to {
            acc.add(self.log_increment(k));
        }
        acc.total()
    }

    /// `[ln Xi_0, ln Xi_1, ..., ln Xi_n]` in one pass.
    pub fn log_xi_prefix(&self, n: u64) -> Vec<f64> {
        let mut out = Vec::with_capacity(n as usize + 1);
        let mut acc = NeumaierSum::default();
        out.push(0.0);
        for k in 1..=n {
            acc.add(self.log_increment(k));
            out.push(acc.total());
        }
        out
    }

    /// Closed form for `alpha = 1`: `Xi_n = Gamma(n+1+g) / (Gamma(1+g) Gamma(n+1))`.
    pub fn log_xi_harmonic_closed_form(&self, n: u64) -> Option<f64> {
        if self.alpha != 1.0 {
            return None;
        }
        let g = self.gamma_star;
        let n = n as f64;
        Some(ln_gamma(n + 1.0 + g) - ln_gamma(1.0 + g) - ln_gamma(n + 1.0))
    }

    pub fn xi_bounds(&self, n: u64) -> Result<XiEnvelope> {
        if n == 0 {
            return Err(Error::ZeroStepIndex);
        }
        let g = self.gamma_star;
        let a = self.alpha;
        let nf = n as f64;

        if a == 1.0 {
            return Ok(XiEnvelope {
                lower: None,
                upper: None,
                reference: Some(g * nf.ln() - ln_gamma(1.0 + g)),
            });
        }

        let upper = g / (1.0 - a) * nf.powf(1.0 - a);
        // Lower envelopes come from ln(1+x) >= x - x^2/2 together with integral
        // comparisons of sum k^-alpha and sum k^-2alpha.
        let lower = if a == 0.5 {
            let log_c = -2.0 * g - 0.5 * g * g;
            Some(log_c + 2.0 * g * nf.sqrt() - 0.5 * g * g * nf.ln())
        } else if a > 0.5 {
            let log_c = -g / (1.0 - a) - g * g * a / (2.0 * a - 1.0);
            Some(log_c + g / (1.0 - a) * nf.powf(1.0 - a))
        } else {
            None
        };
        Ok(XiEnvelope {
            lower,
            upper: Some(upper),
            reference: None,
        })
    }
}

/// Envelope on `ln Xi_n`. For `alpha = 1` only the Stirling asymptote
/// `gamma_star ln n - ln Gamma(1 + gamma_star)` is given, and it is not a bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XiEnvelope {
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub reference: Option<f64>,
}

#[derive(Debug, Default, Clone, Copy)]
struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}
