//! The three-state metastable chain.
//!
//! States 0, 1, 2 stand for the two likely states and the unlikely transition
//! state between them (the middle one, index 1). The target is
//! `pi = (1, eps, 1) / (2 + eps)` and the proposal only moves to nearest
//! neighbours.

use rand::Rng;
use rand_distr::{Distribution, Geometric};

use crate::error::{Error, Result};
use crate::schedule::StepSchedule;
use crate::wl::{LogWeightVector, UpdateRule, WeightVector, WlModel};

pub type Kernel = [[f64; 3]; 3];

pub const DEFAULT_STEP_CAP: u64 = 10_000_000_000;

const THIRD: f64 = 1.0 / 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyModel {
    epsilon: f64,
}

impl ToyModel {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must lie in (0, 1), got {epsilon}"
            )));
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn target_weights(&self) -> WeightVector {
        let z = 2.0 + self.epsilon;
        WeightVector::new(vec![1.0 / z, self.epsilon / z, 1.0 / z])
            .expect("target weights lie on the simplex")
    }

    pub fn nonadaptive_kernel(&self) -> Kernel {
        let e = self.epsilon / 3.0;
        [[1.0 - e, e, 0.0], [THIRD, THIRD, THIRD], [0.0, e, 1.0 - e]]
    }

    pub fn adaptive_kernel(&self, theta: &WeightVector) -> Kernel {
        let lw = LogWeightVector::new(theta.as_slice().iter().map(|w| w.ln()).collect())
            .expect("valid weights have finite logs");
        let mut k = [[0.0; 3]; 3];
        for (s, row) in k.iter_mut().enumerate() {
            let (down, up) = self.move_probabilities(&lw, s);
            if s > 0 {
                row[s - 1] = down;
            }
            if s < 2 {
                row[s + 1] = up;
            }
            row[s] = 1.0 - down - up;
        }
        k
    }

    /// `(P(s, s-1), P(s, s+1))` under `P_theta`, from unnormalized log weights.
    #[inline]
    fn move_probabilities(&self, lw: &LogWeightVector, s: usize) -> (f64, f64) {
        let ln_eps = self.epsilon.ln();
        let accept = |l: f64| if l >= 0.0 { THIRD } else { THIRD * l.exp() };
        match s {
            0 => (0.0, accept(ln_eps + lw.log_ratio(0, 1))),
            1 => (
                accept(lw.log_ratio(1, 0) - ln_eps),
                accept(lw.log_ratio(1, 2) - ln_eps),
            ),
            2 => (accept(ln_eps + lw.log_ratio(2, 1)), 0.0),
            _ => unreachable!("toy state out of range"),
        }
    }

    /// `E[T_{0 -> 2}] = 6 / eps + 3` for the non-adaptive chain.
    pub fn expected_exit_nonadaptive(&self) -> f64 {
        6.0 / self.epsilon + 3.0
    }

    /// Direct simulation of the non-adaptive chain from state 0 until state 2.
    pub fn sample_exit_nonadaptive<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let e = self.epsilon / 3.0;
        let mut state = 0usize;
        let mut t = 0u64;
        while state != 2 {
            let u: f64 = rng.gen();
            state = match state {
                0 if u < e => 1,
                0 => 0,
                _ if u < THIRD => 0,
                _ if u < 2.0 * THIRD => 1,
                _ => 2,
            };
            t += 1;
        }
        t
    }

    /// Same law as [`ToyModel::sample_exit_nonadaptive`], assembled from
    /// independent geometrics: `N ~ Geo(1/2)` excursions, each a sojourn
    /// `Geo(eps/3)` in state 0 followed by `Geo(2/3)` in the middle state.
    pub fn sample_exit_decomposition<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let excursions = geometric(0.5, rng);
        (0..excursions)
            .map(|_| geometric(self.epsilon / 3.0, rng) + geometric(2.0 / 3.0, rng))
            .sum()
    }

    pub fn predicted_window(&self, schedule: &StepSchedule, slack: Option<f64>) -> Result<ExitWindow> {
        let alpha = schedule.alpha();
        let g = schedule.gamma_star();
        if !(0.5..=1.0).contains(&alpha) {
            return Err(Error::InvalidParameter(format!(
                "no predicted window for alpha = {alpha} outside [1/2, 1]"
            )));
        }
        let ln_eps = self.epsilon.ln().abs();
        let (scale, default_slack) = if alpha == 1.0 {
            (self.epsilon.powf(-1.0 / (1.0 + g)), 10.0)
        } else {
            if g == 0.0 {
                return Err(Error::InvalidParameter(
                    "alpha < 1 window needs gamma_star > 0".into(),
                ));
            }
            let p = 1.0 / (1.0 - alpha);
            (((1.0 - alpha) / g).powf(p) * ln_eps.powf(p), 2.0)
        };
        let h = slack.unwrap_or(default_slack);
        if !(h > 1.0) {
            return Err(Error::InvalidParameter(format!("window slack must exceed 1, got {h}")));
        }
        Ok(ExitWindow {
            lower: scale / h,
            upper: scale * h,
            scale,
        })
    }
}

/// Geometric on `{1, 2, ...}` with `P(T = k) = (1 - p)^(k-1) p`.
pub fn geometric<R: Rng + ?Sized>(p: f64, rng: &mut R) -> u64 {
    Geometric::new(p).expect("probability in (0, 1]").sample(rng) + 1
}

/// Predicted range for the first exit time, with its central scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExitWindow {
    pub lower: f64,
    pub upper: f64,
    pub scale: f64,
}

impl WlModel for ToyModel {
    type State = usize;

    fn num_strata(&self) -> usize {
        3
    }

    fn stratum(&self, x: &usize) -> Result<usize> {
        if *x < 3 {
            Ok(*x)
        } else {
            Err(Error::StratumOutOfRange { index: *x, strata: 3 })
        }
    }

    fn propose<R: Rng + ?Sized>(&self, x: &usize, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        match *x {
            0 => usize::from(u < THIRD),
            2 => {
                if u < THIRD {
                    1
                } else {
                    2
                }
            }
            _ => ((u * 3.0) as usize).min(2),
        }
    }

    fn pi_ratio(&self, from: &usize, to: &usize) -> Result<f64> {
        let pi = |s: usize| if s == 1 { self.epsilon } else { 1.0 };
        Ok(pi(*to) / pi(*from))
    }
}

/// Breakdown of a first exit `0 -> 2` by time spent in each state.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ExitDecomposition {
    /// Steps spent in state 0 before the first visit to the middle state.
    pub first_sojourn: u64,
    /// Number of jumps from the middle state back to state 0.
    pub returns: u64,
    /// Steps spent in state 0 after each return.
    pub later_sojourns: Vec<u64>,
    /// Time indices spent in the middle state before the exit.
    pub middle_visits: u64,
}

impl ExitDecomposition {
    pub fn total(&self) -> u64 {
        self.first_sojourn + self.later_sojourns.iter().sum::<u64>() + self.middle_visits
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveExit {
    pub exit_time: u64,
    pub final_log_weights: LogWeightVector,
    pub decomposition: ExitDecomposition,
}

/// Adaptive (or, with `gamma_star = 0`, plain Metropolis) toy chain that keeps
/// running across successive exits.
#[derive(Debug, Clone)]
pub struct ToyChain {
    model: ToyModel,
    schedule: StepSchedule,
    rule: UpdateRule,
    state: usize,
    log_weights: LogWeightVector,
    step_index: u64,
}

impl ToyChain {
    /// Chain at state 0 with `theta~_0 = (1, 1, 1)`.
    pub fn new(model: ToyModel, schedule: StepSchedule, rule: UpdateRule) -> Self {
        Self {
            model,
            schedule,
            rule,
            state: 0,
            log_weights: LogWeightVector::zeros(3),
            step_index: 0,
        }
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn log_weights(&self) -> &LogWeightVector {
        &self.log_weights
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    /// One step by inverse-CDF sampling of the row `P_theta_n(X_n, .)`.
    #[inline]
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<usize> {
        let (down, up) = self.model.move_probabilities(&self.log_weights, self.state);
        let u: f64 = rng.gen();
        if u < down {
            self.state -= 1;
        } else if u < down + up {
            self.state += 1;
        }
        self.step_index += 1;
        self.rule
            .apply(&mut self.log_weights, self.state, &self.schedule, self.step_index)?;
        Ok(self.state)
    }

    /// Runs until `target` is hit, returning the elapsed steps. Fails once the
    /// chain's total step count would pass `cap`.
    pub fn run_until<R: Rng + ?Sized>(&mut self, target: usize, cap: u64, rng: &mut R) -> Result<u64> {
        let start = self.step_index;
        while self.state != target {
            if self.step_index >= cap {
                return Err(Error::ExitNotReached { cap });
            }
            self.step(rng)?;
        }
        Ok(self.step_index - start)
    }

    /// First exit from state 0 to state 2 with its decomposition. The chain must
    /// be fresh.
    pub fn run_first_exit_traced<R: Rng + ?Sized>(&mut self, cap: u64, rng: &mut R) -> Result<AdaptiveExit> {
        assert!(self.step_index == 0 && self.state == 0, "traced exit needs a fresh chain");
        let mut dec = ExitDecomposition::default();
        let mut current_sojourn = 0u64;
        let mut seen_middle = false;
        while self.state != 2 {
            if self.step_index >= cap {
                return Err(Error::ExitNotReached { cap });
            }
            match self.state {
                0 => current_sojourn += 1,
                _ => dec.middle_visits += 1,
            }
            let prev = self.state;
            let next = self.step(rng)?;
            if prev == 0 && next == 1 {
                if seen_middle {
                    dec.later_sojourns.push(current_sojourn);
                } else {
                    dec.first_sojourn = current_sojourn;
                    seen_middle = true;
                }
                current_sojourn = 0;
            } else if prev == 1 && next == 0 {
                dec.returns += 1;
            }
        }
        Ok(AdaptiveExit {
            exit_time: self.step_index,
            final_log_weights: self.log_weights.clone(),
            decomposition: dec,
        })
    }
}

/// First exit time `0 -> 2` of the Wang-Landau chain started at state 0.
pub fn sample_exit_adaptive<R: Rng + ?Sized>(
    model: &ToyModel,
    schedule: &StepSchedule,
    rule: UpdateRule,
    cap: u64,
    rng: &mut R,
) -> Result<AdaptiveExit> {
    ToyChain::new(*model, *schedule, rule).run_first_exit_traced(cap, rng)
}

/// Durations of the successive crossings `0 -> 2`, `2 -> 0`, `0 -> 2`, ... of a
/// single chain.
pub fn sample_successive_exits<R: Rng + ?Sized>(
    model: &ToyModel,
    schedule: &StepSchedule,
    rule: UpdateRule,
    k: usize,
    cap: u64,
    rng: &mut R,
) -> Result<Vec<u64>> {
    if k == 0 {
        return Err(Error::InvalidParameter("need at least one exit".into()));
    }
    let mut chain = ToyChain::new(*model, *schedule, rule);
    (0..k)
        .map(|j| chain.run_until(if j % 2 == 0 { 2 } else { 0 }, cap, rng))
        .collect()
}

/// Number of time indices spent in the middle state before the first exit.
pub fn middle_visits<R: Rng + ?Sized>(
    model: &ToyModel,
    schedule: &StepSchedule,
    rule: UpdateRule,
    cap: u64,
    rng: &mut R,
) -> Result<u64> {
    Ok(sample_exit_adaptive(model, schedule, rule, cap, rng)?
        .decomposition
        .middle_visits)
}
