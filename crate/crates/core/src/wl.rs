//! Model-agnostic Wang-Landau machinery: weight vectors, the three update
//! rules, the Metropolis acceptance against the biased target, and a generic
//! stepper driven by a [`WlModel`].
//!
//! Strata are indexed from 0 throughout.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedule::StepSchedule;

const SIMPLEX_TOL: f64 = 1e-12;

/// Normalized stratum weights: every entry in `(0, 1)`, summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::InvalidWeights(format!(
                "need at least 2 strata, got {}",
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && **w < 1.0)) {
            return Err(Error::InvalidWeights(format!("entry {w} not in (0, 1)")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidWeights(format!("entries sum to {sum}")));
        }
        Ok(Self(weights))
    }

    pub fn uniform(d: usize) -> Self {
        Self(vec![1.0 / d as f64; d])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    fn check_hit(&self, hit: usize) -> Result<()> {
        if hit >= self.0.len() {
            return Err(Error::StratumOutOfRange {
                index: hit,
                strata: self.0.len(),
            });
        }
        Ok(())
    }
}

impl std::ops::Index<usize> for WeightVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Unnormalized weights `ln theta~(i)`. Only finiteness is enforced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogWeightVector(Vec<f64>);

impl LogWeightVector {
    pub fn new(log_weights: Vec<f64>) -> Result<Self> {
        if log_weights.is_empty() {
            return Err(Error::InvalidWeights("empty log-weight vector".into()));
        }
        if let Some(w) = log_weights.iter().find(|w| !w.is_finite()) {
            return Err(Error::InvalidWeights(format!("non-finite log weight {w}")));
        }
        Ok(Self(log_weights))
    }

    /// `theta~ = (1, ..., 1)`.
    pub fn zeros(d: usize) -> Self {
        Self(vec![0.0; d])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// `ln theta(from) - ln theta(to)`, which is all the Metropolis ratio needs.
    #[inline]
    pub fn log_ratio(&self, from: usize, to: usize) -> f64 {
        self.0[from] - self.0[to]
    }

    pub fn log_sum(&self) -> f64 {
        log_sum_exp(&self.0)
    }

    pub fn normalize(&self) -> WeightVector {
        normalize(self)
    }

    #[inline]
    pub(crate) fn bump(&mut self, hit: usize, log_increment: f64) {
        self.0[hit] += log_increment;
    }
}

impl std::ops::Index<usize> for LogWeightVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `theta(i) = exp(lw(i) - logsumexp(lw))`.
///
/// Entries that underflow to 0 are not re-validated here; the result is built
/// directly so that extreme but finite log weights still normalize.
pub fn normalize(lw: &LogWeightVector) -> WeightVector {
    let lse = lw.log_sum();
    WeightVector(lw.0.iter().map(|x| (x - lse).exp()).collect())
}

/// Multiplicative renormalized update:
/// `theta'(i) = theta(i) (1 + gamma 1{i = hit}) / (1 + gamma theta(hit))`.
pub fn update_nonlinear(theta: &WeightVector, hit: usize, gamma: f64) -> Result<WeightVector> {
    theta.check_hit(hit)?;
    let denom = 1.0 + gamma * theta[hit];
    let out = theta
        .0
        .iter()
        .enumerate()
        .map(|(i, &w)| if i == hit { w * (1.0 + gamma) / denom } else { w / denom })
        .collect();
    Ok(WeightVector(out))
}

/// `theta~'(hit) = theta~(hit) (1 + gamma)`, other entries unchanged.
pub fn update_unnormalized(lw: &LogWeightVector, hit: usize, gamma: f64) -> Result<LogWeightVector> {
    if hit >= lw.len() {
        return Err(Error::StratumOutOfRange {
            index: hit,
            strata: lw.len(),
        });
    }
    let mut out = lw.clone();
    out.bump(hit, gamma.ln_1p());
    Ok(out)
}

/// First-order-in-gamma version of [`update_nonlinear`]. Positivity needs
/// `gamma < 1`; larger steps can push entries out of the simplex, which is
/// reported as an error.
pub fn update_linearized(theta: &WeightVector, hit: usize, gamma: f64) -> Result<WeightVector> {
    theta.check_hit(hit)?;
    let th = theta[hit];
    let out: Vec<f64> = theta
        .0
        .iter()
        .enumerate()
        .map(|(k, &w)| if k == hit { w + gamma * w * (1.0 - w) } else { w - gamma * w * th })
        .collect();
    if let Some(w) = out.iter().find(|w| !(**w > 0.0)) {
        return Err(Error::InvalidWeights(format!(
            "linearized update with gamma = {gamma} produced entry {w}"
        )));
    }
    Ok(WeightVector(out))
}

/// Metropolis acceptance probability for the biased target
/// `pi_theta(x) ~ pi(x) / theta(I(x))` under a symmetric proposal:
/// `min(1, pi_ratio * theta(from) / theta(to))`.
pub fn acceptance_ratio(pi_ratio: f64, theta: &WeightVector, from: usize, to: usize) -> f64 {
    if pi_ratio <= 0.0 {
        return 0.0;
    }
    (pi_ratio * theta[from] / theta[to]).min(1.0)
}

/// Same as [`acceptance_ratio`] but on unnormalized log weights, with the
/// target ratio also in log form.
#[inline]
pub fn acceptance_ratio_log(log_pi_ratio: f64, lw: &LogWeightVector, from: usize, to: usize) -> f64 {
    let l = log_pi_ratio + lw.log_ratio(from, to);
    if l >= 0.0 {
        1.0
    } else {
        l.exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateRule {
    #[default]
    Nonlinear,
    Linearized,
}

impl std::str::FromStr for UpdateRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nonlinear" => Ok(Self::Nonlinear),
            "linearized" => Ok(Self::Linearized),
            other => Err(Error::InvalidParameter(format!("unknown update rule {other:?}"))),
        }
    }
}

impl UpdateRule {
    /// Applies the rule in place for step index `n` (which uses `gamma_n`).
    #[inline]
    pub fn apply(&self, lw: &mut LogWeightVector, hit: usize, schedule: &StepSchedule, n: u64) -> Result<()> {
        if !schedule.is_adaptive() {
            return Ok(());
        }
        match self {
            UpdateRule::Nonlinear => {
                lw.bump(hit, schedule.log_increment(n));
                Ok(())
            }
            UpdateRule::Linearized => {
                let theta = lw.normalize();
                let next = update_linearized(&theta, hit, schedule.gamma_at(n))?;
                *lw = LogWeightVector(next.0.iter().map(|w| w.ln()).collect());
                Ok(())
            }
        }
    }
}

/// What the generic stepper needs from a model: a symmetric proposal, the
/// target ratio `pi(to) / pi(from)` (zero for forbidden moves), and the
/// stratum map.
pub trait WlModel {
    type State: Clone;

    fn num_strata(&self) -> usize;

    fn stratum(&self, x: &Self::State) -> Result<usize>;

    fn propose<R: Rng + ?Sized>(&self, x: &Self::State, rng: &mut R) -> Self::State;

    fn pi_ratio(&self, from: &Self::State, to: &Self::State) -> Result<f64>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainState<S> {
    pub position: S,
    pub log_weights: LogWeightVector,
    pub step_index: u64,
}

impl<S> ChainState<S> {
    /// Chain at `position` with `theta~_0 = (1, ..., 1)` and `n = 0`.
    pub fn start(position: S, strata: usize) -> Self {
        Self {
            position,
            log_weights: LogWeightVector::zeros(strata),
            step_index: 0,
        }
    }

    pub fn weights(&self) -> WeightVector {
        self.log_weights.normalize()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepOutcome {
    pub accepted: bool,
    pub stratum: usize,
}

/// One Wang-Landau iteration: Metropolis move against `pi_theta_n`, then the
/// weight update with `gamma_{n+1}` on the stratum of the post-move position
/// (which is the old position when the proposal is rejected).
pub fn wl_step<M, R>(
    state: &mut ChainState<M::State>,
    model: &M,
    schedule: &StepSchedule,
    rule: UpdateRule,
    rng: &mut R,
) -> Result<StepOutcome>
where
    M: WlModel,
    R: Rng + ?Sized,
{
    let from = model.stratum(&state.position)?;
    let proposal = model.propose(&state.position, rng);
    let pi_ratio = model.pi_ratio(&state.position, &proposal)?;
    let (accepted, stratum) = if pi_ratio > 0.0 {
        let to = model.stratum(&proposal)?;
        let p = acceptance_ratio_log(pi_ratio.ln(), &state.log_weights, from, to);
        if rng.gen::<f64>() < p {
            state.position = proposal;
            (true, to)
        } else {
            (false, from)
        }
    } else {
        (false, from)
    };
    state.step_index += 1;
    rule.apply(&mut state.log_weights, stratum, schedule, state.step_index)?;
    Ok(StepOutcome { accepted, stratum })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn assert_vec_eq(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn normalize_examples() {
        let w = normalize(&LogWeightVector::zeros(3));
        assert_vec_eq(w.as_slice(), &[1.0 / 3.0; 3], 1e-15);

        let w = normalize(&LogWeightVector::new(vec![0.0, 3f64.ln(), 0.0]).unwrap());
        assert_vec_eq(w.as_slice(), &[0.2, 0.6, 0.2], 1e-15);

        // A shifted copy normalizes identically; the unshifted reference is (1, 1, 2)/4.
        // 1000 + ln 2 is itself only representable to ~1e-13.
        let w = normalize(&LogWeightVector::new(vec![1000.0, 1000.0, 1000.0 + 2f64.ln()]).unwrap());
        assert_vec_eq(w.as_slice(), &[0.25, 0.25, 0.5], 1e-12);
    }

    #[test]
    fn nonlinear_examples() {
        let u = WeightVector::uniform(3);
        assert_eq!(update_nonlinear(&u, 1, 0.0).unwrap(), u);

        let w = update_nonlinear(&u, 0, 0.3).unwrap();
        assert_vec_eq(w.as_slice(), &[13.0 / 33.0, 10.0 / 33.0, 10.0 / 33.0], 1e-15);

        let t = WeightVector::new(vec![0.5, 0.3, 0.2]).unwrap();
        let w = update_nonlinear(&t, 2, 0.1).unwrap();
        assert_vec_eq(w.as_slice(), &[0.5 / 1.02, 0.3 / 1.02, 0.22 / 1.02], 1e-15);

        assert!(matches!(
            update_nonlinear(&t, 3, 0.1),
            Err(Error::StratumOutOfRange { index: 3, strata: 3 })
        ));
    }

    #[test]
    fn unnormalized_examples() {
        let lw = update_unnormalized(&LogWeightVector::zeros(3), 1, 0.5).unwrap();
        assert_vec_eq(lw.as_slice(), &[0.0, 1.5f64.ln(), 0.0], 1e-15);
        let lw0 = LogWeightVector::new(vec![0.3, -1.0, 2.0]).unwrap();
        assert_eq!(update_unnormalized(&lw0, 2, 0.0).unwrap(), lw0);
    }

    #[test]
    fn linearized_examples() {
        let u = WeightVector::uniform(3);
        assert_eq!(update_linearized(&u, 2, 0.0).unwrap(), u);
        let w = update_linearized(&u, 0, 0.3).unwrap();
        assert_vec_eq(w.as_slice(), &[0.4, 0.3, 0.3], 1e-15);
        let t = WeightVector::new(vec![0.1, 0.9]).unwrap();
        assert!(update_linearized(&t, 0, 12.0).is_err());
    }

    #[test]
    fn acceptance_examples() {
        let u = WeightVector::uniform(3);
        assert_eq!(acceptance_ratio(1.0, &u, 1, 1), 1.0);
        assert_relative_eq!(acceptance_ratio(0.01, &u, 0, 1), 0.01, epsilon = 1e-16);
        assert_eq!(acceptance_ratio(0.0, &u, 0, 1), 0.0);
        let t = WeightVector::new(vec![0.6, 0.2, 0.2]).unwrap();
        assert_relative_eq!(acceptance_ratio(0.1, &t, 0, 1), 0.3, epsilon = 1e-15);
        let lw = LogWeightVector::new(t.as_slice().iter().map(|w| w.ln() + 4.0).collect()).unwrap();
        assert_relative_eq!(acceptance_ratio_log(0.1f64.ln(), &lw, 0, 1), 0.3, epsilon = 1e-14);
    }

    #[test]
    fn weight_vector_validation() {
        assert!(WeightVector::new(vec![0.5, 0.5]).is_ok());
        assert!(WeightVector::new(vec![1.0]).is_err());
        assert!(WeightVector::new(vec![0.0, 1.0]).is_err());
        assert!(WeightVector::new(vec![0.5, 0.6]).is_err());
        assert!(LogWeightVector::new(vec![0.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn update_rule_parsing() {
        assert_eq!("nonlinear".parse::<UpdateRule>().unwrap(), UpdateRule::Nonlinear);
        assert_eq!("linearized".parse::<UpdateRule>().unwrap(), UpdateRule::Linearized);
        assert!("linear".parse::<UpdateRule>().is_err());
    }

    #[test]
    fn linearized_rule_applies_in_log_domain() {
        let s = StepSchedule::new(0.3, 1.0).unwrap();
        let mut lw = LogWeightVector::zeros(3);
        UpdateRule::Linearized.apply(&mut lw, 0, &s, 1).unwrap();
        assert_vec_eq(lw.normalize().as_slice(), &[0.4, 0.3, 0.3], 1e-15);
    }

    fn simplex(d: usize) -> impl Strategy<Value = WeightVector> {
        prop::collection::vec(0.01f64..1.0, d).prop_map(|raw| {
            let s: f64 = raw.iter().sum();
            WeightVector(raw.into_iter().map(|x| x / s).collect())
        })
    }

    fn assert_on_simplex(w: &WeightVector) {
        assert!(w.as_slice().iter().all(|x| *x > 0.0 && *x < 1.0), "{w:?}");
        let s: f64 = w.as_slice().iter().sum();
        assert!((s - 1.0).abs() <= 1e-12, "sum {s}");
    }

    proptest! {
        #[test]
        fn nonlinear_matches_normalized_unnormalized(
            (theta, hit) in (2usize..12).prop_flat_map(|d| (simplex(d), 0..d)),
            gamma in 0.0f64..0.99,
            shift in -50.0f64..50.0,
        ) {
            let lw = LogWeightVector::new(theta.as_slice().iter().map(|w| w.ln() + shift).collect()).unwrap();
            let a = normalize(&update_unnormalized(&lw, hit, gamma).unwrap());
            let b = update_nonlinear(&normalize(&lw), hit, gamma).unwrap();
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }

        #[test]
        fn updates_stay_on_simplex(
            (theta, hit) in (2usize..12).prop_flat_map(|d| (simplex(d), 0..d)),
            gamma in 0.0f64..0.99,
        ) {
            assert_on_simplex(&update_nonlinear(&theta, hit, gamma).unwrap());
            assert_on_simplex(&update_linearized(&theta, hit, gamma).unwrap());
            let lw = LogWeightVector::new(theta.as_slice().iter().map(|w| w.ln()).collect()).unwrap();
            assert_on_simplex(&normalize(&update_unnormalized(&lw, hit, gamma).unwrap()));
        }

        #[test]
        fn nonlinear_penalizes_hit_stratum(
            (theta, hit) in (2usize..8).prop_flat_map(|d| (simplex(d), 0..d)),
            gamma in 0.001f64..0.99,
        ) {
            let next = update_nonlinear(&theta, hit, gamma).unwrap();
            for i in 0..theta.len() {
                if i == hit {
                    prop_assert!(next[i] > theta[i]);
                } else {
                    prop_assert!(next[i] < theta[i]);
                }
            }
        }
    }
}
