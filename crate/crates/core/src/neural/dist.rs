//! Action distributions: diagonal Gaussian and independent categorical branches.

use crate::controller::{Action, CONTINUOUS_DIM, DISCRETE_BRANCHES};
use crate::rng::Rng;

use super::policy::{Outputs, LOG_STD_MAX, LOG_STD_MIN};
use super::Scalar;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Single-sample policy output in f64.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyDist {
    Gaussian {
        mean: [f64; CONTINUOUS_DIM],
        log_std: [f64; CONTINUOUS_DIM],
    },
    Categorical {
        /// Concatenated logits of the move, steer, jump and crouch branches.
        logits: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub dist: PolicyDist,
    /// Extrinsic value first, then the curiosity value when present.
    pub values: Vec<f64>,
}

impl<T: Scalar> Outputs<T> {
    pub fn batch_len(&self) -> usize {
        self.heads.nrows()
    }

    pub fn row(&self, i: usize) -> PolicyOutput {
        let f = |v: &T| v.to_f64().unwrap();
        let values = self.values.row(i).iter().map(f).collect();
        let dist = match &self.log_std {
            Some(ls) => {
                let mut mean = [0.0; CONTINUOUS_DIM];
                let mut log_std = [0.0; CONTINUOUS_DIM];
                for k in 0..CONTINUOUS_DIM {
                    mean[k] = f(&self.heads[[i, k]]);
                    log_std[k] = f(&ls[k]);
                }
                PolicyDist::Gaussian { mean, log_std }
            }
            None => PolicyDist::Categorical {
                logits: self.heads.row(i).iter().map(f).collect(),
            },
        };
        PolicyOutput { dist, values }
    }
}

/// Log-softmax of one branch.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

/// Splits concatenated logits into the four branch slices.
pub fn branches(logits: &[f64]) -> Vec<&[f64]> {
    let mut out = Vec::with_capacity(DISCRETE_BRANCHES.len());
    let mut start = 0;
    for &n in &DISCRETE_BRANCHES {
        out.push(&logits[start..start + n]);
        start += n;
    }
    out
}

pub fn gaussian_log_prob(a: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    a.iter()
        .zip(mean)
        .zip(log_std)
        .map(|((a, m), ls)| {
            let ls = ls.clamp(LOG_STD_MIN, LOG_STD_MAX);
            let z = (a - m) / ls.exp();
            -0.5 * z * z - ls - HALF_LN_2PI
        })
        .sum()
}

pub fn log_prob(out: &PolicyOutput, action: &Action) -> f64 {
    match (&out.dist, action) {
        (PolicyDist::Gaussian { mean, log_std }, Action::Continuous(a)) => gaussian_log_prob(a, mean, log_std),
        (PolicyDist::Categorical { logits }, Action::Discrete(idx)) => branches(logits)
            .iter()
            .zip(idx)
            .map(|(b, &i)| log_softmax(b)[i])
            .sum(),
        _ => panic!("action kind does not match policy output"),
    }
}

pub fn entropy(out: &PolicyOutput) -> f64 {
    match &out.dist {
        PolicyDist::Gaussian { log_std, .. } => log_std.iter().map(|ls| ls + 0.5 + HALF_LN_2PI).sum(),
        PolicyDist::Categorical { logits } => branches(logits)
            .iter()
            .map(|b| -log_softmax(b).iter().map(|lp| lp.exp() * lp).sum::<f64>())
            .sum(),
    }
}

/// Draws an action and returns it with its log-probability.
///
/// Continuous samples are returned unclamped; the controller clamps them.
pub fn sample_action(out: &PolicyOutput, rng: &mut Rng) -> (Action, f64) {
    let action = match &out.dist {
        PolicyDist::Gaussian { mean, log_std } => {
            let mut a = [0.0; CONTINUOUS_DIM];
            for k in 0..CONTINUOUS_DIM {
                a[k] = mean[k] + log_std[k].clamp(LOG_STD_MIN, LOG_STD_MAX).exp() * rng.normal();
            }
            Action::Continuous(a)
        }
        PolicyDist::Categorical { logits } => {
            let mut idx = [0usize; 4];
            for (slot, b) in idx.iter_mut().zip(branches(logits)) {
                let u = rng.next_f64();
                let mut acc = 0.0;
                *slot = b.len() - 1;
                for (i, lp) in log_softmax(b).iter().enumerate() {
                    acc += lp.exp();
                    if u < acc {
                        *slot = i;
                        break;
                    }
                }
            }
            Action::Discrete(idx)
        }
    };
    let lp = log_prob(out, &action);
    (action, lp)
}

/// Mode of the distribution: the mean, or the argmax of every branch.
pub fn greedy_action(out: &PolicyOutput) -> Action {
    match &out.dist {
        PolicyDist::Gaussian { mean, .. } => Action::Continuous(*mean),
        PolicyDist::Categorical { logits } => {
            let mut idx = [0usize; 4];
            for (slot, b) in idx.iter_mut().zip(branches(logits)) {
                // first maximum wins ties
                *slot = b
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                    .0;
            }
            Action::Discrete(idx)
        }
    }
}
