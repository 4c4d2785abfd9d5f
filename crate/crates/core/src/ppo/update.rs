//! Clipped-surrogate update over one full buffer.

use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use serde::Serialize;

use super::PpoConfig;
use crate::controller::{Action, CONTINUOUS_DIM};
use crate::error::{Error, Result};
use crate::neural::dist::{branches, entropy, log_prob, log_softmax, PolicyDist};
use crate::neural::optim::{clip_grad_norm, Adam};
use crate::neural::{cast, OutputGrads, Outputs, ParamSet, PolicyNet, Scalar};
use crate::rng::Rng;

/// Samples for one update, advantages already normalized.
#[derive(Debug, Clone)]
pub struct Batch<T> {
    pub obs: Array2<T>,
    pub actions: Vec<Action>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    /// `[n, value_heads]` regression targets.
    pub returns: Array2<f64>,
}

impl<T> Batch<T> {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct LossParts {
    pub total: f64,
    /// −L_clip.
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub clip_frac: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_frac: f64,
    pub minibatches: usize,
}

/// Loss over the rows `idx` of `batch` and its gradient w.r.t. the network outputs.
pub fn minibatch_loss<T: Scalar>(out: &Outputs<T>, batch: &Batch<T>, idx: &[usize], cfg: &PpoConfig) -> (LossParts, OutputGrads<T>) {
    let n = idx.len() as f64;
    let mut d = OutputGrads::zeros_like(out);
    let mut parts = LossParts::default();
    let mut d_log_std = [0.0f64; CONTINUOUS_DIM];
    let heads = out.values.ncols();
    for (row, &i) in idx.iter().enumerate() {
        let o = out.row(row);
        let a = &batch.actions[i];
        let adv = batch.advantages[i];
        let ratio = (log_prob(&o, a) - batch.old_log_probs[i]).exp();
        let clipped = ratio.clamp(1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon);
        let (s1, s2) = (ratio * adv, clipped * adv);
        parts.policy -= s1.min(s2) / n;
        if (ratio - 1.0).abs() > cfg.clip_epsilon {
            parts.clip_frac += 1.0 / n;
        }
        // d(−L_clip)/d log π: only the unclipped branch carries gradient
        let g_lp = if s1 <= s2 { -adv * ratio / n } else { 0.0 };
        let h = entropy(&o);
        parts.entropy += h / n;
        let g_h = -cfg.entropy_beta / n;

        match (&o.dist, a) {
            (PolicyDist::Gaussian { mean, log_std }, Action::Continuous(act)) => {
                for k in 0..CONTINUOUS_DIM {
                    let var = (2.0 * log_std[k]).exp();
                    let diff = act[k] - mean[k];
                    d.heads[[row, k]] = cast(g_lp * diff / var);
                    // ∂log π/∂log σ = z² − 1, ∂H/∂log σ = 1
                    d_log_std[k] += g_lp * (diff * diff / var - 1.0) + g_h;
                }
            }
            (PolicyDist::Categorical { logits }, Action::Discrete(choice)) => {
                let mut off = 0;
                for (b, logits_b) in branches(logits).into_iter().enumerate() {
                    let lp = log_softmax(logits_b);
                    let hb: f64 = -lp.iter().map(|l| l.exp() * l).sum::<f64>();
                    for (j, &l) in lp.iter().enumerate() {
                        let p = l.exp();
                        let dlp = if j == choice[b] { 1.0 - p } else { -p };
                        let dh = -p * (l + hb);
                        d.heads[[row, off + j]] = cast(g_lp * dlp + g_h * dh);
                    }
                    off += logits_b.len();
                }
            }
            _ => unreachable!("action kind checked when the batch was built"),
        }

        for k in 0..heads {
            let err = o.values[k] - batch.returns[[i, k]];
            parts.value += err * err / n;
            d.values[[row, k]] = cast(cfg.value_coeff * 2.0 * err / n);
        }
    }
    if let Some(dl) = d.log_std.as_mut() {
        *dl = Array1::from_iter(d_log_std.iter().map(|&v| cast::<T>(v)));
    }
    parts.total = parts.policy + cfg.value_coeff * parts.value - cfg.entropy_beta * parts.entropy;
    (parts, d)
}

/// Loss and parameter gradient over the rows `idx`.
pub fn minibatch_gradient<T: Scalar>(net: &PolicyNet<T>, batch: &Batch<T>, idx: &[usize], cfg: &PpoConfig) -> Result<(LossParts, ParamSet<T>)> {
    let x = batch.obs.select(Axis(0), idx);
    let (out, cache) = net.forward_cached(x.view())?;
    let (parts, d_out) = minibatch_loss(&out, batch, idx, cfg);
    if !parts.total.is_finite() {
        return Err(Error::NonFiniteLoss(format!("minibatch loss {parts:?}")));
    }
    Ok((parts, net.backward(&cache, &d_out)))
}

#[derive(Serialize)]
struct MinibatchDump<'a> {
    epoch: usize,
    reason: &'a str,
    indices: &'a [usize],
    old_log_probs: Vec<f64>,
    advantages: Vec<f64>,
    returns: Vec<Vec<f64>>,
}

fn dump_minibatch<T>(dir: &Path, epoch: usize, reason: &str, batch: &Batch<T>, idx: &[usize]) {
    let dump = MinibatchDump {
        epoch,
        reason,
        indices: idx,
        old_log_probs: idx.iter().map(|&i| batch.old_log_probs[i]).collect(),
        advantages: idx.iter().map(|&i| batch.advantages[i]).collect(),
        returns: idx.iter().map(|&i| batch.returns.row(i).to_vec()).collect(),
    };
    // best effort: the update error is what gets reported
    let _ = std::fs::write(
        dir.join("nonfinite_minibatch.json"),
        serde_json::to_string_pretty(&dump).unwrap_or_default(),
    );
}

/// `num_epochs` passes of shuffled minibatches. On a non-finite loss or
/// parameter the network is restored to its state before the call.
pub fn ppo_update<T: Scalar>(
    net: &mut PolicyNet<T>,
    opt: &mut Adam<T>,
    batch: &Batch<T>,
    cfg: &PpoConfig,
    lr: f64,
    rng: &mut Rng,
    dump_dir: Option<&Path>,
) -> Result<UpdateStats> {
    if batch.is_empty() {
        return Err(Error::EmptyInput);
    }
    let batch_size = cfg.batch_size_for(net.desc.action_kind).min(batch.len());
    let backup = (net.params.clone(), opt.clone());
    let mut stats = UpdateStats::default();
    let mut order: Vec<usize> = (0..batch.len()).collect();
    for epoch in 0..cfg.num_epochs {
        shuffle(&mut order, rng);
        for idx in order.chunks(batch_size) {
            let fail = |net: &mut PolicyNet<T>, opt: &mut Adam<T>, why: String| {
                net.params = backup.0.clone();
                *opt = backup.1.clone();
                if let Some(dir) = dump_dir {
                    dump_minibatch(dir, epoch, &why, batch, idx);
                }
                Error::NonFiniteLoss(format!("epoch {epoch}: {why}"))
            };
            let (parts, mut grads) = match minibatch_gradient(net, batch, idx, cfg) {
                Ok(v) => v,
                Err(Error::NonFiniteLoss(m)) => return Err(fail(net, opt, m)),
                Err(e) => return Err(e),
            };
            clip_grad_norm(&mut grads, cfg.grad_clip_norm);
            opt.step(&mut net.params, &grads, lr);
            if !net.params.all_finite() {
                return Err(fail(net, opt, "parameters became non-finite".into()));
            }
            stats.policy_loss += parts.policy;
            stats.value_loss += parts.value;
            stats.entropy += parts.entropy;
            stats.clip_frac += parts.clip_frac;
            stats.minibatches += 1;
        }
    }
    let m = stats.minibatches as f64;
    stats.policy_loss /= m;
    stats.value_loss /= m;
    stats.entropy /= m;
    stats.clip_frac /= m;
    Ok(stats)
}

/// Fisher–Yates shuffle on the run's own stream.
pub fn shuffle<X>(xs: &mut [X], rng: &mut Rng) {
    for i in (1..xs.len()).rev() {
        xs.swap(i, rng.below(i + 1));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ActionKind, ObsKind};
    use crate::neural::dist::sample_action;
    use crate::neural::ArchDescriptor;
    use crate::sensors::VECTOR_OBS_DIM;

    fn make(kind: ActionKind, n: usize, seed: u64) -> (PolicyNet<f64>, Batch<f64>) {
        let desc = ArchDescriptor::new(ObsKind::Vector, kind, 8, 1);
        let mut r = Rng::new(seed);
        let mut net = PolicyNet::<f64>::new(&desc, &mut r).unwrap();
        // break the near-zero policy head so gradients are not degenerate
        let p = net.params.index_of("policy.w").unwrap();
        for v in net.params.data_mut(p) {
            *v = 0.3 * r.normal();
        }
        let obs = Array2::from_shape_fn((n, VECTOR_OBS_DIM), |_| r.uniform(-1.0, 1.0).unwrap());
        let out = net.forward(obs.view()).unwrap();
        let mut actions = Vec::new();
        let mut lps = Vec::new();
        for i in 0..n {
            let (a, lp) = sample_action(&out.row(i), &mut r);
            actions.push(a);
            lps.push(lp);
        }
        let advantages = (0..n).map(|_| r.normal()).collect();
        let returns = Array2::from_shape_fn((n, 1), |_| r.normal());
        (net, Batch { obs, actions, old_log_probs: lps, advantages, returns })
    }

    fn full(n: usize) -> Vec<usize> {
        (0..n).collect()
    }

    #[test]
    fn ratio_one_gives_zero_surrogate_for_centered_advantages() {
        let (net, mut b) = make(ActionKind::Discrete, 16, 1);
        let mean = b.advantages.iter().sum::<f64>() / 16.0;
        b.advantages.iter_mut().for_each(|a| *a -= mean);
        let out = net.forward(b.obs.view()).unwrap();
        let (parts, _) = minibatch_loss(&out, &b, &full(16), &PpoConfig::default());
        assert!(parts.policy.abs() < 1e-12);
        assert_eq!(parts.clip_frac, 0.0);
    }

    #[test]
    fn output_gradients_match_finite_differences() {
        for kind in [ActionKind::Continuous, ActionKind::Discrete] {
            let (net, mut b) = make(kind, 12, 2);
            // move old log-probs so some ratios land outside the clip range
            for (i, lp) in b.old_log_probs.iter_mut().enumerate() {
                *lp += 0.4 * ((i % 3) as f64 - 1.0);
            }
            let cfg = PpoConfig::default();
            let idx = full(12);
            let (_, g) = minibatch_gradient(&net, &b, &idx, &cfg).unwrap();
            let loss = |p: &ParamSet<f64>| {
                let n = PolicyNet::from_params(&net.desc, p.clone()).unwrap();
                let out = n.forward(b.obs.view()).unwrap();
                minibatch_loss(&out, &b, &idx, &cfg).0.total
            };
            let mut r = Rng::new(5);
            for (ti, t) in net.params.tensors.iter().enumerate() {
                for _ in 0..4 {
                    let j = r.below(t.len());
                    let mut p = net.params.clone();
                    p.tensors[ti].data[j] += 1e-6;
                    let up = loss(&p);
                    p.tensors[ti].data[j] -= 2e-6;
                    let fd = (up - loss(&p)) / 2e-6;
                    let an = g.tensors[ti].data[j];
                    assert!((fd - an).abs() <= 1e-5 * (1.0 + fd.abs()), "{kind:?} {}[{j}] fd {fd} an {an}", t.name);
                }
            }
        }
    }

    #[test]
    fn unclipped_one_epoch_matches_vanilla_policy_gradient() {
        let (net, b) = make(ActionKind::Continuous, 32, 3);
        let cfg = PpoConfig { clip_epsilon: 1e9, entropy_beta: 0.0, value_coeff: 0.0, ..Default::default() };
        let idx = full(32);
        let (_, g) = minibatch_gradient(&net, &b, &idx, &cfg).unwrap();
        // −mean(A·∇log π) by finite differences of the log-likelihood
        let pg = |p: &ParamSet<f64>| {
            let n = PolicyNet::from_params(&net.desc, p.clone()).unwrap();
            let out = n.forward(b.obs.view()).unwrap();
            -(0..32).map(|i| b.advantages[i] * log_prob(&out.row(i), &b.actions[i])).sum::<f64>() / 32.0
        };
        let mut fd = Vec::new();
        let mut an = Vec::new();
        for (ti, t) in net.params.tensors.iter().enumerate() {
            for j in (0..t.len()).step_by(7) {
                let mut p = net.params.clone();
                p.tensors[ti].data[j] += 1e-6;
                let up = pg(&p);
                p.tensors[ti].data[j] -= 2e-6;
                fd.push((up - pg(&p)) / 2e-6);
                an.push(g.tensors[ti].data[j]);
            }
        }
        let dot: f64 = fd.iter().zip(&an).map(|(a, b)| a * b).sum();
        let na = fd.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nb = an.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(dot / (na * nb) > 0.999);
    }

    #[test]
    fn positive_advantage_raises_log_prob() {
        for kind in [ActionKind::Continuous, ActionKind::Discrete] {
            let (mut net, mut b) = make(kind, 1, 4);
            b.advantages[0] = 1.0;
            let before = log_prob(&net.forward(b.obs.view()).unwrap().row(0), &b.actions[0]);
            let cfg = PpoConfig { num_epochs: 1, batch_size: Some(1), allow_small_continuous_batch: true, ..Default::default() };
            let mut opt = Adam::new(&net.params, 0.9, 0.999, 1e-5);
            ppo_update(&mut net, &mut opt, &b, &cfg, 1e-3, &mut Rng::new(0), None).unwrap();
            let after = log_prob(&net.forward(b.obs.view()).unwrap().row(0), &b.actions[0]);
            assert!(after > before, "{kind:?}: {before} -> {after}");
        }
    }

    #[test]
    fn clip_fraction_matches_recount() {
        let (net, mut b) = make(ActionKind::Discrete, 40, 6);
        let mut r = Rng::new(8);
        for lp in &mut b.old_log_probs {
            *lp += r.uniform(-0.5, 0.5).unwrap();
        }
        let cfg = PpoConfig::default();
        let out = net.forward(b.obs.view()).unwrap();
        let (parts, _) = minibatch_loss(&out, &b, &full(40), &cfg);
        let count = (0..40)
            .filter(|&i| {
                let ratio = (log_prob(&out.row(i), &b.actions[i]) - b.old_log_probs[i]).exp();
                (ratio - 1.0).abs() > cfg.clip_epsilon
            })
            .count();
        assert!(count > 0 && count < 40);
        assert!((parts.clip_frac - count as f64 / 40.0).abs() < 1e-12);
    }

    #[test]
    fn nonfinite_loss_restores_params_and_dumps() {
        let (mut net, mut b) = make(ActionKind::Discrete, 8, 7);
        b.advantages[3] = f64::NAN;
        let before = net.params.clone();
        let mut opt = Adam::new(&net.params, 0.9, 0.999, 1e-5);
        let dir = tempfile::tempdir().unwrap();
        let cfg = PpoConfig { batch_size: Some(4), ..Default::default() };
        let r = ppo_update(&mut net, &mut opt, &b, &cfg, 1e-3, &mut Rng::new(1), Some(dir.path()));
        assert!(matches!(r, Err(Error::NonFiniteLoss(_))));
        assert_eq!(net.params, before);
        assert!(dir.path().join("nonfinite_minibatch.json").exists());
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut v: Vec<usize> = (0..50).collect();
        shuffle(&mut v, &mut Rng::new(2));
        let mut s = v.clone();
        s.sort();
        assert_eq!(s, (0..50).collect::<Vec<_>>());
        assert_ne!(v, s);
    }
}
