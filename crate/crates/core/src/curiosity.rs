//! Intrinsic curiosity: forward-model prediction error in a learned feature
//! space, with the features shaped by a jointly trained inverse model.

use ndarray::{s, Array2, ArrayView2, Axis};

use crate::config::{ActionKind, ObsKind};
use crate::controller::{Action, CONTINUOUS_DIM, DISCRETE_BRANCHES};
use crate::error::{Error, Result};
use crate::neural::init::orthogonal;
use crate::neural::layers::{hconcat, Activation, LayerKind, Sequential};
use crate::neural::optim::{clip_grad_norm, Adam};
use crate::neural::{cast, ParamSet, Scalar};
use crate::rng::Rng;
use crate::sensors::{IMAGE_SIZE, VECTOR_OBS_DIM};

pub const FEATURE_DIM: usize = 64;
const HIDDEN: usize = 128;
/// Weight of the forward loss against the inverse loss.
const FORWARD_WEIGHT: f64 = 0.2;

#[derive(Debug, Clone)]
pub struct Icm<T = f32> {
    pub params: ParamSet<T>,
    pub strength: f64,
    action_kind: ActionKind,
    encoder: Sequential,
    forward_model: Sequential,
    inverse_model: Sequential,
}

/// Losses of one training step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcmLosses {
    pub forward: f64,
    pub inverse: f64,
}

fn action_width(kind: ActionKind) -> usize {
    match kind {
        ActionKind::Continuous => CONTINUOUS_DIM,
        ActionKind::Discrete => DISCRETE_BRANCHES.iter().sum(),
    }
}

/// Continuous actions clamped to the controller range; discrete as one-hot branches.
pub fn encode_actions<T: Scalar>(actions: &[Action], kind: ActionKind) -> Array2<T> {
    let w = action_width(kind);
    let mut out = Array2::zeros((actions.len(), w));
    for (i, a) in actions.iter().enumerate() {
        match a {
            Action::Continuous(v) => {
                for k in 0..CONTINUOUS_DIM {
                    out[[i, k]] = cast(v[k].clamp(-1.0, 1.0));
                }
            }
            Action::Discrete(idx) => {
                let mut off = 0;
                for (b, &n) in DISCRETE_BRANCHES.iter().enumerate() {
                    out[[i, off + idx[b].min(n - 1)]] = T::one();
                    off += n;
                }
            }
        }
    }
    out
}

impl<T: Scalar> Icm<T> {
    pub fn new(obs_kind: ObsKind, action_kind: ActionKind, strength: f64, rng: &mut Rng) -> Self {
        let act = Activation::Swish;
        let mut params = ParamSet::new();
        let (names, specs): (Vec<String>, Vec<(LayerKind, Activation)>) = match obs_kind {
            ObsKind::Vector => (
                vec!["icm.enc0".into(), "icm.enc1".into()],
                vec![
                    (LayerKind::Dense { inputs: VECTOR_OBS_DIM, outputs: HIDDEN }, act),
                    (LayerKind::Dense { inputs: HIDDEN, outputs: FEATURE_DIM }, act),
                ],
            ),
            ObsKind::Visual => {
                let c1 = LayerKind::Conv { height: IMAGE_SIZE, width: IMAGE_SIZE, in_channels: 3, kernel: 8, stride: 4, out_channels: 16 };
                let (h1, _) = LayerKind::conv_out_hw(IMAGE_SIZE, IMAGE_SIZE, 8, 4);
                let c2 = LayerKind::Conv { height: h1, width: h1, in_channels: 16, kernel: 4, stride: 2, out_channels: 32 };
                (
                    vec!["icm.conv1".into(), "icm.conv2".into(), "icm.enc".into()],
                    vec![
                        (c1, act),
                        (c2, act),
                        (LayerKind::Dense { inputs: c2.output_dim(), outputs: FEATURE_DIM }, act),
                    ],
                )
            }
        };
        let encoder = Sequential::register(&mut params, &names, &specs);
        let aw = action_width(action_kind);
        let forward_model = Sequential::register(
            &mut params,
            &["icm.fwd0".into(), "icm.fwd1".into()],
            &[
                (LayerKind::Dense { inputs: FEATURE_DIM + aw, outputs: HIDDEN }, act),
                (LayerKind::Dense { inputs: HIDDEN, outputs: FEATURE_DIM }, Activation::Identity),
            ],
        );
        let inverse_model = Sequential::register(
            &mut params,
            &["icm.inv0".into(), "icm.inv1".into()],
            &[
                (LayerKind::Dense { inputs: 2 * FEATURE_DIM, outputs: HIDDEN }, act),
                (LayerKind::Dense { inputs: HIDDEN, outputs: aw }, Activation::Identity),
            ],
        );
        for seq in [&encoder, &forward_model, &inverse_model] {
            for l in &seq.layers {
                let [r, c] = l.kind.weight_shape();
                let w = orthogonal(r, c, std::f64::consts::SQRT_2, rng);
                for (d, s) in params.data_mut(l.weight).iter_mut().zip(w) {
                    *d = cast(s);
                }
            }
        }
        Self { params, strength, action_kind, encoder, forward_model, inverse_model }
    }

    fn features(&self, obs: ArrayView2<T>) -> Result<Array2<T>> {
        if obs.ncols() != self.encoder.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "curiosity encoder expects {} inputs, got {}",
                self.encoder.input_dim(),
                obs.ncols()
            )));
        }
        Ok(self.encoder.forward(&self.params, obs.to_owned()).0)
    }

    /// Intrinsic reward `strength · ½‖φ̂(s') − φ(s')‖²` for each transition.
    pub fn rewards(&self, obs: ArrayView2<T>, actions: &[Action], next_obs: ArrayView2<T>) -> Result<Vec<f64>> {
        if self.strength == 0.0 {
            return Ok(vec![0.0; actions.len()]);
        }
        let phi = self.features(obs)?;
        let phi_next = self.features(next_obs)?;
        let a = encode_actions::<T>(actions, self.action_kind);
        let (pred, _) = self.forward_model.forward(&self.params, hconcat(phi.view(), a.view()));
        Ok(pred
            .outer_iter()
            .zip(phi_next.outer_iter())
            .map(|(p, t)| {
                let e: f64 = p.iter().zip(t).map(|(p, t)| (*p - *t).to_f64().unwrap().powi(2)).sum();
                self.strength * 0.5 * e
            })
            .collect())
    }

    /// Loss `(1−w)·inverse + w·forward` and its gradient. The forward model
    /// sees detached features, so the encoder is shaped by the inverse model only.
    pub fn loss_and_grad(&self, obs: ArrayView2<T>, actions: &[Action], next_obs: ArrayView2<T>) -> Result<(IcmLosses, ParamSet<T>)> {
        let n = actions.len();
        if n == 0 || obs.nrows() != n || next_obs.nrows() != n {
            return Err(Error::LengthMismatch("curiosity batch rows differ".into()));
        }
        let both = ndarray::concatenate(Axis(0), &[obs, next_obs]).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        if both.ncols() != self.encoder.input_dim() {
            return Err(Error::ShapeMismatch("curiosity observation width".into()));
        }
        let (phi_all, enc_cache) = self.encoder.forward(&self.params, both);
        let phi = phi_all.slice(s![..n, ..]).to_owned();
        let phi_next = phi_all.slice(s![n.., ..]).to_owned();
        let a = encode_actions::<T>(actions, self.action_kind);
        let inv_n = cast::<T>(1.0 / n as f64);
        let mut grads = self.params.zeros_like();

        // forward model on detached features
        let (pred, fwd_cache) = self.forward_model.forward(&self.params, hconcat(phi.view(), a.view()));
        let diff = &pred - &phi_next;
        let fwd_loss = diff.iter().map(|d| d.to_f64().unwrap().powi(2)).sum::<f64>() * 0.5 / n as f64;
        let d_pred = diff.mapv(|d| d * inv_n * cast(FORWARD_WEIGHT));
        self.forward_model.backward(&self.params, &fwd_cache, d_pred, &mut grads, false);

        // inverse model; its gradient flows into the encoder
        let (a_hat, inv_cache) = self.inverse_model.forward(&self.params, hconcat(phi.view(), phi_next.view()));
        let (inv_loss, d_ahat) = inverse_loss(&a_hat, &a, self.action_kind);
        let d_ahat = d_ahat.mapv(|d| d * inv_n * cast(1.0 - FORWARD_WEIGHT));
        let d_in = self
            .inverse_model
            .backward(&self.params, &inv_cache, d_ahat, &mut grads, true)
            .expect("requested");
        let d_phi_all = ndarray::concatenate(
            Axis(0),
            &[d_in.slice(s![.., ..FEATURE_DIM]), d_in.slice(s![.., FEATURE_DIM..])],
        )
        .expect("same width");
        self.encoder.backward(&self.params, &enc_cache, d_phi_all, &mut grads, false);

        let losses = IcmLosses { forward: fwd_loss, inverse: inv_loss / n as f64 };
        if !losses.forward.is_finite() || !losses.inverse.is_finite() {
            return Err(Error::NonFiniteLoss(format!("curiosity losses {losses:?}")));
        }
        Ok((losses, grads))
    }

    pub fn train_step(
        &mut self,
        opt: &mut Adam<T>,
        obs: ArrayView2<T>,
        actions: &[Action],
        next_obs: ArrayView2<T>,
        lr: f64,
        max_grad_norm: f64,
    ) -> Result<IcmLosses> {
        let (losses, mut grads) = self.loss_and_grad(obs, actions, next_obs)?;
        clip_grad_norm(&mut grads, max_grad_norm);
        opt.step(&mut self.params, &grads, lr);
        Ok(losses)
    }
}

/// Summed (not averaged) inverse loss and its gradient w.r.t. the predictions.
fn inverse_loss<T: Scalar>(a_hat: &Array2<T>, a: &Array2<T>, kind: ActionKind) -> (f64, Array2<T>) {
    match kind {
        ActionKind::Continuous => {
            let diff = a_hat - a;
            let loss = diff.iter().map(|d| d.to_f64().unwrap().powi(2)).sum::<f64>() * 0.5;
            (loss, diff)
        }
        ActionKind::Discrete => {
            // per-branch softmax cross-entropy against one-hot targets
            let mut grad = Array2::zeros(a_hat.raw_dim());
            let mut loss = 0.0;
            for i in 0..a_hat.nrows() {
                let mut off = 0;
                for &nb in &DISCRETE_BRANCHES {
                    let logits: Vec<f64> = (0..nb).map(|j| a_hat[[i, off + j]].to_f64().unwrap()).collect();
                    let lp = crate::neural::dist::log_softmax(&logits);
                    for j in 0..nb {
                        let y = a[[i, off + j]].to_f64().unwrap();
                        loss -= y * lp[j];
                        grad[[i, off + j]] = cast(lp[j].exp() - y);
                    }
                    off += nb;
                }
            }
            (loss, grad)
        }
    }
}

/// Reward through an optional model; curiosity must be set up before use.
pub fn curiosity_reward<T: Scalar>(icm: Option<&Icm<T>>, obs: ArrayView2<T>, actions: &[Action], next_obs: ArrayView2<T>) -> Result<Vec<f64>> {
    icm.ok_or(Error::ModelNotInitialized)?.rewards(obs, actions, next_obs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(seed: u64, n: usize) -> Array2<f64> {
        let mut r = Rng::new(seed);
        Array2::from_shape_fn((n, VECTOR_OBS_DIM), |_| r.uniform(-1.0, 1.0).unwrap())
    }

    #[test]
    fn reward_nonnegative_on_identical_obs() {
        let icm = Icm::<f64>::new(ObsKind::Vector, ActionKind::Continuous, 0.1, &mut Rng::new(0));
        let o = obs(1, 1);
        let r = icm.rewards(o.view(), &[Action::Continuous([0.0; 4])], o.view()).unwrap();
        assert!(r[0] >= 0.0);
    }

    #[test]
    fn zero_strength_zero_reward() {
        let icm = Icm::<f64>::new(ObsKind::Vector, ActionKind::Discrete, 0.0, &mut Rng::new(0));
        let (a, b) = (obs(1, 3), obs(2, 3));
        let acts = vec![Action::Discrete([1, 2, 0, 1]); 3];
        assert_eq!(icm.rewards(a.view(), &acts, b.view()).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn uninitialized_model_is_an_error() {
        let o = obs(1, 1);
        let r = curiosity_reward::<f64>(None, o.view(), &[Action::Continuous([0.0; 4])], o.view());
        assert!(matches!(r, Err(Error::ModelNotInitialized)));
    }

    #[test]
    fn overfitting_one_transition_shrinks_reward() {
        let mut icm = Icm::<f64>::new(ObsKind::Vector, ActionKind::Continuous, 0.1, &mut Rng::new(4));
        let (s, s1) = (obs(5, 1), obs(6, 1));
        let acts = [Action::Continuous([0.5, -0.3, 0.0, 1.0])];
        let before = icm.rewards(s.view(), &acts, s1.view()).unwrap()[0];
        let mut opt = Adam::new(&icm.params, 0.9, 0.999, 1e-8);
        for _ in 0..500 {
            icm.train_step(&mut opt, s.view(), &acts, s1.view(), 1e-3, 10.0).unwrap();
        }
        let after = icm.rewards(s.view(), &acts, s1.view()).unwrap()[0];
        assert!(before > 0.0);
        assert!(after < 0.1 * before, "{before} -> {after}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for kind in [ActionKind::Continuous, ActionKind::Discrete] {
            let icm = Icm::<f64>::new(ObsKind::Vector, kind, 0.1, &mut Rng::new(8));
            let (s, s1) = (obs(9, 3), obs(10, 3));
            let acts: Vec<Action> = match kind {
                ActionKind::Continuous => (0..3).map(|i| Action::Continuous([0.2 * i as f64, -0.4, 0.9, 0.1])).collect(),
                ActionKind::Discrete => (0..3).map(|i| Action::Discrete([i, i % 3, 1, 0])).collect(),
            };
            let (_, g) = icm.loss_and_grad(s.view(), &acts, s1.view()).unwrap();
            // the forward model sees detached features: freeze them in the oracle
            let enc0 = icm.features(s.view()).unwrap();
            let enc = icm.features(s1.view()).unwrap();
            let total = |p: &ParamSet<f64>| {
                let m = Icm { params: p.clone(), ..icm.clone() };
                let phi = m.features(s.view()).unwrap();
                let phi1 = m.features(s1.view()).unwrap();
                let a = encode_actions::<f64>(&acts, kind);
                let (pred, _) = m.forward_model.forward(&m.params, hconcat(enc0.view(), a.view()));
                let f = (&pred - &enc).iter().map(|d| d * d).sum::<f64>() * 0.5 / 3.0;
                let (ah, _) = m.inverse_model.forward(&m.params, hconcat(phi.view(), phi1.view()));
                let (inv, _) = inverse_loss(&ah, &a, kind);
                FORWARD_WEIGHT * f + (1.0 - FORWARD_WEIGHT) * inv / 3.0
            };
            let mut r = Rng::new(11);
            for (ti, t) in icm.params.tensors.iter().enumerate() {
                for _ in 0..3 {
                    let j = r.below(t.len());
                    let mut p = icm.params.clone();
                    p.tensors[ti].data[j] += 1e-6;
                    let up = total(&p);
                    p.tensors[ti].data[j] -= 2e-6;
                    let dn = total(&p);
                    let fd = (up - dn) / 2e-6;
                    let an = g.tensors[ti].data[j];
                    assert!((fd - an).abs() <= 1e-6 * (1.0 + fd.abs()), "{} [{j}]: fd {fd} vs {an}", t.name);
                }
            }
        }
    }
}
