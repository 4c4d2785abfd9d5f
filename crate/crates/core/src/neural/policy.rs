//! Shared-trunk policy/value network.

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::init::orthogonal;
use super::layers::{Activation, LayerKind, SeqCache, Sequential};
use super::params::ParamSet;
use super::{cast, Scalar};
use crate::config::{ActionKind, ObsKind};
use crate::controller::{CONTINUOUS_DIM, DISCRETE_BRANCHES};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::sensors::{IMAGE_SIZE, VECTOR_OBS_DIM};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Raw p_local (meters) is multiplied by this at the network input.
pub const POSITION_INPUT_SCALE: f64 = 1.0 / 55.0;

const HIDDEN_GAIN: f64 = std::f64::consts::SQRT_2;
const POLICY_GAIN: f64 = 0.01;
const VALUE_GAIN: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoder {
    None,
    NatureCnn,
}

/// Everything that determines the parameter layout.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchDescriptor {
    pub obs_kind: ObsKind,
    pub action_kind: ActionKind,
    pub hidden_units: usize,
    pub num_layers: usize,
    pub encoder: Encoder,
    pub activation: Activation,
    /// One extrinsic value head, plus one when curiosity has its own stream.
    pub value_heads: usize,
}

impl ArchDescriptor {
    pub fn new(obs_kind: ObsKind, action_kind: ActionKind, hidden_units: usize, num_layers: usize) -> Self {
        Self {
            obs_kind,
            action_kind,
            hidden_units,
            num_layers,
            encoder: match obs_kind {
                ObsKind::Vector => Encoder::None,
                ObsKind::Visual => Encoder::NatureCnn,
            },
            activation: Activation::Swish,
            value_heads: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let expected = match self.obs_kind {
            ObsKind::Vector => Encoder::None,
            ObsKind::Visual => Encoder::NatureCnn,
        };
        if self.encoder != expected {
            return Err(Error::ArchitectureMismatch(format!(
                "{:?} observations need encoder {:?}",
                self.obs_kind, expected
            )));
        }
        if self.hidden_units == 0 || self.value_heads == 0 || self.value_heads > 2 {
            return Err(Error::ArchitectureMismatch("hidden_units >= 1 and value_heads in 1..=2 required".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        match self.obs_kind {
            ObsKind::Vector => VECTOR_OBS_DIM,
            ObsKind::Visual => IMAGE_SIZE * IMAGE_SIZE * 3,
        }
    }

    /// Mean (continuous) or concatenated branch logits (discrete).
    pub fn policy_outputs(&self) -> usize {
        match self.action_kind {
            ActionKind::Continuous => CONTINUOUS_DIM,
            ActionKind::Discrete => DISCRETE_BRANCHES.iter().sum(),
        }
    }

    fn trunk_specs(&self) -> (Vec<String>, Vec<(LayerKind, Activation)>) {
        let act = self.activation;
        let h = self.hidden_units;
        let mut names = Vec::new();
        let mut specs = Vec::new();
        let mut width = self.input_dim();
        if self.encoder == Encoder::NatureCnn {
            // conv 32×8×8/4, 64×4×4/2, 64×3×3/1 on 84×84×3
            let mut hw = IMAGE_SIZE;
            let mut ch = 3;
            for (i, (out, k, s)) in [(32, 8, 4), (64, 4, 2), (64, 3, 1)].into_iter().enumerate() {
                names.push(format!("conv{}", i + 1));
                specs.push((
                    LayerKind::Conv { height: hw, width: hw, in_channels: ch, kernel: k, stride: s, out_channels: out },
                    act,
                ));
                hw = LayerKind::conv_out_hw(hw, hw, k, s).0;
                ch = out;
            }
            width = hw * hw * ch;
            names.push("encoder".into());
            specs.push((LayerKind::Dense { inputs: width, outputs: h }, act));
            width = h;
        }
        for i in 0..self.num_layers {
            names.push(format!("hidden{i}"));
            specs.push((LayerKind::Dense { inputs: width, outputs: h }, act));
            width = h;
        }
        (names, specs)
    }

    /// Number of scalars the architecture owns.
    pub fn param_count(&self) -> usize {
        PolicyNet::<f32>::layout(self).count()
    }
}

/// Batched network outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Outputs<T> {
    /// `[batch, policy_outputs]`: Gaussian means or branch logits.
    pub heads: Array2<T>,
    /// Clamped state-independent log standard deviations (continuous only).
    pub log_std: Option<Array1<T>>,
    /// `[batch, value_heads]`.
    pub values: Array2<T>,
}

/// d loss / d outputs, same shapes as [`Outputs`].
#[derive(Debug, Clone)]
pub struct OutputGrads<T> {
    pub heads: Array2<T>,
    pub log_std: Option<Array1<T>>,
    pub values: Array2<T>,
}

impl<T: Scalar> OutputGrads<T> {
    pub fn zeros_like(out: &Outputs<T>) -> Self {
        Self {
            heads: Array2::zeros(out.heads.raw_dim()),
            log_std: out.log_std.as_ref().map(|l| Array1::zeros(l.len())),
            values: Array2::zeros(out.values.raw_dim()),
        }
    }
}

/// Scalar loss of a batch of outputs together with its output gradient.
pub trait BatchLoss<T: Scalar> {
    fn evaluate(&self, out: &Outputs<T>) -> (T, OutputGrads<T>);
}

impl<T: Scalar, F: Fn(&Outputs<T>) -> (T, OutputGrads<T>)> BatchLoss<T> for F {
    fn evaluate(&self, out: &Outputs<T>) -> (T, OutputGrads<T>) {
        self(out)
    }
}

pub struct ForwardCache<T> {
    trunk: SeqCache<T>,
    policy: SeqCache<T>,
    value: SeqCache<T>,
    raw_log_std: Option<Array1<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet<T> {
    pub desc: ArchDescriptor,
    pub params: ParamSet<T>,
    trunk: Sequential,
    policy_head: Sequential,
    value_head: Sequential,
    log_std: Option<usize>,
}

impl<T: Scalar> PolicyNet<T> {
    fn layout(desc: &ArchDescriptor) -> ParamSet<T> {
        Self::build(desc).params
    }

    /// All-zero network with the layout of `desc`.
    fn build(desc: &ArchDescriptor) -> Self {
        let mut params = ParamSet::new();
        let (names, specs) = desc.trunk_specs();
        let trunk = Sequential::register(&mut params, &names, &specs);
        let h = trunk.output_dim();
        let policy_head = Sequential::register(
            &mut params,
            &["policy".into()],
            &[(LayerKind::Dense { inputs: h, outputs: desc.policy_outputs() }, Activation::Identity)],
        );
        let value_head = Sequential::register(
            &mut params,
            &["value".into()],
            &[(LayerKind::Dense { inputs: h, outputs: desc.value_heads }, Activation::Identity)],
        );
        let log_std = (desc.action_kind == ActionKind::Continuous).then(|| params.add("log_std", vec![CONTINUOUS_DIM]));
        Self {
            desc: desc.clone(),
            params,
            trunk,
            policy_head,
            value_head,
            log_std,
        }
    }

    /// Orthogonally initialized network (zero biases, zero log_std).
    pub fn new(desc: &ArchDescriptor, rng: &mut Rng) -> Result<Self> {
        desc.validate()?;
        let mut net = Self::build(desc);
        let heads = [(&net.policy_head, POLICY_GAIN), (&net.value_head, VALUE_GAIN)];
        let mut plan: Vec<(usize, [usize; 2], f64)> = net
            .trunk
            .layers
            .iter()
            .map(|l| (l.weight, l.kind.weight_shape(), HIDDEN_GAIN))
            .collect();
        for (seq, gain) in heads {
            let l = &seq.layers[0];
            plan.push((l.weight, l.kind.weight_shape(), gain));
        }
        for (idx, [r, c], gain) in plan {
            let w = orthogonal(r, c, gain, rng);
            for (dst, src) in net.params.data_mut(idx).iter_mut().zip(w) {
                *dst = cast(src);
            }
        }
        Ok(net)
    }

    /// Wraps existing parameters, checking names, shapes and total count.
    pub fn from_params(desc: &ArchDescriptor, params: ParamSet<T>) -> Result<Self> {
        desc.validate()?;
        let mut net = Self::build(desc);
        if !net.params.same_layout(&params) || net.params.count() != params.count() {
            return Err(Error::ArchitectureMismatch(
                "parameter tensors do not match the architecture descriptor".into(),
            ));
        }
        net.params = params;
        Ok(net)
    }

    pub fn cast<U: Scalar>(&self) -> PolicyNet<U> {
        PolicyNet::<U>::from_params(&self.desc, self.params.cast()).expect("same layout")
    }

    fn check_input(&self, input: &ArrayView2<T>) -> Result<()> {
        if input.ncols() != self.desc.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "network expects {} inputs per sample ({:?} observations), got {}",
                self.desc.input_dim(),
                self.desc.obs_kind,
                input.ncols()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, input: ArrayView2<T>) -> Result<Outputs<T>> {
        Ok(self.forward_cached(input)?.0)
    }

    pub fn forward_cached(&self, input: ArrayView2<T>) -> Result<(Outputs<T>, ForwardCache<T>)> {
        self.check_input(&input)?;
        let (features, trunk) = self.trunk.forward(&self.params, input.to_owned());
        let (heads, policy) = self.policy_head.forward(&self.params, features.clone());
        let (values, value) = self.value_head.forward(&self.params, features.clone());
        let raw_log_std = self.log_std.map(|i| Array1::from(self.params.data(i).to_vec()));
        let (lo, hi) = (cast::<T>(LOG_STD_MIN), cast::<T>(LOG_STD_MAX));
        let log_std = raw_log_std.as_ref().map(|l| l.mapv(|v| v.max(lo).min(hi)));
        Ok((
            Outputs { heads, log_std, values },
            ForwardCache { trunk, policy, value, raw_log_std },
        ))
    }

    /// Reverse pass from output gradients to parameter gradients.
    pub fn backward(&self, cache: &ForwardCache<T>, d_out: &OutputGrads<T>) -> ParamSet<T> {
        let mut grads = self.params.zeros_like();
        let d_feat_p = self
            .policy_head
            .backward(&self.params, &cache.policy, d_out.heads.clone(), &mut grads, true)
            .expect("requested");
        let d_feat_v = self
            .value_head
            .backward(&self.params, &cache.value, d_out.values.clone(), &mut grads, true)
            .expect("requested");
        self.trunk.backward(&self.params, &cache.trunk, d_feat_p + d_feat_v, &mut grads, false);
        if let (Some(idx), Some(dl), Some(raw)) = (self.log_std, &d_out.log_std, &cache.raw_log_std) {
            let (lo, hi) = (cast::<T>(LOG_STD_MIN), cast::<T>(LOG_STD_MAX));
            for ((g, d), r) in grads.data_mut(idx).iter_mut().zip(dl.iter()).zip(raw.iter()) {
                // clamp passes gradient only inside its range
                if *r >= lo && *r <= hi {
                    *g += *d;
                }
            }
        }
        grads
    }

    /// Loss value and exact gradient of `loss` at the current parameters.
    pub fn gradient(&self, input: ArrayView2<T>, loss: &impl BatchLoss<T>) -> Result<(T, ParamSet<T>)> {
        let (out, cache) = self.forward_cached(input)?;
        let (value, d_out) = loss.evaluate(&out);
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss(format!("loss evaluated to {value}")));
        }
        Ok((value, self.backward(&cache, &d_out)))
    }
}

/// Network input row for a vector observation (p_local rescaled).
pub fn vector_input(obs: &[f64]) -> Vec<f32> {
    let mut v: Vec<f32> = obs.iter().map(|&x| x as f32).collect();
    for x in &mut v[crate::sensors::layout::P_LOCAL] {
        *x = (*x as f64 * POSITION_INPUT_SCALE) as f32;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desc(obs: ObsKind, act: ActionKind, h: usize) -> ArchDescriptor {
        ArchDescriptor::new(obs, act, h, 2)
    }

    #[test]
    fn nature_cnn_flatten_is_3136() {
        let d = desc(ObsKind::Visual, ActionKind::Continuous, 16);
        let net = PolicyNet::<f32>::build(&d);
        assert_eq!(net.trunk.layers[2].kind.output_dim(), 7 * 7 * 64);
        assert_eq!(net.params.get("encoder.w").unwrap().shape, vec![3136, 16]);
    }

    #[test]
    fn param_count_is_pure_function_of_descriptor() {
        let d = desc(ObsKind::Vector, ActionKind::Discrete, 512);
        // 20·512+512 + 512·512+512 + 512·12+12 + 512·1+1
        let expected = 20 * 512 + 512 + 512 * 512 + 512 + 512 * 12 + 12 + 512 + 1;
        assert_eq!(d.param_count(), expected);
        let c = desc(ObsKind::Vector, ActionKind::Continuous, 512);
        assert_eq!(c.param_count(), expected - (512 * 12 + 12) + (512 * 4 + 4) + 4);
    }

    #[test]
    fn zero_policy_head_gives_uniform_logits() {
        let d = desc(ObsKind::Vector, ActionKind::Discrete, 32);
        let mut net = PolicyNet::<f32>::new(&d, &mut Rng::new(1)).unwrap();
        let w = net.params.index_of("policy.w").unwrap();
        net.params.data_mut(w).iter_mut().for_each(|v| *v = 0.0);
        let x = Array2::from_shape_fn((3, 20), |(i, j)| (i as f32 - j as f32) * 0.1);
        let out = net.forward(x.view()).unwrap();
        assert!(out.heads.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_is_deterministic() {
        let d = desc(ObsKind::Vector, ActionKind::Continuous, 32);
        let net = PolicyNet::<f32>::new(&d, &mut Rng::new(5)).unwrap();
        let x = Array2::from_shape_fn((4, 20), |(i, j)| ((i * 7 + j) % 5) as f32 * 0.3);
        assert_eq!(net.forward(x.view()).unwrap(), net.forward(x.view()).unwrap());
        let net2 = PolicyNet::<f32>::new(&d, &mut Rng::new(5)).unwrap();
        assert_eq!(net.params, net2.params);
    }

    #[test]
    fn wrong_input_width_is_shape_mismatch() {
        let d = desc(ObsKind::Vector, ActionKind::Continuous, 8);
        let net = PolicyNet::<f32>::new(&d, &mut Rng::new(5)).unwrap();
        let x = Array2::<f32>::zeros((1, IMAGE_SIZE * IMAGE_SIZE * 3));
        assert!(matches!(net.forward(x.view()), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn quadratic_on_value_bias() {
        // L = (w - 3)² with w the value bias and all value weights zero
        let d = desc(ObsKind::Vector, ActionKind::Continuous, 8);
        let mut net = PolicyNet::<f64>::new(&d, &mut Rng::new(0)).unwrap();
        let vw = net.params.index_of("value.w").unwrap();
        let vb = net.params.index_of("value.b").unwrap();
        net.params.data_mut(vw).iter_mut().for_each(|v| *v = 0.0);
        net.params.data_mut(vb)[0] = 1.0;
        let loss = |o: &Outputs<f64>| {
            let v = o.values[[0, 0]];
            let mut g = OutputGrads::zeros_like(o);
            g.values[[0, 0]] = 2.0 * (v - 3.0);
            ((v - 3.0).powi(2), g)
        };
        let x = Array2::<f64>::ones((1, 20));
        let (l, g) = net.gradient(x.view(), &loss).unwrap();
        assert_eq!(l, 4.0);
        assert_eq!(g.data(vb)[0], -4.0);
    }

    #[test]
    fn constant_loss_zero_gradient() {
        let d = desc(ObsKind::Vector, ActionKind::Discrete, 8);
        let net = PolicyNet::<f64>::new(&d, &mut Rng::new(0)).unwrap();
        let loss = |o: &Outputs<f64>| (7.0, OutputGrads::zeros_like(o));
        let x = Array2::<f64>::ones((2, 20));
        let (_, g) = net.gradient(x.view(), &loss).unwrap();
        assert_eq!(g.l2_norm(), 0.0);
    }

    #[test]
    fn non_finite_loss_rejected() {
        let d = desc(ObsKind::Vector, ActionKind::Discrete, 8);
        let net = PolicyNet::<f64>::new(&d, &mut Rng::new(0)).unwrap();
        let loss = |o: &Outputs<f64>| (f64::NAN, OutputGrads::zeros_like(o));
        let x = Array2::<f64>::ones((1, 20));
        assert!(matches!(net.gradient(x.view(), &loss), Err(Error::NonFiniteLoss(_))));
    }

    #[test]
    fn initial_value_is_small() {
        let d = desc(ObsKind::Vector, ActionKind::Continuous, 512);
        let net = PolicyNet::<f32>::new(&d, &mut Rng::new(11)).unwrap();
        let mut r = Rng::new(3);
        let x = Array2::from_shape_fn((256, 20), |_| r.normal() as f32);
        let out = net.forward(x.view()).unwrap();
        let worst = out.values.iter().fold(0.0f32, |m, v| m.max(v.abs()));
        assert!(worst < 1.0, "max |v| = {worst}");
    }
}
