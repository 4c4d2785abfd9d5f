//! Backprop versus central differences through the full policy network.

use fetchworld::config::{ActionKind, ObsKind};
use fetchworld::neural::{ArchDescriptor, OutputGrads, Outputs, PolicyNet};
use fetchworld::rng::Rng;
use ndarray::Array2;

fn check(desc: &ArchDescriptor, per_tensor: usize, seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let mut net = PolicyNet::<f64>::new(desc, &mut rng).unwrap();
    for t in &mut net.params.tensors {
        for x in &mut t.data {
            *x += 0.05 * rng.normal();
        }
    }
    let input = Array2::from_shape_fn((3, desc.input_dim()), |_| rng.next_f64());
    let target = Array2::from_shape_fn((3, desc.policy_outputs()), |_| rng.normal());
    let loss = |out: &Outputs<f64>| {
        let mut g = OutputGrads::zeros_like(out);
        let mut l = 0.0;
        for ((o, t), d) in out.heads.iter().zip(&target).zip(g.heads.iter_mut()) {
            l += (o - t).powi(2);
            *d = 2.0 * (o - t);
        }
        for (o, d) in out.values.iter().zip(g.values.iter_mut()) {
            l += o.sin();
            *d = o.cos();
        }
        if let (Some(ls), Some(dl)) = (&out.log_std, &mut g.log_std) {
            for (o, d) in ls.iter().zip(dl.iter_mut()) {
                l += 0.5 * o * o;
                *d = *o;
            }
        }
        (l, g)
    };
    let (_, grads) = net.gradient(input.view(), &loss).unwrap();
    let eps = 1e-6;
    let mut worst: f64 = 0.0;
    for ti in 0..net.params.tensors.len() {
        let len = net.params.tensors[ti].data.len();
        for k in 0..len.min(per_tensor) {
            let j = if len <= per_tensor { k } else { rng.below(len) };
            let orig = net.params.tensors[ti].data[j];
            net.params.tensors[ti].data[j] = orig + eps;
            let up = loss(&net.forward(input.view()).unwrap()).0;
            net.params.tensors[ti].data[j] = orig - eps;
            let down = loss(&net.forward(input.view()).unwrap()).0;
            net.params.tensors[ti].data[j] = orig;
            let fd = (up - down) / (2.0 * eps);
            let an = grads.tensors[ti].data[j];
            worst = worst.max((fd - an).abs() / fd.abs().max(an.abs()).max(1e-3));
        }
    }
    worst
}

#[test]
fn mlp_continuous_and_discrete() {
    for (kind, heads) in [(ActionKind::Continuous, 1), (ActionKind::Discrete, 2)] {
        let mut d = ArchDescriptor::new(ObsKind::Vector, kind, 12, 3);
        d.value_heads = heads;
        let err = check(&d, usize::MAX, 11);
        assert!(err < 1e-5, "{kind:?}: {err}");
    }
}

#[test]
fn nature_cnn() {
    let d = ArchDescriptor::new(ObsKind::Visual, ActionKind::Discrete, 8, 1);
    let err = check(&d, 16, 12);
    assert!(err < 1e-5, "{err}");
}

#[test]
fn f32_gradients_agree_with_f64() {
    let d = ArchDescriptor::new(ObsKind::Vector, ActionKind::Continuous, 16, 2);
    let net64 = PolicyNet::<f64>::new(&d, &mut Rng::new(3)).unwrap();
    let net32: PolicyNet<f32> = net64.cast();
    let x64 = Array2::from_shape_fn((4, d.input_dim()), |(i, j)| ((i * 7 + j) as f64 * 0.37).sin());
    let x32 = x64.mapv(|v| v as f32);
    let sum64 = |o: &Outputs<f64>| {
        let mut g = OutputGrads::zeros_like(o);
        g.heads.fill(1.0);
        g.values.fill(1.0);
        (o.heads.sum() + o.values.sum(), g)
    };
    let sum32 = |o: &Outputs<f32>| {
        let mut g = OutputGrads::zeros_like(o);
        g.heads.fill(1.0);
        g.values.fill(1.0);
        (o.heads.sum() + o.values.sum(), g)
    };
    let (_, g64) = net64.gradient(x64.view(), &sum64).unwrap();
    let (_, g32) = net32.gradient(x32.view(), &sum32).unwrap();
    for (a, b) in g64.flat().iter().zip(g32.flat()) {
        assert!((a - b as f64).abs() < 1e-4 * a.abs().max(1.0), "{a} vs {b}");
    }
}
