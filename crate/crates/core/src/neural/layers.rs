//! Dense and convolutional layers with hand-written reverse passes.
//!
//! Activations flow as `[batch, features]` matrices. Convolutions use an
//! HWC layout per sample and are lowered to one GEMM per batch via im2col;
//! kernels are stored as `[k·k·c_in, c_out]` with rows ordered `(ky, kx, c)`.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::params::ParamSet;
use super::{cast, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// x · sigmoid(x)
    Swish,
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    pub fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Swish => z / (T::one() + (-z).exp()),
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(T::zero()),
            Activation::Identity => z,
        }
    }

    /// d act / d z evaluated at pre-activation `z`.
    pub fn derivative<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Swish => {
                let s = T::one() / (T::one() + (-z).exp());
                s * (T::one() + z * (T::one() - s))
            }
            Activation::Tanh => {
                let t = z.tanh();
                T::one() - t * t
            }
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Identity => T::one(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerKind {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Conv {
        height: usize,
        width: usize,
        in_channels: usize,
        kernel: usize,
        stride: usize,
        out_channels: usize,
    },
}

impl LayerKind {
    pub fn conv_out_hw(height: usize, width: usize, kernel: usize, stride: usize) -> (usize, usize) {
        ((height - kernel) / stride + 1, (width - kernel) / stride + 1)
    }

    pub fn input_dim(&self) -> usize {
        match *self {
            LayerKind::Dense { inputs, .. } => inputs,
            LayerKind::Conv { height, width, in_channels, .. } => height * width * in_channels,
        }
    }

    pub fn output_dim(&self) -> usize {
        match *self {
            LayerKind::Dense { outputs, .. } => outputs,
            LayerKind::Conv { height, width, kernel, stride, out_channels, .. } => {
                let (ho, wo) = Self::conv_out_hw(height, width, kernel, stride);
                ho * wo * out_channels
            }
        }
    }

    /// Shape of the weight matrix `[fan_in, fan_out]`.
    pub fn weight_shape(&self) -> [usize; 2] {
        match *self {
            LayerKind::Dense { inputs, outputs } => [inputs, outputs],
            LayerKind::Conv { in_channels, kernel, out_channels, .. } => [kernel * kernel * in_channels, out_channels],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub kind: LayerKind,
    pub activation: Activation,
    pub weight: usize,
    pub bias: usize,
}

/// A chain of layers whose parameters live in an external [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Sequential {
    pub layers: Vec<Layer>,
}

/// Per-layer values saved by the forward pass.
pub struct SeqCache<T> {
    /// Layer input (dense) or im2col matrix (conv).
    inputs: Vec<Array2<T>>,
    /// Pre-activations.
    pre: Vec<Array2<T>>,
}

impl Sequential {
    /// Registers `{prefix}{i}.w` / `{prefix}{i}.b` for each layer spec.
    pub fn register<T: Scalar>(params: &mut ParamSet<T>, names: &[String], specs: &[(LayerKind, Activation)]) -> Self {
        assert_eq!(names.len(), specs.len());
        let layers = specs
            .iter()
            .zip(names)
            .map(|(&(kind, activation), name)| {
                let weight = params.add(format!("{name}.w"), kind.weight_shape().to_vec());
                let bias = params.add(format!("{name}.b"), vec![kind.weight_shape()[1]]);
                Layer { kind, activation, weight, bias }
            })
            .collect::<Vec<_>>();
        for w in layers.windows(2) {
            assert_eq!(w[0].kind.output_dim(), w[1].kind.input_dim(), "layer dims do not chain");
        }
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].kind.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").kind.output_dim()
    }

    pub fn forward<T: Scalar>(&self, params: &ParamSet<T>, x: Array2<T>) -> (Array2<T>, SeqCache<T>) {
        let mut cache = SeqCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(self.layers.len()),
        };
        let mut cur = x;
        for layer in &self.layers {
            let w = weight_view(params, layer);
            let b = ArrayView1::from(params.data(layer.bias));
            let batch = cur.nrows();
            let (input, z) = match layer.kind {
                LayerKind::Dense { .. } => {
                    let z = cur.dot(&w) + b;
                    (cur, z)
                }
                LayerKind::Conv { .. } => {
                    let cols = im2col(&cur, &layer.kind);
                    let z = cols.dot(&w) + b;
                    let z = z
                        .into_shape_with_order((batch, layer.kind.output_dim()))
                        .expect("contiguous conv output");
                    (cols, z)
                }
            };
            let act = layer.activation;
            cur = z.mapv(|v| act.apply(v));
            cache.inputs.push(input);
            cache.pre.push(z);
        }
        (cur, cache)
    }

    /// Accumulates parameter gradients into `grads` and returns d loss / d input
    /// when `want_input_grad`.
    pub fn backward<T: Scalar>(
        &self,
        params: &ParamSet<T>,
        cache: &SeqCache<T>,
        d_out: Array2<T>,
        grads: &mut ParamSet<T>,
        want_input_grad: bool,
    ) -> Option<Array2<T>> {
        let mut d = d_out;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let act = layer.activation;
            let mut dz = d;
            dz.zip_mut_with(&cache.pre[i], |g, &z| *g *= act.derivative(z));
            let batch = dz.nrows();
            let w = weight_view(params, layer);
            let need_dx = i > 0 || want_input_grad;
            match layer.kind {
                LayerKind::Dense { .. } => {
                    accumulate(grads.data_mut(layer.weight), &cache.inputs[i].t().dot(&dz));
                    accumulate(grads.data_mut(layer.bias), &dz.sum_axis(Axis(0)));
                    d = if need_dx { dz.dot(&w.t()) } else { Array2::zeros((0, 0)) };
                }
                LayerKind::Conv { out_channels, .. } => {
                    let rows = dz.len() / out_channels;
                    let dz = dz.into_shape_with_order((rows, out_channels)).expect("contiguous");
                    accumulate(grads.data_mut(layer.weight), &cache.inputs[i].t().dot(&dz));
                    accumulate(grads.data_mut(layer.bias), &dz.sum_axis(Axis(0)));
                    d = if need_dx {
                        let dcols = dz.dot(&w.t());
                        col2im(&dcols, &layer.kind, batch)
                    } else {
                        Array2::zeros((0, 0))
                    };
                }
            }
        }
        want_input_grad.then_some(d)
    }
}

fn weight_view<'a, T: Scalar>(params: &'a ParamSet<T>, layer: &Layer) -> ArrayView2<'a, T> {
    let [r, c] = layer.kind.weight_shape();
    ArrayView2::from_shape((r, c), params.data(layer.weight)).expect("weight shape")
}

fn accumulate<T: Scalar, D: ndarray::Dimension>(dst: &mut [T], src: &ndarray::Array<T, D>) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, s) in dst.iter_mut().zip(src.iter()) {
        *d += *s;
    }
}

fn im2col<T: Scalar>(x: &Array2<T>, kind: &LayerKind) -> Array2<T> {
    let LayerKind::Conv { height, width, in_channels: c, kernel: k, stride, .. } = *kind else {
        unreachable!()
    };
    let (ho, wo) = LayerKind::conv_out_hw(height, width, k, stride);
    let batch = x.nrows();
    let patch = k * k * c;
    let mut cols = Array2::<T>::zeros((batch * ho * wo, patch));
    let xs = x.as_slice().expect("standard layout input");
    let out = cols.as_slice_mut().expect("fresh array");
    let sample_len = height * width * c;
    for b in 0..batch {
        let src = &xs[b * sample_len..(b + 1) * sample_len];
        for oy in 0..ho {
            for ox in 0..wo {
                let row = ((b * ho + oy) * wo + ox) * patch;
                for ky in 0..k {
                    let sy = oy * stride + ky;
                    let so = (sy * width + ox * stride) * c;
                    let d = row + ky * k * c;
                    out[d..d + k * c].copy_from_slice(&src[so..so + k * c]);
                }
            }
        }
    }
    cols
}

fn col2im<T: Scalar>(dcols: &Array2<T>, kind: &LayerKind, batch: usize) -> Array2<T> {
    let LayerKind::Conv { height, width, in_channels: c, kernel: k, stride, .. } = *kind else {
        unreachable!()
    };
    let (ho, wo) = LayerKind::conv_out_hw(height, width, k, stride);
    let patch = k * k * c;
    let sample_len = height * width * c;
    let mut dx = Array2::<T>::zeros((batch, sample_len));
    let dst = dx.as_slice_mut().expect("fresh array");
    let src = dcols.as_slice().expect("standard layout");
    for b in 0..batch {
        for oy in 0..ho {
            for ox in 0..wo {
                let row = ((b * ho + oy) * wo + ox) * patch;
                for ky in 0..k {
                    let sy = oy * stride + ky;
                    let so = b * sample_len + (sy * width + ox * stride) * c;
                    let d = row + ky * k * c;
                    for j in 0..k * c {
                        dst[so + j] += src[d + j];
                    }
                }
            }
        }
    }
    dx
}

/// Column-concatenates two `[batch, ·]` matrices.
pub fn hconcat<T: Scalar>(a: ArrayView2<T>, b: ArrayView2<T>) -> Array2<T> {
    ndarray::concatenate(Axis(1), &[a, b]).expect("equal batch sizes")
}

/// Splits a `[batch, a+b]` gradient back into its two column blocks.
pub fn hsplit<T: Scalar>(d: &Array2<T>, a_cols: usize) -> (Array2<T>, Array2<T>) {
    (d.slice(s![.., ..a_cols]).to_owned(), d.slice(s![.., a_cols..]).to_owned())
}

/// Row of f64 values converted to a single-row matrix.
pub fn row_from_f64<T: Scalar>(v: &[f64]) -> Array2<T> {
    Array2::from_shape_vec((1, v.len()), v.iter().map(|&x| cast(x)).collect()).expect("row")
}

pub fn zeros_row<T: Scalar>(n: usize) -> Array1<T> {
    Array1::zeros(n)
}
