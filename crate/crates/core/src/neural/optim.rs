//! Adam optimizer and global-norm gradient clipping.

use super::params::ParamSet;
use super::{cast, Scalar};

#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: ParamSet<T>,
    v: ParamSet<T>,
    t: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(like: &ParamSet<T>, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            m: like.zeros_like(),
            v: like.zeros_like(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One descent step `params -= lr · m̂ / (√v̂ + ε)`.
    pub fn step(&mut self, params: &mut ParamSet<T>, grads: &ParamSet<T>, lr: f64) {
        self.t += 1;
        let b1 = self.beta1;
        let b2 = self.beta2;
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        let (tb1, tb2) = (cast::<T>(b1), cast::<T>(b2));
        let (one, eps) = (T::one(), cast::<T>(self.eps));
        let step = cast::<T>(lr / c1);
        let inv_c2 = cast::<T>(1.0 / c2);
        for (((p, g), m), v) in params
            .tensors
            .iter_mut()
            .zip(&grads.tensors)
            .zip(&mut self.m.tensors)
            .zip(&mut self.v.tensors)
        {
            for (((p, &g), m), v) in p.data.iter_mut().zip(&g.data).zip(&mut m.data).zip(&mut v.data) {
                *m = tb1 * *m + (one - tb1) * g;
                *v = tb2 * *v + (one - tb2) * g * g;
                *p -= step * *m / ((*v * inv_c2).sqrt() + eps);
            }
        }
    }
}

/// Rescales `grads` so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<T: Scalar>(grads: &mut ParamSet<T>, max_norm: f64) -> f64 {
    let norm = grads.l2_norm();
    if norm > max_norm && norm > 0.0 {
        grads.scale(cast(max_norm / norm));
    }
    norm
}
