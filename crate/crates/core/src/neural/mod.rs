//! Policy/value function approximators with exact reverse-mode gradients.
//!
//! Everything is generic over [`Scalar`] so the same code runs in f32 for
//! training and in f64 for finite-difference gradient checks.

pub mod checkpoint;
pub mod dist;
pub mod init;
pub mod layers;
pub mod optim;
pub mod params;
pub mod policy;

use std::fmt::{Debug, Display};
use std::ops::{AddAssign, MulAssign, SubAssign};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive};

pub use dist::{greedy_action, log_prob, sample_action, PolicyDist, PolicyOutput};
pub use layers::Activation;
pub use params::{ParamSet, Tensor};
pub use policy::{ArchDescriptor, BatchLoss, Encoder, OutputGrads, Outputs, PolicyNet};

pub trait Scalar:
    Float
    + FromPrimitive
    + LinalgScalar
    + ScalarOperand
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + AddAssign
    + SubAssign
    + MulAssign
    + std::iter::Sum
    + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[inline]
pub fn cast<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("finite cast")
}
