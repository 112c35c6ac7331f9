//! Layers with explicit forward and backward passes.
//!
//! Layers own their parameters and accumulate gradients into them; the
//! activations a backward pass needs are returned by the forward pass and
//! handed back by the caller.

mod act;
mod conv;
mod norm;
mod param;

pub use act::{dropout_mask, leaky_relu, leaky_relu_backward, relu, relu_backward, tanh, tanh_backward};
pub use conv::{col2im, im2col, Conv2d, ConvGeom, ConvTranspose2d};
pub use norm::{InstanceNorm, NormCache};
pub use param::{join, Param, Parameters};
