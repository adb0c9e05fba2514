//! Dense multilayer perceptrons with hand-written reverse-mode gradients.
//!
//! Every agent in the game (generator, discriminators, classifier) is an
//! [`Mlp`]. Gradients are exact: [`backward`] differentiates the clamped loss
//! actually being reported, so a central finite difference of that loss is a
//! valid oracle ([`finite_difference_check`]).

mod gradcheck;
mod grads;
mod loss;
mod mlp;
mod rmsprop;

pub use gradcheck::{finite_difference_check, max_relative_error};
pub use grads::{GradientSet, LayerGrad};
pub use loss::{
    backward, backward_with_input, loss_input_gradient, loss_value, LossSpec, PROB_FLOOR,
};
pub use mlp::{DenseLayer, HiddenActivation, Mlp, OutputActivation, Trace};
pub use rmsprop::{Direction, RmsPropConfig, RmsPropState};
