//! Dense 2-D tensors with reverse-mode differentiation, plus the layers and
//! optimizer used to train the agent model.

pub mod error;
pub mod gradcheck;
pub mod nn;
pub mod optim;
pub mod real;
pub mod suite;
pub mod tape;

pub use error::TensorError;
pub use gradcheck::{grad_check, grad_check_steps, GradCheckReport, Input};
pub use nn::{sinusoidal_time_embedding, Bound, Init, Linear, MlpBlock, ParamId, ParamStore};
pub use optim::{clip_global_norm, cosine_lr, AdamW};
pub use real::Real;
pub use tape::{Gradients, Tape, Var, DROP};
