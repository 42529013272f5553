//! Minimal differentiable-computation engine: dense tensors, an eager tape
//! of forward operators, reverse-mode gradients, and momentum SGD.
//!
//! The engine is generic over [`Real`]; training runs in `f32`, gradient
//! verification runs the identical code in `f64`.

mod checkpoint;
pub(crate) mod conv;
pub mod gradcheck;
mod gridsample;
mod optim;
mod tape;
mod tensor;

pub use checkpoint::{group_for_name, load_checkpoint, read_checkpoint, save_checkpoint};
pub use optim::{sgd_step, ParamGroup, Parameter};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{strides, Real, Tensor};
