//! Dense tensors, reverse-mode autodiff, a small classifier and its optimizer.

mod checkpoint;
mod functional;
mod model;
mod optim;
mod tape;
mod tensor;

pub use checkpoint::Container;
pub use functional::{cross_entropy, log_softmax, softmax};
pub use model::{Architecture, InputShape, Model};
pub use optim::AdamW;
pub use tape::{ConvGeom, Gradients, ParamId, Tape, Var};
pub use tensor::Tensor;

pub(crate) use tape::{quad_form, signed_pow};
