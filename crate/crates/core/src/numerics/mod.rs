//! Dense `f64` arithmetic, tape-based reverse-mode differentiation, Adam and
//! a seeded generator: the substrate the models train on.

mod adam;
pub mod gradcheck;
mod graph;
pub(crate) mod params;
mod rng;
mod tensor;

pub use adam::Adam;
pub use graph::{Gradients, Graph, Var};
pub use rng::{gaussian, SeededRng, RNG_ALGORITHM};
pub use tensor::{dot, log_softmax, softmax, softmax_axis, Tensor};

