//! Reverse-mode automatic differentiation over dense row-major matrices.
//!
//! A [`Tape`] is built fresh for every forward pass. Learned arrays live in a
//! [`ParamStore`] and are copied onto the tape as leaves; after
//! [`Tape::backward`] the resulting [`Gradients`] are folded back into the
//! store and consumed by [`Adam`].

mod adam;
mod mlp;
mod params;
mod sparse;
mod tape;
mod tensor;

pub use adam::Adam;
pub use mlp::{glorot_uniform, Dense, Mlp};
pub use params::{ParamId, ParamStore};
pub use sparse::CsrMatrix;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

