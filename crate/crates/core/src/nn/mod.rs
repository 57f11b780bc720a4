//! Minimal dense neural-network toolkit: matrices, a reverse-mode tape,
//! parameters, the cross-attention encoder and the Adamax optimizer.

mod encoder;
pub mod gradcheck;
mod matrix;
mod optim;
mod params;
mod tape;

pub use encoder::{
    sinusoidal_table, AttentionTrace, CrossAttentionEncoder, Dropout, EncoderConfig, Linear, PositionalEmbedding,
};
pub use matrix::{argmax, Matrix};
pub use optim::{Adamax, ExponentialLr};
pub use params::{NamedParam, ParamGrads, ParamId, ParamStore};
pub use tape::{Gradients, Tape, Var};
