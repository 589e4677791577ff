//! Dense-tensor engine: rank ≤ 2 f64 tensors, a dynamic reverse-mode
//! tape, Adam, and value-exact parameter checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod params;
pub mod tape;
pub mod tensor;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{
    checkpoint_from_str, checkpoint_to_string, load_checkpoint, save_checkpoint, ENGINE_TAG,
};
pub use params::{ParamId, ParamStore, Parameter};
pub use tape::{IndexLists, Tape, Var};
pub use tensor::{KahanSum, Tensor};
