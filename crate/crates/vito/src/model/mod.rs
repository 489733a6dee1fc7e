//! Operator network: configuration, parameters, differentiable ops,
//! the network itself, and checkpointing.

pub mod checkpoint;
pub mod config;
pub mod init;
pub mod ops;
pub mod net;

pub use checkpoint::{load_checkpoint, load_checkpoint_expecting, save_checkpoint};
pub use config::ViTOConfig;
pub use init::{Init, ParamStore};
pub use net::{encode_inputs, ViTO};
