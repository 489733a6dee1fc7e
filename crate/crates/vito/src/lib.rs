//! ViTO: inverse-operator learning for PDEs with super-resolution.
//!
//! The crate manufactures coarse-observation / fine-target dataset pairs
//! for three PDE inverse problems (acoustic wave, Navier-Stokes
//! vorticity, steady Darcy flow), trains a U-Net + vision-transformer
//! operator network on them, and evaluates super-resolved
//! reconstructions.

pub mod error;
pub mod eval;
pub mod mesh;
pub mod model;
pub mod randomfields;
pub mod rng;
pub mod solvers;
pub mod train;
pub mod tensorfile;
pub mod cli;
pub mod datagen;
pub mod spectral;

pub use error::{Error, Result};
