//! Forward PDE solvers used to manufacture ground-truth data: explicit
//! finite-difference acoustic wave propagation, pseudo-spectral
//! Navier-Stokes in vorticity form, and steady Darcy flow.

mod darcy;
mod navier_stokes;
mod wave;

pub use darcy::{solve_darcy, solve_darcy_with_forcing, DarcySpec};
pub use navier_stokes::{solve_navier_stokes, spectral_divergence, NsSpec};
pub use wave::{solve_wave, wave_energy, WaveSpec};
