//! Simulation and verification lab for stochastic heat and wave equations
//! driven by Gaussian noise that is white in time and spatially correlated.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod expr;
pub mod fft;
pub mod grid;
pub mod io;
pub mod kernels;
pub mod noise;
pub mod quad;
pub(crate) mod radial;
pub mod seeding;
pub mod solver;
pub mod special;
pub mod stability;
pub mod stats;

pub use error::{Error, Result};
pub use grid::Grid;
pub use kernels::{KernelFamily, KernelModel};
pub use noise::SpectralMeasure;
