//! Reconstruction of 2D flow and heat fields from sparse point sensors with
//! Fourier neural operators.

pub mod baseline;
pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod embed;
pub mod eval;
pub mod error;
pub mod params;
pub mod rng;
pub mod spectral;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{ComplexTensor, Tape, Tensor, Var};
