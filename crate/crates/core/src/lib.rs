//! t-product tensor algebra and randomized block Gauss-Seidel solvers for
//! tensor regression `A * X = B`, including the factorized form
//! `U * V * X = B`.

pub mod analysis;
pub mod cli;
pub mod deblur;
pub mod error;
mod linalg;
pub mod oracle;
pub mod sampling;
pub mod solvers;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{tprod, Matrix, Tensor3};
