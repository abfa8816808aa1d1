pub mod analysis;
pub mod error;
pub mod fem_laplace;
pub mod fem_stokes;
pub mod linalg;
pub mod mcmc;
pub mod mesh;
pub mod observation;
pub mod prior;
pub mod quadrature;

pub use error::{Error, Result};
