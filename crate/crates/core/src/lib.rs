pub mod elliptic;
pub mod error;
pub mod expr;
pub mod lab;
pub mod quadrature;
pub mod solver;
pub mod surface;

pub use error::{Error, Result};
pub use num_complex::Complex64;
