//! Numerical building blocks: special functions, adaptive quadrature and
//! one-dimensional root/extremum search.

pub mod quad;
pub mod roots;
pub mod special;

pub use quad::{integrate, QuadOptions, QuadResult};
