pub mod error;
pub mod linalg;

pub use error::{Error, Result};
pub use faer::{c64, Mat};
pub mod staircase;
pub mod rosenbrock;
pub mod models;
pub mod interpolation;
pub mod h2;
pub mod analysis;
pub mod hinf;
pub mod kyp;
pub mod io;
