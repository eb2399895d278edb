pub mod dense;
pub mod lyap;
pub mod sparse;

pub use lyap::{lyapunov, riccati_stabilizing, sylvester};
pub use sparse::{SparseLu, SparseMatrix, ShiftedPencil};
