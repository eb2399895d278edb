//! Benchmark model generators.

pub mod ladder;
pub mod random;

pub use ladder::{cells_for, generate_rcl_ladder, LadderParams, LadderVariant};
pub use random::{generate_staircase, Category, GeneratorSpec};
