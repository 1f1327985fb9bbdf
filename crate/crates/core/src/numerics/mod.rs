//! Self-contained dense numerics shared by the rest of the crate.

pub mod eigen;
pub mod linalg;
mod matrix;
pub mod ode;
pub mod sum;

pub use eigen::{eigen_decompose, EigenCluster, EigenDecomposition};
pub use matrix::Matrix;
pub use ode::{integrate_adaptive, integrate_fixed, OdeProblem, Tolerances};
pub use sum::{stable_sum, StableSum};
