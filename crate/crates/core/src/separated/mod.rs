//! Separated space × microtime × macrotime representations.

mod decompose;
mod field;
mod solve;
mod time;

pub use decompose::{
    decompose_matrix, hosvd, mtpgd_decompose, DecomposeOptions, Decomposition, DecompositionStatus, Tucker,
};
pub use field::{write_matrix_csv, SeparatedField};
pub use solve::{
    equilibrium_residual, mtpgd_solve, separate_signal, strain_field, DirichletLift, MtpgdSolution, SeparatedRhs,
};
pub use time::{flatten_time, reshape_time, TimeGrid};
