//! Hilbert and Fubini–Study maps between hermitian metrics on a polarising
//! line bundle and hermitian forms on its sections, with constructive
//! solvers for their inverse problems on ℙ¹.

// `!(x > 0.0)` is how positivity checks also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calabi;
pub mod error;
pub mod geometry;
pub mod injectivity;
pub mod linalg;
pub mod maps;
pub mod moments;
pub mod par;
pub mod pushforward;
pub mod random;
pub mod report;

pub use error::{Error, Result};
pub use linalg::{HermitianForm, C64, CMat};
