//! Operator-valued Stieltjes solvers for semicircular and Marchenko–Pastur
//! pencils, together with the random-matrix experiments that check their
//! finite-`n` behaviour.

pub mod error;
pub mod linalg;
pub mod ensembles;
pub mod freeprob;
pub mod montecarlo;
pub mod ncpoly;

pub use error::{Error, Result};
