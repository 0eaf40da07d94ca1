//! Decides which generalized test-function space supports the operator
//! realization of a Wick power series of a free field.

pub mod classify;
pub mod cli;
pub mod fields;
pub mod indicator;
pub mod numeric;
pub mod series;
pub mod wick;
