pub mod bifurcation;
pub mod effective;
pub mod error;
pub mod fields;
pub mod invariants;
mod linear;
pub mod operators;
pub mod profiles;
pub mod solvers;
