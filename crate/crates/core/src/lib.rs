//! Two-phase flow in a two-layer porous medium, solved by an L-scheme
//! domain decomposition with Robin transmission conditions.

pub mod assembly;
pub mod cli;
pub mod config;
pub mod constitutive;
pub mod dd_solver;
pub mod error;
pub mod linalg;
pub mod mesh;
pub mod output;
pub mod problem;
pub mod timestepper;
pub mod verification;

pub use error::{Error, Result};
