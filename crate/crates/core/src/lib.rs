//! Optimal weak transport between discrete measures and weak barycenters.

pub mod barycenter;
pub mod cli;
pub mod datagen;
pub mod error;
pub mod io;
mod linalg;
pub mod measures;
pub mod ot;
pub mod owt;
pub mod plan;

pub use error::{Error, Result};
