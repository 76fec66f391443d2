//! Optimization on manifolds with constraints `g(p) ∈ K` into submanifolds
//! with corners: cone algebra, constraint qualifications, KKT and
//! second-order certificates, invariance checks and a local SQP solver.

pub mod cones;
pub mod corners;
pub mod error;
pub mod firstorder;
pub mod geometry;
pub mod linalg;
pub mod models;
mod numdiff;
pub mod oracles;
pub mod problem;
pub mod secondorder;
pub mod solver;

pub use error::{Error, Result};
