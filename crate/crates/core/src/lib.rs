//! Cluster data, Berkovich convex hulls and a theta-function oracle for
//! Schottky groups over discretely valued fields.

pub mod error;
pub mod valuation;

pub use error::{Error, Result};
pub mod projline;
pub mod clusters;
pub mod position;
pub mod berktree;
pub mod pushforward;
pub mod schottky;
