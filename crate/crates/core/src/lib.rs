//! Entropy support maps on finite binary cubes, the inequalities behind their
//! approximate additivity, and desk-scale simulation of sparse factor-of-iid
//! subsets of Cayley graphs.
//!
//! Modules are layered bottom-up: [`cube`] → [`esm`] → [`bounds`], and
//! [`groups`] → [`fiid`] → [`unimodular`].

pub mod bounds;
pub mod cube;
mod error;
pub mod esm;
pub mod fiid;
pub mod groups;
pub mod unimodular;

pub use error::{Error, Result};

/// Additive tolerance used for entropy identities and inequality checks.
pub const TOL: f64 = 1e-9;
