//! Structural susceptibility of the van der Pol limit cycle.
//!
//! The pipeline for a single μ is
//! [`orbit`] → [`sensitivity`] → [`susceptibility`], and [`scan`] runs it
//! over a grid of μ values, in parallel when the `parallel` feature is on.

pub mod checks;
pub mod dynamics;
pub mod error;
pub mod integrate;
pub mod orbit;
pub mod par;
pub mod pipeline;
pub mod scan;
pub mod sensitivity;
pub mod susceptibility;

pub use error::{Error, Result};
