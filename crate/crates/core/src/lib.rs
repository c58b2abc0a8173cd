//! Typical Voronoi cells of Cox processes on Manhattan-type street systems and
//! Monte Carlo estimation of the typical shortest-path-length density.

pub mod cell;
pub mod cli;
pub mod cox;
pub mod distributions;
pub mod error;
pub mod estimator;
pub mod geometry;
pub mod graph;
pub mod renewal;
pub mod rng;
pub mod stats;
pub mod streets;
pub mod validation;

pub use error::{Error, Result};
