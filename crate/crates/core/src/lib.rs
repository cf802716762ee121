//! Mixture density networks for text-based geolocation and lexical dialectology.

pub mod cli;
pub mod config;
pub mod data;
pub mod dialect;
pub mod error;
pub mod features;
pub mod geo;
pub mod geoloc;
pub mod kmeans;
pub mod math;
pub mod mdn;
pub mod nn;
pub mod pipeline;

pub use error::{Error, Result};
