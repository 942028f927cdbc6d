//! Eviction risk scoring and budgeted caseworker outreach planning.

pub mod data;
pub mod error;
pub mod geo;
pub mod metrics;
pub mod pipeline;
pub mod policies;
pub mod risk;
pub mod routing;

pub use error::{Error, Result};
