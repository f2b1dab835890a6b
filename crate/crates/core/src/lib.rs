//! Reputation metrics for hosting providers built from abuse feeds, a routing
//! snapshot, geolocation ranges and passive DNS.

pub mod aggregate;
pub mod config;
pub mod error;
pub mod fixture;
pub mod ingest;
pub mod mapping;
pub mod model;
pub mod pipeline;
pub mod size;
pub mod stats;
pub mod ranking;
pub mod sensitivity;
pub mod rate;
pub mod report;
pub mod suffix;
pub mod uptime;

pub use error::{Error, Result, Stage};
