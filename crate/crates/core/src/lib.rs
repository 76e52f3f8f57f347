//! Political kinship networks from panel election records.
//!
//! The pipeline runs in stages: [`ingest`] normalizes and links records,
//! [`graph`] builds one weighted kinship graph per (province, year),
//! [`community`] detects clans with Leiden, [`indicators`] scores each graph,
//! [`party`] looks at party loyalty, and [`stats`] plus [`regress`] relate the
//! indicators to development outcomes. [`synth`] generates seeded fixtures.

#[cfg(feature = "cli")]
pub mod cli;
pub mod community;
pub mod error;
pub mod graph;
pub mod indicators;
pub mod ingest;
pub mod party;
#[cfg(feature = "cli")]
pub mod pipeline;
pub mod regress;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
