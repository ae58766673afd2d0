//! Webometric indicator engine for university web systems.

pub mod aggregation;
pub mod analysis;
pub mod indicators;
pub mod measurement;
pub mod registry;
pub mod report;
