//! Threat analysis for machine-learning driven smart healthcare systems.
//!
//! A trained disease classifier and an atlas of per-label sensor-pair
//! clusters are compiled into one constraint problem per (source, target)
//! label pair. A satisfying assignment is a false-data-injection attack that
//! changes the diagnosis while every sensor pair still looks plausible.

pub mod data;
pub mod dcm;
pub mod adm;
pub mod cir;
pub mod solve;
pub mod threat;

/// Crate version, recorded in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
