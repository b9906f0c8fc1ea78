//! The fixed-step simulation world and its results.

pub mod config;
pub mod engine;
pub mod result;

pub use config::{AuditLevel, ConfigError, PlannerMode, SimConfig};
pub use engine::{run, AuditEntry, JobRecord, JobState, SimError, SimResult, World};
