//! Discrete-event simulation of usage-policy-based CPU sharing between
//! virtual organizations (VOs) across a set of sites.
//!
//! Sites publish per-VO usage statements in bracket notation; planners assign
//! each VO's jobs to sites that would admit them; the simulator tracks usage
//! and reports aggregated resource utilization (ARU) and aggregated response
//! time (ART).
//!
//! Policy arithmetic is generic over [`Scalar`]. [`f64`] is the default, and
//! [`Exact`] (a 64-bit rational) gives tolerance-free comparisons.

pub mod assignment;
pub mod cli;
pub mod ids;
pub mod metrics;
pub mod output;
pub mod policy;
pub mod scalar;
pub mod sim;
pub mod site;
pub mod workload;

pub use assignment::{LoadMetric, StrategyKind};
pub use ids::{JobId, SiteId, VoId};
pub use metrics::MetricsReport;
pub use policy::{AdmissionDecision, PolicyKind, RejectReason};
pub use scalar::Scalar;
pub use site::{SiteSpec, SiteState};
pub use workload::{JobSpec, SyncMode};

/// Exact rational scalar.
pub type Exact = num_rational::Rational64;

pub type Statement = policy::UsagePolicyStatement<f64>;
pub type ExactStatement = policy::UsagePolicyStatement<Exact>;
pub type Config = sim::SimConfig<f64>;
pub type ExactConfig = sim::SimConfig<Exact>;
pub type SimResult = sim::SimResult<f64>;
pub type ExactSimResult = sim::SimResult<Exact>;
