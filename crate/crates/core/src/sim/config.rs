use std::collections::BTreeSet;
use std::fmt;

use num_traits::{One, Zero};

use crate::assignment::{LoadMetric, StrategyKind};
use crate::ids::{JobId, SiteId, VoId};
use crate::policy::{PolicyKind, UsagePolicyStatement};
use crate::scalar::Scalar;
use crate::site::SiteSpec;
use crate::workload::JobSpec;

/// Which queued jobs a planner tries each tick.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PlannerMode {
    /// Every planner-queued job, FIFO.
    #[default]
    AllQueued,
    /// Only the head of each planner queue.
    HeadOnly,
}

/// How much of the admission process goes into the audit log.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum AuditLevel {
    /// Every (job, site) evaluation, including rejections.
    Full,
    /// Only the decision at the chosen site. Planner attempts that are provably
    /// rejected everywhere are skipped without re-evaluation.
    #[default]
    Admissions,
}

/// A fully materialized simulation cell.
#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig<S> {
    pub sites: Vec<SiteSpec>,
    pub policy: PolicyKind,
    pub statements: Vec<UsagePolicyStatement<S>>,
    pub strategy: StrategyKind,
    pub jobs: Vec<JobSpec>,
    pub tick_step_s: u64,
    pub horizon_s: u64,
    pub measurement_interval_s: u64,
    pub seed: u64,
    pub planner_mode: PlannerMode,
    pub load_metric: LoadMetric,
    pub audit: AuditLevel,
}

impl<S: Scalar> SimConfig<S> {
    /// Defaults: 1 s ticks, one-hour horizon, 30 s measurement intervals.
    pub fn new(
        sites: Vec<SiteSpec>,
        policy: PolicyKind,
        statements: Vec<UsagePolicyStatement<S>>,
        strategy: StrategyKind,
        jobs: Vec<JobSpec>,
    ) -> Self {
        Self {
            sites,
            policy,
            statements,
            strategy,
            jobs,
            tick_step_s: 1,
            horizon_s: 3600,
            measurement_interval_s: 30,
            seed: 0,
            planner_mode: PlannerMode::default(),
            load_metric: LoadMetric::default(),
            audit: AuditLevel::default(),
        }
    }

    pub fn total_cpus(&self) -> u64 {
        self.sites.iter().map(|s| u64::from(s.cpu_count)).sum()
    }

    pub fn tick_count(&self) -> u64 {
        self.horizon_s / self.tick_step_s
    }

    /// VOs appearing in the workload or the statements, ascending.
    pub fn vo_ids(&self) -> Vec<VoId> {
        let set: BTreeSet<VoId> = self
            .jobs
            .iter()
            .map(|j| j.vo_id.clone())
            .chain(self.statements.iter().map(|s| s.vo_id.clone()))
            .collect();
        set.into_iter().collect()
    }

    /// Ledger retention needed to answer every statement's windows.
    pub fn retention_s(&self) -> u64 {
        self.statements
            .iter()
            .map(|s| s.epoch.interval_s.max(s.burst.interval_s))
            .max()
            .unwrap_or(self.tick_step_s)
            .max(self.tick_step_s)
    }

    /// Every problem found, not just the first.
    pub fn validate(&self) -> Result<(), Vec<ConfigError>> {
        let mut errors = Vec::new();
        if self.tick_step_s == 0 {
            errors.push(ConfigError::ZeroTickStep);
        }
        if self.horizon_s == 0 || self.measurement_interval_s == 0 {
            errors.push(ConfigError::ZeroDuration);
        }
        if self.measurement_interval_s > 0 && self.horizon_s % self.measurement_interval_s != 0 {
            errors.push(ConfigError::HorizonNotMultiple {
                horizon_s: self.horizon_s,
                interval_s: self.measurement_interval_s,
            });
        }
        if self.tick_step_s > 0 && self.measurement_interval_s % self.tick_step_s != 0 {
            errors.push(ConfigError::TickDoesNotDivide {
                tick_step_s: self.tick_step_s,
                interval_s: self.measurement_interval_s,
            });
        }
        if self.sites.is_empty() {
            errors.push(ConfigError::NoSites);
        }
        let mut site_ids = BTreeSet::new();
        for site in &self.sites {
            if !site_ids.insert(site.site_id.clone()) {
                errors.push(ConfigError::DuplicateSite(site.site_id.clone()));
            }
            if site.cpu_count == 0 {
                errors.push(ConfigError::ZeroCpus(site.site_id.clone()));
            }
            let total = site.total_allocation;
            if total <= num_rational::Rational64::zero() || total > num_rational::Rational64::one() {
                errors.push(ConfigError::TotalAllocationOutOfRange(site.site_id.clone()));
            }
        }
        let mut pairs = BTreeSet::new();
        for stmt in &self.statements {
            if !site_ids.contains(&stmt.site_id) {
                errors.push(ConfigError::UnknownSite {
                    statement: stmt.to_string(),
                    site: stmt.site_id.clone(),
                });
            }
            if !pairs.insert((stmt.site_id.clone(), stmt.vo_id.clone())) {
                errors.push(ConfigError::DuplicateStatement {
                    site: stmt.site_id.clone(),
                    vo: stmt.vo_id.clone(),
                });
            }
            if let Err(e) = stmt.validate() {
                errors.push(ConfigError::InvalidStatement {
                    statement: stmt.to_string(),
                    reason: e.to_string(),
                });
            }
            if self.tick_step_s > 0
                && (stmt.epoch.interval_s % self.tick_step_s != 0
                    || stmt.burst.interval_s % self.tick_step_s != 0)
            {
                errors.push(ConfigError::IntervalNotTickAligned {
                    statement: stmt.to_string(),
                    tick_step_s: self.tick_step_s,
                });
            }
        }
        let largest = self.sites.iter().map(|s| s.cpu_count).max().unwrap_or(0);
        let mut job_ids = BTreeSet::new();
        for job in &self.jobs {
            if !job_ids.insert(job.job_id.clone()) {
                errors.push(ConfigError::DuplicateJob(job.job_id.clone()));
            }
            if job.cpus_required == 0 || job.duration_s == 0 {
                errors.push(ConfigError::InvalidJob(job.job_id.clone()));
            }
            if job.cpus_required > largest && !self.sites.is_empty() {
                errors.push(ConfigError::JobTooLarge {
                    job: job.job_id.clone(),
                    cpus: job.cpus_required,
                    largest,
                });
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ConfigError {
    ZeroTickStep,
    ZeroDuration,
    HorizonNotMultiple { horizon_s: u64, interval_s: u64 },
    TickDoesNotDivide { tick_step_s: u64, interval_s: u64 },
    NoSites,
    DuplicateSite(SiteId),
    ZeroCpus(SiteId),
    TotalAllocationOutOfRange(SiteId),
    UnknownSite { statement: String, site: SiteId },
    DuplicateStatement { site: SiteId, vo: VoId },
    InvalidStatement { statement: String, reason: String },
    IntervalNotTickAligned { statement: String, tick_step_s: u64 },
    DuplicateJob(JobId),
    InvalidJob(JobId),
    JobTooLarge { job: JobId, cpus: u32, largest: u32 },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::ZeroTickStep => write!(f, "tick_step_s must be positive"),
            ConfigError::ZeroDuration => {
                write!(f, "horizon_s and measurement_interval_s must be positive")
            }
            ConfigError::HorizonNotMultiple {
                horizon_s,
                interval_s,
            } => write!(
                f,
                "horizon {horizon_s}s is not a multiple of the {interval_s}s measurement interval"
            ),
            ConfigError::TickDoesNotDivide {
                tick_step_s,
                interval_s,
            } => write!(
                f,
                "tick step {tick_step_s}s does not divide the {interval_s}s measurement interval"
            ),
            ConfigError::NoSites => write!(f, "no sites configured"),
            ConfigError::DuplicateSite(s) => write!(f, "site {s} declared twice"),
            ConfigError::ZeroCpus(s) => write!(f, "site {s} has no CPUs"),
            ConfigError::TotalAllocationOutOfRange(s) => {
                write!(f, "site {s}: total_allocation must lie in (0, 1]")
            }
            ConfigError::UnknownSite { statement, site } => {
                write!(f, "{statement}: unknown site {site}")
            }
            ConfigError::DuplicateStatement { site, vo } => {
                write!(f, "more than one statement for ({site}, {vo})")
            }
            ConfigError::InvalidStatement { statement, reason } => {
                write!(f, "{statement}: {reason}")
            }
            ConfigError::IntervalNotTickAligned {
                statement,
                tick_step_s,
            } => write!(
                f,
                "{statement}: intervals must be multiples of the {tick_step_s}s tick"
            ),
            ConfigError::DuplicateJob(j) => write!(f, "job {j} appears twice"),
            ConfigError::InvalidJob(j) => write!(f, "job {j} needs positive duration and CPUs"),
            ConfigError::JobTooLarge { job, cpus, largest } => write!(
                f,
                "job {job} needs {cpus} CPUs but the largest site has {largest}"
            ),
        }
    }
}

impl std::error::Error for ConfigError {}
