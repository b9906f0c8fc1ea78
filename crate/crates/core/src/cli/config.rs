//! JSON experiment configuration.
//!
//! ```json
//! {
//!   "sites": [{"id": "Site1", "cpus": 7}],
//!   "policies": {"file": "policies.txt", "statements": ["[CPU, ...]"]},
//!   "workloads": {"generate": {"scale": 1.0}},
//!   "simulation": {"policy": "commitment", "strategy": "random", "sync": "on", "seed": 1}
//! }
//! ```
//!
//! Relative paths are resolved against the directory holding the config file.

use std::path::{Path, PathBuf};

use num_rational::Rational64;
use serde::Deserialize;
use thiserror::Error;

use crate::assignment::{LoadMetric, StrategyKind};
use crate::policy::{parse_policy_file, parse_statement, PolicyFileError, PolicyKind, UsagePolicyStatement};
use crate::scalar::{parse_decimal, Scalar};
use crate::sim::{AuditLevel, PlannerMode, SimConfig};
use crate::site::SiteSpec;
use crate::workload::{
    build_grid3_workloads, read_workload, GridWorkloadOptions, JobSpec, SyncMode, WorkloadError,
    WorkloadRow, DEFAULT_MEAN_INTERARRIVAL_S,
};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Policy {
        path: String,
        #[source]
        source: PolicyFileError,
    },
    #[error("inline statement {index}: {message}")]
    InlineStatement { index: usize, message: String },
    #[error("{0}")]
    Workload(#[from] WorkloadError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteEntry {
    pub id: String,
    pub cpus: u32,
    #[serde(default)]
    pub staging_delay_s: u64,
    #[serde(default)]
    pub total_allocation: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    #[serde(default)]
    pub file: Option<PathBuf>,
    #[serde(default)]
    pub statements: Vec<String>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RowEntry {
    pub jobs: u32,
    pub mean_duration_s: f64,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSection {
    #[serde(default)]
    pub scale: Option<f64>,
    #[serde(default)]
    pub vo_count: Option<u32>,
    /// Per-VO workload rows, reused cyclically across VOs.
    #[serde(default)]
    pub rows: Option<Vec<Vec<RowEntry>>>,
    #[serde(default)]
    pub mean_interarrival_s: Option<f64>,
    #[serde(default)]
    pub interarrival_stddev_s: Option<f64>,
    #[serde(default)]
    pub bursts: Option<u32>,
    #[serde(default)]
    pub burst_offsets_s: Option<Vec<u64>>,
    #[serde(default)]
    pub unsync_max_offset_s: Option<u64>,
    #[serde(default)]
    pub cpus_required: Option<u32>,
    #[serde(default)]
    pub swap_distributions: bool,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSection {
    #[serde(default)]
    pub file: Option<PathBuf>,
    #[serde(default)]
    pub generate: Option<GenerateSection>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub policy: Option<String>,
    pub strategy: Option<String>,
    pub sync: Option<String>,
    pub tick_step_s: Option<u64>,
    pub horizon_s: Option<u64>,
    pub measurement_interval_s: Option<u64>,
    pub seed: Option<u64>,
    pub planner: Option<String>,
    pub load_metric: Option<String>,
    pub audit: Option<String>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub sites: Vec<SiteEntry>,
    #[serde(default)]
    pub policies: PolicySection,
    pub workloads: WorkloadSection,
    #[serde(default)]
    pub simulation: SimulationSection,
}

/// Where jobs come from.
#[derive(Clone, Debug, PartialEq)]
pub enum WorkloadSource {
    File(PathBuf),
    Generate {
        options: GridWorkloadOptions,
        unsync_max_offset_s: Option<u64>,
    },
}

/// A loaded configuration with its text-level policy statements.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub sites: Vec<SiteSpec>,
    /// `(origin, statement text)`, origin naming the file and line or inline index.
    pub statement_texts: Vec<(String, String)>,
    pub workload: WorkloadSource,
    pub policy: PolicyKind,
    pub strategy: StrategyKind,
    pub sync: bool,
    pub tick_step_s: u64,
    pub horizon_s: u64,
    pub measurement_interval_s: u64,
    pub seed: u64,
    pub planner_mode: PlannerMode,
    pub load_metric: LoadMetric,
    pub audit: AuditLevel,
}

fn sync_flag(text: &str) -> Result<bool, String> {
    match text {
        "on" | "sync" | "synchronized" | "true" => Ok(true),
        "off" | "unsync" | "unsynchronized" | "false" => Ok(false),
        other => Err(format!("unknown sync mode `{other}` (expected on or off)")),
    }
}

pub fn parse_sync(text: &str) -> Result<bool, String> {
    sync_flag(&text.to_ascii_lowercase())
}

fn fraction_from_f64(x: f64) -> Option<Rational64> {
    let (n, d) = parse_decimal(&format!("{x}"))?;
    Some(Rational64::new(n, d))
}

impl Experiment {
    pub fn load(path: &Path) -> Result<Self, LoadError> {
        let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let file: ConfigFile = serde_json::from_str(&text).map_err(|source| LoadError::Json {
            path: path.display().to_string(),
            source,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_file(file, &base)
    }

    pub fn from_file(file: ConfigFile, base: &Path) -> Result<Self, LoadError> {
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        let invalid = LoadError::Invalid;

        let mut sites = Vec::new();
        for s in &file.sites {
            let mut spec = SiteSpec::new(s.id.as_str(), s.cpus).with_staging_delay(s.staging_delay_s);
            if let Some(total) = s.total_allocation {
                let exact = fraction_from_f64(total).ok_or_else(|| {
                    invalid(format!("site {}: bad total_allocation {total}", s.id))
                })?;
                spec = spec.with_total_allocation(exact);
            }
            sites.push(spec);
        }

        let mut statement_texts = Vec::new();
        if let Some(p) = &file.policies.file {
            let p = resolve(p);
            let text = std::fs::read_to_string(&p).map_err(|source| LoadError::Io {
                path: p.display().to_string(),
                source,
            })?;
            // Check syntax now so errors carry the file and line.
            parse_policy_file::<f64>(&text).map_err(|source| LoadError::Policy {
                path: p.display().to_string(),
                source,
            })?;
            for (i, line) in text.lines().enumerate() {
                let body = line.split('#').next().unwrap_or("").trim();
                if !body.is_empty() {
                    statement_texts.push((format!("{}:{}", p.display(), i + 1), body.to_owned()));
                }
            }
        }
        for (i, s) in file.policies.statements.iter().enumerate() {
            parse_statement::<f64>(s).map_err(|e| LoadError::InlineStatement {
                index: i,
                message: e.to_string(),
            })?;
            statement_texts.push((format!("inline[{i}]"), s.clone()));
        }

        let workload = match (&file.workloads.file, &file.workloads.generate) {
            (Some(p), None) => WorkloadSource::File(resolve(p)),
            (None, Some(g)) => {
                let mut options = GridWorkloadOptions::default();
                if let Some(x) = g.scale {
                    if x <= 0.0 {
                        return Err(invalid("workloads.generate.scale must be positive".into()));
                    }
                    options.scale = x;
                }
                if let Some(x) = g.vo_count {
                    options.vo_count = x;
                }
                if let Some(rows) = &g.rows {
                    if rows.is_empty() || rows.iter().any(Vec::is_empty) {
                        return Err(invalid("workloads.generate.rows must not be empty".into()));
                    }
                    options.rows = rows
                        .iter()
                        .map(|r| {
                            r.iter()
                                .map(|e| WorkloadRow {
                                    job_count: e.jobs,
                                    mean_duration_s: e.mean_duration_s,
                                })
                                .collect()
                        })
                        .collect();
                }
                options.mean_interarrival_s =
                    g.mean_interarrival_s.unwrap_or(DEFAULT_MEAN_INTERARRIVAL_S);
                options.interarrival_stddev_s = g.interarrival_stddev_s;
                if let Some(b) = g.bursts {
                    options.bursts = b.max(1);
                }
                options.burst_offsets_s = g.burst_offsets_s.clone();
                if let Some(c) = g.cpus_required {
                    options.cpus_required = c.max(1);
                }
                options.swap_distributions = g.swap_distributions;
                WorkloadSource::Generate {
                    options,
                    unsync_max_offset_s: g.unsync_max_offset_s,
                }
            }
            _ => {
                return Err(invalid(
                    "workloads needs exactly one of `file` or `generate`".into(),
                ))
            }
        };

        let sim = &file.simulation;
        let policy = sim.policy.as_deref().unwrap_or("no-limit").parse().map_err(invalid)?;
        let strategy = sim.strategy.as_deref().unwrap_or("random").parse().map_err(invalid)?;
        let sync = parse_sync(sim.sync.as_deref().unwrap_or("on")).map_err(invalid)?;
        let planner_mode = match sim.planner.as_deref().unwrap_or("all") {
            "all" => PlannerMode::AllQueued,
            "head" => PlannerMode::HeadOnly,
            other => return Err(invalid(format!("unknown planner mode `{other}` (all or head)"))),
        };
        let load_metric = sim
            .load_metric
            .as_deref()
            .unwrap_or("committed")
            .parse()
            .map_err(invalid)?;
        let audit = parse_audit(sim.audit.as_deref().unwrap_or("admissions")).map_err(invalid)?;
        Ok(Self {
            sites,
            statement_texts,
            workload,
            policy,
            strategy,
            sync,
            tick_step_s: sim.tick_step_s.unwrap_or(1),
            horizon_s: sim.horizon_s.unwrap_or(3600),
            measurement_interval_s: sim.measurement_interval_s.unwrap_or(30),
            seed: sim.seed.unwrap_or(1),
            planner_mode,
            load_metric,
            audit,
        })
    }

    pub fn statements<S: Scalar>(&self) -> Result<Vec<UsagePolicyStatement<S>>, LoadError> {
        self.statement_texts
            .iter()
            .map(|(origin, text)| {
                parse_statement(text).map_err(|e| LoadError::Invalid(format!("{origin}: {e}")))
            })
            .collect()
    }

    pub fn sync_mode(&self, sync: bool, seed: u64) -> SyncMode {
        if sync {
            return SyncMode::Synchronized;
        }
        let spread = match &self.workload {
            WorkloadSource::Generate {
                options,
                unsync_max_offset_s,
            } => unsync_max_offset_s.unwrap_or_else(|| {
                GridWorkloadOptions {
                    horizon_s: self.horizon_s,
                    ..options.clone()
                }
                .burst_spacing()
            }),
            WorkloadSource::File(_) => 0,
        };
        SyncMode::Unsynchronized {
            offset_seed: seed,
            max_offset_s: spread,
        }
    }

    /// Jobs for one (sync, seed) pair. File workloads ignore both.
    pub fn jobs(&self, sync: bool, seed: u64) -> Result<Vec<JobSpec>, LoadError> {
        match &self.workload {
            WorkloadSource::File(p) => Ok(read_workload(p)?),
            WorkloadSource::Generate { options, .. } => {
                let options = GridWorkloadOptions {
                    horizon_s: self.horizon_s,
                    ..options.clone()
                };
                Ok(build_grid3_workloads(&options, self.sync_mode(sync, seed), seed).jobs)
            }
        }
    }

    /// One simulation cell.
    pub fn cell<S: Scalar>(
        &self,
        policy: PolicyKind,
        strategy: StrategyKind,
        jobs: Vec<JobSpec>,
        seed: u64,
    ) -> Result<SimConfig<S>, LoadError> {
        let mut config = SimConfig::new(
            self.sites.clone(),
            policy,
            self.statements()?,
            strategy,
            jobs,
        );
        config.tick_step_s = self.tick_step_s;
        config.horizon_s = self.horizon_s;
        config.measurement_interval_s = self.measurement_interval_s;
        config.seed = seed;
        config.planner_mode = self.planner_mode;
        config.load_metric = self.load_metric;
        config.audit = self.audit;
        Ok(config)
    }
}

pub fn parse_audit(text: &str) -> Result<AuditLevel, String> {
    match text {
        "full" => Ok(AuditLevel::Full),
        "admissions" => Ok(AuditLevel::Admissions),
        other => Err(format!("unknown audit level `{other}` (full or admissions)")),
    }
}
