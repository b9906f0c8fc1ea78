//! Synthetic per-VO workloads and the workload CSV format.
//!
//! Each workload is split evenly over a fixed number of bursts. Within a burst,
//! job durations are Poisson draws and inter-arrival gaps are Gaussian draws
//! truncated at zero (or the reverse, with `swap_distributions`).

use std::io;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{JobId, VoId};
use crate::output::write_atomic;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JobSpec {
    pub job_id: JobId,
    pub vo_id: VoId,
    pub group_id: String,
    pub workload_id: String,
    pub submit_time_s: u64,
    pub duration_s: u64,
    pub cpus_required: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorkloadSpec {
    pub vo_id: VoId,
    pub workload_id: String,
    pub group_id: String,
    pub job_count: u32,
    pub mean_duration_s: f64,
    pub mean_interarrival_s: f64,
    pub interarrival_stddev_s: f64,
    /// Start time of each burst, non-decreasing.
    pub burst_offsets_s: Vec<u64>,
    pub cpus_required: u32,
    /// Draw durations from the Gaussian and gaps from the Poisson instead.
    pub swap_distributions: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SyncMode {
    /// Every VO uses the burst offsets as given.
    Synchronized,
    /// Each VO shifts its bursts by a deterministic offset in `[0, max_offset_s]`.
    Unsynchronized { offset_seed: u64, max_offset_s: u64 },
}

impl SyncMode {
    /// Shift applied to every burst of `vo`.
    pub fn vo_offset(&self, vo: &VoId) -> u64 {
        match *self {
            SyncMode::Synchronized => 0,
            SyncMode::Unsynchronized {
                offset_seed,
                max_offset_s,
            } => {
                if max_offset_s == 0 {
                    0
                } else {
                    splitmix64(offset_seed ^ fnv1a(vo.as_str().as_bytes())) % (max_offset_s + 1)
                }
            }
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            SyncMode::Synchronized => "on",
            SyncMode::Unsynchronized { .. } => "off",
        }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325_u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

/// SplitMix64 finalizer; used to derive independent seeds.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Poisson draw redrawn until positive.
fn positive_poisson(dist: &Poisson<f64>, rng: &mut ChaCha8Rng) -> u64 {
    loop {
        let v = dist.sample(rng) as u64;
        if v > 0 {
            return v;
        }
    }
}

fn poisson(mean: f64) -> Poisson<f64> {
    Poisson::new(mean.max(f64::MIN_POSITIVE)).expect("positive Poisson mean")
}

fn normal(mean: f64, stddev: f64) -> Normal<f64> {
    Normal::new(mean, stddev.max(0.0)).expect("finite Gaussian parameters")
}

/// Generates the jobs of one workload, sorted by submit time.
pub fn generate_workload(spec: &WorkloadSpec, sync: SyncMode, seed: u64) -> Vec<JobSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift = sync.vo_offset(&spec.vo_id);
    let offsets: &[u64] = if spec.burst_offsets_s.is_empty() {
        &[0]
    } else {
        &spec.burst_offsets_s
    };
    let bursts = offsets.len() as u32;
    let per_burst = spec.job_count / bursts;
    let extra = spec.job_count % bursts;

    let duration_poisson = poisson(spec.mean_duration_s);
    let duration_normal = normal(spec.mean_duration_s, spec.mean_duration_s / 4.0);
    let gap_normal = normal(spec.mean_interarrival_s, spec.interarrival_stddev_s);
    let gap_poisson = poisson(spec.mean_interarrival_s);

    let mut jobs = Vec::with_capacity(spec.job_count as usize);
    let mut index = 0u32;
    for (b, &offset) in offsets.iter().enumerate() {
        let count = per_burst + u32::from((b as u32) < extra);
        let mut t = (offset + shift) as f64;
        for _ in 0..count {
            let duration_s = if spec.swap_distributions {
                duration_normal.sample(&mut rng).round().max(1.0) as u64
            } else {
                positive_poisson(&duration_poisson, &mut rng)
            };
            jobs.push(JobSpec {
                job_id: JobId::new(format!("{}.{}.{index}", spec.vo_id, spec.workload_id)),
                vo_id: spec.vo_id.clone(),
                group_id: spec.group_id.clone(),
                workload_id: spec.workload_id.clone(),
                submit_time_s: t.round() as u64,
                duration_s,
                cpus_required: spec.cpus_required.max(1),
            });
            index += 1;
            let gap = if spec.swap_distributions {
                gap_poisson.sample(&mut rng)
            } else {
                gap_normal.sample(&mut rng).max(0.0)
            };
            t += gap;
        }
    }
    jobs.sort_by_key(|j| j.submit_time_s);
    jobs
}

/// One row of the published workload summary: job count and mean duration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WorkloadRow {
    pub job_count: u32,
    pub mean_duration_s: f64,
}

/// Workload rows for VO0 and VO1, two workloads each.
pub const REFERENCE_ROWS: [[WorkloadRow; 2]; 2] = [
    [
        WorkloadRow {
            job_count: 80,
            mean_duration_s: 200.0,
        },
        WorkloadRow {
            job_count: 100,
            mean_duration_s: 300.0,
        },
    ],
    [
        WorkloadRow {
            job_count: 120,
            mean_duration_s: 150.0,
        },
        WorkloadRow {
            job_count: 140,
            mean_duration_s: 250.0,
        },
    ],
];

/// Parameters for the six-VO reference workload set.
#[derive(Clone, Debug, PartialEq)]
pub struct GridWorkloadOptions {
    pub vo_count: u32,
    /// Per-VO rows; VO `k` uses `rows[k % rows.len()]`.
    pub rows: Vec<Vec<WorkloadRow>>,
    pub scale: f64,
    pub mean_interarrival_s: f64,
    /// Defaults to a quarter of the mean gap.
    pub interarrival_stddev_s: Option<f64>,
    pub horizon_s: u64,
    pub bursts: u32,
    /// Overrides the evenly spaced burst starts.
    pub burst_offsets_s: Option<Vec<u64>>,
    pub cpus_required: u32,
    pub swap_distributions: bool,
}

impl Default for GridWorkloadOptions {
    fn default() -> Self {
        Self {
            vo_count: 6,
            rows: REFERENCE_ROWS.iter().map(|r| r.to_vec()).collect(),
            scale: 1.0,
            mean_interarrival_s: DEFAULT_MEAN_INTERARRIVAL_S,
            interarrival_stddev_s: None,
            horizon_s: 3600,
            bursts: 4,
            burst_offsets_s: None,
            cpus_required: 1,
            swap_distributions: false,
        }
    }
}

pub const DEFAULT_MEAN_INTERARRIVAL_S: f64 = 5.0;

impl GridWorkloadOptions {
    pub fn burst_offsets(&self) -> Vec<u64> {
        if let Some(offsets) = &self.burst_offsets_s {
            return offsets.clone();
        }
        let bursts = u64::from(self.bursts.max(1));
        (0..bursts).map(|b| b * self.horizon_s / bursts).collect()
    }

    /// Spacing between the first two bursts; the default spread for unsynchronized starts.
    pub fn burst_spacing(&self) -> u64 {
        let offsets = self.burst_offsets();
        match offsets.as_slice() {
            [a, b, ..] => b - a,
            _ => self.horizon_s,
        }
    }

    pub fn scaled_count(&self, count: u32) -> u32 {
        ((self.scale * f64::from(count)).round() as u32).max(1)
    }

    pub fn specs(&self) -> Vec<WorkloadSpec> {
        let offsets = self.burst_offsets();
        let mut specs = Vec::new();
        for vo in 0..self.vo_count {
            let rows = &self.rows[vo as usize % self.rows.len()];
            for (w, row) in rows.iter().enumerate() {
                let mean_gap = self.mean_interarrival_s;
                specs.push(WorkloadSpec {
                    vo_id: VoId::new(format!("VO{vo}")),
                    workload_id: format!("w{w}"),
                    group_id: format!("g{w}"),
                    job_count: self.scaled_count(row.job_count),
                    mean_duration_s: row.mean_duration_s,
                    mean_interarrival_s: mean_gap,
                    interarrival_stddev_s: self.interarrival_stddev_s.unwrap_or(mean_gap / 4.0),
                    burst_offsets_s: offsets.clone(),
                    cpus_required: self.cpus_required,
                    swap_distributions: self.swap_distributions,
                });
            }
        }
        specs
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedWorkloads {
    pub specs: Vec<WorkloadSpec>,
    /// All jobs, sorted by submit time (stable across workloads).
    pub jobs: Vec<JobSpec>,
}

impl GeneratedWorkloads {
    pub fn count_for(&self, vo: &VoId) -> usize {
        self.jobs.iter().filter(|j| &j.vo_id == vo).count()
    }
}

/// Builds the multi-VO reference workloads.
pub fn build_grid3_workloads(
    options: &GridWorkloadOptions,
    sync: SyncMode,
    seed: u64,
) -> GeneratedWorkloads {
    assert!(options.scale > 0.0, "scale must be positive");
    let specs = options.specs();
    let mut jobs = Vec::new();
    for (k, spec) in specs.iter().enumerate() {
        let workload_seed = splitmix64(seed ^ splitmix64(k as u64 + 1));
        jobs.extend(generate_workload(spec, sync, workload_seed));
    }
    jobs.sort_by_key(|j| j.submit_time_s);
    GeneratedWorkloads { specs, jobs }
}

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
}

pub const WORKLOAD_HEADER: [&str; 7] = [
    "job_id",
    "vo",
    "group",
    "workload",
    "submit_s",
    "duration_s",
    "cpus",
];

#[derive(Serialize, Deserialize)]
struct Row {
    job_id: String,
    vo: String,
    group: String,
    workload: String,
    submit_s: u64,
    duration_s: u64,
    cpus: u32,
}

pub fn workload_to_csv(jobs: &[JobSpec]) -> String {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(WORKLOAD_HEADER).expect("in-memory write");
    for j in jobs {
        w.serialize(Row {
            job_id: j.job_id.0.clone(),
            vo: j.vo_id.0.clone(),
            group: j.group_id.clone(),
            workload: j.workload_id.clone(),
            submit_s: j.submit_time_s,
            duration_s: j.duration_s,
            cpus: j.cpus_required,
        })
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

pub fn workload_from_csv(text: &str) -> Result<Vec<JobSpec>, WorkloadError> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let header = r.headers().map_err(|e| WorkloadError::Malformed {
        line: 1,
        message: e.to_string(),
    })?;
    if header.iter().ne(WORKLOAD_HEADER.iter().copied()) {
        return Err(WorkloadError::Malformed {
            line: 1,
            message: format!("expected header `{}`", WORKLOAD_HEADER.join(",")),
        });
    }
    let mut jobs = Vec::new();
    for record in r.deserialize::<Row>() {
        let row = record.map_err(|e| WorkloadError::Malformed {
            line: e.position().map_or(0, |p| p.line()),
            message: match e.kind() {
                csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
                _ => e.to_string(),
            },
        })?;
        let line = jobs.len() as u64 + 2;
        if row.duration_s < 1 {
            return Err(WorkloadError::Malformed {
                line,
                message: "duration_s must be at least 1".into(),
            });
        }
        if row.cpus < 1 {
            return Err(WorkloadError::Malformed {
                line,
                message: "cpus must be at least 1".into(),
            });
        }
        jobs.push(JobSpec {
            job_id: JobId(row.job_id),
            vo_id: VoId(row.vo),
            group_id: row.group,
            workload_id: row.workload,
            submit_time_s: row.submit_s,
            duration_s: row.duration_s,
            cpus_required: row.cpus,
        });
    }
    Ok(jobs)
}

pub fn write_workload(jobs: &[JobSpec], path: &Path) -> Result<(), WorkloadError> {
    write_atomic(path, workload_to_csv(jobs).as_bytes()).map_err(|source| WorkloadError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_workload(path: &Path) -> Result<Vec<JobSpec>, WorkloadError> {
    let text = std::fs::read_to_string(path).map_err(|source| WorkloadError::Io {
        path: path.display().to_string(),
        source,
    })?;
    workload_from_csv(&text)
}
