//! Fixed-step world.
//!
//! Each tick runs, in order: completions and staging arrivals; the site start
//! phase (FIFO, head-of-line); a ledger sample of running CPUs per (site, VO);
//! job arrivals and the planner phase (VOs ascending, FIFO within a planner);
//! and finally one tick of progress for every running job.
//!
//! Admission is checked once, when a planner assigns a job. A job sited at a
//! site stays there until it completes.

use std::collections::{HashMap, VecDeque};

use crate::assignment::{assess_sites, select_site, AssignmentState};
use crate::ids::{JobId, SiteId, VoId};
use crate::metrics::{MetricsReport, UsageMatrix};
use crate::policy::{AdmissionDecision, AdmissionSnapshot, UsageLedger, UsagePolicyStatement};
use crate::scalar::Scalar;
use crate::sim::config::{AuditLevel, ConfigError, PlannerMode, SimConfig};
use crate::site::{QueuedJob, SiteState};
use crate::workload::{splitmix64, JobSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum JobState {
    /// Submission time not reached yet.
    Pending,
    PlannerQueued,
    Staging,
    SiteQueued,
    Running,
    Completed,
}

/// Lifecycle of one job. Times are seconds from simulation start, on tick boundaries.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JobRecord {
    pub spec: JobSpec,
    pub state: JobState,
    pub t_submitted: Option<u64>,
    pub t_assigned: Option<u64>,
    pub t_started: Option<u64>,
    pub t_completed: Option<u64>,
    pub assigned_site: Option<SiteId>,
    pub rejection_count: u32,
}

impl JobRecord {
    pub fn new(spec: JobSpec) -> Self {
        Self {
            spec,
            state: JobState::Pending,
            t_submitted: None,
            t_assigned: None,
            t_started: None,
            t_completed: None,
            assigned_site: None,
            rejection_count: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditEntry<S> {
    pub tick: u64,
    pub job_id: JobId,
    pub vo_id: VoId,
    pub site_id: SiteId,
    pub decision: AdmissionDecision,
    pub snapshot: AdmissionSnapshot<S>,
    /// Whether the planner placed the job at this site.
    pub selected: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimResult<S> {
    pub jobs: Vec<JobRecord>,
    pub usage: UsageMatrix,
    pub audit: Vec<AuditEntry<S>>,
    pub metrics: MetricsReport,
    pub ticks_executed: u64,
    pub tick_step_s: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid configuration: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Config(Vec<ConfigError>),
    #[error("ledger: {0}")]
    Ledger(#[from] crate::policy::LedgerError),
}

/// Live simulation state.
pub struct World<'a, S> {
    config: &'a SimConfig<S>,
    tick: u64,
    sites: Vec<SiteState>,
    statements_by_site: Vec<Vec<UsagePolicyStatement<S>>>,
    ledger: UsageLedger,
    assignment: AssignmentState,
    records: Vec<JobRecord>,
    index_of: HashMap<JobId, usize>,
    /// Job indices in arrival order, not yet submitted.
    arrivals: VecDeque<usize>,
    planners: Vec<(VoId, VecDeque<usize>)>,
    staging: Vec<VecDeque<(u64, usize)>>,
    usage: UsageMatrix,
    audit: Vec<AuditEntry<S>>,
    vo_index: HashMap<VoId, usize>,
}

impl<'a, S: Scalar> World<'a, S> {
    pub fn new(config: &'a SimConfig<S>) -> Result<Self, SimError> {
        config.validate().map_err(SimError::Config)?;
        let step = config.tick_step_s;
        let vos = config.vo_ids();
        let mut ledger = UsageLedger::new(step, config.retention_s());
        let sites: Vec<SiteState> = config.sites.iter().cloned().map(SiteState::new).collect();
        for s in &sites {
            ledger.register_site(s.site_id().clone(), s.cpu_count())?;
        }
        let statements_by_site = sites
            .iter()
            .map(|site| {
                config
                    .statements
                    .iter()
                    .filter(|st| &st.site_id == site.site_id())
                    .cloned()
                    .collect()
            })
            .collect();

        let mut order: Vec<usize> = (0..config.jobs.len()).collect();
        order.sort_by_key(|&i| config.jobs[i].submit_time_s);
        let records: Vec<JobRecord> = config.jobs.iter().cloned().map(JobRecord::new).collect();
        let index_of = records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.spec.job_id.clone(), i))
            .collect();
        let intervals = (config.horizon_s / config.measurement_interval_s) as usize;
        let usage = UsageMatrix::new(
            config.measurement_interval_s,
            intervals,
            config.sites.iter().map(|s| s.site_id.clone()).collect(),
            vos.clone(),
        );
        Ok(Self {
            config,
            tick: 0,
            staging: vec![VecDeque::new(); sites.len()],
            assignment: AssignmentState::new(splitmix64(config.seed ^ 0xa551_6e00), sites.len()),
            sites,
            statements_by_site,
            ledger,
            records,
            index_of,
            arrivals: order.into(),
            planners: vos.iter().map(|v| (v.clone(), VecDeque::new())).collect(),
            usage,
            audit: Vec::new(),
            vo_index: vos.iter().cloned().enumerate().map(|(i, v)| (v, i)).collect(),
        })
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn sites(&self) -> &[SiteState] {
        &self.sites
    }

    pub fn records(&self) -> &[JobRecord] {
        &self.records
    }

    pub fn ledger(&self) -> &UsageLedger {
        &self.ledger
    }

    fn now_s(&self) -> u64 {
        self.tick * self.config.tick_step_s
    }

    fn complete_phase(&mut self) {
        let now = self.now_s();
        for site in &mut self.sites {
            for id in site.complete_finished() {
                let r = &mut self.records[self.index_of[&id]];
                r.state = JobState::Completed;
                r.t_completed = Some(now);
            }
        }
    }

    fn staging_phase(&mut self) {
        for (s, queue) in self.staging.iter_mut().enumerate() {
            while queue.front().is_some_and(|&(ready, _)| ready <= self.tick) {
                let (_, idx) = queue.pop_front().expect("non-empty");
                let r = &mut self.records[idx];
                r.state = JobState::SiteQueued;
                self.sites[s].enqueue(queued(&r.spec));
            }
        }
    }

    fn start_phase(&mut self) {
        let now = self.now_s();
        for site in &mut self.sites {
            for id in site.start_ready() {
                let r = &mut self.records[self.index_of[&id]];
                r.state = JobState::Running;
                r.t_started = Some(now);
            }
            assert!(
                site.running_total() <= site.cpu_count(),
                "capacity exceeded at {}",
                site.site_id()
            );
        }
    }

    fn record_phase(&mut self) -> Result<(), SimError> {
        for site in &self.sites {
            for (vo, _) in &self.planners {
                self.ledger
                    .record_tick(site.site_id(), vo, site.running_cpus(vo), self.tick)?;
            }
        }
        Ok(())
    }

    fn arrival_phase(&mut self) {
        let now = self.now_s();
        while let Some(&idx) = self.arrivals.front() {
            if self.records[idx].spec.submit_time_s > now {
                break;
            }
            self.arrivals.pop_front();
            let r = &mut self.records[idx];
            r.state = JobState::PlannerQueued;
            r.t_submitted = Some(now);
            let p = self.vo_index[&r.spec.vo_id];
            self.planners[p].1.push_back(idx);
        }
    }

    fn planner_phase(&mut self) -> Result<(), SimError> {
        let config = self.config;
        let full_audit = config.audit == AuditLevel::Full;
        for p in 0..self.planners.len() {
            let vo = self.planners[p].0.clone();
            let queue = std::mem::take(&mut self.planners[p].1);
            let mut held = VecDeque::with_capacity(queue.len());
            // Smallest CPU request rejected everywhere since the last placement.
            // Admission is monotone in the request size, so anything at least as
            // large is rejected too while the state is unchanged.
            let mut rejected_from: Option<u32> = None;
            let mut stop = false;
            for idx in queue {
                let cpus = self.records[idx].spec.cpus_required;
                if stop {
                    held.push_back(idx);
                    continue;
                }
                if !full_audit && rejected_from.is_some_and(|c| cpus >= c) {
                    self.records[idx].rejection_count += 1;
                    held.push_back(idx);
                    if config.planner_mode == PlannerMode::HeadOnly {
                        stop = true;
                    }
                    continue;
                }
                let assessed = assess_sites(
                    &self.records[idx].spec,
                    &self.sites,
                    config.policy,
                    &self.statements_by_site,
                    &self.ledger,
                    self.tick,
                )?;
                let candidates: Vec<_> = assessed
                    .iter()
                    .filter(|(_, a)| a.decision.is_admitted())
                    .copied()
                    .collect();
                let pick = select_site(
                    config.strategy,
                    &mut self.assignment,
                    &candidates,
                    &vo,
                    &self.sites,
                    config.load_metric,
                )
                .map(|pos| candidates[pos].0);
                let job_id = &self.records[idx].spec.job_id;
                for (s, a) in &assessed {
                    let selected = pick == Some(*s);
                    if full_audit || selected {
                        self.audit.push(AuditEntry {
                            tick: self.tick,
                            job_id: job_id.clone(),
                            vo_id: vo.clone(),
                            site_id: self.sites[*s].site_id().clone(),
                            decision: a.decision,
                            snapshot: a.snapshot,
                            selected,
                        });
                    }
                }
                match pick {
                    Some(s) => {
                        self.place(idx, s);
                        rejected_from = None;
                    }
                    None => {
                        self.records[idx].rejection_count += 1;
                        held.push_back(idx);
                        rejected_from = Some(rejected_from.map_or(cpus, |c| c.min(cpus)));
                        if config.planner_mode == PlannerMode::HeadOnly {
                            stop = true;
                        }
                    }
                }
            }
            self.planners[p].1 = held;
        }
        Ok(())
    }

    fn place(&mut self, idx: usize, s: usize) {
        let now = self.now_s();
        let step = self.config.tick_step_s;
        let site = &mut self.sites[s];
        let r = &mut self.records[idx];
        site.commit(&r.spec.vo_id, r.spec.cpus_required);
        r.t_assigned = Some(now);
        r.assigned_site = Some(site.site_id().clone());
        let delay_ticks = site.spec.staging_delay_s.div_ceil(step);
        if delay_ticks == 0 {
            r.state = JobState::SiteQueued;
            site.enqueue(queued(&r.spec));
        } else {
            r.state = JobState::Staging;
            self.staging[s].push_back((self.tick + delay_ticks, idx));
        }
    }

    fn advance_phase(&mut self) {
        let step = self.config.tick_step_s;
        let interval = (self.now_s() / self.config.measurement_interval_s) as usize;
        for (s, site) in self.sites.iter_mut().enumerate() {
            for (vo, cpu_s) in site.advance(step) {
                self.usage.add(interval, s, self.vo_index[&vo], cpu_s);
            }
        }
    }

    /// Executes the current tick and moves to the next.
    pub fn step(&mut self) -> Result<(), SimError> {
        self.complete_phase();
        self.staging_phase();
        self.start_phase();
        self.record_phase()?;
        self.arrival_phase();
        self.planner_phase()?;
        self.advance_phase();
        self.tick += 1;
        Ok(())
    }

    /// Number of jobs in each lifecycle state.
    pub fn census(&self) -> HashMap<JobState, usize> {
        let mut out = HashMap::new();
        for r in &self.records {
            *out.entry(r.state).or_default() += 1;
        }
        out
    }

    pub fn finish(mut self) -> SimResult<S> {
        // Work finished during the last tick is stamped at the horizon.
        self.complete_phase();
        let config = self.config;
        let metrics = MetricsReport::from_parts(
            &self.records,
            &self.usage,
            config.total_cpus(),
            config.horizon_s,
        );
        SimResult {
            jobs: self.records,
            usage: self.usage,
            audit: self.audit,
            metrics,
            ticks_executed: self.tick,
            tick_step_s: config.tick_step_s,
        }
    }
}

fn queued(spec: &JobSpec) -> QueuedJob {
    QueuedJob {
        job_id: spec.job_id.clone(),
        vo_id: spec.vo_id.clone(),
        cpus: spec.cpus_required,
        duration_s: spec.duration_s,
    }
}

/// Runs a configuration from tick 0 to the horizon.
pub fn run<S: Scalar>(config: &SimConfig<S>) -> Result<SimResult<S>, SimError> {
    let mut world = World::new(config)?;
    for _ in 0..config.tick_count() {
        world.step()?;
    }
    Ok(world.finish())
}
