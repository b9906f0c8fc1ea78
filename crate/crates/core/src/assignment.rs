//! Task-assignment strategies over the currently admissible sites.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ids::VoId;
use crate::policy::{admit, Admission, LedgerError, PolicyKind, UsagePolicyStatement, UsageView};
use crate::scalar::Scalar;
use crate::site::SiteState;
use crate::workload::JobSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StrategyKind {
    Random,
    RoundRobin,
    LeastUsed,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 3] = [
        StrategyKind::Random,
        StrategyKind::RoundRobin,
        StrategyKind::LeastUsed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Random => "random",
            StrategyKind::RoundRobin => "round-robin",
            StrategyKind::LeastUsed => "least-used",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(StrategyKind::Random),
            "round-robin" | "roundrobin" | "rr" => Ok(StrategyKind::RoundRobin),
            "least-used" | "leastused" | "lu" => Ok(StrategyKind::LeastUsed),
            other => Err(format!(
                "unknown strategy `{other}` (expected random, round-robin or least-used)"
            )),
        }
    }
}

/// What counts as load for least-used selection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum LoadMetric {
    /// Running CPUs only.
    Running,
    /// Every CPU committed to the site: staging, queued, and running.
    #[default]
    Committed,
}

impl FromStr for LoadMetric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "running" => Ok(LoadMetric::Running),
            "committed" => Ok(LoadMetric::Committed),
            other => Err(format!("unknown load metric `{other}` (expected running or committed)")),
        }
    }
}

impl LoadMetric {
    fn load(self, site: &SiteState) -> u32 {
        match self {
            LoadMetric::Running => site.running_total(),
            LoadMetric::Committed => site.committed_total(),
        }
    }
}

/// A site index (declaration order) paired with its admission outcome.
pub type Candidate<S> = (usize, Admission<S>);

/// Strategy state owned by the planners.
#[derive(Clone, Debug)]
pub struct AssignmentState {
    rng: ChaCha8Rng,
    cursors: BTreeMap<VoId, usize>,
    site_count: usize,
}

impl AssignmentState {
    pub fn new(seed: u64, site_count: usize) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            cursors: BTreeMap::new(),
            site_count: site_count.max(1),
        }
    }

    pub fn cursor(&self, vo: &VoId) -> usize {
        self.cursors.get(vo).copied().unwrap_or(0)
    }
}

/// Admission outcome at every site, in declaration order.
pub fn assess_sites<S, U>(
    job: &JobSpec,
    sites: &[SiteState],
    kind: PolicyKind,
    statements_by_site: &[Vec<UsagePolicyStatement<S>>],
    usage: &U,
    now_tick: u64,
) -> Result<Vec<Candidate<S>>, LedgerError>
where
    S: Scalar,
    U: UsageView<S> + ?Sized,
{
    sites
        .iter()
        .enumerate()
        .map(|(i, site)| {
            let stmts = statements_by_site.get(i).map_or(&[][..], Vec::as_slice);
            admit(kind, stmts, usage, site, &job.vo_id, job.cpus_required, now_tick)
                .map(|a| (i, a))
        })
        .collect()
}

/// Sites at which `job` would be admitted (Run or Queue), in declaration order.
pub fn admissible_sites<S, U>(
    job: &JobSpec,
    sites: &[SiteState],
    kind: PolicyKind,
    statements_by_site: &[Vec<UsagePolicyStatement<S>>],
    usage: &U,
    now_tick: u64,
) -> Result<Vec<Candidate<S>>, LedgerError>
where
    S: Scalar,
    U: UsageView<S> + ?Sized,
{
    let mut all = assess_sites(job, sites, kind, statements_by_site, usage, now_tick)?;
    all.retain(|(_, a)| a.decision.is_admitted());
    Ok(all)
}

/// Picks one candidate. Returns its position in `candidates`.
pub fn select_site<S>(
    strategy: StrategyKind,
    state: &mut AssignmentState,
    candidates: &[Candidate<S>],
    vo: &VoId,
    sites: &[SiteState],
    metric: LoadMetric,
) -> Option<usize> {
    if candidates.is_empty() {
        return None;
    }
    let pick = match strategy {
        StrategyKind::Random => state.rng.random_range(0..candidates.len()),
        StrategyKind::RoundRobin => {
            let cursor = state.cursor(vo);
            let pick = candidates
                .iter()
                .position(|(i, _)| *i >= cursor)
                .unwrap_or(0);
            let next = (candidates[pick].0 + 1) % state.site_count;
            state.cursors.insert(vo.clone(), next);
            pick
        }
        StrategyKind::LeastUsed => {
            let mut best = 0;
            for (pos, (i, _)) in candidates.iter().enumerate().skip(1) {
                let (b, _) = candidates[best];
                let here = u64::from(metric.load(&sites[*i])) * u64::from(sites[b].cpu_count());
                let there = u64::from(metric.load(&sites[b])) * u64::from(sites[*i].cpu_count());
                if here < there {
                    best = pos;
                }
            }
            best
        }
    };
    Some(pick)
}
