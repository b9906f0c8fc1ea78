//! Shared helpers for the integration tests.
#![allow(dead_code)]

pub mod oracle;

use num_rational::Rational64 as Q;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vosim::policy::{LimitTuple, UsagePolicyStatement};
use std::collections::BTreeMap;

use vosim::sim::{AuditLevel, PlannerMode, SimConfig, SimResult};
use vosim::{JobId, JobSpec, LoadMetric, PolicyKind, Scalar, SiteSpec, StrategyKind, VoId};

use oracle::{Event, Instance, Kind, OJob, OSite, OStatement, Pick, Trace};

const FRACTIONS: [(i64, i64); 7] = [(0, 1), (1, 4), (1, 3), (1, 2), (2, 3), (3, 4), (1, 1)];

fn fraction(rng: &mut ChaCha8Rng) -> Q {
    let (n, d) = FRACTIONS[rng.random_range(0..FRACTIONS.len())];
    Q::new(n, d)
}

/// A small instance drawn from `seed`: at most 2 sites of at most 4 CPUs,
/// 3 jobs, 2 VOs, and 60 ticks.
pub fn small_instance(seed: u64, kind: Kind, pick: Pick) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ns = rng.random_range(1..=2);
    let sites: Vec<OSite> = (0..ns)
        .map(|_| OSite {
            cpus: rng.random_range(1..=4),
            staging: if rng.random_bool(0.25) { rng.random_range(1..=3) } else { 0 },
            total: [Q::from(1), Q::new(1, 2), Q::new(3, 4), Q::new(1, 4)][rng.random_range(0..4)],
        })
        .collect();
    let vos = rng.random_range(1..=2);
    let mut statements = Vec::new();
    for s in 0..ns {
        for v in 0..vos {
            if rng.random_bool(0.9) {
                let burst_s = [1, 1, 2, 3, 5, 10][rng.random_range(0..6)];
                statements.push(OStatement {
                    site: s,
                    vo: v,
                    epoch_s: rng.random_range(burst_s..=30),
                    epoch: fraction(&mut rng),
                    burst_s,
                    burst: fraction(&mut rng),
                });
            }
        }
    }
    let largest = sites.iter().map(|s| s.cpus).max().unwrap_or(1);
    let jobs = (0..rng.random_range(1..=3))
        .map(|_| OJob {
            vo: rng.random_range(0..vos),
            submit: rng.random_range(0..=15),
            duration: rng.random_range(1..=12),
            cpus: rng.random_range(1..=largest),
        })
        .collect();
    let horizon = [20, 30, 40, 60][rng.random_range(0..4)];
    Instance {
        sites,
        vos,
        statements,
        jobs,
        kind,
        pick,
        horizon,
    }
}

pub fn policy_kind(kind: Kind) -> PolicyKind {
    match kind {
        Kind::NoLimit => PolicyKind::NoLimit,
        Kind::Fixed => PolicyKind::FixedLimit,
        Kind::Extensible => PolicyKind::ExtensibleLimit,
        Kind::Commitment => PolicyKind::CommitmentLimit,
    }
}

pub fn strategy_kind(pick: Pick) -> StrategyKind {
    match pick {
        Pick::RoundRobin => StrategyKind::RoundRobin,
        Pick::LeastUsed => StrategyKind::LeastUsed,
    }
}

fn scalar<S: Scalar>(q: Q) -> S {
    S::from_ratio(*q.numer(), *q.denom())
}

/// The instance as a simulator config with full auditing.
pub fn to_config<S: Scalar>(inst: &Instance) -> SimConfig<S> {
    let sites = inst
        .sites
        .iter()
        .enumerate()
        .map(|(i, s)| {
            SiteSpec::new(format!("S{i}"), s.cpus)
                .with_staging_delay(s.staging)
                .with_total_allocation(s.total)
        })
        .collect();
    let statements = inst
        .statements
        .iter()
        .map(|s| {
            UsagePolicyStatement::new(
                format!("S{}", s.site).as_str(),
                format!("V{}", s.vo).as_str(),
                LimitTuple::new(s.epoch_s, scalar(s.epoch)),
                LimitTuple::new(s.burst_s, scalar(s.burst)),
            )
            .expect("valid statement")
        })
        .collect();
    let jobs = inst
        .jobs
        .iter()
        .enumerate()
        .map(|(k, j)| JobSpec {
            job_id: JobId::new(format!("j{k}")),
            vo_id: VoId::new(format!("V{}", j.vo)),
            group_id: "g".into(),
            workload_id: "w".into(),
            submit_time_s: j.submit,
            duration_s: j.duration,
            cpus_required: j.cpus,
        })
        .collect();
    let mut config = SimConfig::new(
        sites,
        policy_kind(inst.kind),
        statements,
        strategy_kind(inst.pick),
        jobs,
    );
    config.horizon_s = inst.horizon;
    config.measurement_interval_s = 10;
    config.audit = AuditLevel::Full;
    config
}

fn index(prefix: char, id: &str) -> usize {
    id.strip_prefix(prefix).and_then(|s| s.parse().ok()).expect("generated id")
}

/// The simulator's run in the oracle's trace shape.
pub fn to_trace<S: Scalar>(result: &SimResult<S>) -> Trace {
    let events: Vec<Event> = result
        .audit
        .iter()
        .map(|e| {
            (
                e.tick,
                index('j', e.job_id.as_str()),
                index('S', e.site_id.as_str()),
                e.decision.label(),
                e.decision.reason().map_or("", |r| r.as_str()),
                e.selected,
            )
        })
        .collect();
    let mut completed = vec![None; result.jobs.len()];
    let mut started = vec![None; result.jobs.len()];
    for r in &result.jobs {
        let k = index('j', r.spec.job_id.as_str());
        completed[k] = r.t_completed;
        started[k] = r.t_started;
    }
    Trace {
        events,
        completed,
        started,
    }
}

/// Like [`small_instance`], shaped so one VO holds CPUs through its burst
/// window while the other arrives: the states where the summed burst usage
/// meets the site allocation.
pub fn contended_instance(seed: u64, kind: Kind, pick: Pick) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ns = rng.random_range(1..=2);
    let sites: Vec<OSite> = (0..ns)
        .map(|_| OSite {
            cpus: rng.random_range(2..=4),
            staging: 0,
            total: [Q::from(1), Q::new(1, 2), Q::new(3, 4), Q::new(1, 4)][rng.random_range(0..4)],
        })
        .collect();
    let mut statements = Vec::new();
    for s in 0..ns {
        for v in 0..2 {
            let burst_s = rng.random_range(1..=3);
            statements.push(OStatement {
                site: s,
                vo: v,
                epoch_s: rng.random_range(burst_s..=30),
                epoch: if v == 0 { fraction(&mut rng) } else { Q::new(rng.random_range(1..=4), 4) },
                burst_s,
                burst: if v == 0 { Q::new(rng.random_range(3..=4), 4) } else { fraction(&mut rng) },
            });
        }
    }
    let largest = sites.iter().map(|s| s.cpus).max().unwrap_or(1);
    let mut jobs = vec![OJob {
        vo: 0,
        submit: rng.random_range(0..=3),
        duration: rng.random_range(10..=30),
        cpus: rng.random_range(1..=largest),
    }];
    for _ in 0..rng.random_range(1..=2) {
        jobs.push(OJob {
            vo: 1,
            submit: rng.random_range(5..=20),
            duration: rng.random_range(1..=12),
            cpus: rng.random_range(1..=2),
        });
    }
    Instance {
        sites,
        vos: 2,
        statements,
        jobs,
        kind,
        pick,
        horizon: [40, 60][rng.random_range(0..2)],
    }
}

/// A random simulation with its exact epoch shares.
pub struct RandomConfig {
    pub config: SimConfig<f64>,
    /// Exact epoch share and interval by (site index, VO).
    pub shares: BTreeMap<(usize, VoId), (Q, u64)>,
}

/// Up to 5 sites, 4 VOs, and 200 jobs over 600 s, with randomized strategy,
/// planner mode, load metric, and audit level.
pub fn random_config(seed: u64, policy: PolicyKind) -> RandomConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ns = rng.random_range(1..=5);
    let nv = rng.random_range(1..=4);
    let sites: Vec<SiteSpec> = (0..ns)
        .map(|i| {
            SiteSpec::new(format!("S{i}"), rng.random_range(2..=24))
                .with_total_allocation([Q::from(1), Q::new(9, 10), Q::new(3, 4)][rng.random_range(0..3)])
        })
        .collect();
    let mut statements = Vec::new();
    let mut shares = BTreeMap::new();
    for s in 0..ns {
        for v in 0..nv {
            if rng.random_bool(0.1) {
                continue;
            }
            let epoch = Q::new(rng.random_range(0..=12), 20);
            let burst = Q::new(rng.random_range(0..=20), 20);
            let burst_s = [10, 30, 60][rng.random_range(0..3)];
            let epoch_s = [60, 120, 300, 600][rng.random_range(0..4)];
            let vo = VoId::new(format!("V{v}"));
            shares.insert((s, vo.clone()), (epoch, epoch_s));
            statements.push(
                UsagePolicyStatement::new(
                    format!("S{s}").as_str(),
                    vo,
                    LimitTuple::new(epoch_s, scalar::<f64>(epoch)),
                    LimitTuple::new(burst_s, scalar::<f64>(burst)),
                )
                .expect("valid"),
            );
        }
    }
    let largest = sites.iter().map(|s| s.cpu_count).max().unwrap_or(1).min(4);
    let jobs = (0..rng.random_range(30..=200))
        .map(|k| JobSpec {
            job_id: JobId::new(format!("j{k}")),
            vo_id: VoId::new(format!("V{}", rng.random_range(0..nv))),
            group_id: "g".into(),
            workload_id: "w".into(),
            submit_time_s: rng.random_range(0..=400),
            duration_s: rng.random_range(1..=90),
            cpus_required: rng.random_range(1..=largest),
        })
        .collect();
    let strategy = StrategyKind::ALL[rng.random_range(0..3)];
    let mut config = SimConfig::new(sites, policy, statements, strategy, jobs);
    config.horizon_s = 600;
    config.seed = seed;
    config.planner_mode = if rng.random_bool(0.5) { PlannerMode::AllQueued } else { PlannerMode::HeadOnly };
    config.load_metric = if rng.random_bool(0.5) { LoadMetric::Committed } else { LoadMetric::Running };
    config.audit = if rng.random_bool(0.5) { AuditLevel::Full } else { AuditLevel::Admissions };
    RandomConfig { config, shares }
}

/// Reference grid: 10 sites, 174 CPUs, 6 VOs.
pub fn reference_config_path() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/reference.json")
}
