//! Brute-force reference evaluator for small instances.
//!
//! Written against the admission definitions directly: no ledger, no site
//! tallies. Usage windows are summed from the full per-tick history, and every
//! CPU count is recomputed from the job table whenever it is needed. Arithmetic
//! is exact. Tick step is one second.

use num_rational::Rational64 as Q;
use num_traits::Zero;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    NoLimit,
    Fixed,
    Extensible,
    Commitment,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pick {
    RoundRobin,
    LeastUsed,
}

#[derive(Clone, Debug)]
pub struct OSite {
    pub cpus: u32,
    pub staging: u64,
    pub total: Q,
}

#[derive(Clone, Debug)]
pub struct OStatement {
    pub site: usize,
    pub vo: usize,
    pub epoch_s: u64,
    pub epoch: Q,
    pub burst_s: u64,
    pub burst: Q,
}

#[derive(Clone, Debug)]
pub struct OJob {
    pub vo: usize,
    pub submit: u64,
    pub duration: u64,
    pub cpus: u32,
}

#[derive(Clone, Debug)]
pub struct Instance {
    pub sites: Vec<OSite>,
    pub vos: usize,
    pub statements: Vec<OStatement>,
    pub jobs: Vec<OJob>,
    pub kind: Kind,
    pub pick: Pick,
    pub horizon: u64,
}

/// One admission evaluation: tick, job, site, decision label, reason, selected.
pub type Event = (u64, usize, usize, &'static str, &'static str, bool);

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub events: Vec<Event>,
    pub completed: Vec<Option<u64>>,
    pub started: Vec<Option<u64>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum St {
    Waiting,
    Planner,
    Staging { site: usize, ready: u64 },
    Queued { site: usize },
    Running { site: usize, since: u64 },
    Done,
}

fn site_of(s: St) -> Option<usize> {
    match s {
        St::Staging { site, .. } | St::Queued { site } | St::Running { site, .. } => Some(site),
        _ => None,
    }
}

pub fn evaluate(inst: &Instance) -> Trace {
    let n = inst.jobs.len();
    let ns = inst.sites.len();
    let mut st = vec![St::Waiting; n];
    let mut started = vec![None; n];
    let mut completed = vec![None; n];
    // history[site][vo][tick] = running CPUs recorded at that tick.
    let mut history = vec![vec![Vec::<u32>::new(); inst.vos]; ns];
    // Site FIFOs and planner FIFOs as job index lists.
    let mut fifo: Vec<Vec<usize>> = vec![Vec::new(); ns];
    let mut staging_order: Vec<Vec<usize>> = vec![Vec::new(); ns];
    let mut planner: Vec<Vec<usize>> = vec![Vec::new(); inst.vos];
    let mut cursor = vec![0usize; inst.vos];
    let mut events = Vec::new();

    let running = |st: &[St], site: usize, vo: Option<usize>| -> u32 {
        (0..n)
            .filter(|&j| matches!(st[j], St::Running { site: s, .. } if s == site))
            .filter(|&j| vo.is_none_or(|v| inst.jobs[j].vo == v))
            .map(|j| inst.jobs[j].cpus)
            .sum()
    };
    let committed = |st: &[St], site: usize, vo: Option<usize>| -> u32 {
        (0..n)
            .filter(|&j| site_of(st[j]) == Some(site))
            .filter(|&j| vo.is_none_or(|v| inst.jobs[j].vo == v))
            .map(|j| inst.jobs[j].cpus)
            .sum()
    };

    let mut complete = |st: &mut Vec<St>, t: u64| {
        for j in 0..n {
            if let St::Running { since, .. } = st[j] {
                if since + inst.jobs[j].duration <= t {
                    st[j] = St::Done;
                    completed[j] = Some(t);
                }
            }
        }
    };

    for t in 0..inst.horizon {
        complete(&mut st, t);

        for s in 0..ns {
            let ready: Vec<usize> = staging_order[s]
                .iter()
                .copied()
                .filter(|&j| matches!(st[j], St::Staging { ready, .. } if ready <= t))
                .collect();
            for j in ready {
                staging_order[s].retain(|&x| x != j);
                st[j] = St::Queued { site: s };
                fifo[s].push(j);
            }
        }

        for s in 0..ns {
            while let Some(&head) = fifo[s].first() {
                let idle = inst.sites[s].cpus - running(&st, s, None);
                if inst.jobs[head].cpus > idle {
                    break;
                }
                fifo[s].remove(0);
                st[head] = St::Running { site: s, since: t };
                started[head] = Some(t);
            }
        }

        for s in 0..ns {
            for v in 0..inst.vos {
                let r = running(&st, s, Some(v));
                history[s][v].push(r);
            }
        }

        let mut arrivals: Vec<usize> = (0..n)
            .filter(|&j| st[j] == St::Waiting && inst.jobs[j].submit <= t)
            .collect();
        arrivals.sort_by_key(|&j| (inst.jobs[j].submit, j));
        for j in arrivals {
            st[j] = St::Planner;
            planner[inst.jobs[j].vo].push(j);
        }

        for v in 0..inst.vos {
            let queue = std::mem::take(&mut planner[v]);
            for j in queue {
                let job = &inst.jobs[j];
                let decisions: Vec<(&'static str, &'static str)> =
                    (0..ns).map(|s| decide(inst, &history, &st, s, job, t, committed)).collect();
                let admitted: Vec<usize> =
                    (0..ns).filter(|&s| decisions[s].0 != "reject").collect();
                let chosen = if admitted.is_empty() {
                    None
                } else {
                    Some(match inst.pick {
                        Pick::RoundRobin => {
                            let c = admitted
                                .iter()
                                .copied()
                                .find(|&s| s >= cursor[v])
                                .unwrap_or(admitted[0]);
                            cursor[v] = (c + 1) % ns;
                            c
                        }
                        Pick::LeastUsed => {
                            let load = |s: usize| {
                                Q::new(
                                    i64::from(committed(&st, s, None)),
                                    i64::from(inst.sites[s].cpus),
                                )
                            };
                            let mut best = admitted[0];
                            for &s in &admitted[1..] {
                                if load(s) < load(best) {
                                    best = s;
                                }
                            }
                            best
                        }
                    })
                };
                for (s, &(d, r)) in decisions.iter().enumerate() {
                    events.push((t, j, s, d, r, chosen == Some(s)));
                }
                match chosen {
                    None => planner[v].push(j),
                    Some(s) => {
                        let delay = inst.sites[s].staging;
                        if delay == 0 {
                            st[j] = St::Queued { site: s };
                            fifo[s].push(j);
                        } else {
                            st[j] = St::Staging { site: s, ready: t + delay };
                            staging_order[s].push(j);
                        }
                    }
                }
            }
        }
    }
    complete(&mut st, inst.horizon);

    Trace {
        events,
        completed,
        started,
    }
}

/// Usage fraction of `vo` at `site` over `[t - w, t)`, history before 0 counting as idle.
fn window(inst: &Instance, history: &[Vec<Vec<u32>>], site: usize, vo: usize, w: u64, t: u64) -> Q {
    let from = t.saturating_sub(w);
    let sum: u64 = (from..t).map(|u| u64::from(history[site][vo][u as usize])).sum();
    Q::new(sum as i64, (w * u64::from(inst.sites[site].cpus)) as i64)
}

fn decide(
    inst: &Instance,
    history: &[Vec<Vec<u32>>],
    st: &[St],
    site: usize,
    job: &OJob,
    t: u64,
    committed: impl Fn(&[St], usize, Option<usize>) -> u32,
) -> (&'static str, &'static str) {
    if inst.kind == Kind::NoLimit {
        return ("run", "");
    }
    let Some(stmt) = inst
        .statements
        .iter()
        .find(|s| s.site == site && s.vo == job.vo)
    else {
        return ("reject", "fallthrough");
    };
    let cpus = inst.sites[site].cpus;
    let mine = committed(st, site, Some(job.vo));
    let fits_share =
        Q::from(i64::from(mine + job.cpus)) <= stmt.epoch * Q::from(i64::from(cpus));
    match inst.kind {
        Kind::NoLimit => unreachable!(),
        Kind::Fixed => {
            if fits_share {
                ("run", "")
            } else {
                ("reject", "fixed-limit-exceeded")
            }
        }
        Kind::Extensible => {
            let free = cpus.saturating_sub(committed(st, site, None));
            if fits_share || job.cpus <= free {
                ("run", "")
            } else {
                ("reject", "no-capacity")
            }
        }
        Kind::Commitment => {
            let ea = window(inst, history, site, job.vo, stmt.epoch_s, t);
            let ba = window(inst, history, site, job.vo, stmt.burst_s, t);
            let sum: Q = inst
                .statements
                .iter()
                .filter(|s| s.site == site)
                .map(|s| window(inst, history, site, s.vo, s.burst_s, t))
                .fold(Q::zero(), |a, b| a + b);
            let j = Q::new(i64::from(job.cpus), i64::from(cpus));
            let total = inst.sites[site].total;
            if ea > stmt.epoch {
                return ("reject", "epoch-exceeded");
            }
            let under_burst = ba + j < stmt.burst;
            let idle = sum.is_zero();
            let room = sum + j < total;
            if idle && under_burst {
                ("run", "")
            } else if room && under_burst {
                ("run", "")
            } else if sum == total && ba + j < stmt.epoch {
                ("queue", "")
            } else if idle || room {
                ("reject", "burst-exceeded")
            } else {
                ("reject", "fallthrough")
            }
        }
    }
}
