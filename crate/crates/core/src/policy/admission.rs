//! Admission control under the four policy kinds.
//!
//! Instantaneous quantities (Cᵢ, J, free CPUs) are integer CPUs. Windowed
//! usage (EAᵢ, BAᵢ) and limits are fractions of site capacity; J becomes the
//! fraction `J / site_cpus` only inside commitment checks.

use std::fmt;
use std::str::FromStr;


use crate::ids::{SiteId, VoId};
use crate::policy::ledger::{LedgerError, UsageView};
use crate::policy::statement::UsagePolicyStatement;
use crate::scalar::Scalar;
use crate::site::{SiteSpec, SiteState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PolicyKind {
    NoLimit,
    FixedLimit,
    ExtensibleLimit,
    CommitmentLimit,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::NoLimit,
        PolicyKind::FixedLimit,
        PolicyKind::ExtensibleLimit,
        PolicyKind::CommitmentLimit,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::NoLimit => "no-limit",
            PolicyKind::FixedLimit => "fixed",
            PolicyKind::ExtensibleLimit => "extensible",
            PolicyKind::CommitmentLimit => "commitment",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "no-limit" | "nolimit" | "none" => Ok(PolicyKind::NoLimit),
            "fixed" | "fixed-limit" => Ok(PolicyKind::FixedLimit),
            "extensible" | "extensible-limit" => Ok(PolicyKind::ExtensibleLimit),
            "commitment" | "commitment-limit" => Ok(PolicyKind::CommitmentLimit),
            other => Err(format!(
                "unknown policy `{other}` (expected no-limit, fixed, extensible or commitment)"
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RejectReason {
    EpochExceeded,
    BurstExceeded,
    FixedLimitExceeded,
    NoCapacity,
    Fallthrough,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::EpochExceeded => "epoch-exceeded",
            RejectReason::BurstExceeded => "burst-exceeded",
            RejectReason::FixedLimitExceeded => "fixed-limit-exceeded",
            RejectReason::NoCapacity => "no-capacity",
            RejectReason::Fallthrough => "fallthrough",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AdmissionDecision {
    /// Dispatch now, subject to free CPUs at the site.
    Run,
    /// Accepted; waits in the site queue.
    Queue,
    Reject(RejectReason),
}

impl AdmissionDecision {
    pub fn is_admitted(self) -> bool {
        !matches!(self, AdmissionDecision::Reject(_))
    }

    pub fn label(self) -> &'static str {
        match self {
            AdmissionDecision::Run => "run",
            AdmissionDecision::Queue => "queue",
            AdmissionDecision::Reject(_) => "reject",
        }
    }

    pub fn reason(self) -> Option<RejectReason> {
        match self {
            AdmissionDecision::Reject(r) => Some(r),
            _ => None,
        }
    }
}

/// Quantities an admission decision was based on, kept for the audit log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdmissionSnapshot<S> {
    pub epoch_usage: Option<S>,
    pub burst_usage: Option<S>,
    pub committed: u32,
    pub free: u32,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Admission<S> {
    pub decision: AdmissionDecision,
    pub snapshot: AdmissionSnapshot<S>,
}

fn total_allocation<S: Scalar>(spec: &SiteSpec) -> S {
    S::from_ratio(*spec.total_allocation.numer(), *spec.total_allocation.denom())
}

/// Rᵢ-limited admission: `Cᵢ + J ≤ Rᵢ · cpus`.
pub fn admit_fixed<S: Scalar>(
    stmt: &UsagePolicyStatement<S>,
    site: &SiteState,
    vo: &VoId,
    j_cpus: u32,
) -> AdmissionDecision {
    if within_share(stmt, site, vo, j_cpus) {
        AdmissionDecision::Run
    } else {
        AdmissionDecision::Reject(RejectReason::FixedLimitExceeded)
    }
}

fn within_share<S: Scalar>(
    stmt: &UsagePolicyStatement<S>,
    site: &SiteState,
    vo: &VoId,
    j_cpus: u32,
) -> bool {
    let limit = stmt.share() * S::from_ratio(i64::from(site.cpu_count()), 1);
    let wanted = S::from_ratio(i64::from(site.committed_cpus(vo) + j_cpus), 1);
    wanted.le_tol(limit)
}

/// Fixed-limit admission, extended to any job that fits into free CPUs.
pub fn admit_extensible<S: Scalar>(
    stmt: &UsagePolicyStatement<S>,
    site: &SiteState,
    vo: &VoId,
    j_cpus: u32,
) -> AdmissionDecision {
    if within_share(stmt, site, vo, j_cpus) || j_cpus <= site.free_cpus() {
        AdmissionDecision::Run
    } else {
        AdmissionDecision::Reject(RejectReason::NoCapacity)
    }
}

/// Epoch/burst admission.
///
/// Evaluated strictly in order:
///
/// 1. `EAᵢ > EPᵢ` rejects.
/// 2. `Σ BA = 0` and `BAᵢ + j < BPᵢ` runs.
/// 3. `Σ BA + j < TOTAL` and `BAᵢ + j < BPᵢ` runs.
/// 4. `Σ BA = TOTAL` and `BAᵢ + j < EPᵢ` queues.
///
/// Anything else rejects. `Σ` runs over every VO holding a statement at the site.
pub fn admit_commitment<S, U>(
    stmt: &UsagePolicyStatement<S>,
    site_statements: &[UsagePolicyStatement<S>],
    usage: &U,
    site: &SiteState,
    vo: &VoId,
    j_cpus: u32,
    now_tick: u64,
) -> Result<(AdmissionDecision, S, S), LedgerError>
where
    S: Scalar,
    U: UsageView<S> + ?Sized,
{
    let site_id = site.site_id();
    let cpus = site.cpu_count();
    let epoch_usage = usage.window_average(site_id, vo, stmt.epoch.interval_s, now_tick, cpus)?;
    let burst_usage = usage.window_average(site_id, vo, stmt.burst.interval_s, now_tick, cpus)?;
    let mut burst_sum = S::zero();
    for other in site_statements.iter().filter(|s| &s.site_id == site_id) {
        burst_sum = burst_sum
            + usage.window_average(site_id, &other.vo_id, other.burst.interval_s, now_tick, cpus)?;
    }
    let decision = commitment_cases(
        epoch_usage,
        burst_usage,
        burst_sum,
        stmt.epoch.fraction,
        stmt.burst.fraction,
        S::from_ratio(i64::from(j_cpus), i64::from(cpus)),
        total_allocation(&site.spec),
    );
    Ok((decision, epoch_usage, burst_usage))
}

/// The commitment case ladder over already-computed fractions.
pub fn commitment_cases<S: Scalar>(
    epoch_usage: S,
    burst_usage: S,
    burst_sum: S,
    epoch_limit: S,
    burst_limit: S,
    job_fraction: S,
    total: S,
) -> AdmissionDecision {
    if epoch_usage.definitely_gt(epoch_limit) {
        return AdmissionDecision::Reject(RejectReason::EpochExceeded);
    }
    let under_burst = (burst_usage + job_fraction).definitely_lt(burst_limit);
    let idle_site = burst_sum.approx_eq(S::zero());
    let sub_allocated = (burst_sum + job_fraction).definitely_lt(total);
    if idle_site && under_burst {
        return AdmissionDecision::Run;
    }
    if sub_allocated && under_burst {
        return AdmissionDecision::Run;
    }
    if burst_sum.approx_eq(total) && (burst_usage + job_fraction).definitely_lt(epoch_limit) {
        return AdmissionDecision::Queue;
    }
    if (idle_site || sub_allocated) && !under_burst {
        // Room at the site, but the VO is at its burst share.
        AdmissionDecision::Reject(RejectReason::BurstExceeded)
    } else {
        AdmissionDecision::Reject(RejectReason::Fallthrough)
    }
}

/// Decides whether `vo` may place a `j_cpus` job at `site`.
///
/// `site_statements` holds the statements in force at this site; a VO without
/// one has no entitlement under any limited kind. Never mutates its inputs.
pub fn admit<S, U>(
    kind: PolicyKind,
    site_statements: &[UsagePolicyStatement<S>],
    usage: &U,
    site: &SiteState,
    vo: &VoId,
    j_cpus: u32,
    now_tick: u64,
) -> Result<Admission<S>, LedgerError>
where
    S: Scalar,
    U: UsageView<S> + ?Sized,
{
    let mut snapshot = AdmissionSnapshot {
        epoch_usage: None,
        burst_usage: None,
        committed: site.committed_cpus(vo),
        free: site.free_cpus(),
    };
    if kind == PolicyKind::NoLimit {
        return Ok(Admission {
            decision: AdmissionDecision::Run,
            snapshot,
        });
    }
    let Some(stmt) = find_statement(site_statements, site.site_id(), vo) else {
        return Ok(Admission {
            decision: AdmissionDecision::Reject(RejectReason::Fallthrough),
            snapshot,
        });
    };
    let decision = match kind {
        PolicyKind::NoLimit => unreachable!(),
        PolicyKind::FixedLimit => admit_fixed(stmt, site, vo, j_cpus),
        PolicyKind::ExtensibleLimit => admit_extensible(stmt, site, vo, j_cpus),
        PolicyKind::CommitmentLimit => {
            let (decision, ea, ba) =
                admit_commitment(stmt, site_statements, usage, site, vo, j_cpus, now_tick)?;
            snapshot.epoch_usage = Some(ea);
            snapshot.burst_usage = Some(ba);
            decision
        }
    };
    Ok(Admission { decision, snapshot })
}

pub fn find_statement<'a, S>(
    statements: &'a [UsagePolicyStatement<S>],
    site: &SiteId,
    vo: &VoId,
) -> Option<&'a UsagePolicyStatement<S>> {
    statements
        .iter()
        .find(|s| &s.site_id == site && &s.vo_id == vo)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OversubscriptionKind {
    /// Epoch shares sum above 1.
    Epoch,
    /// Burst shares sum above 1. Informational; bursts are meant to overlap.
    Burst,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OversubscriptionWarning {
    pub site_id: SiteId,
    pub kind: OversubscriptionKind,
    pub total: f64,
}

impl fmt::Display for OversubscriptionWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.kind {
            OversubscriptionKind::Epoch => "epoch shares",
            OversubscriptionKind::Burst => "burst shares",
        };
        write!(
            f,
            "site {}: {what} sum to {:.1}% (> 100%)",
            self.site_id,
            self.total * 100.0
        )
    }
}

/// Flags sites whose shares sum above 100%.
pub fn check_oversubscription<S: Scalar>(
    statements: &[UsagePolicyStatement<S>],
    sites: &[SiteSpec],
) -> Vec<OversubscriptionWarning> {
    let mut out = Vec::new();
    for site in sites {
        let (mut epoch, mut burst) = (S::zero(), S::zero());
        for stmt in statements.iter().filter(|s| s.site_id == site.site_id) {
            epoch = epoch + stmt.epoch.fraction;
            burst = burst + stmt.burst.fraction;
        }
        for (kind, total) in [
            (OversubscriptionKind::Epoch, epoch),
            (OversubscriptionKind::Burst, burst),
        ] {
            if total.definitely_gt(S::one()) {
                out.push(OversubscriptionWarning {
                    site_id: site.site_id.clone(),
                    kind,
                    total: total.to_f64(),
                });
            }
        }
    }
    out
}
