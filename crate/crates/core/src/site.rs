//! Site capacity and occupancy.

use std::collections::{BTreeMap, VecDeque};

use num_rational::Rational64;

use crate::ids::{JobId, SiteId, VoId};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SiteSpec {
    pub site_id: SiteId,
    pub cpu_count: u32,
    pub staging_delay_s: u64,
    /// Upper allocation fraction available to all VOs combined (TOTAL).
    pub total_allocation: Rational64,
}

impl SiteSpec {
    pub fn new(site_id: impl Into<SiteId>, cpu_count: u32) -> Self {
        Self {
            site_id: site_id.into(),
            cpu_count,
            staging_delay_s: 0,
            total_allocation: Rational64::from_integer(1),
        }
    }

    pub fn with_staging_delay(mut self, staging_delay_s: u64) -> Self {
        self.staging_delay_s = staging_delay_s;
        self
    }

    pub fn with_total_allocation(mut self, total: Rational64) -> Self {
        self.total_allocation = total;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunningJob {
    pub job_id: JobId,
    pub vo_id: VoId,
    pub cpus: u32,
    pub remaining_s: i64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueuedJob {
    pub job_id: JobId,
    pub vo_id: VoId,
    pub cpus: u32,
    pub duration_s: u64,
}

/// Live state of one site.
///
/// Jobs are *committed* to a site from the moment they are assigned until they
/// complete, covering staging, the FIFO wait queue, and execution. Admission
/// reads committed CPUs; the usage ledger reads running CPUs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SiteState {
    pub spec: SiteSpec,
    pub running: Vec<RunningJob>,
    pub wait_queue: VecDeque<QueuedJob>,
    running_by_vo: BTreeMap<VoId, u32>,
    committed_by_vo: BTreeMap<VoId, u32>,
    running_total: u32,
    committed_total: u32,
}

impl SiteState {
    pub fn new(spec: SiteSpec) -> Self {
        Self {
            spec,
            running: Vec::new(),
            wait_queue: VecDeque::new(),
            running_by_vo: BTreeMap::new(),
            committed_by_vo: BTreeMap::new(),
            running_total: 0,
            committed_total: 0,
        }
    }

    pub fn site_id(&self) -> &SiteId {
        &self.spec.site_id
    }

    pub fn cpu_count(&self) -> u32 {
        self.spec.cpu_count
    }

    pub fn running_cpus(&self, vo: &VoId) -> u32 {
        self.running_by_vo.get(vo).copied().unwrap_or(0)
    }

    pub fn running_total(&self) -> u32 {
        self.running_total
    }

    /// CPUs held by `vo` jobs assigned here and not yet complete.
    pub fn committed_cpus(&self, vo: &VoId) -> u32 {
        self.committed_by_vo.get(vo).copied().unwrap_or(0)
    }

    pub fn committed_total(&self) -> u32 {
        self.committed_total
    }

    /// CPUs not claimed by any committed job.
    pub fn free_cpus(&self) -> u32 {
        self.spec.cpu_count.saturating_sub(self.committed_total)
    }

    /// CPUs not occupied by running jobs.
    pub fn idle_cpus(&self) -> u32 {
        self.spec.cpu_count - self.running_total
    }

    /// Records an assignment. The job enters the wait queue later via [`enqueue`](Self::enqueue).
    pub fn commit(&mut self, vo: &VoId, cpus: u32) {
        *self.committed_by_vo.entry(vo.clone()).or_default() += cpus;
        self.committed_total += cpus;
    }

    pub fn enqueue(&mut self, job: QueuedJob) {
        self.wait_queue.push_back(job);
    }

    /// Pops FIFO entries while the head fits into idle CPUs. Returns the started jobs.
    pub fn start_ready(&mut self) -> Vec<JobId> {
        let mut started = Vec::new();
        while let Some(head) = self.wait_queue.front() {
            if head.cpus > self.idle_cpus() {
                break;
            }
            let job = self.wait_queue.pop_front().expect("non-empty");
            *self.running_by_vo.entry(job.vo_id.clone()).or_default() += job.cpus;
            self.running_total += job.cpus;
            started.push(job.job_id.clone());
            self.running.push(RunningJob {
                job_id: job.job_id,
                vo_id: job.vo_id,
                cpus: job.cpus,
                remaining_s: job.duration_s as i64,
            });
        }
        started
    }

    /// Removes running jobs with no remaining work, in start order. Returns their ids.
    pub fn complete_finished(&mut self) -> Vec<JobId> {
        let mut done = Vec::new();
        let mut kept = Vec::with_capacity(self.running.len());
        for job in self.running.drain(..) {
            if job.remaining_s <= 0 {
                done.push(job);
            } else {
                kept.push(job);
            }
        }
        self.running = kept;
        for job in &done {
            for map in [&mut self.running_by_vo, &mut self.committed_by_vo] {
                if let Some(n) = map.get_mut(&job.vo_id) {
                    *n -= job.cpus;
                }
            }
            self.running_total -= job.cpus;
            self.committed_total -= job.cpus;
        }
        done.into_iter().map(|j| j.job_id).collect()
    }

    /// Advances every running job by one tick. Returns CPU-seconds consumed per VO.
    pub fn advance(&mut self, tick_step_s: u64) -> Vec<(VoId, u64)> {
        let mut used: BTreeMap<VoId, u64> = BTreeMap::new();
        for job in &mut self.running {
            job.remaining_s -= tick_step_s as i64;
            *used.entry(job.vo_id.clone()).or_default() += u64::from(job.cpus) * tick_step_s;
        }
        used.into_iter().collect()
    }

    /// Running-CPU tallies, including VOs that currently hold nothing but have held something.
    pub fn running_by_vo(&self) -> impl Iterator<Item = (&VoId, u32)> {
        self.running_by_vo.iter().map(|(v, &n)| (v, n))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn queued(id: &str, vo: &str, cpus: u32, dur: u64) -> QueuedJob {
        QueuedJob {
            job_id: JobId::from(id),
            vo_id: VoId::from(vo),
            cpus,
            duration_s: dur,
        }
    }

    #[test]
    fn fifo_head_of_line_blocks() {
        let mut s = SiteState::new(SiteSpec::new("S", 4));
        for (id, cpus) in [("a", 3), ("b", 2), ("c", 1)] {
            s.commit(&VoId::from("V"), cpus);
            s.enqueue(queued(id, "V", cpus, 2));
        }
        assert_eq!(s.free_cpus(), 0);
        assert_eq!(s.start_ready(), vec![JobId::from("a")]);
        // b does not fit; c must wait behind it.
        assert_eq!(s.wait_queue.len(), 2);
        assert_eq!(s.idle_cpus(), 1);
        s.advance(1);
        s.advance(1);
        assert_eq!(s.complete_finished(), vec![JobId::from("a")]);
        assert_eq!(s.start_ready(), vec![JobId::from("b"), JobId::from("c")]);
        assert_eq!(s.running_cpus(&VoId::from("V")), 3);
        assert_eq!(s.committed_cpus(&VoId::from("V")), 3);
    }

    #[test]
    fn advance_reports_usage() {
        let mut s = SiteState::new(SiteSpec::new("S", 4));
        s.commit(&VoId::from("A"), 2);
        s.enqueue(queued("x", "A", 2, 5));
        s.start_ready();
        assert_eq!(s.advance(3), vec![(VoId::from("A"), 6)]);
    }
}
