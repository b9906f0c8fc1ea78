//! Per-(site, VO) usage history with sliding-window averages.
//!
//! Each series stores one sample per tick together with a running cumulative
//! sum, so a window average is two binary searches and one division. Usage
//! before the first sample counts as zero.

use std::collections::{BTreeMap, VecDeque};

use thiserror::Error;

use crate::ids::{SiteId, VoId};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("tick {got} for ({site}, {vo}) is not after the last recorded tick {last}")]
    NonMonotoneTick {
        site: SiteId,
        vo: VoId,
        last: u64,
        got: u64,
    },
    #[error("{cpus} CPUs recorded for ({site}, {vo}) exceed site capacity {capacity}")]
    CapacityExceeded {
        site: SiteId,
        vo: VoId,
        cpus: u32,
        capacity: u32,
    },
    #[error("site {0} is not registered with the ledger")]
    UnknownSite(SiteId),
    #[error("window of {window_s}s exceeds ledger retention of {retention_s}s")]
    WindowExceedsRetention { window_s: u64, retention_s: u64 },
    #[error("window of {window_s}s is not a positive multiple of the {tick_step_s}s tick")]
    InvalidWindow { window_s: u64, tick_step_s: u64 },
    #[error("site capacity must be at least one CPU")]
    ZeroCapacity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Sample {
    tick: u64,
    cpus: u32,
    /// Sum of `cpus` over every sample up to and including this one.
    cumulative: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct Series {
    samples: VecDeque<Sample>,
    /// Cumulative sum of evicted samples.
    evicted_sum: u64,
    /// Highest evicted tick, if any.
    evicted_through: Option<u64>,
    last_tick: Option<u64>,
}

impl Series {
    fn total(&self) -> u64 {
        self.samples
            .back()
            .map_or(self.evicted_sum, |s| s.cumulative)
    }

    /// Sum of samples with `tick < bound`.
    fn sum_before(&self, bound: i64) -> u64 {
        let idx = self
            .samples
            .partition_point(|s| (s.tick as i64) < bound);
        if idx == 0 {
            self.evicted_sum
        } else {
            self.samples[idx - 1].cumulative
        }
    }
}

/// Anything that can answer windowed-usage queries for admission control.
pub trait UsageView<S> {
    /// Average fraction of `site_cpus` used by `vo` at `site` over the window
    /// `[now_tick - window, now_tick)`.
    fn window_average(
        &self,
        site: &SiteId,
        vo: &VoId,
        window_s: u64,
        now_tick: u64,
        site_cpus: u32,
    ) -> Result<S, LedgerError>;
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UsageLedger {
    tick_step_s: u64,
    retention_s: u64,
    capacities: BTreeMap<SiteId, u32>,
    series: BTreeMap<(SiteId, VoId), Series>,
}

impl UsageLedger {
    pub fn new(tick_step_s: u64, retention_s: u64) -> Self {
        assert!(tick_step_s > 0, "tick step must be positive");
        Self {
            tick_step_s,
            retention_s,
            capacities: BTreeMap::new(),
            series: BTreeMap::new(),
        }
    }

    pub fn tick_step_s(&self) -> u64 {
        self.tick_step_s
    }

    pub fn retention_s(&self) -> u64 {
        self.retention_s
    }

    pub fn register_site(&mut self, site: SiteId, cpus: u32) -> Result<(), LedgerError> {
        if cpus == 0 {
            return Err(LedgerError::ZeroCapacity);
        }
        self.capacities.insert(site, cpus);
        Ok(())
    }

    fn retention_ticks(&self) -> u64 {
        self.retention_s.div_ceil(self.tick_step_s)
    }

    pub fn record_tick(
        &mut self,
        site: &SiteId,
        vo: &VoId,
        cpus: u32,
        tick: u64,
    ) -> Result<(), LedgerError> {
        let capacity = *self
            .capacities
            .get(site)
            .ok_or_else(|| LedgerError::UnknownSite(site.clone()))?;
        if cpus > capacity {
            return Err(LedgerError::CapacityExceeded {
                site: site.clone(),
                vo: vo.clone(),
                cpus,
                capacity,
            });
        }
        let retention_ticks = self.retention_ticks();
        let series = self.series.entry((site.clone(), vo.clone())).or_default();
        if let Some(last) = series.last_tick {
            if tick <= last {
                return Err(LedgerError::NonMonotoneTick {
                    site: site.clone(),
                    vo: vo.clone(),
                    last,
                    got: tick,
                });
            }
        }
        let cumulative = series.total() + u64::from(cpus);
        series.samples.push_back(Sample {
            tick,
            cpus,
            cumulative,
        });
        series.last_tick = Some(tick);

        // Windows are queried after the current tick is recorded, so a window
        // ending at `tick` must still reach back `retention_ticks` samples.
        let keep_from = tick.saturating_sub(retention_ticks);
        while let Some(front) = series.samples.front() {
            if front.tick >= keep_from {
                break;
            }
            series.evicted_sum = front.cumulative;
            series.evicted_through = Some(front.tick);
            series.samples.pop_front();
        }
        Ok(())
    }

    /// Number of retained samples for `(site, vo)`.
    pub fn retained(&self, site: &SiteId, vo: &VoId) -> usize {
        self.series
            .get(&(site.clone(), vo.clone()))
            .map_or(0, |s| s.samples.len())
    }

    /// Last recorded CPU count for `(site, vo)`.
    pub fn latest(&self, site: &SiteId, vo: &VoId) -> Option<(u64, u32)> {
        self.series
            .get(&(site.clone(), vo.clone()))
            .and_then(|s| s.samples.back())
            .map(|s| (s.tick, s.cpus))
    }

    /// Sum of recorded CPU counts over the window, in CPU-ticks.
    pub fn window_sum(
        &self,
        site: &SiteId,
        vo: &VoId,
        window_s: u64,
        now_tick: u64,
    ) -> Result<u64, LedgerError> {
        if window_s == 0 || window_s % self.tick_step_s != 0 {
            return Err(LedgerError::InvalidWindow {
                window_s,
                tick_step_s: self.tick_step_s,
            });
        }
        if window_s > self.retention_s {
            return Err(LedgerError::WindowExceedsRetention {
                window_s,
                retention_s: self.retention_s,
            });
        }
        let Some(series) = self.series.get(&(site.clone(), vo.clone())) else {
            return Ok(0);
        };
        let window_ticks = (window_s / self.tick_step_s) as i64;
        let start = now_tick as i64 - window_ticks;
        if let Some(evicted) = series.evicted_through {
            if start <= evicted as i64 {
                return Err(LedgerError::WindowExceedsRetention {
                    window_s,
                    retention_s: self.retention_s,
                });
            }
        }
        Ok(series.sum_before(now_tick as i64) - series.sum_before(start))
    }
}

impl<S: Scalar> UsageView<S> for UsageLedger {
    fn window_average(
        &self,
        site: &SiteId,
        vo: &VoId,
        window_s: u64,
        now_tick: u64,
        site_cpus: u32,
    ) -> Result<S, LedgerError> {
        if site_cpus == 0 {
            return Err(LedgerError::ZeroCapacity);
        }
        let sum = self.window_sum(site, vo, window_s, now_tick)?;
        let window_ticks = window_s / self.tick_step_s;
        Ok(S::from_ratio(
            sum as i64,
            window_ticks as i64 * i64::from(site_cpus),
        ))
    }
}

#[cfg(test)]
mod tests {
    use num_rational::Rational64;

    use super::*;

    fn ledger(retention: u64) -> (UsageLedger, SiteId, VoId) {
        let mut l = UsageLedger::new(1, retention);
        let s = SiteId::from("S1");
        l.register_site(s.clone(), 10).unwrap();
        (l, s, VoId::from("V0"))
    }

    #[test]
    fn single_sample_elapsed_portion() {
        let (mut l, s, v) = ledger(100);
        l.record_tick(&s, &v, 3, 0).unwrap();
        let avg: Rational64 = l.window_average(&s, &v, 10, 1, 10).unwrap();
        assert_eq!(avg, Rational64::new(3, 100));
        let avg: Rational64 = l.window_average(&s, &v, 1, 1, 10).unwrap();
        assert_eq!(avg, Rational64::new(3, 10));
        // The sample at the query tick itself is not yet elapsed.
        let avg: Rational64 = l.window_average(&s, &v, 1, 0, 10).unwrap();
        assert_eq!(avg, Rational64::new(0, 1));
    }

    #[test]
    fn rejects_non_monotone_and_over_capacity() {
        let (mut l, s, v) = ledger(100);
        l.record_tick(&s, &v, 3, 5).unwrap();
        assert!(matches!(
            l.record_tick(&s, &v, 3, 5),
            Err(LedgerError::NonMonotoneTick { last: 5, got: 5, .. })
        ));
        assert!(matches!(
            l.record_tick(&s, &v, 11, 6),
            Err(LedgerError::CapacityExceeded { .. })
        ));
        assert!(matches!(
            l.record_tick(&SiteId::from("nope"), &v, 1, 7),
            Err(LedgerError::UnknownSite(_))
        ));
    }

    #[test]
    fn constant_signal() {
        let (mut l, s, v) = ledger(100);
        for t in 0..100 {
            l.record_tick(&s, &v, 4, t).unwrap();
        }
        for w in [1, 7, 50, 100] {
            let avg: f64 = l.window_average(&s, &v, w, 100, 10).unwrap();
            assert_eq!(avg, 0.4);
        }
    }

    #[test]
    fn empty_and_half_window() {
        let (mut l, s, v) = ledger(100);
        let avg: f64 = l.window_average(&s, &v, 60, 30, 10).unwrap();
        assert_eq!(avg, 0.0);
        let mut history = Vec::new();
        for t in 0..20 {
            let cpus = if t < 10 { 10 } else { 0 };
            l.record_tick(&s, &v, cpus, t).unwrap();
            history.push(cpus);
        }
        // direct summation over the tick list
        let oracle: u32 = history[0..20].iter().sum();
        let expected = Rational64::new(i64::from(oracle), 20 * 10);
        assert_eq!(expected, Rational64::new(1, 2));
        let avg: Rational64 = l.window_average(&s, &v, 20, 20, 10).unwrap();
        assert_eq!(avg, expected);
    }

    #[test]
    fn retention_bounds_windows() {
        let (mut l, s, v) = ledger(10);
        for t in 0..50 {
            l.record_tick(&s, &v, 2, t).unwrap();
        }
        assert_eq!(l.retained(&s, &v), 11);
        let avg: f64 = l.window_average(&s, &v, 10, 50, 10).unwrap();
        assert_eq!(avg, 0.2);
        // Same-tick query, after tick 49 was recorded.
        let avg: f64 = l.window_average(&s, &v, 10, 49, 10).unwrap();
        assert_eq!(avg, 0.2);
        assert!(matches!(
            UsageView::<f64>::window_average(&l, &s, &v, 11, 50, 10),
            Err(LedgerError::WindowExceedsRetention { .. })
        ));
        // A window reaching into evicted history is refused rather than miscounted.
        assert!(matches!(
            UsageView::<f64>::window_average(&l, &s, &v, 10, 30, 10),
            Err(LedgerError::WindowExceedsRetention { .. })
        ));
    }

    #[test]
    fn window_must_align_with_tick() {
        let mut l = UsageLedger::new(2, 100);
        let s = SiteId::from("S");
        l.register_site(s.clone(), 4).unwrap();
        assert!(matches!(
            UsageView::<f64>::window_average(&l, &s, &VoId::from("V"), 3, 10, 4),
            Err(LedgerError::InvalidWindow { .. })
        ));
    }
}
