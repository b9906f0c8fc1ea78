//! Aggregated resource utilization (ARU) and aggregated response time (ART).
//!
//! ARU is executed CPU-seconds over offered CPU-seconds for the whole horizon.
//! ART is the mean of `completed - submitted` over completed jobs; jobs still
//! unfinished at the horizon have no response time and are left out. ART is
//! reported in raw simulated seconds.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::assignment::StrategyKind;
use crate::ids::{SiteId, VoId};
use crate::policy::PolicyKind;
use crate::scalar::Scalar;
use crate::sim::{JobRecord, JobState};

/// CPU-seconds executed per (measurement interval, site, VO).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UsageMatrix {
    pub interval_s: u64,
    pub intervals: usize,
    pub sites: Vec<SiteId>,
    pub vos: Vec<VoId>,
    cells: Vec<u64>,
}

impl UsageMatrix {
    pub fn new(interval_s: u64, intervals: usize, sites: Vec<SiteId>, vos: Vec<VoId>) -> Self {
        let cells = vec![0; intervals * sites.len() * vos.len()];
        Self {
            interval_s,
            intervals,
            sites,
            vos,
            cells,
        }
    }

    fn index(&self, interval: usize, site: usize, vo: usize) -> usize {
        (interval * self.sites.len() + site) * self.vos.len() + vo
    }

    pub fn add(&mut self, interval: usize, site: usize, vo: usize, cpu_seconds: u64) {
        let i = self.index(interval, site, vo);
        self.cells[i] += cpu_seconds;
    }

    pub fn get(&self, interval: usize, site: usize, vo: usize) -> u64 {
        self.cells[self.index(interval, site, vo)]
    }

    pub fn total(&self) -> u64 {
        self.cells.iter().sum()
    }

    pub fn total_for_vo(&self, vo: usize) -> u64 {
        (0..self.intervals)
            .flat_map(|i| (0..self.sites.len()).map(move |s| (i, s)))
            .map(|(i, s)| self.get(i, s, vo))
            .sum()
    }

    pub fn total_for_site(&self, site: usize) -> u64 {
        (0..self.intervals)
            .flat_map(|i| (0..self.vos.len()).map(move |v| (i, v)))
            .map(|(i, v)| self.get(i, site, v))
            .sum()
    }

    pub fn interval_total(&self, interval: usize) -> u64 {
        let start = self.index(interval, 0, 0);
        let width = self.sites.len() * self.vos.len();
        self.cells[start..start + width].iter().sum()
    }

    /// Rows of `interval_start_s,site,vo,cpu_seconds`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("interval_start_s,site,vo,cpu_seconds\n");
        for i in 0..self.intervals {
            for (s, site) in self.sites.iter().enumerate() {
                for (v, vo) in self.vos.iter().enumerate() {
                    let _ = writeln!(
                        out,
                        "{},{site},{vo},{}",
                        i as u64 * self.interval_s,
                        self.get(i, s, v)
                    );
                }
            }
        }
        out
    }
}

pub fn compute_aru<S: Scalar>(usage: &UsageMatrix, total_cpus: u64, horizon_s: u64) -> S {
    assert!(total_cpus >= 1 && horizon_s > 0);
    aru_from_total(usage.total(), total_cpus, horizon_s)
}

pub fn aru_from_total<S: Scalar>(executed_cpu_s: u64, total_cpus: u64, horizon_s: u64) -> S {
    S::from_ratio(executed_cpu_s as i64, (total_cpus * horizon_s) as i64)
}

pub fn response_time_s(record: &JobRecord) -> Option<u64> {
    match (record.state, record.t_submitted, record.t_completed) {
        (JobState::Completed, Some(sub), Some(done)) => Some(done - sub),
        _ => None,
    }
}

/// Mean response time over completed jobs of `vo` (or every VO). `None` when no job is in scope.
pub fn compute_art<S: Scalar>(records: &[JobRecord], vo: Option<&VoId>) -> Option<S> {
    let (sum, n) = records
        .iter()
        .filter(|r| vo.is_none_or(|v| &r.spec.vo_id == v))
        .filter_map(response_time_s)
        .fold((0u64, 0u64), |(s, n), rt| (s + rt, n + 1));
    (n > 0).then(|| S::from_ratio(sum as i64, n as i64))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub aru: f64,
    pub aru_per_vo: BTreeMap<VoId, f64>,
    pub art_per_vo: BTreeMap<VoId, Option<f64>>,
    pub art_overall: Option<f64>,
    pub completed_per_vo: BTreeMap<VoId, u64>,
    pub completed: u64,
    pub incomplete_count: u64,
    /// Grid-wide utilization per measurement interval.
    pub usage_series: Vec<f64>,
}

impl MetricsReport {
    pub fn from_parts(
        records: &[JobRecord],
        usage: &UsageMatrix,
        total_cpus: u64,
        horizon_s: u64,
    ) -> Self {
        let mut aru_per_vo = BTreeMap::new();
        let mut art_per_vo = BTreeMap::new();
        let mut completed_per_vo = BTreeMap::new();
        for (v, vo) in usage.vos.iter().enumerate() {
            aru_per_vo.insert(
                vo.clone(),
                aru_from_total::<f64>(usage.total_for_vo(v), total_cpus, horizon_s),
            );
            art_per_vo.insert(vo.clone(), compute_art::<f64>(records, Some(vo)));
            let done = records
                .iter()
                .filter(|r| &r.spec.vo_id == vo && r.state == JobState::Completed)
                .count() as u64;
            completed_per_vo.insert(vo.clone(), done);
        }
        let completed = records
            .iter()
            .filter(|r| r.state == JobState::Completed)
            .count() as u64;
        let offered = (total_cpus * usage.interval_s) as f64;
        Self {
            aru: compute_aru(usage, total_cpus, horizon_s),
            aru_per_vo,
            art_per_vo,
            art_overall: compute_art(records, None),
            completed_per_vo,
            completed,
            incomplete_count: records.len() as u64 - completed,
            usage_series: (0..usage.intervals)
                .map(|i| usage.interval_total(i) as f64 / offered)
                .collect(),
        }
    }
}

/// Values reported in the published simulation tables, rows in
/// [`StrategyKind::ALL`] order and columns in [`PolicyKind::ALL`] order.
pub mod reference {
    pub const ARU_SYNC: [[f64; 4]; 3] = [
        [0.72, 0.75, 0.69, 0.78],
        [0.70, 0.65, 0.75, 0.77],
        [0.69, 0.80, 0.81, 0.79],
    ];
    pub const ART_SYNC: [[f64; 4]; 3] = [
        [10.64, 19.25, 12.83, 15.83],
        [11.09, 19.39, 11.32, 15.52],
        [13.25, 15.14, 15.06, 16.02],
    ];
    pub const ARU_UNSYNC: [[f64; 4]; 3] = [
        [0.70, 0.67, 0.70, 0.69],
        [0.69, 0.65, 0.71, 0.65],
        [0.69, 0.64, 0.72, 0.64],
    ];
    pub const ART_UNSYNC: [[f64; 4]; 3] = [
        [10.3, 12.59, 10.64, 13.35],
        [7.78, 14.82, 9.34, 12.35],
        [10.57, 13.68, 11.37, 12.59],
    ];

    /// `(aru, art)` for a cell, by sync label (`on`/`off`).
    pub fn lookup(sync: &str, row: usize, col: usize) -> Option<(f64, f64)> {
        match sync {
            "on" => Some((ARU_SYNC[row][col], ART_SYNC[row][col])),
            "off" => Some((ARU_UNSYNC[row][col], ART_UNSYNC[row][col])),
            _ => None,
        }
    }
}

/// One summarized cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellSummary {
    pub aru: f64,
    pub art: Option<f64>,
    pub completed: f64,
    pub incomplete: f64,
}

impl From<&MetricsReport> for CellSummary {
    fn from(r: &MetricsReport) -> Self {
        Self {
            aru: r.aru,
            art: r.art_overall,
            completed: r.completed as f64,
            incomplete: r.incomplete_count as f64,
        }
    }
}

impl CellSummary {
    /// Mean over seeds. Seeds without an ART are left out of that mean.
    pub fn mean<'a>(cells: impl IntoIterator<Item = &'a CellSummary>) -> Option<CellSummary> {
        let cells: Vec<&CellSummary> = cells.into_iter().collect();
        if cells.is_empty() {
            return None;
        }
        let n = cells.len() as f64;
        let arts: Vec<f64> = cells.iter().filter_map(|c| c.art).collect();
        Some(CellSummary {
            aru: cells.iter().map(|c| c.aru).sum::<f64>() / n,
            art: (!arts.is_empty()).then(|| arts.iter().sum::<f64>() / arts.len() as f64),
            completed: cells.iter().map(|c| c.completed).sum::<f64>() / n,
            incomplete: cells.iter().map(|c| c.incomplete).sum::<f64>() / n,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("no results; missing cells: {}", missing.join(", "))]
pub struct SummaryError {
    pub missing: Vec<String>,
}

/// Strategy × policy grid for one sync mode.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultMatrix {
    pub sync: String,
    pub cells: [[Option<CellSummary>; 4]; 3],
}

const HOLE: &str = "n/a";

fn cell_name(strategy: StrategyKind, policy: PolicyKind) -> String {
    format!("{strategy}/{policy}")
}

fn fmt_count(x: f64) -> String {
    if x.fract() == 0.0 {
        format!("{x:.0}")
    } else {
        format!("{x:.2}")
    }
}

/// Lays out results in table order. Missing cells become holes; an empty map is an error.
pub fn summarize(
    sync: &str,
    results: &BTreeMap<(StrategyKind, PolicyKind), CellSummary>,
) -> Result<ResultMatrix, SummaryError> {
    if results.is_empty() {
        let missing = StrategyKind::ALL
            .iter()
            .flat_map(|&s| PolicyKind::ALL.iter().map(move |&p| cell_name(s, p)))
            .collect();
        return Err(SummaryError { missing });
    }
    let mut cells = [[None; 4]; 3];
    for (r, &strategy) in StrategyKind::ALL.iter().enumerate() {
        for (c, &policy) in PolicyKind::ALL.iter().enumerate() {
            cells[r][c] = results.get(&(strategy, policy)).copied();
        }
    }
    Ok(ResultMatrix {
        sync: sync.to_owned(),
        cells,
    })
}

impl ResultMatrix {
    pub fn missing(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (r, &strategy) in StrategyKind::ALL.iter().enumerate() {
            for (c, &policy) in PolicyKind::ALL.iter().enumerate() {
                if self.cells[r][c].is_none() {
                    out.push(cell_name(strategy, policy));
                }
            }
        }
        out
    }

    pub fn get(&self, strategy: StrategyKind, policy: PolicyKind) -> Option<CellSummary> {
        let r = StrategyKind::ALL.iter().position(|&s| s == strategy)?;
        let c = PolicyKind::ALL.iter().position(|&p| p == policy)?;
        self.cells[r][c]
    }

    pub fn csv_header(compare_paper: bool) -> String {
        let mut h = String::from("sync,strategy,policy,aru,art_s,completed,incomplete");
        if compare_paper {
            h.push_str(",reference_aru,reference_art");
        }
        h.push('\n');
        h
    }

    /// CSV rows (no header).
    pub fn csv_rows(&self, compare_paper: bool) -> String {
        let mut out = String::new();
        for (r, &strategy) in StrategyKind::ALL.iter().enumerate() {
            for (c, &policy) in PolicyKind::ALL.iter().enumerate() {
                let mut row = match self.cells[r][c] {
                    Some(cell) => format!(
                        "{},{strategy},{policy},{:.6},{},{},{}",
                        self.sync,
                        cell.aru,
                        cell.art.map_or(String::new(), |a| format!("{a:.6}")),
                        fmt_count(cell.completed),
                        fmt_count(cell.incomplete),
                    ),
                    None => format!("{},{strategy},{policy},{HOLE},{HOLE},{HOLE},{HOLE}", self.sync),
                };
                if compare_paper {
                    match reference::lookup(&self.sync, r, c) {
                        Some((aru, art)) => {
                            let _ = write!(row, ",{aru:.2},{art:.2}");
                        }
                        None => row.push_str(",,"),
                    }
                }
                out.push_str(&row);
                out.push('\n');
            }
        }
        out
    }

    pub fn to_csv(&self, compare_paper: bool) -> String {
        Self::csv_header(compare_paper) + &self.csv_rows(compare_paper)
    }

    /// Human table for one metric (`aru` or `art`), values to two decimals.
    pub fn table(&self, metric: Metric, compare_paper: bool) -> String {
        let title = match (metric, self.sync.as_str()) {
            (Metric::Aru, "on") => "ARU, synchronized".to_owned(),
            (Metric::Art, "on") => "ART, synchronized".to_owned(),
            (Metric::Aru, "off") => "ARU, un-synchronized".to_owned(),
            (Metric::Art, "off") => "ART, un-synchronized".to_owned(),
            (m, s) => format!("{m:?}, sync={s}"),
        };
        let mut out = format!("{title}\n{:<14}", "Policy/UP");
        for head in ["No-limit", "Fix-limit", "Ext-limit", "Cm-limit"] {
            let _ = write!(out, "{head:>18}");
        }
        out.push('\n');
        for (r, label) in ["Random", "Round Robin", "Least Used"].iter().enumerate() {
            let _ = write!(out, "{label:<14}");
            for c in 0..4 {
                let value = self.cells[r][c].and_then(|cell| match metric {
                    Metric::Aru => Some(cell.aru),
                    Metric::Art => cell.art,
                });
                let mut text = value.map_or(HOLE.to_owned(), |v| format!("{v:.2}"));
                if compare_paper {
                    if let Some((aru, art)) = reference::lookup(&self.sync, r, c) {
                        let published = match metric {
                            Metric::Aru => aru,
                            Metric::Art => art,
                        };
                        text = format!("{text} ({published:.2})");
                    }
                }
                let _ = write!(out, "{text:>18}");
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Aru,
    Art,
}
