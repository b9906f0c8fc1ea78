//! CSV views of a [`SimResult`].

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use crate::output::write_atomic;
use crate::scalar::Scalar;
use crate::sim::engine::SimResult;

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

fn frac<S: Scalar>(v: Option<S>) -> String {
    v.map_or(String::new(), |x| format!("{:.6}", x.to_f64()))
}

impl<S: Scalar> SimResult<S> {
    /// `tick,job_id,vo,site,decision,reason,EA,BA,C,free`
    pub fn audit_csv(&self) -> String {
        let mut out = String::from("tick,job_id,vo,site,decision,reason,EA,BA,C,free\n");
        for e in &self.audit {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                e.tick,
                e.job_id,
                e.vo_id,
                e.site_id,
                e.decision.label(),
                e.decision.reason().map_or("", |r| r.as_str()),
                frac(e.snapshot.epoch_usage),
                frac(e.snapshot.burst_usage),
                e.snapshot.committed,
                e.snapshot.free,
            );
        }
        out
    }

    /// `interval_start_s,site,vo,cpu_seconds`
    pub fn usage_csv(&self) -> String {
        self.usage.to_csv()
    }

    /// `job_id,vo,site,submit,assigned,started,completed,rejections`
    pub fn jobs_csv(&self) -> String {
        let mut out = String::from("job_id,vo,site,submit,assigned,started,completed,rejections\n");
        for r in &self.jobs {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.spec.job_id,
                r.spec.vo_id,
                opt(r.assigned_site.as_ref()),
                opt(r.t_submitted),
                opt(r.t_assigned),
                opt(r.t_started),
                opt(r.t_completed),
                r.rejection_count,
            );
        }
        out
    }

    /// Writes `audit.csv`, `usage.csv`, and `jobs.csv` under `dir`.
    pub fn write_csvs(&self, dir: &Path) -> io::Result<Vec<PathBuf>> {
        let files = [
            ("audit.csv", self.audit_csv()),
            ("usage.csv", self.usage_csv()),
            ("jobs.csv", self.jobs_csv()),
        ];
        let mut written = Vec::new();
        for (name, body) in files {
            let path = dir.join(name);
            write_atomic(&path, body.as_bytes())?;
            written.push(path);
        }
        Ok(written)
    }
}
