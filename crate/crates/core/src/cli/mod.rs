//! Command-line front end: `validate`, `generate`, `run`, `sweep`.

pub mod config;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::assignment::StrategyKind;
use crate::metrics::{summarize, CellSummary, Metric, ResultMatrix};
use crate::output::write_atomic;
use crate::policy::{check_oversubscription, OversubscriptionKind, PolicyKind};
use crate::sim::{run, AuditLevel};
use crate::workload::{write_workload, JobSpec};

pub use config::{Experiment, LoadError, WorkloadSource};

/// Exit code for configuration and input problems.
pub const EXIT_CONFIG: i32 = 2;
/// Exit code for failures while running.
pub const EXIT_RUNTIME: i32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl From<LoadError> for CliError {
    fn from(e: LoadError) -> Self {
        CliError::Config(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "vosim", version, about = "Usage-policy grid scheduling simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a config and its policy file.
    Validate(CommonArgs),
    /// Write the generated workload as CSV.
    Generate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value = "on", value_parser = config::parse_sync, action = clap::ArgAction::Set)]
        sync: bool,
        /// Output file; defaults to `<out>/workload.csv`.
        #[arg(long)]
        file: Option<PathBuf>,
    },
    /// Run one cell.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        policy: Option<PolicyKind>,
        #[arg(long)]
        strategy: Option<StrategyKind>,
        #[arg(long, value_parser = config::parse_sync)]
        sync: Option<bool>,
        #[arg(long, value_parser = config::parse_audit)]
        audit: Option<AuditLevel>,
    },
    /// Run every strategy × policy cell for each sync mode and seed.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Inclusive range `N..M` or a comma list.
        #[arg(long, default_value = "1..10", value_parser = parse_seeds)]
        seeds: SeedList,
        /// Restrict to one sync mode.
        #[arg(long, value_parser = config::parse_sync)]
        sync: Option<bool>,
        /// Restrict to these policies (repeatable).
        #[arg(long)]
        policy: Vec<PolicyKind>,
        /// Restrict to these strategies (repeatable).
        #[arg(long)]
        strategy: Vec<StrategyKind>,
        #[arg(long)]
        compare_paper: bool,
        /// Worker threads; defaults to available parallelism.
        #[arg(long)]
        jobs: Option<usize>,
    },
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub horizon: Option<u64>,
    #[arg(long)]
    pub scale: Option<f64>,
    #[arg(long, env = "VOSIM_OUT", default_value = "out")]
    pub out: PathBuf,
}

/// Distinct seeds in the order given.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeedList(pub Vec<u64>);

/// Parses `N..M` (inclusive) or `a,b,c`.
pub fn parse_seeds(text: &str) -> Result<SeedList, String> {
    let bad = |_| format!("bad seed list `{text}`");
    let seeds: Vec<u64> = if let Some((a, b)) = text.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(bad)?, b.trim().parse().map_err(bad)?);
        if a > b {
            return Err(format!("empty seed range `{text}`"));
        }
        (a..=b).collect()
    } else {
        text.split(',')
            .map(|s| s.trim().parse().map_err(bad))
            .collect::<Result<_, _>>()?
    };
    let mut sorted = seeds.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != seeds.len() {
        return Err(format!("seeds must be distinct: `{text}`"));
    }
    Ok(SeedList(seeds))
}

fn load(common: &CommonArgs) -> Result<Experiment, CliError> {
    let mut exp = Experiment::load(&common.config)?;
    if let Some(h) = common.horizon {
        exp.horizon_s = h;
    }
    if let Some(seed) = common.seed {
        exp.seed = seed;
    }
    if let Some(scale) = common.scale {
        if scale <= 0.0 {
            return Err(CliError::Config("--scale must be positive".into()));
        }
        match &mut exp.workload {
            WorkloadSource::Generate { options, .. } => options.scale = scale,
            WorkloadSource::File(_) => {
                return Err(CliError::Config("--scale needs a generated workload".into()))
            }
        }
    }
    Ok(exp)
}

fn per_vo_counts(jobs: &[JobSpec]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for j in jobs {
        *counts.entry(j.vo_id.to_string()).or_insert(0) += 1;
    }
    counts
}

fn runtime<E: std::fmt::Display>(what: &str) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{what}: {e}"))
}

/// Returns the report text. Errors are listed in the text and turn the result into `Err`.
pub fn cmd_validate(common: &CommonArgs) -> Result<String, CliError> {
    let exp = load(common)?;
    let statements = exp.statements::<f64>()?;
    let jobs = exp.jobs(exp.sync, exp.seed)?;
    let cell = exp.cell::<f64>(exp.policy, exp.strategy, jobs, exp.seed)?;
    let mut out = String::new();
    let mut warnings = 0;
    for w in check_oversubscription(&statements, &exp.sites) {
        match w.kind {
            OversubscriptionKind::Epoch => {
                warnings += 1;
                let _ = writeln!(out, "warning: {w}");
            }
            OversubscriptionKind::Burst => {
                let _ = writeln!(out, "note: {w}");
            }
        }
    }
    let errors = cell.validate().err().unwrap_or_default();
    for e in &errors {
        let _ = writeln!(out, "error: {e}");
    }
    let _ = writeln!(
        out,
        "{} sites, {} statements, {} jobs: {} errors, {warnings} warnings",
        exp.sites.len(),
        statements.len(),
        cell.jobs.len(),
        errors.len()
    );
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(CliError::Config(out.trim_end().to_owned()))
    }
}

pub fn cmd_generate(
    common: &CommonArgs,
    sync: bool,
    file: Option<&Path>,
) -> Result<String, CliError> {
    let exp = load(common)?;
    if matches!(exp.workload, WorkloadSource::File(_)) {
        return Err(CliError::Config(
            "config reads its workload from a file; nothing to generate".into(),
        ));
    }
    let jobs = exp.jobs(sync, exp.seed)?;
    let path = file.map_or_else(|| common.out.join("workload.csv"), Path::to_path_buf);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(runtime(&dir.display().to_string()))?;
    }
    write_workload(&jobs, &path).map_err(runtime("write"))?;
    let mut out = format!("wrote {} jobs to {}\n", jobs.len(), path.display());
    for (vo, n) in per_vo_counts(&jobs) {
        let _ = writeln!(out, "{vo}: {n}");
    }
    Ok(out)
}

pub fn cmd_run(
    common: &CommonArgs,
    policy: Option<PolicyKind>,
    strategy: Option<StrategyKind>,
    sync: Option<bool>,
    audit: Option<AuditLevel>,
) -> Result<String, CliError> {
    let mut exp = load(common)?;
    if let Some(a) = audit {
        exp.audit = a;
    }
    let policy = policy.unwrap_or(exp.policy);
    let strategy = strategy.unwrap_or(exp.strategy);
    let sync = sync.unwrap_or(exp.sync);
    let jobs = exp.jobs(sync, exp.seed)?;
    let cell = exp.cell::<f64>(policy, strategy, jobs, exp.seed)?;
    if let Err(errors) = cell.validate() {
        let text: Vec<String> = errors.iter().map(ToString::to_string).collect();
        return Err(CliError::Config(text.join("\n")));
    }
    let result = run(&cell).map_err(runtime("simulation"))?;
    std::fs::create_dir_all(&common.out).map_err(runtime(&common.out.display().to_string()))?;
    result.write_csvs(&common.out).map_err(runtime("write"))?;
    let metrics = serde_json::to_string_pretty(&result.metrics).map_err(runtime("metrics"))?;
    write_atomic(&common.out.join("metrics.json"), (metrics + "\n").as_bytes())
        .map_err(runtime("write"))?;

    let m = &result.metrics;
    let mut out = format!(
        "policy={policy} strategy={strategy} sync={} seed={}\n",
        if sync { "on" } else { "off" },
        exp.seed
    );
    let _ = writeln!(
        out,
        "ARU {:.4}  ART {}  completed {}/{}",
        m.aru,
        m.art_overall.map_or("n/a".to_owned(), |a| format!("{a:.2}")),
        m.completed,
        m.completed + m.incomplete_count
    );
    for (vo, aru) in &m.aru_per_vo {
        let art = m.art_per_vo.get(vo).copied().flatten();
        let _ = writeln!(
            out,
            "  {vo}: ARU {aru:.4}  ART {}  completed {}",
            art.map_or("n/a".to_owned(), |a| format!("{a:.2}")),
            m.completed_per_vo.get(vo).copied().unwrap_or(0)
        );
    }
    let _ = writeln!(out, "outputs in {}", common.out.display());
    Ok(out)
}

/// Results of a sweep, before formatting.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepOutcome {
    /// `(sync, seed)` → per-cell summaries.
    pub per_seed: BTreeMap<(bool, u64), BTreeMap<(StrategyKind, PolicyKind), CellSummary>>,
    /// Seed-averaged matrices, synchronized first.
    pub averaged: Vec<ResultMatrix>,
}

fn sync_label(sync: bool) -> &'static str {
    if sync {
        "on"
    } else {
        "off"
    }
}

/// Runs the grid. Seeds are sorted first so the averages do not depend on the order given.
pub fn sweep(
    exp: &Experiment,
    seeds: &[u64],
    syncs: &[bool],
    strategies: &[StrategyKind],
    policies: &[PolicyKind],
    threads: Option<usize>,
) -> Result<SweepOutcome, CliError> {
    let mut seeds = seeds.to_vec();
    seeds.sort_unstable();
    seeds.dedup();
    if seeds.is_empty() || syncs.is_empty() || strategies.is_empty() || policies.is_empty() {
        return Err(CliError::Config("sweep needs at least one of everything".into()));
    }

    let mut workloads = BTreeMap::new();
    for &sync in syncs {
        for &seed in &seeds {
            workloads.insert((sync, seed), exp.jobs(sync, seed)?);
        }
    }
    let mut cells = Vec::new();
    for &sync in syncs {
        for &seed in &seeds {
            for &strategy in strategies {
                for &policy in policies {
                    let jobs = workloads[&(sync, seed)].clone();
                    let config = exp.cell::<f64>(policy, strategy, jobs, seed)?;
                    if let Err(errors) = config.validate() {
                        let text: Vec<String> = errors.iter().map(ToString::to_string).collect();
                        return Err(CliError::Config(text.join("\n")));
                    }
                    cells.push(((sync, seed, strategy, policy), config));
                }
            }
        }
    }

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        pool = pool.num_threads(n.max(1));
    }
    let pool = pool.build().map_err(runtime("thread pool"))?;
    let results: Vec<_> = pool.install(|| {
        cells
            .par_iter()
            .map(|(key, config)| {
                let (sync, seed, strategy, policy) = *key;
                let mut slim = config.clone();
                slim.audit = AuditLevel::Admissions;
                run(&slim)
                    .map(|r| (*key, CellSummary::from(&r.metrics)))
                    .map_err(|e| {
                        CliError::Runtime(format!(
                            "cell sync={} seed={seed} {strategy}/{policy}: {e}",
                            sync_label(sync)
                        ))
                    })
            })
            .collect()
    });

    let mut per_seed: BTreeMap<(bool, u64), BTreeMap<_, _>> = BTreeMap::new();
    for r in results {
        let ((sync, seed, strategy, policy), summary) = r?;
        per_seed
            .entry((sync, seed))
            .or_default()
            .insert((strategy, policy), summary);
    }
    let mut averaged = Vec::new();
    let mut order = syncs.to_vec();
    order.sort_unstable_by(|a, b| b.cmp(a));
    order.dedup();
    for sync in order {
        let mut mean = BTreeMap::new();
        for &strategy in strategies {
            for &policy in policies {
                let cells = seeds.iter().map(|&seed| &per_seed[&(sync, seed)][&(strategy, policy)]);
                if let Some(m) = CellSummary::mean(cells) {
                    mean.insert((strategy, policy), m);
                }
            }
        }
        averaged.push(summarize(sync_label(sync), &mean).map_err(runtime("summary"))?);
    }
    Ok(SweepOutcome { per_seed, averaged })
}

impl SweepOutcome {
    pub fn per_seed_csv(&self, compare_paper: bool) -> String {
        let mut out = String::from("seed,");
        out.push_str(&ResultMatrix::csv_header(compare_paper));
        let mut syncs: Vec<bool> = self.per_seed.keys().map(|k| k.0).collect();
        syncs.sort_unstable_by(|a, b| b.cmp(a));
        syncs.dedup();
        for sync in syncs {
            for ((_, seed), cells) in self.per_seed.iter().filter(|(k, _)| k.0 == sync) {
                let matrix = summarize(sync_label(sync), cells).expect("cells present");
                for line in matrix.csv_rows(compare_paper).lines() {
                    let _ = writeln!(out, "{seed},{line}");
                }
            }
        }
        out
    }

    pub fn averaged_csv(&self, compare_paper: bool) -> String {
        let mut out = ResultMatrix::csv_header(compare_paper);
        for m in &self.averaged {
            out.push_str(&m.csv_rows(compare_paper));
        }
        out
    }

    pub fn averaged_tables(&self, compare_paper: bool) -> String {
        let mut out = String::new();
        for m in &self.averaged {
            for metric in [Metric::Aru, Metric::Art] {
                out.push_str(&m.table(metric, compare_paper));
                out.push('\n');
            }
        }
        out
    }

    pub fn per_seed_tables(&self, compare_paper: bool) -> String {
        let mut out = String::new();
        for ((sync, seed), cells) in self.per_seed.iter().rev() {
            let matrix = summarize(sync_label(*sync), cells).expect("cells present");
            for metric in [Metric::Aru, Metric::Art] {
                let _ = writeln!(out, "seed {seed}");
                out.push_str(&matrix.table(metric, compare_paper));
                out.push('\n');
            }
        }
        out
    }
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_sweep(
    common: &CommonArgs,
    seeds: &[u64],
    sync: Option<bool>,
    policies: &[PolicyKind],
    strategies: &[StrategyKind],
    compare_paper: bool,
    threads: Option<usize>,
) -> Result<String, CliError> {
    let exp = load(common)?;
    let syncs = sync.map_or(vec![true, false], |s| vec![s]);
    let policies = if policies.is_empty() { PolicyKind::ALL.to_vec() } else { policies.to_vec() };
    let strategies = if strategies.is_empty() {
        StrategyKind::ALL.to_vec()
    } else {
        strategies.to_vec()
    };
    let outcome = sweep(&exp, seeds, &syncs, &strategies, &policies, threads)?;
    let dir = &common.out;
    std::fs::create_dir_all(dir).map_err(runtime(&dir.display().to_string()))?;
    let tables = outcome.averaged_tables(compare_paper);
    let files = [
        ("sweep_per_seed.csv", outcome.per_seed_csv(compare_paper)),
        ("sweep_mean.csv", outcome.averaged_csv(compare_paper)),
        ("sweep_per_seed.txt", outcome.per_seed_tables(compare_paper)),
        ("sweep_mean.txt", tables.clone()),
    ];
    for (name, body) in files {
        write_atomic(&dir.join(name), body.as_bytes()).map_err(runtime("write"))?;
    }
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    let mut out = format!("mean over {} seeds ({:?})\n\n", sorted.len(), sorted);
    out.push_str(&tables);
    let _ = writeln!(out, "outputs in {}", dir.display());
    Ok(out)
}

pub fn execute(cli: &Cli) -> Result<String, CliError> {
    match &cli.command {
        Command::Validate(common) => cmd_validate(common),
        Command::Generate { common, sync, file } => cmd_generate(common, *sync, file.as_deref()),
        Command::Run {
            common,
            policy,
            strategy,
            sync,
            audit,
        } => cmd_run(common, *policy, *strategy, *sync, *audit),
        Command::Sweep {
            common,
            seeds,
            sync,
            policy,
            strategy,
            compare_paper,
            jobs,
        } => cmd_sweep(common, &seeds.0, *sync, policy, strategy, *compare_paper, *jobs),
    }
}

/// Parses arguments, runs, prints, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
