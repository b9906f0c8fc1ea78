use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn vosim(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vosim"))
        .args(args)
        .env("VOSIM_OUT", out)
        .output()
        .expect("spawn vosim")
}

fn text(o: &Output) -> String {
    format!(
        "{}{}",
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    )
}

fn reference() -> String {
    configs().join("reference.json").display().to_string()
}

/// A copy of the reference config in `dir` with its policy file replaced.
fn with_policies(dir: &Path, policies: &str) -> String {
    let mut config: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(reference()).unwrap()).unwrap();
    std::fs::write(dir.join("p.txt"), policies).unwrap();
    config["policies"]["file"] = "p.txt".into();
    let path = dir.join("c.json");
    std::fs::write(&path, config.to_string()).unwrap();
    path.display().to_string()
}

#[test]
fn validate_reference_is_clean() {
    let dir = tempfile::tempdir().unwrap();
    let o = vosim(&["validate", "--config", &reference()], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let t = text(&o);
    assert!(t.contains("10 sites, 60 statements, 1320 jobs: 0 errors, 0 warnings"), "{t}");
}

#[test]
fn validate_warns_on_oversubscribed_epochs() {
    let dir = tempfile::tempdir().unwrap();
    let config = configs().join("oversubscribed.json").display().to_string();
    let o = vosim(&["validate", "--config", &config], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let t = text(&o);
    assert_eq!(t.matches("warning:").count(), 1, "{t}");
    assert!(t.contains("SiteA"), "{t}");
    assert!(t.contains("0 errors, 1 warnings"), "{t}");
}

#[test]
fn bad_policy_line_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = with_policies(
        dir.path(),
        "# header\n[CPU, Site1, VO0, (1hour, 10%), (1minute, 40%)]\n[CPU, Site1, VO1, (1hour, 20%)\n",
    );
    let o = vosim(&["validate", "--config", &config], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let t = text(&o);
    assert!(t.contains("p.txt") && t.contains("line 3"), "{t}");
}

#[test]
fn unknown_policy_kind_and_flags_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = vosim(&["run", "--config", &reference(), "--policy", "greedy"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));
    let o = vosim(&["run", "--config", &reference(), "--bogus"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = vosim(&["sweep", "--config", &reference(), "--seeds", "1,1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn horizon_must_cover_measurement_intervals() {
    let dir = tempfile::tempdir().unwrap();
    let o = vosim(&["run", "--config", &reference(), "--horizon", "45"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));
    let o = vosim(
        &["run", "--config", &reference(), "--horizon", "60", "--scale", "0.1"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
}

#[test]
fn missing_workload_file_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let config = serde_json::json!({
        "sites": [{"id": "S", "cpus": 4}],
        "workloads": {"file": "absent.csv"}
    });
    let path = dir.path().join("c.json");
    std::fs::write(&path, config.to_string()).unwrap();
    let o = vosim(&["run", "--config", path.to_str().unwrap()], dir.path());
    assert_ne!(o.status.code(), Some(0));
    assert!(text(&o).contains("absent.csv"), "{}", text(&o));
}

#[test]
fn run_writes_outputs_deterministically() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["run", "--config", &reference(), "--scale", "0.25", "--seed", "4"];
    for dir in [a.path(), b.path()] {
        let o = vosim(&args, dir);
        assert_eq!(o.status.code(), Some(0), "{}", text(&o));
        assert!(text(&o).contains("policy=commitment"));
    }
    for name in ["audit.csv", "usage.csv", "jobs.csv", "metrics.json"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert!(!x.is_empty(), "{name}");
        assert_eq!(x, y, "{name}");
    }
    let metrics: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.path().join("metrics.json")).unwrap()).unwrap();
    let aru = metrics["aru"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&aru));
}

#[test]
fn generate_counts_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let o = vosim(&["generate", "--config", &reference()], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let t = text(&o);
    assert!(t.contains("wrote 1320 jobs"), "{t}");
    assert!(t.contains("VO0: 180") && t.contains("VO1: 260"), "{t}");
    let first = std::fs::read(dir.path().join("workload.csv")).unwrap();

    let again = dir.path().join("again.csv");
    let o = vosim(
        &["generate", "--config", &reference(), "--file", again.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read(&again).unwrap(), first);

    let o = vosim(&["generate", "--config", &reference(), "--scale", "0.1"], dir.path());
    let t = text(&o);
    assert!(t.contains("VO0: 18") && t.contains("VO1: 26"), "{t}");

    let o = vosim(&["generate", "--config", &reference(), "--sync", "off"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert_ne!(std::fs::read(dir.path().join("workload.csv")).unwrap(), first);
}

fn sweep(dir: &Path, extra: &[&str]) -> Output {
    let r = reference();
    let mut args = vec![
        "sweep", "--config", &r, "--scale", "0.1", "--horizon", "900", "--sync", "on",
    ];
    args.extend_from_slice(extra);
    vosim(&args, dir)
}

#[test]
fn single_seed_sweep_mean_equals_that_seed() {
    let dir = tempfile::tempdir().unwrap();
    let o = sweep(dir.path(), &["--seeds", "5"]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let per_seed = std::fs::read_to_string(dir.path().join("sweep_per_seed.csv")).unwrap();
    let mean = std::fs::read_to_string(dir.path().join("sweep_mean.csv")).unwrap();
    let mut lines = per_seed.lines();
    assert_eq!(lines.next().unwrap(), format!("seed,{}", mean.lines().next().unwrap()));
    let stripped: Vec<&str> = lines.map(|l| l.strip_prefix("5,").unwrap()).collect();
    assert_eq!(stripped, mean.lines().skip(1).collect::<Vec<_>>());
    assert_eq!(stripped.len(), 3 * 4);
}

#[test]
fn sweep_ignores_seed_order_and_compare_only_adds_columns() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    assert_eq!(sweep(a.path(), &["--seeds", "1..3"]).status.code(), Some(0));
    assert_eq!(sweep(b.path(), &["--seeds", "3,1,2", "--jobs", "1"]).status.code(), Some(0));
    assert_eq!(sweep(c.path(), &["--seeds", "1..3", "--compare-paper"]).status.code(), Some(0));
    for name in ["sweep_per_seed.csv", "sweep_mean.csv", "sweep_mean.txt"] {
        assert_eq!(
            std::fs::read(a.path().join(name)).unwrap(),
            std::fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
    let plain = std::fs::read_to_string(a.path().join("sweep_mean.csv")).unwrap();
    let wide = std::fs::read_to_string(c.path().join("sweep_mean.csv")).unwrap();
    for (p, w) in plain.lines().zip(wide.lines()) {
        let p: Vec<&str> = p.split(',').collect();
        let w: Vec<&str> = w.split(',').collect();
        assert!(w.len() > p.len());
        assert_eq!(&w[..p.len()], &p[..]);
    }
}

#[test]
fn sweep_restricts_cells() {
    let dir = tempfile::tempdir().unwrap();
    let o = sweep(
        dir.path(),
        &["--seeds", "2", "--policy", "fixed", "--policy", "no-limit", "--strategy", "round-robin"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let mean = std::fs::read_to_string(dir.path().join("sweep_mean.csv")).unwrap();
    // Cells outside the selection stay in the matrix as holes.
    let run: Vec<&str> = mean.lines().skip(1).filter(|l| !l.contains(",n/a,")).collect();
    assert_eq!(mean.lines().count(), 1 + 12);
    assert_eq!(run.len(), 2, "{mean}");
    assert!(run.iter().all(|l| l.starts_with("on,round-robin,")), "{mean}");
}
