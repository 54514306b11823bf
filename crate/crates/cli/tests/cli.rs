use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use pls_cli::audit::{cmd_audit, detect_axis, SlopeBand};
use pls_cli::plot::cmd_plot;
use pls_cli::run::{cmd_run, read_curves, schedule_dump, Results, RunOptions, CURVES_FILE, RESULTS_FILE};
use pls_cli::{CliError, ExperimentConfig};
use pls_core::error::ProtocolError;
use pls_core::SimError;

const MINIMAL: &str = r#"
seed = 7
n_reps = 2
algorithms = ["pls", "unquantized_pls"]

[sweep]
horizon = [10000]
agents = [2]
d = [2]

[instance]
theta = [0.3, -0.4]
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pls"))
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("exp.toml");
    fs::write(&path, text).unwrap();
    path
}

fn quiet(out: &Path) -> RunOptions {
    RunOptions { out: Some(out.to_path_buf()), seed: None, parallelism: Some(1) }
}

fn strip_timestamp(json: &str) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(json).unwrap();
    v.as_object_mut().unwrap().remove("timestamp");
    v
}

#[test]
fn minimal_config_yields_four_records() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_toml(MINIMAL, &[]).unwrap();
    let dir = cmd_run(cfg, &quiet(tmp.path())).unwrap();
    for f in ["results.json", "curves.csv", "schedule.txt", "config.toml", "regret.svg", "bits.svg"] {
        assert!(dir.join(f).is_file(), "missing {f}");
    }
    let results = Results::load(&dir).unwrap();
    assert_eq!(results.records().count(), 4);
    assert!(!results.timestamp.is_empty());
    let copy = ExperimentConfig::load(&dir.join("config.toml"), &[]).unwrap();
    assert_eq!(copy, results.config);
}

#[test]
fn rerun_is_identical_except_timestamp() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_toml(MINIMAL, &[]).unwrap();
    let a = cmd_run(cfg.clone(), &quiet(tmp.path())).unwrap();
    let b = cmd_run(cfg, &RunOptions { parallelism: Some(3), ..quiet(tmp.path()) }).unwrap();
    assert_ne!(a, b);
    let ja = fs::read_to_string(a.join(RESULTS_FILE)).unwrap();
    let jb = fs::read_to_string(b.join(RESULTS_FILE)).unwrap();
    assert_eq!(strip_timestamp(&ja), strip_timestamp(&jb));
    assert_eq!(fs::read(a.join(CURVES_FILE)).unwrap(), fs::read(b.join(CURVES_FILE)).unwrap());
}

#[test]
fn seed_flag_changes_results() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_toml(MINIMAL, &[]).unwrap();
    let a = cmd_run(cfg.clone(), &quiet(tmp.path())).unwrap();
    let b = cmd_run(cfg, &RunOptions { seed: Some(8), ..quiet(tmp.path()) }).unwrap();
    assert_ne!(fs::read(a.join(CURVES_FILE)).unwrap(), fs::read(b.join(CURVES_FILE)).unwrap());
    assert_eq!(Results::load(&b).unwrap().config.seed, 8);
}

#[test]
fn binary_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), MINIMAL);
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--override", "delta=1.5", "--out"])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("delta"), "{stderr}");

    let broken = write_config(tmp.path(), "[sweep]\nhorizon = [10]\nagents = [1]\nd = 3\n");
    let out = bin().args(["run", "--config"]).arg(&broken).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("config error"));

    let cfg = write_config(tmp.path(), MINIMAL);
    let out = bin()
        .args(["run", "--parallelism", "1", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(tmp.path().join("runs"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = PathBuf::from(String::from_utf8_lossy(&out.stdout).trim());
    assert!(dir.join(RESULTS_FILE).is_file());
}

#[test]
fn protocol_errors_map_to_exit_three() {
    let e: CliError = SimError::Protocol(ProtocolError::Desynchronized { epoch: 2, agent: 1 }).into();
    assert_eq!(e.exit_code(), 3);
    assert!(e.to_string().contains("agent 1"));
    let e: CliError = SimError::Setup("bad".into()).into();
    assert_eq!(e.exit_code(), 2);
}

#[test]
fn schedule_verb_prints_every_distinct_schedule() {
    let cfg = ExperimentConfig::from_toml(MINIMAL, &["algorithms=[\"pls\", \"independent_agents\"]".into()]).unwrap();
    let text = schedule_dump(&cfg).unwrap();
    assert_eq!(text.matches("## ").count(), 2);
    assert!(text.contains("M=1"));
    assert!(text.contains("k\ts_k\tt_k"));

    let tmp = tempfile::tempdir().unwrap();
    let path = write_config(tmp.path(), MINIMAL);
    let out = bin().args(["schedule", "--config"]).arg(&path).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("## pls-T10000-M2-d2"));
}

fn svg_polylines(svg: &str) -> Vec<usize> {
    svg.split("<polyline")
        .skip(1)
        .map(|chunk| {
            let start = chunk.find("points=\"").unwrap() + 8;
            let end = start + chunk[start..].find('"').unwrap();
            chunk[start..end].split_whitespace().count()
        })
        .collect()
}

#[test]
fn single_run_plot_has_every_point_and_no_band() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_toml(MINIMAL, &["n_reps=1".into(), "algorithms=[\"pls\"]".into(), "plot.enabled=false".into()])
        .unwrap();
    let dir = cmd_run(cfg, &quiet(tmp.path())).unwrap();
    assert!(!dir.join("regret.svg").exists());
    let rows = read_curves(&dir.join(CURVES_FILE)).unwrap();
    let written = cmd_plot(&dir, &dir.join("plots")).unwrap();
    assert!(written.iter().any(|p| p.ends_with("regret.svg")));
    let svg = fs::read_to_string(dir.join("plots/regret.svg")).unwrap();
    assert!(svg_polylines(&svg).contains(&rows.len()), "{:?} vs {}", svg_polylines(&svg), rows.len());
    assert!(!svg.contains("<polygon"));
}

#[test]
fn replicated_plot_draws_bands() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_toml(MINIMAL, &["n_reps=3".into(), "sweep.agents=[1, 2, 4]".into()]).unwrap();
    let dir = cmd_run(cfg, &quiet(tmp.path())).unwrap();
    let svg = fs::read_to_string(dir.join("regret.svg")).unwrap();
    assert!(svg.contains("<polygon"));
    assert!(dir.join("regret_vs_agents.svg").is_file());
}

#[test]
fn empty_or_malformed_curves() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join(CURVES_FILE), "run_id,t,regret,c_u_bits,c_d_bits,stage,epoch\n").unwrap();
    assert!(cmd_plot(tmp.path(), tmp.path()).unwrap().is_empty());
    fs::write(tmp.path().join(CURVES_FILE), "run_id,t,regret,c_u_bits,c_d_bits,stage,epoch\nx,1,oops,,,norm,1\n").unwrap();
    assert!(matches!(cmd_plot(tmp.path(), tmp.path()), Err(CliError::Input(_))));
    fs::write(tmp.path().join(CURVES_FILE), "a,b\n1,2\n").unwrap();
    assert!(matches!(cmd_plot(tmp.path(), tmp.path()), Err(CliError::Input(_))));
    let missing = tmp.path().join("nowhere");
    assert!(matches!(cmd_plot(&missing, &missing), Err(CliError::Input(_))));
}

#[test]
fn audit_across_horizons() {
    let tmp = tempfile::tempdir().unwrap();
    let mut dirs = Vec::new();
    for t in [20_000, 80_000, 320_000] {
        let cfg = ExperimentConfig::from_toml(
            MINIMAL,
            &[format!("sweep.horizon=[{t}]"), "n_reps=5".into(), "algorithms=[\"pls\"]".into(), "plot.enabled=false".into()],
        )
        .unwrap();
        dirs.push(cmd_run(cfg, &quiet(tmp.path())).unwrap());
    }
    let entries = cmd_audit(&dirs, None, 200, 1).unwrap();
    assert_eq!(entries.len(), 1);
    let report = &entries[0].report;
    assert_eq!(report.runs, 15);
    assert_eq!(report.regret.points.len(), 3);
    assert!(report.uplink_vs_log_horizon.is_some());
    assert_eq!(entries[0].band, SlopeBand { low: 0.45, high: 0.65 });

    let out = bin().arg("audit").args(&dirs).arg("--out").arg(tmp.path()).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("horizon"));
    assert!(tmp.path().join("audit.json").is_file());

    // Too few groups.
    assert!(matches!(cmd_audit(&dirs[..2], None, 10, 1), Err(CliError::Input(_))));
}

#[test]
fn audit_rejects_incomparable_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let mut dirs = Vec::new();
    for (t, sigma) in [(20_000, 0.5), (80_000, 0.5), (320_000, 0.4)] {
        let cfg = ExperimentConfig::from_toml(
            MINIMAL,
            &[
                format!("sweep.horizon=[{t}]"),
                format!("sigma={sigma}"),
                "algorithms=[\"pls\"]".into(),
                "plot.enabled=false".into(),
            ],
        )
        .unwrap();
        dirs.push(cmd_run(cfg, &quiet(tmp.path())).unwrap());
    }
    let err = cmd_audit(&dirs, None, 10, 1).unwrap_err();
    assert!(err.to_string().contains("sigma"), "{err}");

    let loaded: Vec<Results> = dirs.iter().map(|d| Results::load(d).unwrap()).collect();
    let mut recs: Vec<_> = loaded.iter().flat_map(|r| r.records()).collect();
    assert!(detect_axis(&recs).is_ok());
    recs.truncate(1);
    assert!(detect_axis(&recs).is_err());
}
