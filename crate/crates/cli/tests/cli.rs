use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pcrb_core::controller::Policy;
use pcrb_core::scenario::Scenario;
use pcrb_tracker::output::{read_log, read_summary};
use pcrb_tracker::runner::{summary_from_csv, sweep_dir_name};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_pcrb-tracker"));
    c.env_remove("PCRB_TRACKER_JOBS");
    c
}

/// Short mission with a budget tight enough to force turning points.
fn write_config(dir: &Path) -> PathBuf {
    let mut sc = Scenario::default();
    sc.mission.n_slots = 14;
    sc.mission.x_f = 20.0;
    sc.mission.e_tot = 520.0;
    let path = dir.join("short.toml");
    fs::write(&path, sc.to_config_string()).unwrap();
    path
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn simulate(config: &Path, out: &Path, extra: &[&str]) -> Output {
    run(bin()
        .args(["simulate", "--solver", "roots", "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra))
}

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    simulate(&cfg, &a, &["--trials", "1", "--seed", "7", "--jobs", "1"]);
    simulate(&cfg, &b, &["--trials", "1", "--seed", "7", "--jobs", "3"]);
    let (ca, cb) = (dir_contents(&a), dir_contents(&b));
    assert_eq!(ca.len(), 3, "two CSVs and the summary");
    assert_eq!(ca, cb);
}

#[test]
fn policies_share_random_numbers() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let out = tmp.path().join("o");
    simulate(&cfg, &out, &["--trials", "2", "--policy", "both"]);
    for trial in 0..2 {
        let p = read_log(&out.join(format!("trial_{trial:04}_proposed.csv"))).unwrap();
        let b = read_log(&out.join(format!("trial_{trial:04}_benchmark.csv"))).unwrap();
        assert_eq!(p.records.len(), b.records.len());
        // Target position is logged as UAV position plus relative position,
        // so the two policies agree up to rounding.
        for (rp, rb) in p.records.iter().zip(&b.records) {
            assert!(
                (rp.target_pos - rb.target_pos).abs() <= 1e-9,
                "{} vs {}",
                rp.target_pos,
                rb.target_pos
            );
        }
    }
}

#[test]
fn summary_is_recomputable_from_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let out = tmp.path().join("o");
    simulate(&cfg, &out, &["--trials", "3"]);
    let doc = read_summary(&out.join("summary.json")).unwrap();
    assert_eq!(doc.policies.len(), 2);
    let again = summary_from_csv(&out, &[Policy::Proposed, Policy::Benchmark], 20.0).unwrap();
    assert_eq!(doc.policies, again);
    assert!(doc
        .policies
        .iter()
        .any(|p| p.turning_points.iter().any(Option::is_some)));
}

#[test]
fn single_value_sweep_matches_simulate() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let sim = tmp.path().join("sim");
    let sweep = tmp.path().join("sweep");
    simulate(&cfg, &sim, &["--trials", "2"]);
    run(bin()
        .args([
            "sweep", "--solver", "roots", "--trials", "2", "--param", "E_tot", "--values", "520", "--config",
        ])
        .arg(&cfg)
        .arg("--out")
        .arg(&sweep));
    assert_eq!(dir_contents(&sim), dir_contents(&sweep.join(sweep_dir_name(520.0))));
    let table = fs::read_to_string(sweep.join("sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
}

#[test]
fn sweep_rows_follow_values() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let out = tmp.path().join("o");
    run(bin()
        .args(["sweep", "--solver", "roots", "--trials", "1", "--policy", "proposed"])
        .args(["--param", "E_tot", "--values", "400,500", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out));
    let mut rdr = csv::Reader::from_path(out.join("sweep.csv")).unwrap();
    let firsts: Vec<String> = rdr.records().map(|r| r.unwrap()[0].to_string()).collect();
    assert_eq!(firsts, ["400", "500"]);
}

#[test]
fn sweep_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 4] = [
        &["sweep", "--param", "E_tot", "--values", ""],
        &["sweep", "--param", "E_tot"],
        &["sweep", "--param", "alpha", "--values", "1"],
        &["sweep", "--param", "E_tot", "--values", "1600,abc"],
    ];
    for args in cases {
        let out = bin().args(args).arg("--out").arg(tmp.path()).output().unwrap();
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
    assert_eq!(fs::read_dir(tmp.path()).unwrap().count(), 0, "nothing written");
}

#[test]
fn invalid_inputs_fail() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "dt = -1.0\n").unwrap();
    let out = bin()
        .args(["simulate", "--trials", "1", "--config"])
        .arg(&bad)
        .arg("--out")
        .arg(tmp.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dt"));

    let cfg = write_config(tmp.path());
    let out = bin()
        .env("PCRB_TRACKER_JOBS", "many")
        .args(["simulate", "--trials", "1", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(tmp.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("PCRB_TRACKER_JOBS"));
}

#[test]
fn jobs_env_overrides_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let out = tmp.path().join("o");
    // --jobs 0 alone would be clamped to one worker; the variable wins anyway.
    run(bin()
        .env("PCRB_TRACKER_JOBS", "2")
        .args([
            "simulate", "--solver", "roots", "--trials", "2", "--jobs", "0", "--config",
        ])
        .arg(&cfg)
        .arg("--out")
        .arg(&out));
    let reference = tmp.path().join("r");
    simulate(&cfg, &reference, &["--trials", "2", "--jobs", "1"]);
    assert_eq!(dir_contents(&out), dir_contents(&reference));
}

fn lines(out: &Output) -> Vec<String> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(str::to_string)
        .collect()
}

#[test]
fn selftest_passes() {
    let out = run(bin().arg("selftest"));
    let lines = lines(&out);
    assert_eq!(lines.len(), 7);
    assert!(lines.iter().all(|l| l.contains(" PASS ")), "{lines:#?}");
}

#[test]
fn selftest_without_sdp_skips_only_sdp() {
    let out = run(bin().args(["selftest", "--no-sdp"]));
    let lines = lines(&out);
    let skipped: Vec<&String> = lines.iter().filter(|l| l.contains(" SKIPPED ")).collect();
    assert_eq!(skipped.len(), 1);
    assert!(skipped[0].contains("SDP"));
    assert_eq!(lines.iter().filter(|l| l.contains(" PASS ")).count(), 6);
}

#[test]
fn selftest_catches_injected_fault() {
    let out = bin().args(["selftest", "--no-sdp", "--inject-fault"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let lines = lines(&out);
    let failed: Vec<&String> = lines.iter().filter(|l| l.contains(" FAIL ")).collect();
    assert_eq!(failed.len(), 1, "{lines:#?}");
    assert!(failed[0].contains("PCRB"));
}

/// Default scenario, 20 paired seeds: a lower weighted PCRB for the proposed
/// policy, and earlier turning points on the smaller budget.
#[test]
fn budget_sweep_shows_the_trends() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    run(bin()
        .args([
            "sweep",
            "--policy",
            "both",
            "--trials",
            "20",
            "--param",
            "E_tot",
            "--values",
            "1600,1800",
            "--out",
        ])
        .arg(&out));
    let low = read_summary(&out.join(sweep_dir_name(1600.0)).join("summary.json")).unwrap();
    let high = read_summary(&out.join(sweep_dir_name(1800.0)).join("summary.json")).unwrap();
    let (prop, bench) = (&high.policies[0], &high.policies[1]);
    assert_eq!((prop.policy.as_str(), bench.policy.as_str()), ("proposed", "benchmark"));
    assert!(prop.mean_weighted_actual_pcrb.unwrap() < bench.mean_weighted_actual_pcrb.unwrap());
    let turn = |doc: &pcrb_tracker::output::SummaryDoc| doc.policies[0].turning_point_mean.unwrap();
    assert!(turn(&low) < turn(&high), "{} vs {}", turn(&low), turn(&high));
}
