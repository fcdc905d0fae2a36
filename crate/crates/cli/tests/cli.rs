//! The `mrenkf` binary end to end: run directories, exit codes, replay,
//! comparison and plot data.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mrenkf_cli::config;
use mrenkf_cli::manifest::{sha256_hex, Manifest};
use tempfile::TempDir;

const SHORT: &str = "experiment.horizon=20";

fn mrenkf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mrenkf"))
        .args(args)
        .env_remove("MRENKF_OUT")
        .output()
        .expect("binary runs")
}

fn short_run(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--set", SHORT, "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    mrenkf(&args)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn data_lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

#[test]
fn run_writes_a_complete_hashed_directory() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("run");
    let o = short_run(&dir, &["--seed", "3", "--verbose"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("time-averaged L2"));

    let manifest = Manifest::read_dir(&dir).unwrap();
    assert_eq!(manifest.seed, 3);
    assert_eq!(manifest.filter, "mrenkf");
    assert_eq!(manifest.cycle_seconds.len(), 2);
    for name in [
        "config.txt",
        "metrics.csv",
        "l2_series.csv",
        "rank_histogram.csv",
        "snr.csv",
        "reference.csv",
        "observations.csv",
        "markers.csv",
        "final_ensemble.csv",
        "scale_diagnostics.csv",
        "observation_coeffs_cycle1.csv",
    ] {
        let bytes = fs::read(dir.join(name)).unwrap();
        let entry = manifest
            .output(name)
            .unwrap_or_else(|| panic!("{name} missing from manifest"));
        assert_eq!(entry.bytes, bytes.len() as u64, "{name}");
        assert_eq!(entry.sha256, sha256_hex(&bytes), "{name}");
    }
    assert!(!dir.join(".staging").exists());

    // the stored config and the manifest both resolve to the run's config
    let from_file = config::resolve(&config::read_file(&dir.join("config.txt")).unwrap()).unwrap();
    let from_manifest = config::resolve(&manifest.assignments("manifest")).unwrap();
    assert_eq!(from_file, from_manifest);
    assert_eq!(from_file.seed, 3);
    assert_eq!(manifest.config.len(), config::to_pairs(&from_file).len());
    assert_eq!(data_lines(&dir.join("metrics.csv")).len(), 1 + 2);
}

#[test]
fn default_directory_follows_the_environment() {
    let tmp = TempDir::new().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_mrenkf"))
        .args(["run", "--set", SHORT, "--filter", "enkf", "--seed", "5"])
        .env("MRENKF_OUT", tmp.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(tmp.path().join("enkf-seed5").join("manifest.json").exists());
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "# typo below\nensemble.sise = 10\n").unwrap();
    for (args, needle) in [
        (
            vec!["run", "--config", cfg.to_str().unwrap()],
            "ensemble.sise",
        ),
        (vec!["run", "--set", "mrenkf.levels=10"], "mrenkf.levels"),
        (vec!["run", "--set", "ks.dt=fast"], "ks.dt"),
        (vec!["run", "--filter", "particle"], "experiment.filter"),
        (vec!["run", "--set", "noequals"], "KEY=VALUE"),
    ] {
        let o = mrenkf(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
        assert!(stderr(&o).contains(needle), "{args:?}: {}", stderr(&o));
    }
    // clap rejects unknown plot kinds with the same code
    let o = mrenkf(&["plotdata", "x", "--kind", "contour"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!tmp.path().join("runs").exists());
}

#[test]
fn runtime_failures_exit_with_one() {
    let tmp = TempDir::new().unwrap();
    let blocker = tmp.path().join("blocker");
    fs::write(&blocker, "not a directory").unwrap();
    let o = short_run(&blocker.join("run"), &[]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("blocker"), "{}", stderr(&o));

    let o = mrenkf(&["compare", "missing_a", "missing_b"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn replay_reproduces_and_detects_tampering() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("orig");
    assert!(short_run(&dir, &["--seed", "2"]).status.success());
    let manifest = dir.join("manifest.json");

    let again = tmp.path().join("again");
    let o = mrenkf(&[
        "run",
        "--replay",
        manifest.to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("outputs match the manifest"));

    // replay flags are exclusive
    let o = mrenkf(&["run", "--replay", manifest.to_str().unwrap(), "--seed", "1"]);
    assert_eq!(o.status.code(), Some(2));

    let mut m = Manifest::read(&manifest).unwrap();
    m.outputs[1].sha256 = "0".repeat(64);
    let forged = tmp.path().join("forged.json");
    fs::write(&forged, m.to_json().unwrap()).unwrap();
    let o = mrenkf(&[
        "run",
        "--replay",
        forged.to_str().unwrap(),
        "--out",
        tmp.path().join("f").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains(&m.outputs[1].file), "{}", stderr(&o));
}

fn pair(tmp: &TempDir) -> (PathBuf, PathBuf) {
    let a = tmp.path().join("enkf");
    let b = tmp.path().join("mrenkf");
    assert!(short_run(&a, &["--filter", "enkf"]).status.success());
    assert!(short_run(&b, &["--filter", "mrenkf"]).status.success());
    (a, b)
}

#[test]
fn compare_tables_and_guards() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = pair(&tmp);

    let same = mrenkf_cli::compare(&a, &a).unwrap();
    for row in &same.rows {
        assert_eq!(row.a, row.b, "{}", row.metric);
    }
    assert_eq!(
        same.row("time-averaged L2").unwrap().winner,
        Some(mrenkf_cli::commands::Winner::Tie)
    );
    assert_eq!(same.rows.len(), 2 + 5);

    let o = mrenkf(&["compare", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = stdout(&o);
    for needle in [
        "time-averaged L2",
        "rank chi-square",
        "SNR level 5",
        "SNR level 1",
    ] {
        assert!(table.contains(needle), "{table}");
    }

    let other = tmp.path().join("seed9");
    assert!(short_run(&other, &["--seed", "9"]).status.success());
    let o = mrenkf(&["compare", a.to_str().unwrap(), other.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("refusing to compare"), "{}", stderr(&o));
}

#[test]
fn plot_data_shapes() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = pair(&tmp);
    let plots = tmp.path().join("plots");
    let p = plots.to_str().unwrap();
    let run = |args: &[&str]| {
        let o = mrenkf(args);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
    };

    run(&[
        "plotdata",
        a.to_str().unwrap(),
        "--kind",
        "rankhist",
        "--out",
        p,
        "--svg",
    ]);
    assert_eq!(data_lines(&plots.join("rank_histogram.dat")).len(), 51);
    assert!(fs::read_to_string(plots.join("rank_histogram.svg"))
        .unwrap()
        .starts_with("<svg"));

    run(&[
        "plotdata",
        a.to_str().unwrap(),
        b.to_str().unwrap(),
        "--kind",
        "l2",
        "--out",
        p,
    ]);
    let l2 = data_lines(&plots.join("l2.dat"));
    assert_eq!(l2.len(), 41);
    assert!(l2.iter().all(|l| l.split_whitespace().count() == 4));

    run(&[
        "plotdata",
        b.to_str().unwrap(),
        "--kind",
        "pointwise",
        "--out",
        p,
    ]);
    for k in 0..3 {
        let rows = data_lines(&plots.join(format!("pointwise_marker_{k}.dat")));
        assert_eq!(rows.len(), 41);
        let cols: Vec<Vec<&str>> = rows
            .iter()
            .map(|r| r.split_whitespace().collect())
            .collect();
        assert!(cols.iter().all(|c| c.len() == 3 + 50));
        let observed: Vec<usize> = (0..cols.len()).filter(|&i| cols[i][2] != "NaN").collect();
        assert_eq!(observed, vec![20, 40]);
    }

    run(&[
        "plotdata",
        a.to_str().unwrap(),
        "--kind",
        "trajectory",
        "--out",
        p,
    ]);
    let text = fs::read_to_string(plots.join("trajectory.dat")).unwrap();
    assert_eq!(
        text.split("\n\n").filter(|b| !b.trim().is_empty()).count(),
        41
    );

    let o = mrenkf(&[
        "plotdata",
        a.to_str().unwrap(),
        b.to_str().unwrap(),
        "--kind",
        "rankhist",
    ]);
    assert_eq!(o.status.code(), Some(2));
}
