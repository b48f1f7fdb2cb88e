use std::fs;
use std::process::{Command, Output};

fn onebit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_onebit")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: [&str; 6] = ["--set", "n_users=1", "--set", "n_rx=2", "--set", "pilot_len=8"];

#[test]
fn validate_passes_on_clean_build() {
    let o = onebit(&["validate"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).lines().all(|l| l.starts_with("PASS")));
}

#[test]
fn validate_reports_injected_fault() {
    let o = onebit(&["validate", "--inject-fault", "orthant-constant"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL orthant_sheppard"));
    assert!(stderr(&o).contains("orthant_sheppard"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(onebit(&["frobnicate"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "n_rx = 4\n\nwidget = 3\n").unwrap();
    let o = onebit(&["crb", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(":3") && stderr(&o).contains("widget"), "{}", stderr(&o));
    let o = onebit(&["crb", "--set", "rolloff=1.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("rolloff"));
}

#[test]
fn missing_config_is_io_error() {
    let o = onebit(&["crb", "--config", "/nonexistent/onebit.cfg"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("/nonexistent/onebit.cfg"));
}

#[test]
fn snr_sweep_row_count_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let mut args: Vec<&str> = vec!["nmse-vs-snr", "--trials", "4", "--seed", "9"];
    args.extend(SMALL);
    let run = |out: &str| {
        let mut v = args.clone();
        v.extend(["--out", out]);
        let o = onebit(&v);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        o
    };
    let o = run(a.to_str().unwrap());
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("M=")).count(), 21);
    run(b.to_str().unwrap());
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 22);
    assert!(text.starts_with("m,snr_db,tau,nmse_db,nmse_stderr_db,crb_db,n_trials\n"));
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn crb_at_symbol_rate_is_finite() {
    let mut args = vec!["crb", "--set", "oversampling=1", "--set", "snr_db_grid=-5,0,5"];
    args.extend(SMALL);
    let o = onebit(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = stdout(&o);
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    for r in rows {
        let crb: f64 = r.split(',').nth(5).unwrap().parse().unwrap();
        assert!(crb.is_finite());
    }
}

#[test]
fn fisher_check_prints_summaries() {
    let mut args = vec!["fisher-check", "--set", "oversampling=1"];
    args.extend(SMALL);
    let o = onebit(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = stdout(&o);
    assert!(s.contains("kind=exact_white") && s.contains("kind=lower_bound_colored"));
    assert!(s.contains("# exact_white\n4,4\n"));
}
