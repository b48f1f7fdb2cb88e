//! Configuration parsing and verb dispatch for the `onebit` binary.
//!
//! Config files are flat `key = value` lines; `#` starts a comment. List
//! values are comma separated. Later sources win: built-in defaults, then
//! the file, then `--set` overrides, then `--seed` / `--trials`.

use std::collections::HashSet;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use onebit_core::channel::{draw_channel, draw_pilots};
use onebit_core::experiments::{crb_curve, run_sweep, write_csv, GridPoint, ResultRow, SweepSpec};
use onebit_core::export::write_matrix_csv;
use onebit_core::fisher::{fisher_lower_bound, fisher_white, FisherResult};
use onebit_core::linalg::CVector;
use onebit_core::model::{build_phi, EquivalentModel};
use onebit_core::rng::{derive_key, substream};
use onebit_core::validation::{run_validation, Fault};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Verb {
    NmseVsSnr,
    NmseVsPilots,
    Crb,
    FisherCheck,
    Validate,
}

#[derive(Debug, Parser)]
#[command(name = "onebit", version, about = "1-bit oversampled MIMO channel estimation experiments")]
pub struct Cli {
    #[arg(value_enum)]
    pub verb: Verb,
    /// Flat key=value configuration file
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override a configuration key (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output file (CSV); stdout when absent
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, value_name = "U64")]
    pub seed: Option<u64>,
    #[arg(long, value_name = "N")]
    pub trials: Option<usize>,
    #[arg(long, hide = true, value_name = "FAULT")]
    pub inject_fault: Option<Fault>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{0}")]
    CheckFailed(String),
    #[error(transparent)]
    Core(#[from] onebit_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io { .. } => 3,
            CliError::CheckFailed(_) => 1,
            CliError::Core(onebit_core::Error::InvalidConfig(_) | onebit_core::Error::NoPilotDesign { .. }) => 2,
            CliError::Core(_) => 1,
        }
    }
}

fn io_err(path: impl Into<String>) -> impl FnOnce(io::Error) -> CliError {
    let path = path.into();
    move |source| CliError::Io { path, source }
}

pub const KEYS: [&str; 13] = [
    "n_users",
    "n_rx",
    "oversampling",
    "block_len",
    "pilot_len",
    "rolloff",
    "forgetting",
    "seed",
    "snr_db_grid",
    "pilot_grid",
    "oversampling_set",
    "n_trials",
    "crb_draws",
];

/// Parsed configuration plus the keys that were set explicitly.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub sweep: SweepSpec,
    pub explicit: HashSet<&'static str>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            sweep: SweepSpec::default(),
            explicit: HashSet::new(),
        }
    }
}

fn parse_scalar<T: std::str::FromStr>(key: &str, value: &str, at: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Usage(format!("{at}: cannot parse '{value}' for key '{key}'")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str, at: &str) -> Result<Vec<T>, CliError> {
    let items: Vec<T> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_scalar(key, s, at))
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err(CliError::Usage(format!("{at}: key '{key}' needs at least one value")));
    }
    Ok(items)
}

impl RunConfig {
    /// Applies one `key=value` assignment; `at` locates it in error messages.
    pub fn assign(&mut self, key: &str, value: &str, at: &str) -> Result<(), CliError> {
        let key = KEYS
            .iter()
            .copied()
            .find(|k| *k == key)
            .ok_or_else(|| CliError::Usage(format!("{at}: unknown key '{key}'")))?;
        let s = &mut self.sweep;
        let c = &mut s.base_cfg;
        match key {
            "n_users" => c.n_users = parse_scalar(key, value, at)?,
            "n_rx" => c.n_rx = parse_scalar(key, value, at)?,
            "oversampling" => c.oversampling = parse_scalar(key, value, at)?,
            "block_len" => c.block_len = parse_scalar(key, value, at)?,
            "pilot_len" => c.pilot_len = parse_scalar(key, value, at)?,
            "rolloff" => c.rolloff = parse_scalar(key, value, at)?,
            "forgetting" => c.forgetting = parse_scalar(key, value, at)?,
            "seed" => c.seed = parse_scalar(key, value, at)?,
            "snr_db_grid" => s.snr_db_grid = parse_list(key, value, at)?,
            "pilot_grid" => s.pilot_grid = parse_list(key, value, at)?,
            "oversampling_set" => s.oversampling_set = parse_list(key, value, at)?,
            "n_trials" => s.n_trials = parse_scalar(key, value, at)?,
            "crb_draws" => s.crb_draws = parse_scalar(key, value, at)?,
            _ => unreachable!("key list and match arms disagree"),
        }
        let range = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(CliError::Usage(format!("{at}: key '{key}' {what}")))
            }
        };
        match key {
            "rolloff" => range(c.rolloff > 0.0 && c.rolloff <= 1.0, "must lie in (0, 1]")?,
            "forgetting" => range(c.forgetting > 0.0 && c.forgetting <= 1.0, "must lie in (0, 1]")?,
            "n_users" | "n_rx" | "oversampling" | "block_len" | "pilot_len" => {
                let v: usize = parse_scalar(key, value, at)?;
                range(v > 0, "must be positive")?
            }
            "n_trials" => range(s.n_trials > 0, "must be positive")?,
            "snr_db_grid" => range(s.snr_db_grid.iter().all(|v| v.is_finite()), "must be finite")?,
            "pilot_grid" => range(s.pilot_grid.iter().all(|&v| v > 0), "must be positive")?,
            "oversampling_set" => range(s.oversampling_set.iter().all(|&v| v > 0), "must be positive")?,
            _ => {}
        }
        self.explicit.insert(key);
        Ok(())
    }

    /// Parses config file text; errors carry `origin:line`.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), CliError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = format!("{origin}:{}", i + 1);
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("{at}: expected key = value, got '{line}'")))?;
            self.assign(k.trim(), v.trim(), &at)?;
        }
        Ok(())
    }

    pub fn apply_override(&mut self, kv: &str) -> Result<(), CliError> {
        let at = format!("--set {kv}");
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("{at}: expected key=value")))?;
        self.assign(k.trim(), v.trim(), &at)
    }

    /// Fills list keys the user did not set with per-verb defaults.
    pub fn apply_verb_defaults(&mut self, verb: Verb) {
        let s = &mut self.sweep;
        let set = |k: &str| self.explicit.contains(k);
        if !set("pilot_grid") {
            s.pilot_grid = match verb {
                Verb::NmseVsPilots => vec![10, 20, 40, 80],
                _ => vec![s.base_cfg.pilot_len],
            };
        }
        if !set("oversampling_set") {
            s.oversampling_set = match verb {
                Verb::NmseVsSnr => vec![1, 2, 3],
                Verb::NmseVsPilots => vec![1, 2],
                _ => vec![s.base_cfg.oversampling],
            };
        }
        if !set("snr_db_grid") && verb == Verb::NmseVsSnr {
            s.snr_db_grid = (-2..=4).map(|k| 5.0 * k as f64).collect();
        }
        if !set("crb_draws") && verb == Verb::Crb {
            s.crb_draws = 3;
        }
    }
}

/// Defaults, then the file at `path`, then `overrides` in order.
pub fn parse_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(p) = path {
        let text = fs::read_to_string(p).map_err(io_err(p.display().to_string()))?;
        cfg.apply_text(&text, &p.display().to_string())?;
    }
    for kv in overrides {
        cfg.apply_override(kv)?;
    }
    Ok(cfg)
}

/// The fully resolved configuration for one invocation.
pub fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = parse_config(cli.config.as_deref(), &cli.overrides)?;
    if let Some(seed) = cli.seed {
        cfg.sweep.base_cfg.seed = seed;
        cfg.explicit.insert("seed");
    }
    if let Some(n) = cli.trials {
        if n == 0 {
            return Err(CliError::Usage("--trials must be positive".into()));
        }
        cfg.sweep.n_trials = n;
        cfg.explicit.insert("n_trials");
    }
    cfg.apply_verb_defaults(cli.verb);
    cfg.sweep
        .validate()
        .map_err(|e| CliError::Usage(format!("configuration rejected: {e}")))?;
    Ok(cfg)
}

fn row_summary(r: &ResultRow) -> String {
    let crb = r.crb_db.map_or("-".to_string(), |c| format!("{c:.3} dB"));
    let mut s = format!(
        "M={} snr={:.1} dB tau={} nmse={:.3} dB (se {:.3}) crb={} trials={}",
        r.m, r.snr_db, r.tau, r.nmse_db, r.stderr_db, crb, r.n_trials
    );
    if let Some(e) = &r.error {
        s.push_str(&format!(" error: {e}"));
    }
    s
}

/// Per-row summaries go to `log`, or to stderr when the CSV itself goes to stdout.
fn summarize(rows: &[ResultRow], out: Option<&Path>, log: &mut dyn Write) -> Result<(), CliError> {
    let mut err = io::stderr().lock();
    let sink: &mut dyn Write = if out.is_some() { log } else { &mut err };
    for r in rows {
        writeln!(sink, "{}", row_summary(r)).map_err(io_err("<stdout>"))?;
    }
    Ok(())
}

fn emit_csv(rows: &[ResultRow], out: Option<&Path>, log: &mut dyn Write) -> Result<(), CliError> {
    match out {
        Some(p) => {
            let mut buf = Vec::new();
            write_csv(&mut buf, rows).map_err(io_err("<buffer>"))?;
            fs::write(p, buf).map_err(io_err(p.display().to_string()))?;
            writeln!(log, "wrote {} rows to {}", rows.len(), p.display()).map_err(io_err("<stdout>"))
        }
        None => write_csv(&mut io::stdout().lock(), rows).map_err(io_err("<stdout>")),
    }
}

fn fisher_check(cfg: &RunConfig, out: Option<&Path>, log: &mut dyn Write) -> Result<(), CliError> {
    let s = &cfg.sweep;
    let p = GridPoint {
        m: s.oversampling_set[0],
        snr_db: s.snr_db_grid[0],
        tau: s.pilot_grid[0],
    };
    let sys = p.config(&s.base_cfg);
    let model = EquivalentModel::for_pilots(&sys)?;
    let mut rng = substream(derive_key(sys.seed, &[p.snr_db.to_bits(), p.tau as u64, 0]), 0);
    let ch = draw_channel(&mut rng, sys.n_rx, sys.n_users);
    let x = draw_pilots(&mut rng, sys.pilot_len, sys.n_users)?;
    let phi = build_phi(&CVector::from_column_slice(x.as_slice()), &model)?;
    let mut results: Vec<FisherResult> = Vec::new();
    if sys.oversampling == 1 {
        results.push(fisher_white(&phi, &ch.h_true, sys.noise_std, &sys)?);
    }
    results.push(fisher_lower_bound(
        &phi,
        &ch.h_true,
        &model.analysis_noise_covariance(sys.noise_var()),
    )?);
    let w = |e| CliError::Io {
        path: "<stdout>".into(),
        source: e,
    };
    writeln!(log, "instance M={} snr={} dB tau={} N_t={} N_r={}", p.m, p.snr_db, p.tau, sys.n_users, sys.n_rx).map_err(w)?;
    for r in &results {
        writeln!(log, "{}", r.summary()).map_err(w)?;
    }
    if results.len() == 2 {
        let d = (&results[0].fi_matrix - &results[1].fi_matrix).norm() / results[0].fi_matrix.norm();
        writeln!(log, "relative difference exact vs lower bound: {d:.3e}").map_err(w)?;
    }
    let mut buf = Vec::new();
    for r in &results {
        writeln!(buf, "# {}", r.kind).map_err(io_err("<buffer>"))?;
        write_matrix_csv(&mut buf, &r.fi_matrix).map_err(io_err("<buffer>"))?;
    }
    match out {
        Some(p) => fs::write(p, buf).map_err(io_err(p.display().to_string())),
        None => log.write_all(&buf).map_err(w),
    }
}

/// Runs one invocation, writing human-readable output to `log`.
pub fn run(cli: &Cli, log: &mut dyn Write) -> Result<(), CliError> {
    if cli.verb == Verb::Validate {
        let results = run_validation(cli.inject_fault);
        let mut failed = Vec::new();
        for c in &results {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            writeln!(log, "{tag} {:<20} {}", c.name, c.detail).map_err(io_err("<stdout>"))?;
            if !c.passed {
                failed.push(c.name);
            }
        }
        return if failed.is_empty() {
            Ok(())
        } else {
            Err(CliError::CheckFailed(format!("failed checks: {}", failed.join(", "))))
        };
    }
    let cfg = resolve(cli)?;
    let out = cli.out.as_deref();
    match cli.verb {
        Verb::NmseVsSnr | Verb::NmseVsPilots => {
            let rows = run_sweep(&cfg.sweep)?;
            summarize(&rows, out, log)?;
            emit_csv(&rows, out, log)
        }
        Verb::Crb => {
            let rows: Vec<ResultRow> = crb_curve(&cfg.sweep, cfg.sweep.crb_draws)
                .into_iter()
                .map(|(p, c)| ResultRow {
                    m: p.m,
                    snr_db: p.snr_db,
                    tau: p.tau,
                    nmse_db: f64::NAN,
                    stderr_db: f64::NAN,
                    crb_db: c.as_ref().ok().copied(),
                    n_trials: 0,
                    error: c.err().map(|e| e.to_string()),
                })
                .collect();
            summarize(&rows, out, log)?;
            emit_csv(&rows, out, log)
        }
        Verb::FisherCheck => fisher_check(&cfg, out, log),
        Verb::Validate => unreachable!(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_defaults() {
        let c = parse_config(None, &[]).unwrap();
        let b = c.sweep.base_cfg;
        assert_eq!((b.n_users, b.n_rx, b.pilot_len), (4, 16, 40));
        assert_eq!((b.rolloff, b.forgetting), (0.8, 0.91));
        let mut c = RunConfig::default();
        c.apply_text("# only comments\n\n   # more\n", "x").unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn override_beats_file() {
        let mut c = RunConfig::default();
        c.apply_text("oversampling = 2\nsnr_db_grid = -5, 0 ,5\n", "f").unwrap();
        c.apply_override("oversampling=3").unwrap();
        assert_eq!(c.sweep.base_cfg.oversampling, 3);
        assert_eq!(c.sweep.snr_db_grid, vec![-5.0, 0.0, 5.0]);
    }

    #[test]
    fn errors_name_key_and_line() {
        let mut c = RunConfig::default();
        let e = c.apply_text("n_rx = 4\nbogus = 1\n", "cfg.txt").unwrap_err().to_string();
        assert!(e.contains("cfg.txt:2") && e.contains("bogus"), "{e}");
        let e = c.apply_text("\nrolloff = 1.5\n", "cfg.txt").unwrap_err().to_string();
        assert!(e.contains("cfg.txt:2") && e.contains("rolloff") && e.contains("(0, 1]"), "{e}");
        let e = c.apply_text("n_trials = many\n", "cfg.txt").unwrap_err().to_string();
        assert!(e.contains("cfg.txt:1") && e.contains("n_trials"), "{e}");
        assert_eq!(CliError::Usage(e).exit_code(), 2);
    }

    #[test]
    fn verb_defaults_respect_explicit_keys() {
        let mut c = RunConfig::default();
        c.apply_override("oversampling_set=2").unwrap();
        c.apply_verb_defaults(Verb::NmseVsSnr);
        assert_eq!(c.sweep.oversampling_set, vec![2]);
        assert_eq!(c.sweep.snr_db_grid.len(), 7);
    }
}
