//! Monte Carlo sweeps over SNR, pilot length and oversampling factor.
//!
//! Every trial draws its channel and pilots from a key derived from
//! `(seed, snr, τ, trial)` only, so different oversampling factors see the same
//! channels (common random numbers) and results do not depend on iteration
//! order or thread count. Noise uses a separate substream per `M`.

use std::f64::consts::LN_10;
use std::io::{self, Write};

use rayon::prelude::*;

use crate::channel::{draw_channel, draw_pilots, simulate_pilot_batch, ChannelState, QuantizedBatch};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::estimator::{estimate_channel_pipeline, CovarianceSource};
use crate::export::fmt_f64;
use crate::fisher::{biased_bound, fisher_lower_bound, fisher_white};
use crate::linalg::{CMatrix, CVector};
use crate::model::{build_phi, EquivalentModel};
use crate::rng::{derive_key, substream, SimRng};

pub const CSV_HEADER: &str = "m,snr_db,tau,nmse_db,nmse_stderr_db,crb_db,n_trials";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub snr_db_grid: Vec<f64>,
    pub pilot_grid: Vec<usize>,
    pub oversampling_set: Vec<usize>,
    pub n_trials: usize,
    /// Channel draws per point for the CRB column; 0 leaves it empty.
    pub crb_draws: usize,
    pub base_cfg: SystemConfig,
}

impl Default for SweepSpec {
    fn default() -> Self {
        let base_cfg = SystemConfig::default();
        SweepSpec {
            snr_db_grid: vec![0.0],
            pilot_grid: vec![base_cfg.pilot_len],
            oversampling_set: vec![base_cfg.oversampling],
            n_trials: 200,
            crb_draws: 0,
            base_cfg,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.snr_db_grid.is_empty() || self.pilot_grid.is_empty() || self.oversampling_set.is_empty() {
            return bad("sweep grids must be nonempty");
        }
        if self.n_trials == 0 {
            return bad("n_trials must be at least 1");
        }
        if self.snr_db_grid.iter().any(|s| !s.is_finite()) {
            return bad("snr_db_grid entries must be finite");
        }
        for p in self.points() {
            p.config(&self.base_cfg).validate()?;
        }
        Ok(())
    }

    /// Grid points ordered by `M`, then SNR, then `τ`.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &m in &self.oversampling_set {
            for &snr_db in &self.snr_db_grid {
                for &tau in &self.pilot_grid {
                    out.push(GridPoint { m, snr_db, tau });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub m: usize,
    pub snr_db: f64,
    pub tau: usize,
}

impl GridPoint {
    /// `base` with this point's oversampling, pilot length and noise level.
    pub fn config(&self, base: &SystemConfig) -> SystemConfig {
        SystemConfig {
            oversampling: self.m,
            pilot_len: self.tau,
            block_len: self.tau,
            ..*base
        }
        .with_snr_db(self.snr_db)
    }

    fn trial_key(&self, seed: u64, trial: usize) -> u64 {
        derive_key(seed, &[self.snr_db.to_bits(), self.tau as u64, trial as u64])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub m: usize,
    pub snr_db: f64,
    pub tau: usize,
    pub nmse_db: f64,
    pub stderr_db: f64,
    pub crb_db: Option<f64>,
    pub n_trials: usize,
    /// Why the point (or its CRB) could not be evaluated.
    pub error: Option<String>,
}

/// Everything one trial's estimator may look at.
pub struct Trial<'a> {
    pub cfg: &'a SystemConfig,
    pub model: &'a EquivalentModel,
    pub channel: &'a ChannelState,
    pub pilots: &'a CMatrix,
    pub batch: &'a QuantizedBatch,
}

/// Sample mean and standard error of per-trial NMSE, both linear.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NmseStats {
    pub mean: f64,
    pub stderr: f64,
    pub n_trials: usize,
}

impl NmseStats {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let ss: f64 = samples.iter().map(|v| (v - mean).powi(2)).sum();
            (ss / (n - 1) as f64 / n as f64).sqrt()
        } else {
            0.0
        };
        NmseStats {
            mean,
            stderr,
            n_trials: n,
        }
    }

    pub fn mean_db(&self) -> f64 {
        10.0 * self.mean.log10()
    }

    /// Delta-method standard error of [`Self::mean_db`].
    pub fn stderr_db(&self) -> f64 {
        10.0 / LN_10 * self.stderr / self.mean
    }
}

/// The LRA-LS estimate with the adaptive `R̂` recursion.
pub fn lra_ls(trial: &Trial) -> Result<CVector> {
    Ok(estimate_channel_pipeline(trial.batch, trial.pilots, trial.model, trial.cfg, &CovarianceSource::Adaptive)?.h_hat)
}

/// Channel and pilots for one trial key (stream 0, shared across `M`).
fn draw_trial_inputs(cfg: &SystemConfig, key: u64) -> Result<(ChannelState, CMatrix)> {
    let mut rng = substream(key, 0);
    let channel = draw_channel(&mut rng, cfg.n_rx, cfg.n_users);
    let pilots = draw_pilots(&mut rng, cfg.pilot_len, cfg.n_users)?;
    Ok((channel, pilots))
}

/// Per-trial `‖ĥ − h‖² / ‖h‖²` for `estimator` at one grid point.
pub fn nmse_samples<F>(base: &SystemConfig, point: GridPoint, n_trials: usize, estimator: F) -> Result<Vec<f64>>
where
    F: Fn(&Trial) -> Result<CVector> + Sync,
{
    let cfg = point.config(base);
    let model = EquivalentModel::for_pilots(&cfg)?;
    (0..n_trials)
        .into_par_iter()
        .map(|t| {
            let key = point.trial_key(cfg.seed, t);
            let (channel, pilots) = draw_trial_inputs(&cfg, key)?;
            let mut noise_rng = substream(key, cfg.oversampling as u64);
            let batch = simulate_pilot_batch(&mut noise_rng, &channel, &pilots, &model, cfg.noise_var())?;
            let trial = Trial {
                cfg: &cfg,
                model: &model,
                channel: &channel,
                pilots: &pilots,
                batch: &batch,
            };
            let h_hat = estimator(&trial)?;
            let err = (&h_hat - &channel.h_true).norm_squared() / channel.h_true.norm_squared();
            if !err.is_finite() {
                return Err(Error::NonFinite("trial NMSE"));
            }
            Ok(err)
        })
        .collect()
}

/// NMSE statistics of `estimator` at one point.
pub fn run_nmse_point_with<F>(base: &SystemConfig, point: GridPoint, n_trials: usize, estimator: F) -> Result<NmseStats>
where
    F: Fn(&Trial) -> Result<CVector> + Sync,
{
    if n_trials == 0 {
        return Err(Error::InvalidConfig("n_trials must be at least 1".into()));
    }
    Ok(NmseStats::from_samples(&nmse_samples(base, point, n_trials, estimator)?))
}

/// NMSE statistics of the LRA-LS estimator at one point.
pub fn run_nmse_point(base: &SystemConfig, point: GridPoint, n_trials: usize) -> Result<NmseStats> {
    run_nmse_point_with(base, point, n_trials, lra_ls)
}

/// CRB (from the FI, or its lower bound when oversampled) averaged over
/// `n_draws` channels, normalized as `Σ CRB_ii / (N_r N_t)`. Linear scale.
///
/// Each call assembles `2 N_r` covariance blocks of size `Mτ`, i.e.
/// `O(N_r (Mτ)²)` orthant evaluations and `O(N_r (Mτ)³)` for the
/// eigendecompositions.
pub fn crb_point(base: &SystemConfig, point: GridPoint, n_draws: usize) -> Result<f64> {
    let v = crb_samples(base, point, n_draws)?;
    Ok(v.iter().sum::<f64>() / v.len() as f64)
}

/// Per-draw values behind [`crb_point`].
pub fn crb_samples(base: &SystemConfig, point: GridPoint, n_draws: usize) -> Result<Vec<f64>> {
    if n_draws == 0 {
        return Err(Error::InvalidConfig("need at least one channel draw for the CRB".into()));
    }
    let cfg = point.config(base);
    let model = EquivalentModel::for_pilots(&cfg)?;
    let c_n = model.analysis_noise_covariance(cfg.noise_var());
    (0..n_draws)
        .map(|d| {
            let (channel, pilots) = draw_trial_inputs(&cfg, point.trial_key(cfg.seed, d))?;
            let phi = build_phi(&CVector::from_column_slice(pilots.as_slice()), &model)?;
            let fi = if cfg.oversampling == 1 {
                fisher_white(&phi, &channel.h_true, cfg.noise_std, &cfg)?
            } else {
                fisher_lower_bound(&phi, &channel.h_true, &c_n)?
            };
            let c = crate::fisher::crb(&fi)?;
            Ok(c.sum() / cfg.n_params() as f64)
        })
        .collect()
}

/// Biased-estimator bound `diag(J F̃⁻¹ Jᵀ)` for LRA-LS, normalized like
/// [`crb_point`] and averaged over `n_draws` channels. Linear scale.
///
/// The estimator, the FI and the noise all decouple across receive antennas:
/// antenna `r`'s samples depend only on row `r` of `H′`, `C_n` is block
/// diagonal per antenna, and `R̂` enters `A_p` only through its antenna-`r`
/// block. The bound is therefore evaluated on single-antenna problems, each
/// draw being one antenna; the normalized mean is unchanged while the
/// Jacobian needs `2N_t` instead of `2N_rN_t` perturbations.
pub fn biased_bound_point(base: &SystemConfig, point: GridPoint, n_draws: usize, n_mc: usize, fd_step: f64) -> Result<f64> {
    let v = biased_bound_samples(base, point, n_draws, n_mc, fd_step)?;
    Ok(v.iter().sum::<f64>() / v.len() as f64)
}

/// Per-draw values behind [`biased_bound_point`].
pub fn biased_bound_samples(
    base: &SystemConfig,
    point: GridPoint,
    n_draws: usize,
    n_mc: usize,
    fd_step: f64,
) -> Result<Vec<f64>> {
    if n_draws == 0 {
        return Err(Error::InvalidConfig("need at least one channel draw for the bound".into()));
    }
    let cfg = point.config(&SystemConfig { n_rx: 1, ..*base });
    let model = EquivalentModel::for_pilots(&cfg)?;
    let c_n = model.analysis_noise_covariance(cfg.noise_var());
    let mut out = Vec::with_capacity(n_draws);
    for d in 0..n_draws {
        let key = point.trial_key(cfg.seed, d);
        let (channel, pilots) = draw_trial_inputs(&cfg, key)?;
        let phi = build_phi(&CVector::from_column_slice(pilots.as_slice()), &model)?;
        let fi = fisher_lower_bound(&phi, &channel.h_true, &c_n)?;
        let estimator = |h: &CVector, rng: &mut SimRng| {
            let state = ChannelState::new(h.clone());
            let batch = simulate_pilot_batch(rng, &state, &pilots, &model, cfg.noise_var())?;
            Ok(estimate_channel_pipeline(&batch, &pilots, &model, &cfg, &CovarianceSource::Adaptive)?.h_hat)
        };
        let seed = derive_key(key, &[cfg.oversampling as u64]);
        let b = biased_bound(estimator, &channel.h_true, &fi, n_mc, fd_step, seed)?;
        out.push(b.sum() / cfg.n_params() as f64);
    }
    Ok(out)
}

/// Mean normalized CRB (dB) per grid point; singular points yield `Err`.
pub fn crb_curve(spec: &SweepSpec, n_draws: usize) -> Vec<(GridPoint, Result<f64>)> {
    spec.points()
        .into_par_iter()
        .map(|p| (p, crb_point(&spec.base_cfg, p, n_draws).map(|v| 10.0 * v.log10())))
        .collect()
}

fn failed_row(p: GridPoint, n_trials: usize, e: &Error) -> ResultRow {
    ResultRow {
        m: p.m,
        snr_db: p.snr_db,
        tau: p.tau,
        nmse_db: f64::NAN,
        stderr_db: f64::NAN,
        crb_db: None,
        n_trials,
        error: Some(e.to_string()),
    }
}

/// One row per grid point, in [`SweepSpec::points`] order. Failures are
/// recorded in the row and do not stop the sweep.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    Ok(spec
        .points()
        .into_par_iter()
        .map(|p| {
            let stats = match run_nmse_point(&spec.base_cfg, p, spec.n_trials) {
                Ok(s) => s,
                Err(e) => return failed_row(p, spec.n_trials, &e),
            };
            let mut row = ResultRow {
                m: p.m,
                snr_db: p.snr_db,
                tau: p.tau,
                nmse_db: stats.mean_db(),
                stderr_db: stats.stderr_db(),
                crb_db: None,
                n_trials: stats.n_trials,
                error: None,
            };
            if spec.crb_draws > 0 {
                match crb_point(&spec.base_cfg, p, spec.crb_draws) {
                    Ok(c) => row.crb_db = Some(10.0 * c.log10()),
                    Err(e) => row.error = Some(format!("crb: {e}")),
                }
            }
            row
        })
        .collect())
}

/// CSV with [`CSV_HEADER`]; an absent CRB is an empty field.
pub fn write_csv<W: Write>(out: &mut W, rows: &[ResultRow]) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.m,
            fmt_f64(r.snr_db),
            r.tau,
            fmt_f64(r.nmse_db),
            fmt_f64(r.stderr_db),
            r.crb_db.map(fmt_f64).unwrap_or_default(),
            r.n_trials
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_base() -> SystemConfig {
        SystemConfig {
            n_users: 2,
            n_rx: 4,
            ..Default::default()
        }
    }

    fn point(m: usize, snr_db: f64, tau: usize) -> GridPoint {
        GridPoint { m, snr_db, tau }
    }

    #[test]
    fn genie_and_zero_estimators() {
        let base = small_base();
        let p = point(2, 0.0, 8);
        let genie = run_nmse_point_with(&base, p, 20, |t| Ok(t.channel.h_true.clone())).unwrap();
        assert_eq!(genie.mean, 0.0);
        let zero = run_nmse_point_with(&base, p, 20, |t| Ok(CVector::zeros(t.channel.h_true.len()))).unwrap();
        assert!((zero.mean - 1.0).abs() < 1e-15);
        assert!(zero.mean_db().abs() < 1e-12);
    }

    #[test]
    fn channels_are_shared_across_oversampling() {
        let base = small_base();
        let grab = |m| {
            nmse_samples(&base, point(m, 5.0, 8), 3, |t| Ok(t.channel.h_true.clone() * crate::linalg::C64::new(2.0, 0.0)))
                .unwrap()
        };
        assert_eq!(grab(1), grab(3));
    }

    #[test]
    fn longer_pilots_help() {
        let base = small_base();
        let short = run_nmse_point(&base, point(2, 0.0, 10), 300).unwrap();
        let long = run_nmse_point(&base, point(2, 0.0, 80), 300).unwrap();
        assert!(long.mean <= short.mean, "{} vs {}", long.mean, short.mean);
    }

    #[test]
    fn stderr_scales_with_trials() {
        let base = small_base();
        let a = run_nmse_point(&base, point(1, 0.0, 8), 400).unwrap();
        let b = run_nmse_point(&base, point(1, 0.0, 8), 1600).unwrap();
        let ratio = a.stderr / b.stderr;
        assert!((ratio - 2.0).abs() < 0.4, "{ratio}");
    }

    #[test]
    fn sweep_rows_and_order_independence() {
        let spec = SweepSpec {
            snr_db_grid: vec![-5.0, 5.0],
            pilot_grid: vec![8, 12],
            oversampling_set: vec![1, 2],
            n_trials: 10,
            crb_draws: 1,
            base_cfg: small_base(),
        };
        let rows = run_sweep(&spec).unwrap();
        assert_eq!(rows.len(), 8);
        assert!(rows.iter().all(|r| r.nmse_db.is_finite() && r.crb_db.unwrap().is_finite()));
        let mut shuffled = spec.clone();
        shuffled.snr_db_grid.reverse();
        shuffled.oversampling_set.reverse();
        let other = run_sweep(&shuffled).unwrap();
        for r in &rows {
            let twin = other.iter().find(|o| o.m == r.m && o.tau == r.tau && o.snr_db == r.snr_db).unwrap();
            assert_eq!(twin, r);
        }
        let single = SweepSpec {
            snr_db_grid: vec![5.0],
            pilot_grid: vec![12],
            oversampling_set: vec![2],
            crb_draws: 0,
            ..spec
        };
        let row = &run_sweep(&single).unwrap()[0];
        let direct = run_nmse_point(&single.base_cfg, point(2, 5.0, 12), 10).unwrap();
        assert_eq!(row.nmse_db, direct.mean_db());
    }

    #[test]
    fn crb_decreases_with_pilot_length() {
        let base = small_base();
        let c: Vec<f64> = [8, 16, 32].iter().map(|&t| crb_point(&base, point(1, 0.0, t), 3).unwrap()).collect();
        assert!(c[0] > c[1] && c[1] > c[2], "{c:?}");
    }

    #[test]
    fn scalar_crb_point() {
        // one user, one antenna, single pilot at h = whatever is drawn: compare
        // against the two routes through the Fisher module
        let base = SystemConfig {
            n_users: 1,
            n_rx: 1,
            ..Default::default()
        };
        let p = point(1, 0.0, 4);
        let cfg = p.config(&base);
        let model = EquivalentModel::for_pilots(&cfg).unwrap();
        let (ch, pil) = draw_trial_inputs(&cfg, p.trial_key(cfg.seed, 0)).unwrap();
        let phi = build_phi(&CVector::from_column_slice(pil.as_slice()), &model).unwrap();
        let lb = fisher_lower_bound(&phi, &ch.h_true, &model.analysis_noise_covariance(cfg.noise_var())).unwrap();
        let via_lb = crate::fisher::crb(&lb).unwrap().sum();
        assert!((crb_point(&base, p, 1).unwrap() - via_lb).abs() < 1e-6 * via_lb);
    }

    #[test]
    fn estimator_decouples_across_antennas() {
        let cfg2 = GridPoint { m: 2, snr_db: 0.0, tau: 8 }.config(&SystemConfig {
            n_users: 2,
            n_rx: 2,
            ..Default::default()
        });
        let cfg1 = SystemConfig { n_rx: 1, ..cfg2 };
        let (ch2, pilots) = draw_trial_inputs(&cfg2, 17).unwrap();
        let h1 = CVector::from_fn(2, |t, _| ch2.h_true[t * 2]);
        let run = |cfg: &SystemConfig, h: &CVector| {
            let model = EquivalentModel::for_pilots(cfg).unwrap();
            let batch =
                simulate_pilot_batch(&mut substream(3, 0), &ChannelState::new(h.clone()), &pilots, &model, cfg.noise_var())
                    .unwrap();
            estimate_channel_pipeline(&batch, &pilots, &model, cfg, &CovarianceSource::Adaptive).unwrap().h_hat
        };
        let full = run(&cfg2, &ch2.h_true);
        let single = run(&cfg1, &h1);
        for t in 0..2 {
            assert!((full[t * 2] - single[t]).norm() < 1e-12);
        }
    }

    #[test]
    fn biased_bound_point_basics() {
        let base = SystemConfig {
            n_users: 1,
            ..Default::default()
        };
        let p = point(2, 0.0, 4);
        let b = biased_bound_point(&base, p, 1, 1000, 0.05).unwrap();
        assert!(b.is_finite() && b > 0.0);
        assert!(biased_bound_point(&base, p, 1, 10, 0.05).is_err());
    }

    #[test]
    fn csv_layout() {
        let rows = vec![ResultRow {
            m: 2,
            snr_db: 0.0,
            tau: 40,
            nmse_db: -3.5,
            stderr_db: 0.01,
            crb_db: None,
            n_trials: 5,
            error: None,
        }];
        let mut buf = Vec::new();
        write_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines[1], "2,0.0000000000000000e0,40,-3.5000000000000000e0,1.0000000000000000e-2,,5");
        assert!(text.ends_with('\n') && !text.contains('\r'));
    }
}
