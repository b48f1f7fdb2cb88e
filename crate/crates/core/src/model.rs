//! Deterministic matrices of the oversampled signal model.
//!
//! Per receive antenna the model for a block of `N` symbols at `M` samples per
//! symbol period (T = 1) is
//!
//! ```text
//! y = Z (I_N ⊗ u) s + G w
//! ```
//!
//! where `s` holds the symbol-rate noiseless outputs, `u = [0 … 0 1]ᵀ` places
//! each symbol on the last of its `M` sample slots, `Z` is the Toeplitz matrix
//! of the combined transmit/receive pulse and `G` the Toeplitz matched-filter
//! matrix acting on `3MN` white noise samples.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::linalg::{kron, to_complex, CMatrix, CVector, RMatrix, RVector, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TapNormalization {
    UnitEnergy,
}

/// Filter taps sampled at spacing `T/M` over `[-NT, NT]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterTaps {
    pub taps: Vec<f64>,
    pub oversampling: usize,
    pub span: usize,
    pub normalization: TapNormalization,
}

impl FilterTaps {
    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|t| t * t).sum()
    }
}

/// Unnormalized root-raised-cosine impulse response with unit symbol period.
pub fn rrc_value(t: f64, rolloff: f64) -> f64 {
    let b = rolloff;
    if t.abs() < 1e-12 {
        return 1.0 - b + 4.0 * b / PI;
    }
    let edge = 1.0 / (4.0 * b);
    if (t.abs() - edge).abs() < 1e-12 {
        let arg = PI / (4.0 * b);
        return b * FRAC_1_SQRT_2 * ((1.0 + 2.0 / PI) * arg.sin() + (1.0 - 2.0 / PI) * arg.cos());
    }
    let num = (PI * t * (1.0 - b)).sin() + 4.0 * b * t * (PI * t * (1.0 + b)).cos();
    let den = PI * t * (1.0 - (4.0 * b * t).powi(2));
    num / den
}

/// `2MN + 1` unit-energy RRC taps at `t = k/M`, `k ∈ [-MN, MN]`.
pub fn rrc_taps(cfg: &SystemConfig) -> Result<FilterTaps> {
    if !(cfg.rolloff > 0.0 && cfg.rolloff <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "rolloff must lie in (0, 1], got {}",
            cfg.rolloff
        )));
    }
    if cfg.oversampling == 0 || cfg.block_len == 0 {
        return Err(Error::InvalidConfig("oversampling and block_len must be positive".into()));
    }
    let m = cfg.oversampling as i64;
    let half = m * cfg.block_len as i64;
    let mut taps: Vec<f64> = (-half..=half)
        .map(|k| rrc_value(k as f64 / m as f64, cfg.rolloff))
        .collect();
    let scale = taps.iter().map(|t| t * t).sum::<f64>().sqrt();
    taps.iter_mut().for_each(|t| *t /= scale);
    Ok(FilterTaps {
        taps,
        oversampling: cfg.oversampling,
        span: cfg.block_len,
        normalization: TapNormalization::UnitEnergy,
    })
}

fn expected_taps(cfg: &SystemConfig) -> usize {
    2 * cfg.oversampling * cfg.block_len + 1
}

/// `MN × 3MN` Toeplitz matrix: row `r` holds the taps starting at column `r`.
pub fn build_g(taps: &FilterTaps, cfg: &SystemConfig) -> Result<RMatrix> {
    let len = expected_taps(cfg);
    if taps.len() != len {
        return Err(Error::DimensionMismatch {
            context: "build_g taps",
            expected: len,
            actual: taps.len(),
        });
    }
    let rows = cfg.oversampling * cfg.block_len;
    let mut g = RMatrix::zeros(rows, 3 * rows);
    for r in 0..rows {
        for (k, &t) in taps.taps.iter().enumerate() {
            g[(r, r + k)] = t;
        }
    }
    Ok(g)
}

/// Full linear convolution of two sequences.
pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Combined pulse `z = p ⋆ m` at lags `-(MN-1) ..= MN-1`, scaled so `z(0) = 1`.
///
/// Index `MN - 1 + lag` holds `z(lag · T/M)`.
pub fn combined_pulse(p: &FilterTaps, m: &FilterTaps, cfg: &SystemConfig) -> Result<Vec<f64>> {
    let len = expected_taps(cfg);
    for (name, t) in [("build_z pulse taps", p), ("build_z matched taps", m)] {
        if t.len() != len {
            return Err(Error::DimensionMismatch {
                context: name,
                expected: len,
                actual: t.len(),
            });
        }
    }
    if p.oversampling != m.oversampling || p.oversampling != cfg.oversampling {
        return Err(Error::InvalidConfig("pulse and matched filter sampled on different grids".into()));
    }
    let full = convolve(&p.taps, &m.taps);
    let center = len - 1;
    let peak = full[center];
    if peak == 0.0 || !peak.is_finite() {
        return Err(Error::NonFinite("combined pulse peak"));
    }
    let mn = cfg.oversampling * cfg.block_len;
    Ok((0..2 * mn - 1)
        .map(|i| full[center + i - (mn - 1)] / peak)
        .collect())
}

/// `MN × MN` Toeplitz matrix with `Z[i][j] = z((j - i) T/M)`.
pub fn build_z(p: &FilterTaps, m: &FilterTaps, cfg: &SystemConfig) -> Result<RMatrix> {
    let z = combined_pulse(p, m, cfg)?;
    let mn = cfg.oversampling * cfg.block_len;
    Ok(RMatrix::from_fn(mn, mn, |i, j| z[mn - 1 + j - i]))
}

/// The deterministic part of the model for one block length.
#[derive(Debug, Clone)]
pub struct EquivalentModel {
    pub n_users: usize,
    pub n_rx: usize,
    pub oversampling: usize,
    pub block_len: usize,
    pub taps: FilterTaps,
    pub g_mat: RMatrix,
    pub z_mat: RMatrix,
    pub u_vec: RVector,
    /// `Z (I_N ⊗ u)`, the `MN × N` symbol-to-sample response.
    pub symbol_response: RMatrix,
    /// `G Gᵀ`, the per-antenna noise correlation.
    pub ggt: RMatrix,
}

impl EquivalentModel {
    /// Builds the model for `cfg.block_len` symbols with RRC pulse and matched filter.
    pub fn new(cfg: &SystemConfig) -> Result<Self> {
        cfg.validate()?;
        let taps = rrc_taps(cfg)?;
        let g_mat = build_g(&taps, cfg)?;
        let z_mat = build_z(&taps, &taps, cfg)?;
        let m = cfg.oversampling;
        let n = cfg.block_len;
        let mut u_vec = RVector::zeros(m);
        u_vec[m - 1] = 1.0;
        let symbol_response = RMatrix::from_fn(m * n, n, |i, k| z_mat[(i, k * m + m - 1)]);
        let ggt = &g_mat * g_mat.transpose();
        Ok(EquivalentModel {
            n_users: cfg.n_users,
            n_rx: cfg.n_rx,
            oversampling: m,
            block_len: n,
            taps,
            g_mat,
            z_mat,
            u_vec,
            symbol_response,
            ggt,
        })
    }

    /// Model for the pilot phase (`N = pilot_len`).
    pub fn for_pilots(cfg: &SystemConfig) -> Result<Self> {
        Self::new(&cfg.pilot_config())
    }

    /// Samples per antenna, `MN`.
    pub fn samples_per_antenna(&self) -> usize {
        self.oversampling * self.block_len
    }

    /// Length of the received vector, `MN N_r`.
    pub fn n_obs(&self) -> usize {
        self.samples_per_antenna() * self.n_rx
    }

    pub fn n_params(&self) -> usize {
        self.n_rx * self.n_users
    }

    /// `M × M` leading block of `Z` times `u`: the pulse seen within one symbol.
    pub fn intra_symbol_pulse(&self) -> RVector {
        let m = self.oversampling;
        RVector::from_fn(m, |i, _| self.z_mat[(i, m - 1)])
    }

    /// `Z (I_N ⊗ u) X` for a user-major symbol block (`x[t N + n]`), `MN × N_t`.
    pub fn antenna_response(&self, x_block: &CVector) -> Result<CMatrix> {
        let n = self.block_len;
        if x_block.len() != n * self.n_users {
            return Err(Error::DimensionMismatch {
                context: "symbol block",
                expected: n * self.n_users,
                actual: x_block.len(),
            });
        }
        let x = CMatrix::from_column_slice(n, self.n_users, x_block.as_slice());
        Ok(to_complex(&self.symbol_response) * x)
    }

    /// Covariance of the filtered noise `σ²(I_{N_r} ⊗ G Gᵀ)`.
    pub fn noise_covariance(&self, noise_var: f64) -> RMatrix {
        let mn = self.samples_per_antenna();
        let mut c = RMatrix::zeros(self.n_obs(), self.n_obs());
        for r in 0..self.n_rx {
            c.view_mut((r * mn, r * mn), (mn, mn))
                .copy_from(&(&self.ggt * noise_var));
        }
        c
    }

    /// Noise covariance assumed by the Fisher-information analysis.
    ///
    /// Symbol-rate sampling (`M = 1`) is analysed with white noise `σ² I`; with
    /// oversampling the filtered covariance `σ²(I ⊗ G Gᵀ)` is used.
    pub fn analysis_noise_covariance(&self, noise_var: f64) -> RMatrix {
        if self.oversampling == 1 {
            RMatrix::identity(self.n_obs(), self.n_obs()) * noise_var
        } else {
            self.noise_covariance(noise_var)
        }
    }
}

/// Equivalent transmit matrix `Φ` (`MNN_r × N_rN_t`) with `y = Φ vec(H′) + n`.
///
/// `vec(H′)` is column-major, so column `t N_r + r` is the gain from user `t`
/// to antenna `r`; rows are antenna-major (`r MN + i`).
pub fn build_phi(x_block: &CVector, model: &EquivalentModel) -> Result<CMatrix> {
    let resp = model.antenna_response(x_block)?;
    let mn = model.samples_per_antenna();
    let (nr, nt) = (model.n_rx, model.n_users);
    let mut phi = CMatrix::zeros(mn * nr, nr * nt);
    for r in 0..nr {
        for t in 0..nt {
            phi.view_mut((r * mn, t * nr + r), (mn, 1))
                .copy_from(&resp.column(t));
        }
    }
    Ok(phi)
}

/// Noiseless response `(I_{N_r} ⊗ Z) U (H′ ⊗ I_N) x` evaluated with explicit
/// Kronecker products.
pub fn direct_response(h_mat: &CMatrix, x_block: &CVector, model: &EquivalentModel) -> Result<CVector> {
    let (nr, nt, n, m) = (model.n_rx, model.n_users, model.block_len, model.oversampling);
    if h_mat.shape() != (nr, nt) {
        return Err(Error::DimensionMismatch {
            context: "channel matrix",
            expected: nr * nt,
            actual: h_mat.len(),
        });
    }
    if x_block.len() != n * nt {
        return Err(Error::DimensionMismatch {
            context: "symbol block",
            expected: n * nt,
            actual: x_block.len(),
        });
    }
    let eye = |k: usize| CMatrix::identity(k, k);
    let z = to_complex(&model.z_mat);
    let u = CMatrix::from_fn(m, 1, |i, _| C64::new(model.u_vec[i], 0.0));
    let upsample = kron(&eye(nr * n), &u);
    let h_eq = kron(&eye(nr), &z) * upsample * kron(h_mat, &eye(n));
    Ok(h_eq * x_block)
}

/// Real-valued form: `[[Φᴿ, -Φᴵ], [Φᴵ, Φᴿ]]` and `[hᴿ; hᴵ]`.
pub fn stack_real(phi: &CMatrix, h: &CVector) -> Result<(RMatrix, RVector)> {
    if phi.ncols() != h.len() {
        return Err(Error::DimensionMismatch {
            context: "stack_real",
            expected: phi.ncols(),
            actual: h.len(),
        });
    }
    Ok((stack_real_matrix(phi), stack_real_vector(h)))
}

pub fn stack_real_matrix(phi: &CMatrix) -> RMatrix {
    let (r, c) = phi.shape();
    RMatrix::from_fn(2 * r, 2 * c, |i, j| {
        let v = phi[(i % r, j % c)];
        match (i < r, j < c) {
            (true, true) | (false, false) => v.re,
            (true, false) => -v.im,
            (false, true) => v.im,
        }
    })
}

pub fn stack_real_vector(h: &CVector) -> RVector {
    let n = h.len();
    RVector::from_fn(2 * n, |i, _| if i < n { h[i].re } else { h[i - n].im })
}

pub fn unstack_real_vector(v: &RVector) -> CVector {
    let n = v.len() / 2;
    CVector::from_fn(n, |i, _| C64::new(v[i], v[i + n]))
}
