//! Bussgang linearization and the low-resolution-aware least-squares (LRA-LS)
//! channel estimator with its adaptive channel-correlation recursion.
//!
//! After the 1-bit ADCs the pilot observation is modelled as
//! `y_Qp = A_p Φ_p h′ + ñ_p` with the diagonal Bussgang gain
//! `A_p = √(2/π) diag(C_yp)^{-1/2}`. The LS solution of that linear model is the
//! LRA-LS estimate. `C_yp` needs the channel correlation `R_h′`, which the
//! receiver tracks per pilot symbol from pseudo-inverse instantaneous estimates.

use std::f64::consts::FRAC_2_PI;

use crate::channel::QuantizedBatch;
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::linalg::{hermitize, least_squares, CMatrix, CVector, RVector, C64};
use crate::model::EquivalentModel;

/// Floor applied to `diag(C_yp)` before the inverse square root.
pub const COV_DIAG_FLOOR: f64 = 1e-12;

/// `A_p`, the diagonal of `C_yp` it came from, and `Φ̃_p = A_p Φ_p`.
///
/// Only the diagonal of `C_yp` is kept: it is all the gain needs, and the full
/// matrix is `(Mτ N_r)²`. Use [`cov_yp`] when the full matrix is wanted.
#[derive(Debug, Clone)]
pub struct BussgangOperator {
    pub a_p: RVector,
    pub c_yp_diag: RVector,
    pub phi_eff: CMatrix,
}

impl BussgangOperator {
    pub fn new(phi_p: &CMatrix, c_yp_diag: RVector) -> Result<Self> {
        if c_yp_diag.len() != phi_p.nrows() {
            return Err(Error::DimensionMismatch {
                context: "Bussgang operator",
                expected: phi_p.nrows(),
                actual: c_yp_diag.len(),
            });
        }
        let a_p = bussgang_gain(&c_yp_diag)?;
        let mut phi_eff = phi_p.clone();
        for (i, mut row) in phi_eff.row_iter_mut().enumerate() {
            row *= C64::new(a_p[i], 0.0);
        }
        Ok(BussgangOperator {
            a_p,
            c_yp_diag,
            phi_eff,
        })
    }
}

/// Recursive estimate of `R_h′` with forgetting.
#[derive(Debug, Clone)]
pub struct EstimatorState {
    pub r_hat: CMatrix,
    pub forgetting: f64,
    pub step: usize,
}

impl EstimatorState {
    /// All-zeros start at step 1.
    pub fn new(n_params: usize, forgetting: f64) -> Self {
        EstimatorState {
            r_hat: CMatrix::zeros(n_params, n_params),
            forgetting,
            step: 1,
        }
    }
}

fn check_rows(phi_p: &CMatrix, model: &EquivalentModel) -> Result<()> {
    if phi_p.nrows() != model.n_obs() {
        return Err(Error::DimensionMismatch {
            context: "Φ_p rows vs model",
            expected: model.n_obs(),
            actual: phi_p.nrows(),
        });
    }
    Ok(())
}

/// Full `C_yp = Φ_p R_h Φ_pᴴ + σ²(I_{N_r} ⊗ G Gᵀ)`.
pub fn cov_yp(phi_p: &CMatrix, r_h: &CMatrix, model: &EquivalentModel, noise_var: f64) -> Result<CMatrix> {
    check_rows(phi_p, model)?;
    if r_h.shape() != (phi_p.ncols(), phi_p.ncols()) {
        return Err(Error::DimensionMismatch {
            context: "R_h",
            expected: phi_p.ncols(),
            actual: r_h.nrows(),
        });
    }
    let mut c = phi_p * r_h * phi_p.adjoint();
    let mn = model.samples_per_antenna();
    for r in 0..model.n_rx {
        for i in 0..mn {
            for j in 0..mn {
                c[(r * mn + i, r * mn + j)] += C64::new(noise_var * model.ggt[(i, j)], 0.0);
            }
        }
    }
    hermitize(&mut c);
    Ok(c)
}

/// Diagonal of [`cov_yp`] without forming the full matrix.
pub fn cov_yp_diag(phi_p: &CMatrix, r_h: &CMatrix, model: &EquivalentModel, noise_var: f64) -> Result<RVector> {
    check_rows(phi_p, model)?;
    if r_h.shape() != (phi_p.ncols(), phi_p.ncols()) {
        return Err(Error::DimensionMismatch {
            context: "R_h",
            expected: phi_p.ncols(),
            actual: r_h.nrows(),
        });
    }
    let mn = model.samples_per_antenna();
    let mut nz = Vec::with_capacity(phi_p.ncols());
    Ok(RVector::from_fn(phi_p.nrows(), |i, _| {
        nz.clear();
        nz.extend((0..phi_p.ncols()).filter(|&j| phi_p[(i, j)] != C64::new(0.0, 0.0)));
        let mut q = 0.0;
        for &a in &nz {
            for &b in &nz {
                q += (phi_p[(i, a)] * r_h[(a, b)] * phi_p[(i, b)].conj()).re;
            }
        }
        q + noise_var * model.ggt[(i % mn, i % mn)]
    }))
}

/// `A_p = √(2/π) diag(C_yp)^{-1/2}`, returned as the diagonal.
pub fn bussgang_gain(c_yp_diag: &RVector) -> Result<RVector> {
    for (index, &value) in c_yp_diag.iter().enumerate() {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::DegenerateVariance { index, value });
        }
    }
    let k = FRAC_2_PI.sqrt();
    Ok(c_yp_diag.map(|d| k / d.sqrt()))
}

/// LRA-LS estimate `(Φ̃ᴴΦ̃)⁻¹ Φ̃ᴴ y_Qp`, solved through an SVD.
pub fn lra_ls_estimate(batch: &QuantizedBatch, op: &BussgangOperator) -> Result<CVector> {
    least_squares(&op.phi_eff, &batch.y_quantized)
}

/// Explicit `x[n]ᵀ ⊗ I_{N_r} ⊗ Z′u` for one pilot symbol (`MN_r × N_rN_t`).
pub fn single_symbol_matrix(x_n: &CVector, model: &EquivalentModel) -> CMatrix {
    let v = model.intra_symbol_pulse();
    let (m, nr, nt) = (model.oversampling, model.n_rx, model.n_users);
    let mut a = CMatrix::zeros(m * nr, nr * nt);
    for t in 0..nt {
        for r in 0..nr {
            for k in 0..m {
                a[(r * m + k, t * nr + r)] = x_n[t] * v[k];
            }
        }
    }
    a
}

/// Instantaneous estimate `(x[n]ᵀ ⊗ I_{N_r} ⊗ Z′u)⁺ y_Q[n]`.
///
/// `Z′` is the leading `M × M` block of `Z`. The pseudo-inverse of the
/// Kronecker product factors as `(xᵀ)⁺ ⊗ I ⊗ (Z′u)⁺`.
pub fn instantaneous_estimate(y_q_n: &CVector, x_n: &CVector, model: &EquivalentModel) -> Result<CVector> {
    let (m, nr, nt) = (model.oversampling, model.n_rx, model.n_users);
    if x_n.len() != nt {
        return Err(Error::DimensionMismatch {
            context: "pilot symbol",
            expected: nt,
            actual: x_n.len(),
        });
    }
    if y_q_n.len() != m * nr {
        return Err(Error::DimensionMismatch {
            context: "per-symbol observation",
            expected: m * nr,
            actual: y_q_n.len(),
        });
    }
    let x_energy = x_n.norm_squared();
    if x_energy == 0.0 {
        return Err(Error::ZeroSymbol);
    }
    let v = model.intra_symbol_pulse();
    let v_energy = v.norm_squared();
    let per_antenna: Vec<C64> = (0..nr)
        .map(|r| (0..m).fold(C64::new(0.0, 0.0), |acc, k| acc + y_q_n[r * m + k] * v[k]) / v_energy)
        .collect();
    Ok(CVector::from_fn(nr * nt, |i, _| {
        let (t, r) = (i / nr, i % nr);
        x_n[t].conj() / x_energy * per_antenna[r]
    }))
}

/// `R̂[n+1] = λ R̂[n] + ĥ[n] ĥ[n]ᴴ`, Hermitian-symmetrized.
pub fn update_rhat(state: EstimatorState, h_inst: &CVector) -> EstimatorState {
    let mut r_hat = state.r_hat * C64::new(state.forgetting, 0.0);
    r_hat += h_inst * h_inst.adjoint();
    hermitize(&mut r_hat);
    EstimatorState {
        r_hat,
        forgetting: state.forgetting,
        step: state.step + 1,
    }
}

/// Gathers the `M N_r` samples of pilot symbol `n` from the antenna-major block.
pub fn symbol_observation(y: &CVector, n: usize, model: &EquivalentModel) -> CVector {
    let (m, mn) = (model.oversampling, model.samples_per_antenna());
    CVector::from_fn(m * model.n_rx, |i, _| {
        let (r, k) = (i / m, i % m);
        y[r * mn + n * m + k]
    })
}

/// Where the pipeline takes `R_h′` from.
#[derive(Debug, Clone)]
pub enum CovarianceSource {
    /// Recursively estimated from the pilot block.
    Adaptive,
    /// Supplied by the caller (e.g. the true prior).
    Known(CMatrix),
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub h_hat: CVector,
    pub state: EstimatorState,
    pub operator: BussgangOperator,
}

/// Full LRA-LS pipeline over one pilot block.
///
/// Runs the instantaneous estimates and the `R̂` recursion over the `τ` pilot
/// symbols, builds `A_p` once from the final `R̂[τ+1]`, and solves the
/// linearized LS problem. `model` must be the pilot-phase model (`N = τ`).
pub fn estimate_channel_pipeline(
    batch: &QuantizedBatch,
    pilots: &CMatrix,
    model: &EquivalentModel,
    cfg: &SystemConfig,
    source: &CovarianceSource,
) -> Result<PipelineOutput> {
    if pilots.shape() != (model.block_len, model.n_users) {
        return Err(Error::DimensionMismatch {
            context: "pilot matrix",
            expected: model.block_len * model.n_users,
            actual: pilots.len(),
        });
    }
    check_rows(&batch.phi_p, model)?;
    let mut state = EstimatorState::new(model.n_params(), cfg.forgetting);
    for n in 0..model.block_len {
        let x_n = pilots.row(n).transpose();
        let y_n = symbol_observation(&batch.y_quantized, n, model);
        let h_inst = instantaneous_estimate(&y_n, &x_n, model)?;
        state = update_rhat(state, &h_inst);
    }
    let r_h = match source {
        CovarianceSource::Adaptive => &state.r_hat,
        CovarianceSource::Known(r) => r,
    };
    let diag = cov_yp_diag(&batch.phi_p, r_h, model, batch.noise_var)?.map(|d| d.max(COV_DIAG_FLOOR));
    let operator = BussgangOperator::new(&batch.phi_p, diag)?;
    let h_hat = lra_ls_estimate(batch, &operator)?;
    Ok(PipelineOutput {
        h_hat,
        state,
        operator,
    })
}

/// Bussgang LMMSE estimate `R Φ̃ᴴ C_yQ⁻¹ y_Q`, with `C_yQ` from the arcsine law.
///
/// Forms full `(Mτ N_r)²` matrices; intended for small comparison runs.
pub fn blmmse_estimate(batch: &QuantizedBatch, r_h: &CMatrix, model: &EquivalentModel) -> Result<CVector> {
    let c_y = cov_yp(&batch.phi_p, r_h, model, batch.noise_var)?;
    let d = c_y.diagonal().map(|v| v.re.max(COV_DIAG_FLOOR));
    let k = d.len();
    let arcsine = |v: f64| v.clamp(-1.0, 1.0).asin();
    let c_yq = CMatrix::from_fn(k, k, |i, j| {
        let s = 1.0 / (d[i] * d[j]).sqrt();
        let v = c_y[(i, j)] * s;
        C64::new(arcsine(v.re), arcsine(v.im)) * FRAC_2_PI
    });
    let op = BussgangOperator::new(&batch.phi_p, d)?;
    let chol = c_yq
        .cholesky()
        .ok_or(Error::Singular { condition: f64::INFINITY })?;
    let w = chol.solve(&batch.y_quantized);
    Ok(r_h * op.phi_eff.adjoint() * w)
}
