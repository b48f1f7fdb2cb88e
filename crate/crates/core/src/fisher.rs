//! Fisher information of the 1-bit observation and the resulting bounds.
//!
//! Parameters are the stacked real channel `h̃′ = [h′ᴿ; h′ᴵ]`, observations the
//! stacked real outputs `[y_Qᴿ; y_Qᴵ]`. With circular noise of complex
//! covariance `C_n` the real and imaginary parts are independent, each with
//! covariance `C_n / 2`, so every quantity splits into two independent halves.
//!
//! * [`fisher_white`]: exact FI when `C_n = σ² I` (symbol-rate sampling).
//! * [`fisher_lower_bound`]: `(∂μ/∂h̃)ᵀ C_yQ⁻¹ (∂μ/∂h̃)` from the first two
//!   moments of the quantized output; exact for white noise.
//! * [`crb`] and [`biased_bound`]: the diagonal bounds built on either.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};
use std::fmt;
use std::io::{self, Write};

use nalgebra::SymmetricEigen;
use rayon::prelude::*;

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::export::{fmt_f64, write_matrix_csv};
use crate::gaussian::{bvn_upper, ln_q, ln_q_product, q_func};
use crate::linalg::{symmetrize, CMatrix, CVector, RMatrix, RVector};
use crate::model::{stack_real_matrix, stack_real_vector, unstack_real_vector};
use crate::rng::{substream, SimRng};

/// Condition number of `C_yQ` above which the diagonal is loaded.
pub const COND_LIMIT: f64 = 1e12;
/// Diagonal loading applied when [`COND_LIMIT`] is exceeded.
pub const DIAG_LOADING: f64 = 1e-10;
/// Largest admissible `|ρ|` for an orthant query.
pub const MAX_CORRELATION: f64 = 1.0 - 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FisherKind {
    ExactWhite,
    LowerBoundColored,
}

impl fmt::Display for FisherKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FisherKind::ExactWhite => "exact_white",
            FisherKind::LowerBoundColored => "lower_bound_colored",
        })
    }
}

/// FI (or FI lower bound) over `h̃′`, with the CRB diagonal when invertible.
#[derive(Debug, Clone)]
pub struct FisherResult {
    pub fi_matrix: RMatrix,
    pub crb_diag: Option<RVector>,
    pub kind: FisherKind,
    /// Whether `C_yQ` needed diagonal loading (lower bound only).
    pub regularized: bool,
}

impl FisherResult {
    fn new(fi_matrix: RMatrix, kind: FisherKind, regularized: bool) -> Self {
        let mut r = FisherResult {
            fi_matrix,
            crb_diag: None,
            kind,
            regularized,
        };
        r.crb_diag = crb(&r).ok();
        r
    }

    pub fn eigenvalues(&self) -> RVector {
        SymmetricEigen::new(self.fi_matrix.clone()).eigenvalues
    }

    /// `kind trace min_eig max_eig mean_crb` as one human-readable line.
    pub fn summary(&self) -> String {
        let eig = self.eigenvalues();
        let mean_crb = self.crb_diag.as_ref().map_or(f64::NAN, |c| c.mean());
        format!(
            "kind={} dim={} trace={:.6e} min_eig={:.6e} max_eig={:.6e} mean_crb={:.6e}",
            self.kind,
            self.fi_matrix.nrows(),
            self.fi_matrix.trace(),
            eig.min(),
            eig.max(),
            mean_crb
        )
    }

    /// FI matrix dump followed by a `crb` line (empty when singular).
    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        write_matrix_csv(out, &self.fi_matrix)?;
        let crb: Vec<String> = self
            .crb_diag
            .as_ref()
            .map(|c| c.iter().map(|&v| fmt_f64(v)).collect())
            .unwrap_or_default();
        writeln!(out, "crb,{}", crb.join(","))
    }
}

/// A bivariate Gaussian whose positive-quadrant mass is wanted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrthantQuery {
    pub mean2: [f64; 2],
    pub cov2: [[f64; 2]; 2],
}

impl OrthantQuery {
    pub fn new(mean2: [f64; 2], cov2: [[f64; 2]; 2]) -> Result<Self> {
        let q = OrthantQuery { mean2, cov2 };
        q.correlation()?;
        Ok(q)
    }

    pub fn correlation(&self) -> Result<f64> {
        let [[a, b], [c, d]] = self.cov2;
        if !(a > 0.0 && d > 0.0) {
            return Err(Error::DegenerateVariance {
                index: if a > 0.0 { 1 } else { 0 },
                value: if a > 0.0 { d } else { a },
            });
        }
        if (b - c).abs() > 1e-12 * (a * d).sqrt() {
            return Err(Error::InvalidConfig("orthant covariance is not symmetric".into()));
        }
        let rho = b / (a * d).sqrt();
        if !(rho.abs() < MAX_CORRELATION) {
            return Err(Error::DegenerateCorrelation(rho));
        }
        Ok(rho)
    }
}

/// `P(z₁ > 0, z₂ > 0)` for `z ~ N(mean2, cov2)`.
pub fn orthant_probability(q: &OrthantQuery) -> Result<f64> {
    let rho = q.correlation()?;
    let h = -q.mean2[0] / q.cov2[0][0].sqrt();
    let k = -q.mean2[1] / q.cov2[1][1].sqrt();
    Ok(bvn_upper(h, k, rho))
}

/// Noiseless real outputs `a = [Φᴿhᴿ − Φᴵhᴵ; Φᴵhᴿ + Φᴿhᴵ]` and `∂a/∂h̃`.
fn real_outputs(phi: &CMatrix, h: &CVector) -> Result<(RVector, RMatrix)> {
    if phi.ncols() != h.len() {
        return Err(Error::DimensionMismatch {
            context: "Φ columns vs channel",
            expected: phi.ncols(),
            actual: h.len(),
        });
    }
    let d = stack_real_matrix(phi);
    let a = &d * stack_real_vector(h);
    Ok((a, d))
}

fn check_noise(phi: &CMatrix, c_n: &RMatrix) -> Result<()> {
    let k = phi.nrows();
    if c_n.shape() != (k, k) {
        return Err(Error::DimensionMismatch {
            context: "noise covariance",
            expected: k,
            actual: c_n.nrows(),
        });
    }
    for (index, &value) in c_n.diagonal().iter().enumerate() {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::DegenerateVariance { index, value });
        }
    }
    Ok(())
}

/// Standardized mean of the real noisy output, `a_k / √(C_kk/2)`.
fn standardized(a: &RVector, c_n: &RMatrix) -> RVector {
    let k = c_n.nrows();
    RVector::from_fn(a.len(), |i, _| a[i] / (0.5 * c_n[(i % k, i % k)]).sqrt())
}

fn mean_entry(x: f64) -> f64 {
    FRAC_1_SQRT_2 * libm::erf(x / SQRT_2)
}

fn var_entry(x: f64) -> f64 {
    let q = q_func(x.abs());
    2.0 * q * (1.0 - q)
}

fn cov_entry(xk: f64, xn: f64, rho: f64, mk: f64, mn: f64) -> f64 {
    bvn_upper(-xk, -xn, rho) + bvn_upper(xk, xn, rho) - 0.5 - mk * mn
}

fn grad_weight(a: f64, ckk: f64) -> f64 {
    2.0 * (-a * a / ckk).exp() / (2.0 * PI * ckk).sqrt()
}

/// `E[y_Q]` as `[μᴿ; μᴵ]`, `μ_k = (1 − 2Q(a_k/√(C_kk/2)))/√2`.
pub fn quantized_mean(phi: &CMatrix, h: &CVector, c_n: &RMatrix) -> Result<RVector> {
    check_noise(phi, c_n)?;
    let (a, _) = real_outputs(phi, h)?;
    Ok(standardized(&a, c_n).map(mean_entry))
}

/// `∂μ/∂h̃′`, `2K × 2P`.
pub fn quantized_mean_grad(phi: &CMatrix, h: &CVector, c_n: &RMatrix) -> Result<RMatrix> {
    check_noise(phi, c_n)?;
    let (a, mut d) = real_outputs(phi, h)?;
    let k = phi.nrows();
    for (i, mut row) in d.row_iter_mut().enumerate() {
        row *= grad_weight(a[i], c_n[(i % k, i % k)]);
    }
    Ok(d)
}

/// Covariances of `y_Qᴿ` and `y_Qᴵ` (each `K × K`; they are mutually uncorrelated).
pub fn quantized_cov(phi: &CMatrix, h: &CVector, c_n: &RMatrix) -> Result<(RMatrix, RMatrix)> {
    check_noise(phi, c_n)?;
    let (a, _) = real_outputs(phi, h)?;
    let x = standardized(&a, c_n);
    let mu = x.map(mean_entry);
    let k = phi.nrows();
    let half = |off: usize| {
        RMatrix::from_fn(k, k, |i, j| {
            if i == j {
                return var_entry(x[off + i]);
            }
            let cij = c_n[(i, j)];
            if cij == 0.0 {
                return 0.0;
            }
            let rho = (cij / (c_n[(i, i)] * c_n[(j, j)]).sqrt()).clamp(-MAX_CORRELATION, MAX_CORRELATION);
            cov_entry(x[off + i], x[off + j], rho, mu[off + i], mu[off + j])
        })
    };
    let mut cr = half(0);
    let mut ci = half(k);
    symmetrize(&mut cr);
    symmetrize(&mut ci);
    Ok((cr, ci))
}

/// Exact FI for white noise `σ² I`.
///
/// Each real output contributes `w_k d_k d_kᵀ` with
/// `w_k = exp(−2a_k²/σ²) / (πσ² Q(x_k) Q(−x_k))`, `x_k = a_k √2/σ`; the
/// denominator is evaluated in log space.
pub fn fisher_white(phi: &CMatrix, h: &CVector, sigma_n: f64, cfg: &SystemConfig) -> Result<FisherResult> {
    if cfg.oversampling != 1 {
        return Err(Error::NotWhiteNoise(cfg.oversampling));
    }
    if !(sigma_n > 0.0 && sigma_n.is_finite()) {
        return Err(Error::DegenerateVariance {
            index: 0,
            value: sigma_n * sigma_n,
        });
    }
    let (a, d) = real_outputs(phi, h)?;
    let var = sigma_n * sigma_n;
    let p = d.ncols();
    let mut fi = RMatrix::zeros(p, p);
    for (k, row) in d.row_iter().enumerate() {
        let x = a[k] * SQRT_2 / sigma_n;
        let w = (-x * x - (PI * var).ln() - ln_q_product(x)).exp();
        let nz: Vec<usize> = (0..p).filter(|&j| row[j] != 0.0).collect();
        for &i in &nz {
            for &j in &nz {
                fi[(i, j)] += w * row[i] * row[j];
            }
        }
    }
    if fi.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("white-noise Fisher information"));
    }
    Ok(FisherResult::new(fi, FisherKind::ExactWhite, false))
}

/// Groups of observation indices coupled through nonzero `C_n` entries.
fn noise_components(c_n: &RMatrix) -> Vec<Vec<usize>> {
    let k = c_n.nrows();
    let mut parent: Vec<usize> = (0..k).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for i in 0..k {
        for j in (i + 1)..k {
            if c_n[(i, j)] != 0.0 || c_n[(j, i)] != 0.0 {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; k];
    for i in 0..k {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(i);
    }
    groups
}

/// One independent block of the quantized-output covariance.
struct Block {
    cols: Vec<usize>,
    grad: RMatrix,
    eig: SymmetricEigen<f64, nalgebra::Dyn>,
}

/// Moment-based FI lower bound `Σ (∂μ/∂h̃)ᵀ C_yQ⁻¹ (∂μ/∂h̃)` over both halves.
///
/// `c_n` is the complex noise covariance. `C_yQ` is block diagonal along the
/// connected components of `C_n`'s sparsity pattern (twice: real and
/// imaginary), so each block is inverted on its own. If the overall condition
/// number exceeds [`COND_LIMIT`], [`DIAG_LOADING`] is added to the diagonal.
pub fn fisher_lower_bound(phi: &CMatrix, h: &CVector, c_n: &RMatrix) -> Result<FisherResult> {
    check_noise(phi, c_n)?;
    let (a, d) = real_outputs(phi, h)?;
    let x = standardized(&a, c_n);
    let mu = x.map(mean_entry);
    let k = phi.nrows();
    let p = d.ncols();
    let comps = noise_components(c_n);
    let tasks: Vec<(usize, &Vec<usize>)> = [0, k]
        .iter()
        .flat_map(|&off| comps.iter().map(move |c| (off, c)))
        .collect();
    let blocks: Vec<Block> = tasks
        .par_iter()
        .map(|&(off, rows)| {
            let n = rows.len();
            let cov = RMatrix::from_fn(n, n, |i, j| {
                let (ri, rj) = (rows[i], rows[j]);
                if i == j {
                    return var_entry(x[off + ri]);
                }
                let cij = 0.5 * (c_n[(ri, rj)] + c_n[(rj, ri)]);
                if cij == 0.0 {
                    return 0.0;
                }
                let rho =
                    (cij / (c_n[(ri, ri)] * c_n[(rj, rj)]).sqrt()).clamp(-MAX_CORRELATION, MAX_CORRELATION);
                cov_entry(x[off + ri], x[off + rj], rho, mu[off + ri], mu[off + rj])
            });
            let cols: Vec<usize> = (0..p)
                .filter(|&c| rows.iter().any(|&r| d[(off + r, c)] != 0.0))
                .collect();
            let grad = RMatrix::from_fn(n, cols.len(), |i, j| {
                let r = rows[i];
                d[(off + r, cols[j])] * grad_weight(a[off + r], c_n[(r, r)])
            });
            Block {
                cols,
                grad,
                eig: SymmetricEigen::new(cov),
            }
        })
        .collect();

    let lo = blocks.iter().map(|b| b.eig.eigenvalues.min()).fold(f64::INFINITY, f64::min);
    let hi = blocks.iter().map(|b| b.eig.eigenvalues.max()).fold(0.0, f64::max);
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    let regularized = condition > COND_LIMIT;
    let shift = if regularized { DIAG_LOADING } else { 0.0 };
    if lo + shift <= 0.0 {
        return Err(Error::Singular { condition });
    }

    let parts: Vec<(Vec<usize>, RMatrix)> = blocks
        .par_iter()
        .map(|b| {
            // Cᵀ⁻¹ = V Λ⁻¹ Vᵀ, so the block contributes (Vᵀ J)ᵀ Λ⁻¹ (Vᵀ J).
            let mut w = b.eig.eigenvectors.transpose() * &b.grad;
            for (i, mut row) in w.row_iter_mut().enumerate() {
                row /= (b.eig.eigenvalues[i] + shift).sqrt();
            }
            (b.cols.clone(), w.transpose() * w)
        })
        .collect();
    let mut fi = RMatrix::zeros(p, p);
    for (cols, part) in &parts {
        for (i, &ci) in cols.iter().enumerate() {
            for (j, &cj) in cols.iter().enumerate() {
                fi[(ci, cj)] += part[(i, j)];
            }
        }
    }
    symmetrize(&mut fi);
    if fi.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Fisher information lower bound"));
    }
    Ok(FisherResult::new(fi, FisherKind::LowerBoundColored, regularized))
}

/// Eigenvalue ratio below which the FI is treated as singular.
const CRB_MIN_RCOND: f64 = 1e-14;

/// Diagonal of `F⁻¹`.
pub fn crb(fi: &FisherResult) -> Result<RVector> {
    let eig = SymmetricEigen::new(fi.fi_matrix.clone());
    let (lo, hi) = (eig.eigenvalues.min(), eig.eigenvalues.max());
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(hi > 0.0) || !(lo > hi * CRB_MIN_RCOND) {
        return Err(Error::Singular { condition });
    }
    let v = &eig.eigenvectors;
    let n = v.nrows();
    Ok(RVector::from_fn(n, |i, _| {
        (0..n).map(|k| v[(i, k)] * v[(i, k)] / eig.eigenvalues[k]).sum()
    }))
}

/// Diagonal of `J F⁻¹ Jᵀ`.
pub fn sandwich_diag(jacobian: &RMatrix, fi: &FisherResult) -> Result<RVector> {
    let n = fi.fi_matrix.nrows();
    if jacobian.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "Jacobian columns vs FI",
            expected: n,
            actual: jacobian.ncols(),
        });
    }
    let eig = SymmetricEigen::new(fi.fi_matrix.clone());
    let (lo, hi) = (eig.eigenvalues.min(), eig.eigenvalues.max());
    if !(hi > 0.0) || !(lo > hi * CRB_MIN_RCOND) {
        return Err(Error::Singular {
            condition: if lo > 0.0 { hi / lo } else { f64::INFINITY },
        });
    }
    let mut w = jacobian * &eig.eigenvectors;
    for (k, mut col) in w.column_iter_mut().enumerate() {
        col /= eig.eigenvalues[k].sqrt();
    }
    Ok(RVector::from_fn(w.nrows(), |i, _| w.row(i).norm_squared()))
}

/// Minimum Monte Carlo size accepted by [`biased_bound`].
pub const MIN_BIASED_MC: usize = 1000;
/// Default finite-difference step for the estimator-mean Jacobian.
pub const DEFAULT_FD_STEP: f64 = 0.05;

/// Jacobian of `E[ĥ̃(h̃)]` by central differences with common random numbers.
///
/// `estimator(h, rng)` runs one noisy realization for channel `h`. Draw `i`
/// uses substream `i` of `seed` for every perturbation, so the `±` evaluations
/// share their noise.
pub fn estimator_mean_jacobian<F>(estimator: F, h: &CVector, n_mc: usize, fd_step: f64, seed: u64) -> Result<RMatrix>
where
    F: Fn(&CVector, &mut SimRng) -> Result<CVector> + Sync,
{
    if n_mc == 0 || !(fd_step > 0.0) {
        return Err(Error::InvalidConfig("need n_mc >= 1 and a positive finite-difference step".into()));
    }
    let base = stack_real_vector(h);
    let p = base.len();
    let mean_at = |theta: RVector| -> Result<RVector> {
        let hc = unstack_real_vector(&theta);
        let mut acc: Option<RVector> = None;
        for i in 0..n_mc {
            let est = stack_real_vector(&estimator(&hc, &mut substream(seed, i as u64))?);
            match acc.as_mut() {
                Some(a) => *a += est,
                None => acc = Some(est),
            }
        }
        Ok(acc.expect("n_mc >= 1") / n_mc as f64)
    };
    let cols: Vec<RVector> = (0..p)
        .into_par_iter()
        .map(|j| {
            let mut plus = base.clone();
            let mut minus = base.clone();
            plus[j] += fd_step;
            minus[j] -= fd_step;
            Ok((mean_at(plus)? - mean_at(minus)?) / (2.0 * fd_step))
        })
        .collect::<Result<_>>()?;
    let jac = RMatrix::from_columns(&cols);
    if jac.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("estimator-mean Jacobian"));
    }
    Ok(jac)
}

/// Biased-estimator bound `diag(J F̃⁻¹ Jᵀ)` with `J = ∂E[ĥ̃]/∂h̃` from
/// [`estimator_mean_jacobian`].
pub fn biased_bound<F>(
    estimator: F,
    h: &CVector,
    fi: &FisherResult,
    n_mc: usize,
    fd_step: f64,
    seed: u64,
) -> Result<RVector>
where
    F: Fn(&CVector, &mut SimRng) -> Result<CVector> + Sync,
{
    if n_mc < MIN_BIASED_MC {
        return Err(Error::InvalidConfig(format!(
            "biased bound needs at least {MIN_BIASED_MC} Monte Carlo draws, got {n_mc}"
        )));
    }
    let jac = estimator_mean_jacobian(estimator, h, n_mc, fd_step, seed)?;
    sandwich_diag(&jac, fi)
}

/// Log-likelihood of a quantized observation under white noise `σ² I`.
///
/// Each real output contributes `ln Q(−x)` if its sign is positive and
/// `ln Q(x)` otherwise, `x = a √2/σ`.
pub fn log_likelihood_white(y_q: &CVector, phi: &CMatrix, h: &CVector, sigma_n: f64) -> Result<f64> {
    if y_q.len() != phi.nrows() {
        return Err(Error::DimensionMismatch {
            context: "quantized observation",
            expected: phi.nrows(),
            actual: y_q.len(),
        });
    }
    let (a, _) = real_outputs(phi, h)?;
    let k = y_q.len();
    Ok((0..2 * k)
        .map(|i| {
            let s = if i < k { y_q[i].re } else { y_q[i - k].im };
            let x = a[i] * SQRT_2 / sigma_n;
            if s >= 0.0 {
                ln_q(-x)
            } else {
                ln_q(x)
            }
        })
        .sum())
}
