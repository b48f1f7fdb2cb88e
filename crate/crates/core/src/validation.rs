//! Fast self-checks of the numerical kernels on tiny instances.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::channel::{draw_channel, draw_pilots, quantize};
use crate::config::SystemConfig;
use crate::fisher::{fisher_lower_bound, fisher_white, orthant_probability, quantized_mean, quantized_mean_grad, OrthantQuery};
use crate::linalg::{CMatrix, CVector, C64};
use crate::model::{build_phi, direct_response, stack_real_vector, unstack_real_vector, EquivalentModel};
use crate::rng::substream;

/// Deliberate defects for exercising the failure path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Use 0.3 instead of 1/4 as the constant of the orthant closed form.
    OrthantConstant,
}

impl std::str::FromStr for Fault {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "orthant-constant" => Ok(Fault::OrthantConstant),
            _ => Err(format!("unknown fault '{s}' (known: orthant-constant)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, err: f64, tol: f64) -> CheckResult {
    CheckResult {
        name,
        passed: err <= tol,
        detail: format!("max error {err:.3e} (tol {tol:.0e})"),
    }
}

fn failed(name: &'static str, e: impl std::fmt::Display) -> CheckResult {
    CheckResult {
        name,
        passed: false,
        detail: e.to_string(),
    }
}

fn tiny(nt: usize, nr: usize, m: usize, tau: usize) -> SystemConfig {
    SystemConfig {
        n_users: nt,
        n_rx: nr,
        oversampling: m,
        block_len: tau,
        pilot_len: tau,
        ..Default::default()
    }
    .with_snr_db(2.0)
}

fn toeplitz() -> CheckResult {
    let model = match EquivalentModel::new(&tiny(1, 1, 2, 4)) {
        Ok(m) => m,
        Err(e) => return failed("toeplitz", e),
    };
    let z = &model.z_mat;
    let n = z.nrows();
    let mut err: f64 = (z - &model.ggt).amax();
    for i in 1..n {
        for j in 1..n {
            err = err.max((z[(i, j)] - z[(i - 1, j - 1)]).abs());
        }
    }
    err = err.max((z[(0, 0)] - 1.0).abs());
    check("toeplitz", err, 1e-12)
}

fn quantizer() -> CheckResult {
    let mut rng = substream(1, 0);
    let y = draw_channel(&mut rng, 16, 1).h_true;
    let q = quantize(&y);
    let modulus = q.iter().map(|v| (v.norm() - 1.0).abs()).fold(0.0, f64::max);
    let idempotent = quantize(&q) == q;
    let zero = quantize(&CVector::zeros(1))[0] == C64::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2);
    CheckResult {
        name: "quantizer",
        passed: modulus < 1e-15 && idempotent && zero,
        detail: format!("modulus error {modulus:.1e}, idempotent {idempotent}, zero maps up {zero}"),
    }
}

fn fi_equality() -> CheckResult {
    let cfg = tiny(2, 1, 1, 4);
    let run = || -> crate::Result<f64> {
        let model = EquivalentModel::for_pilots(&cfg)?;
        let mut rng = substream(2, 0);
        let h = draw_channel(&mut rng, cfg.n_rx, cfg.n_users).h_true;
        let x = draw_pilots(&mut rng, cfg.pilot_len, cfg.n_users)?;
        let phi = build_phi(&CVector::from_column_slice(x.as_slice()), &model)?;
        let a = fisher_white(&phi, &h, cfg.noise_std, &cfg)?;
        let b = fisher_lower_bound(&phi, &h, &model.analysis_noise_covariance(cfg.noise_var()))?;
        Ok((&a.fi_matrix - &b.fi_matrix).norm() / a.fi_matrix.norm())
    };
    match run() {
        Ok(e) => check("fi_equality_m1", e, 1e-6),
        Err(e) => failed("fi_equality_m1", e),
    }
}

fn scalar_fi() -> CheckResult {
    let phi = CMatrix::identity(1, 1);
    match fisher_white(&phi, &CVector::zeros(1), 1.0, &tiny(1, 1, 1, 1)) {
        Ok(r) => check("scalar_fi", (r.fi_matrix[(0, 0)] - 4.0 / PI).abs(), 1e-12),
        Err(e) => failed("scalar_fi", e),
    }
}

fn orthant(fault: Option<Fault>) -> CheckResult {
    let c = if fault == Some(Fault::OrthantConstant) { 0.3 } else { 0.25 };
    let mut err: f64 = 0.0;
    for rho in [-0.9, -0.5, 0.0, 0.5, 0.9] {
        let q = OrthantQuery {
            mean2: [0.0, 0.0],
            cov2: [[1.0, rho], [rho, 1.0]],
        };
        match orthant_probability(&q) {
            Ok(p) => err = err.max((p - (c + f64::asin(rho) / (2.0 * PI))).abs()),
            Err(e) => return failed("orthant_sheppard", e),
        }
    }
    check("orthant_sheppard", err, 1e-9)
}

fn orthant_reflection() -> CheckResult {
    let mut err: f64 = 0.0;
    for rho in [0.1, 0.5, 0.95] {
        let p = |r: f64| {
            orthant_probability(&OrthantQuery {
                mean2: [0.0, 0.0],
                cov2: [[1.0, r], [r, 1.0]],
            })
        };
        match (p(rho), p(-rho)) {
            (Ok(a), Ok(b)) => err = err.max((a + b - 0.5).abs()),
            (Err(e), _) | (_, Err(e)) => return failed("orthant_reflection", e),
        }
    }
    check("orthant_reflection", err, 1e-9)
}

fn gradient() -> CheckResult {
    let cfg = tiny(1, 1, 2, 3);
    let run = || -> crate::Result<f64> {
        let model = EquivalentModel::for_pilots(&cfg)?;
        let mut rng = substream(3, 0);
        let h = draw_channel(&mut rng, 1, 1).h_true;
        let x = draw_pilots(&mut rng, cfg.pilot_len, 1)?;
        let phi = build_phi(&CVector::from_column_slice(x.as_slice()), &model)?;
        let c_n = model.noise_covariance(cfg.noise_var());
        let g = quantized_mean_grad(&phi, &h, &c_n)?;
        let theta = stack_real_vector(&h);
        let step = 1e-5;
        let mut err: f64 = 0.0;
        for j in 0..theta.len() {
            let (mut p, mut m) = (theta.clone(), theta.clone());
            p[j] += step;
            m[j] -= step;
            let fd = (quantized_mean(&phi, &unstack_real_vector(&p), &c_n)?
                - quantized_mean(&phi, &unstack_real_vector(&m), &c_n)?)
                / (2.0 * step);
            for i in 0..fd.len() {
                err = err.max((fd[i] - g[(i, j)]).abs() / g[(i, j)].abs().max(1e-3));
            }
        }
        Ok(err)
    };
    match run() {
        Ok(e) => check("gradient_fd", e, 1e-6),
        Err(e) => failed("gradient_fd", e),
    }
}

fn model_equivalence() -> CheckResult {
    let cfg = tiny(2, 2, 3, 4);
    let run = || -> crate::Result<f64> {
        let model = EquivalentModel::new(&cfg)?;
        let mut rng = substream(4, 0);
        let ch = draw_channel(&mut rng, 2, 2);
        let x = CVector::from_column_slice(draw_pilots(&mut rng, 4, 2)?.as_slice());
        let a = build_phi(&x, &model)? * &ch.h_true;
        let b = direct_response(&ch.h_matrix(2), &x, &model)?;
        Ok((a - b).camax())
    };
    match run() {
        Ok(e) => check("model_equivalence", e, 1e-10),
        Err(e) => failed("model_equivalence", e),
    }
}

/// Runs every check; a fault, if given, is injected into the matching one.
pub fn run_validation(fault: Option<Fault>) -> Vec<CheckResult> {
    vec![
        toeplitz(),
        quantizer(),
        model_equivalence(),
        scalar_fi(),
        fi_equality(),
        orthant(fault),
        orthant_reflection(),
        gradient(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_run_passes() {
        let r = run_validation(None);
        assert!(r.iter().all(|c| c.passed), "{r:?}");
    }

    #[test]
    fn injected_fault_is_caught_by_name() {
        let r = run_validation(Some("orthant-constant".parse().unwrap()));
        let bad: Vec<_> = r.iter().filter(|c| !c.passed).map(|c| c.name).collect();
        assert_eq!(bad, vec!["orthant_sheppard"]);
        assert!("nope".parse::<Fault>().is_err());
    }
}
