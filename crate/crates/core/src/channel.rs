//! Random channels, orthogonal QPSK pilots, filtered noise and the 1-bit quantizer.

use std::f64::consts::FRAC_1_SQRT_2;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector, C64};
use crate::model::{build_phi, EquivalentModel};

/// True channel `vec(H′)` together with the prior covariance the receiver assumes.
#[derive(Debug, Clone)]
pub struct ChannelState {
    pub h_true: CVector,
    pub cov_assumed: CMatrix,
}

impl ChannelState {
    pub fn new(h_true: CVector) -> Self {
        let n = h_true.len();
        ChannelState {
            h_true,
            cov_assumed: CMatrix::identity(n, n),
        }
    }

    /// `H′` as an `N_r × N_t` matrix (column-major `vec` inverse).
    pub fn h_matrix(&self, n_rx: usize) -> CMatrix {
        CMatrix::from_column_slice(n_rx, self.h_true.len() / n_rx, self.h_true.as_slice())
    }
}

/// One pilot block as observed before and after the 1-bit ADCs.
///
/// The noise covariance is kept in factored form: `noise_var · (I ⊗ G Gᵀ)`
/// with `G` from the model the batch was generated with.
#[derive(Debug, Clone)]
pub struct QuantizedBatch {
    pub y_unquantized: CVector,
    pub y_quantized: CVector,
    pub phi_p: CMatrix,
    pub noise_var: f64,
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> C64 {
    let s = (0.5 * var).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(s * re, s * im)
}

/// I.i.d. `CN(0, 1)` channel coefficients with identity prior.
pub fn draw_channel<R: Rng + ?Sized>(rng: &mut R, n_rx: usize, n_users: usize) -> ChannelState {
    let h = CVector::from_fn(n_rx * n_users, |_, _| complex_gaussian(rng, 1.0));
    ChannelState::new(h)
}

/// Length-6 quaternary block with four mutually orthogonal columns, as
/// exponents of `j`.
const QUATERNARY_6X4: [[u8; 4]; 6] = [
    [0, 0, 0, 0],
    [0, 0, 1, 2],
    [0, 1, 3, 1],
    [0, 2, 0, 3],
    [0, 2, 2, 0],
    [0, 3, 2, 2],
];

fn j_power(e: u8) -> C64 {
    match e % 4 {
        0 => C64::new(1.0, 0.0),
        1 => C64::new(0.0, 1.0),
        2 => C64::new(-1.0, 0.0),
        _ => C64::new(0.0, -1.0),
    }
}

fn sylvester_entry(row: usize, col: usize) -> C64 {
    if (row & col).count_ones() % 2 == 0 {
        C64::new(1.0, 0.0)
    } else {
        C64::new(-1.0, 0.0)
    }
}

/// Deterministic `τ × N_t` matrix over `{±1, ±j}` with orthogonal columns.
///
/// Uses stacked Sylvester-Hadamard blocks of the smallest power-of-two order
/// covering `N_t` when that order divides `τ`. For `N_t ≤ 4` any even `τ ≥ 4`
/// is reachable by stacking order-4 blocks with one length-6 quaternary block.
pub fn orthogonal_design(pilot_len: usize, n_users: usize) -> Result<CMatrix> {
    let fail = Err(Error::NoPilotDesign { pilot_len, n_users });
    if n_users == 0 || pilot_len < n_users {
        return fail;
    }
    let order = n_users.next_power_of_two();
    if pilot_len % order == 0 {
        return Ok(CMatrix::from_fn(pilot_len, n_users, |n, t| sylvester_entry(n % order, t)));
    }
    if n_users <= 4 && pilot_len >= 6 && pilot_len % 2 == 0 {
        let stacked = pilot_len - 6;
        debug_assert_eq!(stacked % 4, 0);
        return Ok(CMatrix::from_fn(pilot_len, n_users, |n, t| {
            if n < stacked {
                sylvester_entry(n % 4, t)
            } else {
                j_power(QUATERNARY_6X4[n - stacked][t])
            }
        }));
    }
    fail
}

/// Random orthogonal QPSK pilots, `τ × N_t`, with `Xᴴ X = τ I`.
///
/// The deterministic design is randomized by a row permutation and
/// independent quarter-turn rotations per row and per column, none of which
/// affect orthogonality.
pub fn draw_pilots<R: Rng + ?Sized>(rng: &mut R, pilot_len: usize, n_users: usize) -> Result<CMatrix> {
    let base = orthogonal_design(pilot_len, n_users)?;
    let mut rows: Vec<usize> = (0..pilot_len).collect();
    rows.shuffle(rng);
    let row_rot: Vec<u8> = (0..pilot_len).map(|_| rng.random_range(0..4u8)).collect();
    let col_rot: Vec<u8> = (0..n_users).map(|_| rng.random_range(0..4u8)).collect();
    let qpsk = C64::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2);
    Ok(CMatrix::from_fn(pilot_len, n_users, |n, t| {
        base[(rows[n], t)] * j_power(row_rot[n] + col_rot[t]) * qpsk
    }))
}

/// Filtered noise `(I_{N_r} ⊗ G) w`, `w ~ CN(0, σ² I)` of length `3MN N_r`.
pub fn draw_noise<R: Rng + ?Sized>(rng: &mut R, model: &EquivalentModel, noise_var: f64) -> CVector {
    let mn = model.samples_per_antenna();
    let taps = &model.taps.taps;
    let mut out = CVector::zeros(mn * model.n_rx);
    let mut w = vec![C64::new(0.0, 0.0); 3 * mn];
    for r in 0..model.n_rx {
        w.iter_mut().for_each(|v| *v = complex_gaussian(rng, noise_var));
        for i in 0..mn {
            let acc = taps
                .iter()
                .zip(&w[i..i + taps.len()])
                .fold(C64::new(0.0, 0.0), |acc, (&t, &s)| acc + s * t);
            out[r * mn + i] = acc;
        }
    }
    out
}

fn sign_level(v: f64) -> f64 {
    if v >= 0.0 {
        FRAC_1_SQRT_2
    } else {
        -FRAC_1_SQRT_2
    }
}

/// Element-wise 1-bit quantizer onto `{(±1 ± j)/√2}`; zero maps to `+1/√2`.
pub fn quantize(y: &CVector) -> CVector {
    y.map(|v| C64::new(sign_level(v.re), sign_level(v.im)))
}

/// Simulates `y_p = Φ_p h′ + n_p` and its quantized version for one pilot block.
pub fn simulate_pilot_batch<R: Rng + ?Sized>(
    rng: &mut R,
    channel: &ChannelState,
    pilots: &CMatrix,
    model: &EquivalentModel,
    noise_var: f64,
) -> Result<QuantizedBatch> {
    if pilots.shape() != (model.block_len, model.n_users) {
        return Err(Error::DimensionMismatch {
            context: "pilot matrix",
            expected: model.block_len * model.n_users,
            actual: pilots.len(),
        });
    }
    if channel.h_true.len() != model.n_params() {
        return Err(Error::DimensionMismatch {
            context: "channel vector",
            expected: model.n_params(),
            actual: channel.h_true.len(),
        });
    }
    let x = CVector::from_column_slice(pilots.as_slice());
    let phi_p = build_phi(&x, model)?;
    let noise = draw_noise(rng, model, noise_var);
    let y_unquantized = &phi_p * &channel.h_true + noise;
    let y_quantized = quantize(&y_unquantized);
    Ok(QuantizedBatch {
        y_unquantized,
        y_quantized,
        phi_p,
        noise_var,
    })
}
