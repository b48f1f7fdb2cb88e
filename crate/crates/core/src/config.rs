//! Scalar parameters of the oversampled 1-bit uplink model.

use crate::error::{Error, Result};

/// All scalar model parameters.
///
/// `block_len` is the number of symbols `N` the deterministic matrices are
/// built for. The pilot phase always uses `N = pilot_len`; see
/// [`SystemConfig::pilot_config`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemConfig {
    pub n_users: usize,
    pub n_rx: usize,
    pub oversampling: usize,
    pub block_len: usize,
    pub pilot_len: usize,
    pub rolloff: f64,
    pub noise_std: f64,
    pub forgetting: f64,
    pub seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            n_users: 4,
            n_rx: 16,
            oversampling: 1,
            block_len: 40,
            pilot_len: 40,
            rolloff: 0.8,
            noise_std: 2.0,
            forgetting: 0.91,
            seed: 1,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_users == 0 {
            return bad("n_users must be positive".into());
        }
        if self.n_rx == 0 {
            return bad("n_rx must be positive".into());
        }
        if self.oversampling == 0 {
            return bad("oversampling must be >= 1".into());
        }
        if self.block_len == 0 {
            return bad("block_len must be positive".into());
        }
        if self.pilot_len == 0 {
            return bad("pilot_len must be positive".into());
        }
        if !(self.rolloff > 0.0 && self.rolloff <= 1.0) {
            return bad(format!("rolloff must lie in (0, 1], got {}", self.rolloff));
        }
        if !(self.noise_std > 0.0 && self.noise_std.is_finite()) {
            return bad(format!("noise_std must be positive, got {}", self.noise_std));
        }
        if !(self.forgetting > 0.0 && self.forgetting <= 1.0) {
            return bad(format!("forgetting must lie in (0, 1], got {}", self.forgetting));
        }
        let n = self.block_len.max(self.pilot_len);
        let samples = [self.oversampling, 3, n, self.n_rx]
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d));
        let params = self.n_rx.checked_mul(self.n_users).and_then(|p| p.checked_mul(2));
        if samples.is_none() || params.is_none() {
            return bad("dimension products overflow the index type".into());
        }
        Ok(())
    }

    /// Noise variance per complex sample.
    pub fn noise_var(&self) -> f64 {
        self.noise_std * self.noise_std
    }

    /// Number of channel coefficients `N_r * N_t`.
    pub fn n_params(&self) -> usize {
        self.n_rx * self.n_users
    }

    /// Sets `noise_std` from SNR = 10 log10(N_t / sigma_n^2).
    pub fn with_snr_db(mut self, snr_db: f64) -> Self {
        self.noise_std = noise_std_for_snr(snr_db, self.n_users);
        self
    }

    /// SNR in dB implied by the current noise level.
    pub fn snr_db(&self) -> f64 {
        10.0 * (self.n_users as f64 / self.noise_var()).log10()
    }

    /// The same configuration with the block length set to the pilot length.
    pub fn pilot_config(&self) -> Self {
        SystemConfig {
            block_len: self.pilot_len,
            ..*self
        }
    }
}

pub fn noise_std_for_snr(snr_db: f64, n_users: usize) -> f64 {
    (n_users as f64 / 10f64.powf(snr_db / 10.0)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        SystemConfig::default().validate().unwrap();
    }

    #[test]
    fn snr_round_trip() {
        let cfg = SystemConfig::default().with_snr_db(7.5);
        assert!((cfg.snr_db() - 7.5).abs() < 1e-12);
        // 0 dB with four users means sigma_n^2 = 4
        let cfg = SystemConfig::default().with_snr_db(0.0);
        assert!((cfg.noise_var() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_out_of_range() {
        let cfg = SystemConfig {
            rolloff: 1.5,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
        let cfg = SystemConfig {
            rolloff: 0.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = SystemConfig {
            forgetting: 0.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = SystemConfig {
            n_rx: 0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn rejects_overflowing_dims() {
        let cfg = SystemConfig {
            n_rx: usize::MAX / 2,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
