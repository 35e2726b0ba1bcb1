//! Chi-square calibrated frame decisions and sequential alarming.

mod chi2;
mod cusum;

pub use chi2::{
    chi2_cdf, chi2_inv_cdf, chi2_sf, detection_probability, gamma_p, gamma_q, ln_gamma,
    noncentral_chi2_cdf, POISSON_TAIL, QUANTILE_TOL,
};
pub use cusum::{
    calibrate_cusum, cusum_step, simulate_arl, CalibrationOptions, CusumCalibration, CusumState,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signature::NominalModel;

/// Frame-level threshold `eta = F^{-1}_{chi2_d}(1 - alpha)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub alpha: f64,
    pub dim: usize,
    pub eta: f64,
}

impl DetectorConfig {
    pub fn new(alpha: f64, dim: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidParameter(format!("alpha must lie in (0,1), got {alpha}")));
        }
        let eta = chi2_inv_cdf(dim, 1.0 - alpha)?;
        Ok(Self { alpha, dim, eta })
    }

    /// Predicted detection probability for a shift of the given noncentrality.
    pub fn power(&self, lambda_nc: f64) -> Result<f64> {
        detection_probability(self.dim, lambda_nc, self.eta)
    }
}

/// Anomaly iff `D^2 > eta`.
pub fn decide(d_sq: f64, cfg: &DetectorConfig) -> bool {
    d_sq > cfg.eta
}

/// Mean-shift alternative and its noncentrality `delta' Sigma^{-1} delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanShiftModel {
    pub delta: Vec<f64>,
    pub noncentrality: f64,
}

impl MeanShiftModel {
    pub fn new(delta: Vec<f64>, model: &NominalModel) -> Result<Self> {
        let noncentrality = model.whitened_norm_sq(&delta)?;
        Ok(Self { delta, noncentrality })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tie_is_nominal() {
        let cfg = DetectorConfig::new(0.05, 6).unwrap();
        assert!(!decide(0.0, &cfg));
        assert!(!decide(cfg.eta, &cfg));
        assert!(decide(cfg.eta * (1.0 + 1e-12), &cfg));
        assert!(DetectorConfig::new(0.0, 6).is_err());
        assert!(DetectorConfig::new(1.0, 6).is_err());
        assert!(DetectorConfig::new(0.05, 0).is_err());
    }

    #[test]
    fn null_power_is_alpha() {
        let cfg = DetectorConfig::new(0.01, 12).unwrap();
        assert!((cfg.power(0.0).unwrap() - 0.01).abs() < 1e-9);
    }
}
