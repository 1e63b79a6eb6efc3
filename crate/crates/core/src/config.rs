//! System parameters shared by every stage of the pipeline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Convert a power level in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Convert a ratio in dB to linear scale.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Slot fractions 0.1, 0.2, ..., 1.0.
pub fn default_delta_grid() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Number of single-antenna users; half become CCUs, half CEUs.
    pub users: usize,
    /// Base-station antenna count.
    pub antennas: usize,
    /// Receiver noise variance in watts.
    pub sigma2: f64,
    pub p_u_max_dbm: f64,
    pub p_v_max_dbm: f64,
    /// Minimum CCU rate in bps/Hz.
    pub r_th_u: f64,
    /// Minimum CEU rate in bps/Hz.
    pub r_th_v: f64,
    /// Semi-orthogonality threshold used during CCU selection.
    pub theta: f64,
    pub delta_grid: Vec<f64>,
    /// SCA stopping tolerance on the objective change.
    pub eps: f64,
    pub max_iterations: usize,
    pub seed: u64,
    pub lambda_u_db: f64,
    pub lambda_v_db: f64,
    pub lambda_vu_db: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            users: 6,
            antennas: 8,
            sigma2: 1.0,
            p_u_max_dbm: 23.0,
            p_v_max_dbm: 15.0,
            r_th_u: 0.5,
            r_th_v: 0.1,
            theta: 0.4,
            delta_grid: default_delta_grid(),
            eps: 1e-3,
            max_iterations: 30,
            seed: 1,
            lambda_u_db: 15.0,
            lambda_v_db: 7.0,
            lambda_vu_db: 12.0,
        }
    }
}

impl SystemConfig {
    pub fn pairs(&self) -> usize {
        self.users / 2
    }

    pub fn p_u_max(&self) -> f64 {
        budget_watts(self.p_u_max_dbm)
    }

    pub fn p_v_max(&self) -> f64 {
        budget_watts(self.p_v_max_dbm)
    }

    pub fn validate(&self) -> Result<()> {
        if self.users < 2 || self.users % 2 != 0 {
            return Err(Error::OddUserCount(self.users));
        }
        if self.antennas < 1 {
            return Err(Error::NoAntennas);
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "noise variance must be positive and finite, got {}",
                self.sigma2
            )));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "SUS factor must lie in (0, 1), got {}",
                self.theta
            )));
        }
        if self.delta_grid.is_empty() {
            return Err(Error::InvalidConfig("slot grid is empty".into()));
        }
        if let Some(d) = self.delta_grid.iter().find(|d| !(**d > 0.0 && **d <= 1.0)) {
            return Err(Error::InvalidConfig(format!(
                "slot grid value {d} outside (0, 1]"
            )));
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "SCA tolerance must be positive, got {}",
                self.eps
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be >= 1".into()));
        }
        for (name, v) in [
            ("p_u_max_dbm", self.p_u_max_dbm),
            ("p_v_max_dbm", self.p_v_max_dbm),
        ] {
            // -inf dBm is an explicit zero budget
            if v.is_nan() || v == f64::INFINITY {
                return Err(Error::InvalidConfig(format!("{name} must be finite")));
            }
        }
        for (name, v) in [
            ("r_th_u", self.r_th_u),
            ("r_th_v", self.r_th_v),
            ("lambda_u_db", self.lambda_u_db),
            ("lambda_v_db", self.lambda_v_db),
            ("lambda_vu_db", self.lambda_vu_db),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be finite")));
            }
        }
        if self.r_th_u < 0.0 || self.r_th_v < 0.0 {
            return Err(Error::InvalidConfig("rate thresholds must be >= 0".into()));
        }
        Ok(())
    }
}

fn budget_watts(dbm: f64) -> f64 {
    if dbm == f64::NEG_INFINITY {
        0.0
    } else {
        dbm_to_watts(dbm)
    }
}
