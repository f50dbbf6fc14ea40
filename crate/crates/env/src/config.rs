use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::C64;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid value for `{key}`: {message}")]
    Invalid { key: &'static str, message: String },
    #[error("malformed system config: {0}")]
    Syntax(#[from] toml::de::Error),
}

/// Converts a power level in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) / 1000.0
}

/// Constants of the simulated world.
///
/// Read from flat `key = value` text (TOML); every key is optional and
/// falls back to the default below. Unknown keys are rejected.
///
/// | key | meaning | default |
/// |---|---|---|
/// | `n_antennas` | ULA size `N`, half-wavelength spacing | 4 |
/// | `n_users` | number of users `K` | 2 |
/// | `snapshots` | sensing snapshots `L` per step | 32 |
/// | `p_max_dbm` | transmit power budget, dBm | 20 |
/// | `noise_power` | noise power σ², W | 1e-5 |
/// | `target_angle_deg` | target azimuth θ, degrees | 20 |
/// | `target_gain` | reflection amplitude α as `[re, im]` | `[0.01, 0.0]` |
/// | `pathloss_exponent` | path loss `d^-exponent` | 2.2 |
/// | `user_distances_m` | `K` user distances, m | `[20, 30]` |
/// | `user_angles_deg` | fixed LoS angles, one per user; empty draws them at reset | `[-40, 50]` |
/// | `rician_k` | Rician factor κ (0 is Rayleigh) | 5 |
/// | `channel_corr` | Gauss–Markov coefficient ρ | 0.95 |
/// | `episode_len` | steps per episode `T` | 20 |
/// | `history_len` | stacked observation frames `H` | 8 |
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub n_antennas: usize,
    pub n_users: usize,
    pub snapshots: usize,
    pub p_max_dbm: f64,
    pub noise_power: f64,
    pub target_angle_deg: f64,
    pub target_gain: [f64; 2],
    pub pathloss_exponent: f64,
    pub user_distances_m: Vec<f64>,
    pub user_angles_deg: Vec<f64>,
    pub rician_k: f64,
    pub channel_corr: f64,
    pub episode_len: usize,
    pub history_len: usize,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            n_antennas: 4,
            n_users: 2,
            snapshots: 32,
            p_max_dbm: 20.0,
            noise_power: 1e-5,
            target_angle_deg: 20.0,
            target_gain: [0.01, 0.0],
            pathloss_exponent: 2.2,
            user_distances_m: vec![20.0, 30.0],
            user_angles_deg: vec![-40.0, 50.0],
            rician_k: 5.0,
            channel_corr: 0.95,
            episode_len: 20,
            history_len: 8,
        }
    }
}

impl SystemConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let config: SystemConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn bad(key: &'static str, message: impl Into<String>) -> Result<(), ConfigError> {
            Err(ConfigError::Invalid { key, message: message.into() })
        }
        if self.n_users == 0 {
            return bad("n_users", "must be at least 1");
        }
        if self.n_antennas < self.n_users {
            return bad("n_antennas", format!("must be >= n_users ({})", self.n_users));
        }
        if self.snapshots < 2 {
            return bad("snapshots", "must be at least 2");
        }
        if !self.p_max_dbm.is_finite() {
            return bad("p_max_dbm", "must be finite");
        }
        if !(self.noise_power.is_finite() && self.noise_power > 0.0) {
            return bad("noise_power", "must be positive");
        }
        if self.target_angle_deg.is_nan() || self.target_angle_deg.abs() >= 90.0 {
            return bad("target_angle_deg", "must lie strictly inside (-90, 90)");
        }
        if !self.target_gain.iter().all(|v| v.is_finite()) {
            return bad("target_gain", "must be finite");
        }
        if !self.pathloss_exponent.is_finite() {
            return bad("pathloss_exponent", "must be finite");
        }
        if self.user_distances_m.len() != self.n_users {
            return bad("user_distances_m", format!("needs exactly {} entries", self.n_users));
        }
        if !self.user_distances_m.iter().all(|d| d.is_finite() && *d > 0.0) {
            return bad("user_distances_m", "distances must be positive");
        }
        if !self.user_angles_deg.is_empty() {
            if self.user_angles_deg.len() != self.n_users {
                return bad("user_angles_deg", format!("needs 0 or {} entries", self.n_users));
            }
            if !self.user_angles_deg.iter().all(|a| a.abs() < 90.0) {
                return bad("user_angles_deg", "angles must lie inside (-90, 90)");
            }
        }
        if !(self.rician_k >= 0.0 && self.rician_k.is_finite()) {
            return bad("rician_k", "must be finite and >= 0");
        }
        if !(0.0..=1.0).contains(&self.channel_corr) {
            return bad("channel_corr", "must lie in [0, 1]");
        }
        if self.episode_len == 0 {
            return bad("episode_len", "must be at least 1");
        }
        if self.history_len == 0 {
            return bad("history_len", "must be at least 1");
        }
        Ok(())
    }

    pub fn p_max_watts(&self) -> f64 {
        dbm_to_watts(self.p_max_dbm)
    }

    pub fn target_angle_rad(&self) -> f64 {
        self.target_angle_deg.to_radians()
    }

    pub fn target_gain(&self) -> C64 {
        C64::new(self.target_gain[0], self.target_gain[1])
    }

    pub fn path_loss(&self, user: usize) -> f64 {
        self.user_distances_m[user].powf(-self.pathloss_exponent)
    }

    /// Real length of a raw action: `2·N·K`.
    pub fn action_dim(&self) -> usize {
        2 * self.n_antennas * self.n_users
    }

    /// Length of one observation frame: `4·N·K + 3`.
    pub fn frame_dim(&self) -> usize {
        4 * self.n_antennas * self.n_users + 3
    }

    pub fn observation_dim(&self) -> usize {
        self.history_len * self.frame_dim()
    }
}
