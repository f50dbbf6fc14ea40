use serde::{Deserialize, Serialize};

use crate::ast::RewardExpr;
use crate::parser::parse;
use crate::printer::format_number;

/// Source of the hand-written baseline reward: both objectives scaled by a
/// common factor with no calibration between their magnitudes.
pub const MANUAL_REWARD_SOURCE: &str = "rate / 10 - log10(crb) / 10";

pub fn builtin_manual_reward() -> RewardExpr {
    parse(MANUAL_REWARD_SOURCE).expect("manual reward source is valid")
}

/// Calibration constants of [`builtin_normalized_reward`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalizedRewardParams {
    /// Sum rate (bits/s/Hz) that maps to a unit communication term.
    pub rate_ref: f64,
    /// Reference `log10(crb)` at which the sensing term vanishes.
    pub c_ref: f64,
    /// Decades of CRB per unit of sensing term.
    pub c_scale: f64,
    /// Weight of the sensing term.
    pub beta: f64,
    /// Weight of the power-overshoot penalty.
    pub gamma: f64,
}

impl Default for NormalizedRewardParams {
    fn default() -> Self {
        NormalizedRewardParams { rate_ref: 10.0, c_ref: -4.0, c_scale: 2.0, beta: 1.0, gamma: 1.0 }
    }
}

impl NormalizedRewardParams {
    /// Renders the reward with the constants folded in.
    pub fn source(&self) -> String {
        let num = |v: f64| {
            let s = format_number(v.abs());
            if v < 0.0 {
                format!("(-{s})")
            } else {
                s
            }
        };
        let offset = if self.c_ref <= 0.0 {
            format!("log10(crb) + {}", format_number(-self.c_ref))
        } else {
            format!("log10(crb) - {}", format_number(self.c_ref))
        };
        format!(
            "clip((rate - {rr}) / {rr} - {} * ({offset}) / {} - {} * max(0, power_ratio - 1), -10, 10)",
            num(self.beta),
            num(self.c_scale),
            num(self.gamma),
            rr = num(self.rate_ref),
        )
    }
}

/// Reward with both objectives normalized around a calibration point to comparable magnitudes plus a
/// penalty on exceeding the power budget. Also the offline stand-in for an
/// LLM-designed reward.
pub fn builtin_normalized_reward(params: &NormalizedRewardParams) -> RewardExpr {
    parse(&params.source()).expect("normalized reward source is valid")
}
