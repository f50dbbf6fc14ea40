use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// A named scalar exposed by the environment to reward expressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Feature {
    /// Downlink sum rate, bits/s/Hz.
    Rate,
    /// Target-angle CRB in rad², clamped to the environment's cap.
    Crb,
    Log10Crb,
    /// Smallest per-user rate, bits/s/Hz.
    MinUserRate,
    /// Executed transmit power, W.
    PowerUsed,
    /// Transmit power budget, W.
    PowerBudget,
    /// `power_used / power_budget`, within [0, 1].
    PowerRatio,
    /// Fraction of the episode completed, within [0, 1].
    StepFrac,
}

impl Feature {
    pub const ALL: [Feature; 8] = [
        Feature::Rate,
        Feature::Crb,
        Feature::Log10Crb,
        Feature::MinUserRate,
        Feature::PowerUsed,
        Feature::PowerBudget,
        Feature::PowerRatio,
        Feature::StepFrac,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feature::Rate => "rate",
            Feature::Crb => "crb",
            Feature::Log10Crb => "log10_crb",
            Feature::MinUserRate => "min_user_rate",
            Feature::PowerUsed => "power_used",
            Feature::PowerBudget => "power_budget",
            Feature::PowerRatio => "power_ratio",
            Feature::StepFrac => "step_frac",
        }
    }

    /// Short human description, used when rendering prompts.
    pub fn description(self) -> &'static str {
        match self {
            Feature::Rate => "downlink sum rate over all users, bits/s/Hz",
            Feature::Crb => "Cramer-Rao bound of the target angle estimate, rad^2 (clamped)",
            Feature::Log10Crb => "log10 of crb",
            Feature::MinUserRate => "smallest per-user rate, bits/s/Hz",
            Feature::PowerUsed => "transmit power actually radiated, W",
            Feature::PowerBudget => "transmit power budget of the base station, W",
            Feature::PowerRatio => "power_used / power_budget, in [0, 1]",
            Feature::StepFrac => "fraction of the episode completed, in [0, 1]",
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Feature {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Feature::ALL.into_iter().find(|f| f.name() == s).ok_or(())
    }
}

/// The feature values a reward expression is evaluated against.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureMap {
    pub rate: f64,
    pub crb: f64,
    pub log10_crb: f64,
    pub min_user_rate: f64,
    pub power_used: f64,
    pub power_budget: f64,
    pub power_ratio: f64,
    pub step_frac: f64,
}

impl FeatureMap {
    pub fn get(&self, feature: Feature) -> f64 {
        match feature {
            Feature::Rate => self.rate,
            Feature::Crb => self.crb,
            Feature::Log10Crb => self.log10_crb,
            Feature::MinUserRate => self.min_user_rate,
            Feature::PowerUsed => self.power_used,
            Feature::PowerBudget => self.power_budget,
            Feature::PowerRatio => self.power_ratio,
            Feature::StepFrac => self.step_frac,
        }
    }

    pub fn set(&mut self, feature: Feature, value: f64) {
        let slot = match feature {
            Feature::Rate => &mut self.rate,
            Feature::Crb => &mut self.crb,
            Feature::Log10Crb => &mut self.log10_crb,
            Feature::MinUserRate => &mut self.min_user_rate,
            Feature::PowerUsed => &mut self.power_used,
            Feature::PowerBudget => &mut self.power_budget,
            Feature::PowerRatio => &mut self.power_ratio,
            Feature::StepFrac => &mut self.step_frac,
        };
        *slot = value;
    }

    /// `(name, value)` pairs in declaration order.
    pub fn iter(&self) -> impl Iterator<Item = (&'static str, f64)> + '_ {
        Feature::ALL.into_iter().map(|f| (f.name(), self.get(f)))
    }

    pub fn all_finite(&self) -> bool {
        self.iter().all(|(_, v)| v.is_finite())
    }
}
