//! Simulation of a dual-functional base station that serves `K` downlink
//! users while estimating the angle of a point target.
//!
//! The physics lives in free functions ([`steering_vector`], [`sum_rate`],
//! [`crb_angle`], ...) so they can be checked in isolation; [`IsacEnv`]
//! wraps them in an episodic reset/step interface with frame-stacked
//! observations.

mod array;
mod beamforming;
mod channel;
mod config;
mod env;

pub use array::{steering_derivative, steering_vector};
pub use beamforming::{
    crb_angle, crb_angle_with_constant, per_user_rates, project_power, sum_rate, BeamformerAction,
    CrbError, CRB_FISHER_CONSTANT, ILLUMINATION_EPSILON,
};
pub use channel::{evolve_channels, sample_channels, ChannelState};
pub use config::{dbm_to_watts, ConfigError, SystemConfig};
pub use env::{EnvError, IsacEnv, Observation, StepOutcome, CRB_CAP};

pub use nalgebra::Complex;

pub type C64 = Complex<f64>;
pub type CVector = nalgebra::DVector<C64>;
pub type CMatrix = nalgebra::DMatrix<C64>;
