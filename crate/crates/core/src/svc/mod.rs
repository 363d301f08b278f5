//! Subjective vertical conflict dynamics.
//!
//! The vestibular path senses the gravito-inertial acceleration `f` and the
//! angular velocity `omega`; an internal model replicates the same blocks
//! and is steered by conflict feedback. When the visual gain `k_vvc` is
//! non-zero, the difference between the visual vertical and the planar
//! projection of the internal gravity estimate also drives that estimate.
//! The norm of the vertical conflict passes through a Hill function and a
//! critically damped lag to give the motion sickness incidence (MSI).

pub mod blocks;
mod gravity;
mod model;
mod params;
mod rk4;

pub use blocks::{
    g_hat_derivative, hill, internal_model_inputs, lp_vertical_derivative, msi_derivative, oto,
    scc_derivative, vis_g, vis_g_bar,
};
pub use gravity::{gravity_track, planar_angle_deg, GravityTrack};
pub use model::{
    derivatives, simulate, Conflicts, MsiTrace, SvcInput, SvcState, TimedInput, TraceRow,
    STATE_DIM, TIMESTAMP_JITTER,
};
pub use params::{ModelKind, ModelParams};
pub use rk4::rk4_step;
