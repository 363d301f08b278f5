//! Individual blocks of the SVC model as pure functions of their inputs and
//! states.

use super::params::ModelParams;
use crate::{Vec3, GRAVITY};

/// Otolith organs: identity on the gravito-inertial acceleration.
#[inline]
pub fn oto(f: &Vec3) -> Vec3 {
    *f
}

/// Semicircular canals as a first-order high-pass `tau_d s / (tau_d s + 1)`
/// in state-space form. Returns the state derivative and the sensed rate.
#[inline]
pub fn scc_derivative(x: &Vec3, omega: &Vec3, tau_d: f64) -> (Vec3, Vec3) {
    let sensed = omega - x;
    (sensed / tau_d, sensed)
}

/// Sensed vertical: low-pass of the sensed GIA, rotated by the sensed
/// angular velocity. Returns the derivative and the sensed acceleration
/// `f_s - v`.
#[inline]
pub fn lp_vertical_derivative(v: &Vec3, f_s: &Vec3, omega_s: &Vec3, tau: f64) -> (Vec3, Vec3) {
    let accel = f_s - v;
    (accel / tau - omega_s.cross(v), accel)
}

/// Internal-model drive: efference-copy stand-in plus conflict feedback.
#[inline]
pub fn internal_model_inputs(
    a_s: &Vec3,
    a_hat_s: &Vec3,
    omega_s: &Vec3,
    omega_hat_s: &Vec3,
    p: &ModelParams,
) -> (Vec3, Vec3) {
    (
        p.k_a * a_s + p.k_ac * (a_s - a_hat_s),
        p.k_w * omega_s + p.k_wc * (omega_s - omega_hat_s),
    )
}

/// Visual vertical as sensed: identity.
#[inline]
pub fn vis_g(vv: &Vec3) -> Vec3 {
    *vv
}

/// Expected visual vertical: `g_hat` projected onto the head `x`-`y` plane
/// and rescaled to 9.81. The boolean is set when the projection vanishes;
/// the upright vertical is returned in that case.
#[inline]
pub fn vis_g_bar(g_hat: &Vec3) -> (Vec3, bool) {
    let planar = Vec3::new(g_hat.x, g_hat.y, 0.0);
    let n = planar.norm();
    if n > 0.0 && n.is_finite() {
        (planar * (GRAVITY / n), false)
    } else {
        (Vec3::new(0.0, GRAVITY, 0.0), true)
    }
}

/// Rate of change of the internally estimated gravity.
#[inline]
pub fn g_hat_derivative(
    vv_s: &Vec3,
    vv_hat_s: &Vec3,
    v_s: &Vec3,
    v_hat_s: &Vec3,
    p: &ModelParams,
) -> Vec3 {
    p.k_vvc * (vv_s - vv_hat_s) + p.k_vc * (v_s - v_hat_s)
}

/// Hill normalisation `(x/b)^2 / (1 + (x/b)^2)`.
#[inline]
pub fn hill(dv_norm: f64, b: f64) -> f64 {
    let r = (dv_norm / b).powi(2);
    if r.is_infinite() {
        return 1.0;
    }
    r / (1.0 + r)
}

/// Critically damped MSI lag `P / (tau_I s + 1)^2` as two cascaded first
/// order stages. The second stage is the MSI.
#[inline]
pub fn msi_derivative(m1: f64, m2: f64, h: f64, p: &ModelParams) -> (f64, f64) {
    ((p.p * h - m1) / p.tau_i, (m1 - m2) / p.tau_i)
}
