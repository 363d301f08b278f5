//! Gravity direction in head coordinates from angular velocity alone.

use nalgebra::Vector3;

use super::rk4::rk4_step;
use crate::Vec3;

#[derive(Debug, Clone, PartialEq)]
pub struct GravityTrack {
    pub g: Vec<Vec3>,
    /// Direction of `g` in the head `x`-`y` plane, degrees.
    pub theta_deg: Vec<f64>,
}

/// In-plane direction of a vector, degrees in `(-180, 180]`.
pub fn planar_angle_deg(v: &Vec3) -> f64 {
    v.y.atan2(v.x).to_degrees()
}

/// Integrate `dg/dt = -omega x g` from `g0` over a uniformly sampled
/// angular velocity series (linear interpolation between samples).
pub fn gravity_track(omega: &[Vec3], g0: Vec3, dt: f64) -> GravityTrack {
    let mut g = Vec::with_capacity(omega.len());
    let mut cur: Vector3<f64> = g0;
    for (k, _) in omega.iter().enumerate() {
        if k > 0 {
            let (w0, w1) = (omega[k - 1], omega[k]);
            let t0 = (k - 1) as f64 * dt;
            cur = rk4_step(
                |t, x: &Vector3<f64>| {
                    let frac = ((t - t0) / dt).clamp(0.0, 1.0);
                    let w = w0 + (w1 - w0) * frac;
                    -w.cross(x)
                },
                t0,
                &cur,
                dt,
            );
        }
        g.push(cur);
    }
    let theta_deg = g.iter().map(planar_angle_deg).collect();
    GravityTrack { g, theta_deg }
}
