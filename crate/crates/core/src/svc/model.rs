//! Full model wiring and the fixed-step simulation loop.

use std::io::Write;

use nalgebra::SVector;
use serde::Serialize;

use super::blocks::{
    g_hat_derivative, hill, internal_model_inputs, lp_vertical_derivative, msi_derivative, oto,
    scc_derivative, vis_g, vis_g_bar,
};
use super::params::ModelParams;
use super::rk4::rk4_step;
use crate::error::{Error, Result};
use crate::Vec3;

/// Tolerated deviation of input timestamps from a uniform grid.
pub const TIMESTAMP_JITTER: f64 = 1e-6;

pub const STATE_DIM: usize = 17;
type StateVec = SVector<f64, STATE_DIM>;

/// Complete model state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SvcState {
    /// Sensed vertical.
    pub v_s: Vec3,
    /// Canal low-pass state; the sensed rate is `omega - x_scc`.
    pub x_scc: Vec3,
    pub v_hat_s: Vec3,
    pub x_hat_scc: Vec3,
    /// Internally estimated gravity.
    pub g_hat: Vec3,
    pub m1: f64,
    /// MSI in percent.
    pub m2: f64,
}

impl SvcState {
    /// Head at rest sensing `f0`: every vertical starts at `f0`, so all
    /// conflicts start at zero.
    pub fn at_rest(f0: Vec3) -> Self {
        SvcState {
            v_s: f0,
            x_scc: Vec3::zeros(),
            v_hat_s: f0,
            x_hat_scc: Vec3::zeros(),
            g_hat: f0,
            m1: 0.0,
            m2: 0.0,
        }
    }

    fn to_vector(self) -> StateVec {
        let mut x = StateVec::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(&self.v_s);
        x.fixed_rows_mut::<3>(3).copy_from(&self.x_scc);
        x.fixed_rows_mut::<3>(6).copy_from(&self.v_hat_s);
        x.fixed_rows_mut::<3>(9).copy_from(&self.x_hat_scc);
        x.fixed_rows_mut::<3>(12).copy_from(&self.g_hat);
        x[15] = self.m1;
        x[16] = self.m2;
        x
    }

    fn from_vector(x: &StateVec) -> Self {
        SvcState {
            v_s: x.fixed_rows::<3>(0).into(),
            x_scc: x.fixed_rows::<3>(3).into(),
            v_hat_s: x.fixed_rows::<3>(6).into(),
            x_hat_scc: x.fixed_rows::<3>(9).into(),
            g_hat: x.fixed_rows::<3>(12).into(),
            m1: x[15],
            m2: x[16],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|v| v.is_finite())
    }
}

/// Model input at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvcInput {
    /// Gravito-inertial acceleration, m/s².
    pub f: Vec3,
    /// Angular velocity, rad/s.
    pub omega: Vec3,
    /// Visual vertical, m/s².
    pub vv: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedInput {
    pub t: f64,
    pub input: SvcInput,
}

/// Signals derived alongside the state derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conflicts {
    pub dv: Vec3,
    pub dvv: Vec3,
    /// The expected visual vertical had no planar component.
    pub gimbal: bool,
}

/// Right-hand side of the model for state `s` and inputs `f`, `omega`,
/// `vv`.
pub fn derivatives(
    s: &SvcState,
    f: &Vec3,
    omega: &Vec3,
    vv: &Vec3,
    p: &ModelParams,
) -> (SvcState, Conflicts) {
    let f_s = oto(f);
    let (dx_scc, omega_s) = scc_derivative(&s.x_scc, omega, p.tau_d);
    let (dv_s, a_s) = lp_vertical_derivative(&s.v_s, &f_s, &omega_s, p.tau);

    // The internal model sees its own outputs through the conflict terms.
    // Both loops are linear and algebraic, so solve them in closed form.
    let omega_hat_s = ((p.k_w + p.k_wc) * omega_s - s.x_hat_scc) / (1.0 + p.k_wc);
    let a_hat_s = ((p.k_a + p.k_ac) * a_s + s.g_hat - s.v_hat_s) / (1.0 + p.k_ac);
    let (a_hat_in, omega_hat_in) = internal_model_inputs(&a_s, &a_hat_s, &omega_s, &omega_hat_s, p);

    let (dx_hat_scc, _) = scc_derivative(&s.x_hat_scc, &omega_hat_in, p.tau_d);
    let f_hat_s = oto(&(a_hat_in + s.g_hat));
    let (dv_hat_s, _) = lp_vertical_derivative(&s.v_hat_s, &f_hat_s, &omega_hat_s, p.tau);

    let dv = s.v_s - s.v_hat_s;
    let (dvv, gimbal, dg_hat) = if p.visual_enabled() {
        let vv_s = vis_g(vv);
        let (vv_hat_s, gimbal) = vis_g_bar(&s.g_hat);
        (
            vv_s - vv_hat_s,
            gimbal,
            g_hat_derivative(&vv_s, &vv_hat_s, &s.v_s, &s.v_hat_s, p),
        )
    } else {
        (Vec3::zeros(), false, p.k_vc * dv)
    };

    let h = hill(dv.norm(), p.b);
    let (dm1, dm2) = msi_derivative(s.m1, s.m2, h, p);

    (
        SvcState {
            v_s: dv_s,
            x_scc: dx_scc,
            v_hat_s: dv_hat_s,
            x_hat_scc: dx_hat_scc,
            g_hat: dg_hat,
            m1: dm1,
            m2: dm2,
        },
        Conflicts { dv, dvv, gimbal },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub t: f64,
    pub msi: f64,
    pub dv_norm: f64,
    pub dvv_norm: f64,
    pub g_hat: Vec3,
    pub v_s: Vec3,
}

/// Model outputs at every integration step.
#[derive(Debug, Clone, PartialEq)]
pub struct MsiTrace {
    pub rows: Vec<TraceRow>,
    pub final_state: SvcState,
    /// Steps at which the expected visual vertical was degenerate.
    pub gimbal_steps: usize,
}

impl MsiTrace {
    pub fn final_msi(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.msi)
    }

    pub fn max_msi(&self) -> f64 {
        self.rows.iter().map(|r| r.msi).fold(0.0, f64::max)
    }

    pub const CSV_HEADER: &'static str =
        "t_s,msi_pct,dv_norm,dvv_norm,ghat_x,ghat_y,ghat_z,vs_x,vs_y,vs_z";

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                r.t,
                r.msi,
                r.dv_norm,
                r.dvv_norm,
                r.g_hat.x,
                r.g_hat.y,
                r.g_hat.z,
                r.v_s.x,
                r.v_s.y,
                r.v_s.z
            )?;
        }
        w.flush()
    }
}

/// Uniformly sampled inputs with linear interpolation for the vestibular
/// signals and a hold on the visual vertical.
struct InputGrid<'a> {
    samples: &'a [TimedInput],
    t0: f64,
    spacing: f64,
}

impl<'a> InputGrid<'a> {
    fn new(samples: &'a [TimedInput]) -> Result<Self> {
        let n = samples.len();
        if n == 0 {
            return Err(Error::Validation("no input samples".into()));
        }
        let t0 = samples[0].t;
        let spacing = if n > 1 {
            (samples[n - 1].t - t0) / (n - 1) as f64
        } else {
            0.0
        };
        if n > 1 && !(spacing > 0.0) {
            return Err(Error::NonUniformInput {
                index: 1,
                spacing: samples[1].t - t0,
                expected: spacing,
            });
        }
        for (i, s) in samples.iter().enumerate() {
            if !s.t.is_finite() || (s.t - (t0 + i as f64 * spacing)).abs() > TIMESTAMP_JITTER {
                return Err(Error::NonUniformInput {
                    index: i,
                    spacing: if i > 0 { s.t - samples[i - 1].t } else { 0.0 },
                    expected: spacing,
                });
            }
        }
        Ok(InputGrid {
            samples,
            t0,
            spacing,
        })
    }

    fn end(&self) -> f64 {
        self.t0 + (self.samples.len() - 1) as f64 * self.spacing
    }

    fn vestibular(&self, t: f64) -> (Vec3, Vec3) {
        let n = self.samples.len();
        if n == 1 {
            let s = &self.samples[0].input;
            return (s.f, s.omega);
        }
        let pos = ((t - self.t0) / self.spacing).max(0.0);
        let i = (pos.floor() as usize).min(n - 2);
        let frac = (pos - i as f64).clamp(0.0, 1.0);
        let (a, b) = (&self.samples[i].input, &self.samples[i + 1].input);
        if frac < 1e-9 {
            (a.f, a.omega)
        } else if frac > 1.0 - 1e-9 {
            (b.f, b.omega)
        } else {
            (
                a.f + (b.f - a.f) * frac,
                a.omega + (b.omega - a.omega) * frac,
            )
        }
    }

    fn held_vv(&self, t: f64) -> Vec3 {
        let n = self.samples.len();
        if n == 1 {
            return self.samples[0].input.vv;
        }
        let pos = ((t - self.t0) / self.spacing + 1e-9).max(0.0);
        self.samples[(pos.floor() as usize).min(n - 1)].input.vv
    }
}

/// Integrate the model with fixed-step RK4 over the span of `inputs`.
///
/// The state starts at rest on the first GIA sample. The visual vertical is
/// sampled at each step start and held across the RK4 stages.
pub fn simulate(inputs: &[TimedInput], p: &ModelParams, dt: f64) -> Result<MsiTrace> {
    p.validate()?;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Validation(format!("dt must be > 0, got {dt}")));
    }
    let grid = InputGrid::new(inputs)?;
    let t0 = grid.t0;
    let steps = ((grid.end() - t0) / dt + 1e-9).floor() as usize;

    let mut state = SvcState::at_rest(inputs[0].input.f);
    let mut rows = Vec::with_capacity(steps + 1);
    let mut gimbal_steps = 0;

    let record = |t: f64, s: &SvcState, rows: &mut Vec<TraceRow>, gimbal_steps: &mut usize| {
        let (f, w) = grid.vestibular(t);
        let (_, c) = derivatives(s, &f, &w, &grid.held_vv(t), p);
        if c.gimbal {
            *gimbal_steps += 1;
        }
        rows.push(TraceRow {
            t,
            msi: s.m2,
            dv_norm: c.dv.norm(),
            dvv_norm: c.dvv.norm(),
            g_hat: s.g_hat,
            v_s: s.v_s,
        });
    };

    record(t0, &state, &mut rows, &mut gimbal_steps);
    for k in 0..steps {
        let t = t0 + k as f64 * dt;
        let vv = grid.held_vv(t);
        let x = rk4_step(
            |tau, x: &StateVec| {
                let (f, w) = grid.vestibular(tau);
                derivatives(&SvcState::from_vector(x), &f, &w, &vv, p)
                    .0
                    .to_vector()
            },
            t,
            &state.to_vector(),
            dt,
        );
        state = SvcState::from_vector(&x);
        let t_next = t0 + (k + 1) as f64 * dt;
        if !state.is_finite() {
            return Err(Error::Divergence {
                step: k + 1,
                t: t_next,
            });
        }
        record(t_next, &state, &mut rows, &mut gimbal_steps);
    }

    Ok(MsiTrace {
        rows,
        final_state: state,
        gimbal_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::GRAVITY;

    fn upright() -> Vec3 {
        Vec3::new(0.0, GRAVITY, 0.0)
    }

    fn series(n: usize, dt: f64, f: impl Fn(f64) -> SvcInput) -> Vec<TimedInput> {
        (0..n)
            .map(|i| {
                let t = i as f64 * dt;
                TimedInput { t, input: f(t) }
            })
            .collect()
    }

    #[test]
    fn rest_stays_conflict_free() {
        let rest = SvcInput {
            f: upright(),
            omega: Vec3::zeros(),
            vv: upright(),
        };
        let inputs = series(601, 0.1, |_| rest);
        let tr = simulate(&inputs, &ModelParams::svc_vv(), 0.1).unwrap();
        assert_eq!(tr.rows.len(), 601);
        assert!(tr.rows.iter().all(|r| r.msi == 0.0 && r.dv_norm == 0.0));
    }

    #[test]
    fn rejects_jittered_timestamps() {
        let rest = SvcInput {
            f: upright(),
            omega: Vec3::zeros(),
            vv: upright(),
        };
        let mut inputs = series(10, 0.1, |_| rest);
        inputs[4].t += 1e-4;
        assert!(matches!(
            simulate(&inputs, &ModelParams::svc_vv(), 0.1),
            Err(Error::NonUniformInput { index: 4, .. })
        ));
        inputs[4].t -= 1e-4 - 5e-7;
        assert!(simulate(&inputs, &ModelParams::svc_vv(), 0.1).is_ok());
    }

    #[test]
    fn reports_divergence_step() {
        let inputs = series(5, 0.1, |t| SvcInput {
            f: if t > 0.25 {
                Vec3::new(f64::NAN, 0.0, 0.0)
            } else {
                upright()
            },
            omega: Vec3::zeros(),
            vv: upright(),
        });
        match simulate(&inputs, &ModelParams::conventional(), 0.1) {
            Err(Error::Divergence { step, .. }) => assert_eq!(step, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn held_vv_ignores_substep_changes() {
        let inputs = series(3, 1.0, |t| SvcInput {
            f: upright(),
            omega: Vec3::zeros(),
            vv: Vec3::new(t, 0.0, 0.0),
        });
        let grid = InputGrid::new(&inputs).unwrap();
        assert_eq!(grid.held_vv(0.5).x, 0.0);
        assert_eq!(grid.held_vv(1.0).x, 1.0);
        assert_eq!(grid.held_vv(1.999).x, 1.0);
    }

    #[test]
    fn vestibular_inputs_interpolate() {
        let inputs = series(2, 0.1, |t| SvcInput {
            f: Vec3::new(t * 10.0, 0.0, 0.0),
            omega: Vec3::zeros(),
            vv: upright(),
        });
        let grid = InputGrid::new(&inputs).unwrap();
        assert!((grid.vestibular(0.05).0.x - 0.5).abs() < 1e-12);
    }

    #[test]
    fn state_vector_roundtrip() {
        let s = SvcState {
            v_s: Vec3::new(1.0, 2.0, 3.0),
            x_scc: Vec3::new(4.0, 5.0, 6.0),
            v_hat_s: Vec3::new(7.0, 8.0, 9.0),
            x_hat_scc: Vec3::new(10.0, 11.0, 12.0),
            g_hat: Vec3::new(13.0, 14.0, 15.0),
            m1: 16.0,
            m2: 17.0,
        };
        assert_eq!(SvcState::from_vector(&s.to_vector()), s);
    }
}
