//! Synthetic scenes and trajectories with known ground truth.
//!
//! Scenes are rendered in head coordinates: a scene with `roll_deg = r`
//! shows world-fixed content rotated by `-r`, which is what a head rolled by
//! `-r` sees. A head roll of `a` degrees therefore puts the true vertical at
//! `90 + a` degrees and is rendered with `roll_deg = -a`.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use crate::dataio::{self, ImuSample, ImuSeries, TrialManifest};
use crate::error::{Error, Result};
use crate::imgproc::ColorImage;
use crate::{Vec3, GRAVITY};

/// 6 km/h.
pub const MAX_SPEED: f64 = 6.0 / 3.6;
pub const MAX_LINEAR_ACC: f64 = 1.7;
pub const MAX_ROLL_DEG: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneKind {
    /// Two orthogonal families of bright lines.
    Grid,
    /// Bright sky over dark ground.
    Horizon,
    /// Head-locked page with an axis-aligned frame and text strokes over a
    /// faint world-fixed grid.
    BookOccluder,
}

impl FromStr for SceneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "grid" => Ok(SceneKind::Grid),
            "horizon" => Ok(SceneKind::Horizon),
            "book_occluder" => Ok(SceneKind::BookOccluder),
            other => Err(Error::InvalidSpec(format!("unknown scene kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SceneSpec {
    pub kind: SceneKind,
    /// Rotation of world content relative to the head, degrees.
    pub roll_deg: f64,
    pub line_spacing: f64,
    pub line_width: f64,
    /// Standard deviation of additive pixel noise, 8-bit intensity units.
    pub noise_std: f64,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            kind: SceneKind::Grid,
            roll_deg: 0.0,
            line_spacing: 64.0,
            line_width: 6.0,
            noise_std: 4.0,
            width: 640,
            height: 360,
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.roll_deg.abs() <= MAX_ROLL_DEG) {
            return Err(Error::InvalidSpec(format!(
                "roll_deg {} outside [-60, 60]",
                self.roll_deg
            )));
        }
        if !(self.line_width >= 1.0 && self.line_spacing > self.line_width) {
            return Err(Error::InvalidSpec(format!(
                "need line_spacing > line_width >= 1, got {} and {}",
                self.line_spacing, self.line_width
            )));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::InvalidSpec("noise_std must be >= 0".into()));
        }
        if self.width < 11 || self.height < 11 {
            return Err(Error::InvalidSpec(format!(
                "image {}x{} too small",
                self.width, self.height
            )));
        }
        Ok(())
    }
}

/// Anti-aliased coverage of a periodic family of lines at signed offset `v`.
#[inline]
fn line_coverage(v: f64, spacing: f64, half_width: f64) -> f64 {
    let m = v - spacing * (v / spacing).floor();
    let d = m.min(spacing - m);
    (half_width + 0.5 - d).clamp(0.0, 1.0)
}

struct Rotation {
    cos: f64,
    sin: f64,
}

impl Rotation {
    /// Maps head-frame points into a world frame rotated by `-roll_deg`.
    fn for_roll(roll_deg: f64) -> Self {
        let content = (-roll_deg).to_radians();
        Rotation {
            cos: content.cos(),
            sin: content.sin(),
        }
    }

    /// World coordinates `(u, v)` of head-frame point `(x, y)`.
    #[inline]
    fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (self.cos * x + self.sin * y, -self.sin * x + self.cos * y)
    }
}

/// Book page geometry in head-frame pixels, centred.
struct Book {
    half_w: f64,
    half_h: f64,
    border: f64,
}

impl Book {
    fn for_size(width: usize, height: usize) -> Self {
        Book {
            half_w: 0.36 * width as f64,
            half_h: 0.42 * height as f64,
            border: 8.0,
        }
    }

    /// Intensity of the book at `(x, y)`, or `None` outside it.
    fn shade(&self, x: f64, y: f64) -> Option<f64> {
        let (ax, ay) = (x.abs(), y.abs());
        if ax > self.half_w || ay > self.half_h {
            return None;
        }
        if ax > self.half_w - self.border || ay > self.half_h - self.border {
            return Some(25.0);
        }
        // text strokes: rows of dark bars inside a margin
        let margin = self.border + 18.0;
        if ax < self.half_w - margin && ay < self.half_h - margin {
            let row = ((y + self.half_h) / 16.0).floor();
            let in_stroke = (y + self.half_h).rem_euclid(16.0) < 4.0;
            // ragged line ends
            let right = self.half_w - margin - 40.0 * ((row * 7.3).sin() + 1.0);
            if in_stroke && x < right {
                return Some(60.0);
            }
        }
        Some(235.0)
    }
}

/// Render one frame. Noise is drawn from a ChaCha8 stream seeded by
/// `spec.seed`, so rendering is deterministic.
pub fn render_scene(spec: &SceneSpec) -> Result<ColorImage> {
    spec.validate()?;
    Ok(render_unchecked(spec, 0))
}

fn render_unchecked(spec: &SceneSpec, stream: u64) -> ColorImage {
    let (w, h) = (spec.width, spec.height);
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let rot = Rotation::for_roll(spec.roll_deg);
    let half = spec.line_width / 2.0;
    let book = Book::for_size(w, h);

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(stream);
    let noise = (spec.noise_std > 0.0).then(|| Normal::new(0.0, spec.noise_std).unwrap());

    let mut data = Vec::with_capacity(w * h * 3);
    for r in 0..h {
        let y = cy - r as f64;
        for c in 0..w {
            let x = c as f64 - cx;
            let (u, v) = rot.apply(x, y);
            let value = match spec.kind {
                SceneKind::Grid => {
                    let cov = line_coverage(v, spec.line_spacing, half).max(line_coverage(
                        u,
                        spec.line_spacing,
                        half,
                    ));
                    50.0 + 170.0 * cov
                }
                SceneKind::Horizon => {
                    // sky above v = 0, anti-aliased over one pixel
                    let sky = (v + 0.5).clamp(0.0, 1.0);
                    60.0 + 140.0 * sky
                }
                SceneKind::BookOccluder => match book.shade(x, y) {
                    Some(s) => s,
                    None => {
                        let cov = line_coverage(v, spec.line_spacing, half).max(line_coverage(
                            u,
                            spec.line_spacing,
                            half,
                        ));
                        110.0 + 25.0 * cov
                    }
                },
            };
            let n = noise.as_ref().map_or(0.0, |d| d.sample(&mut rng));
            let p = (value + n).round().clamp(0.0, 255.0) as u8;
            data.extend_from_slice(&[p, p, p]);
        }
    }
    ColorImage::new(h, w, data).expect("dimensions validated")
}

/// Ground-truth vertical direction for a head roll of `roll_deg`.
pub fn theta_g_for_head_roll(roll_deg: f64) -> f64 {
    90.0 + roll_deg
}

/// Frames of a scene following a head-roll series. Frame `i` uses noise
/// stream `i`.
#[derive(Debug, Clone)]
pub struct SceneSequence {
    pub template: SceneSpec,
    pub head_roll_deg: Vec<f64>,
}

impl SceneSequence {
    pub fn new(template: SceneSpec, head_roll_deg: Vec<f64>) -> Result<Self> {
        template.validate()?;
        if let Some(bad) = head_roll_deg.iter().find(|r| !(r.abs() <= MAX_ROLL_DEG)) {
            return Err(Error::InvalidSpec(format!(
                "head roll {bad} outside [-60, 60]"
            )));
        }
        Ok(SceneSequence {
            template,
            head_roll_deg,
        })
    }

    pub fn len(&self) -> usize {
        self.head_roll_deg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.head_roll_deg.is_empty()
    }

    pub fn frame(&self, i: usize) -> ColorImage {
        let spec = SceneSpec {
            roll_deg: -self.head_roll_deg[i],
            ..self.template
        };
        render_unchecked(&spec, i as u64)
    }

    pub fn theta_g(&self, i: usize) -> f64 {
        theta_g_for_head_roll(self.head_roll_deg[i])
    }
}

/// Static head poses, each held for a number of frames.
#[derive(Debug, Clone)]
pub struct StaticSuite {
    pub angles_deg: Vec<f64>,
    pub frames_per_pose: usize,
    pub sequence: SceneSequence,
}

/// Default head-roll poses: eleven angles within the band where only one
/// grid family falls inside the estimator's search band.
pub fn default_pose_angles() -> Vec<f64> {
    (-5..=5).map(|k| 5.0 * k as f64).collect()
}

/// 3 s per pose at 60 Hz.
pub const FRAMES_PER_POSE: usize = 180;

/// Frames for a list of static head poses.
pub fn static_pose_suite(
    angles_deg: &[f64],
    frames_per_pose: usize,
    template: SceneSpec,
) -> Result<StaticSuite> {
    if angles_deg.is_empty() || frames_per_pose == 0 {
        return Err(Error::InvalidSpec(
            "static suite needs poses and frames".into(),
        ));
    }
    let rolls = angles_deg
        .iter()
        .flat_map(|&a| std::iter::repeat_n(a, frames_per_pose))
        .collect();
    Ok(StaticSuite {
        angles_deg: angles_deg.to_vec(),
        frames_per_pose,
        sequence: SceneSequence::new(template, rolls)?,
    })
}

impl StaticSuite {
    pub fn len(&self) -> usize {
        self.sequence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequence.is_empty()
    }

    pub fn frame(&self, i: usize) -> (ColorImage, f64) {
        (self.sequence.frame(i), self.sequence.theta_g(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = (ColorImage, f64)> + '_ {
        (0..self.len()).map(|i| self.frame(i))
    }

    /// Static IMU record: the accelerometer reads gravity only.
    pub fn imu(&self, rate: f64) -> ImuSeries {
        let samples = self
            .sequence
            .head_roll_deg
            .iter()
            .enumerate()
            .map(|(i, &roll)| ImuSample {
                t: i as f64 / rate,
                accel: up_vector(theta_g_for_head_roll(roll)) * GRAVITY,
                gyro: Vec3::zeros(),
            })
            .collect();
        ImuSeries { samples, rate }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectorySpec {
    pub pylon_spacing: f64,
    /// Cruise speed, m/s.
    pub speed: f64,
    /// Peak lateral acceleration, m/s².
    pub max_lat_acc: f64,
    /// Peak longitudinal acceleration while starting and stopping, m/s².
    pub max_long_acc: f64,
    pub n_pylons: usize,
    /// Head roll per unit lateral acceleration, deg per m/s².
    pub head_roll_gain: f64,
    /// Rest before moving off and after stopping, s.
    pub rest_s: f64,
    /// Length of the record when `speed` is zero, s.
    pub static_duration_s: f64,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        TrajectorySpec {
            pylon_spacing: 4.0,
            speed: 1.65,
            max_lat_acc: 1.7,
            max_long_acc: 1.2,
            n_pylons: 5,
            head_roll_gain: 4.0,
            rest_s: 0.5,
            static_duration_s: 37.0,
        }
    }
}

impl TrajectorySpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if !(self.speed >= 0.0 && self.speed <= MAX_SPEED + 1e-12) {
            return bad(format!(
                "speed {} m/s outside [0, {MAX_SPEED:.4}] (6 km/h)",
                self.speed
            ));
        }
        for (name, v) in [
            ("max_lat_acc", self.max_lat_acc),
            ("max_long_acc", self.max_long_acc),
        ] {
            if !(v > 0.0 && v <= MAX_LINEAR_ACC) {
                return bad(format!("{name} {v} outside (0, {MAX_LINEAR_ACC}]"));
            }
        }
        if !(self.pylon_spacing > 0.0) || self.n_pylons == 0 {
            return bad("need positive pylon spacing and at least one pylon".into());
        }
        if !(self.rest_s >= 0.0) || !(self.static_duration_s > 0.0) {
            return bad("durations must be positive".into());
        }
        if !(self.head_roll_gain.abs() * self.max_lat_acc <= MAX_ROLL_DEG) {
            return bad(format!(
                "head roll gain {} exceeds the roll range",
                self.head_roll_gain
            ));
        }
        Ok(())
    }
}

/// Lateral and longitudinal acceleration profile, piecewise smooth.
#[derive(Debug, Clone, Copy)]
enum Phase {
    Rest,
    /// `a_long = sign * peak * sin^2(pi s / T)`.
    Longitudinal {
        sign: f64,
        peak: f64,
    },
    /// `a_lat = peak * sin(pi s / half_period)`.
    Slalom {
        peak: f64,
        half_period: f64,
    },
    /// `a_lat = peak * sin^2(pi s / T)`.
    UTurn {
        peak: f64,
    },
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    start: f64,
    duration: f64,
    phase: Phase,
}

#[derive(Debug, Clone, Copy, Default)]
struct Kinematics {
    a_lat: f64,
    da_lat: f64,
    a_long: f64,
    speed: f64,
}

fn build_segments(spec: &TrajectorySpec) -> Vec<Segment> {
    let v = spec.speed;
    let mut phases = Vec::new();
    if v == 0.0 {
        phases.push((spec.static_duration_s, Phase::Rest));
    } else {
        let t_acc = 2.0 * v / spec.max_long_acc;
        let half_period = spec.pylon_spacing / v;
        let slalom = Phase::Slalom {
            peak: spec.max_lat_acc,
            half_period,
        };
        // yaw = a_lat / v integrates to pi over the turn
        let t_turn = 2.0 * PI * v / spec.max_lat_acc;
        phases.extend([
            (spec.rest_s, Phase::Rest),
            (
                t_acc,
                Phase::Longitudinal {
                    sign: 1.0,
                    peak: spec.max_long_acc,
                },
            ),
            (spec.n_pylons as f64 * half_period, slalom),
            (
                t_turn,
                Phase::UTurn {
                    peak: spec.max_lat_acc,
                },
            ),
            (spec.n_pylons as f64 * half_period, slalom),
            (
                t_acc,
                Phase::Longitudinal {
                    sign: -1.0,
                    peak: spec.max_long_acc,
                },
            ),
            (spec.rest_s, Phase::Rest),
        ]);
    }
    let mut start = 0.0;
    phases
        .into_iter()
        .filter(|(d, _)| *d > 0.0)
        .map(|(duration, phase)| {
            let s = Segment {
                start,
                duration,
                phase,
            };
            start += duration;
            s
        })
        .collect()
}

fn kinematics(segments: &[Segment], cruise: f64, t: f64) -> Kinematics {
    let Some(seg) = segments
        .iter()
        .find(|s| t < s.start + s.duration)
        .or(segments.last())
    else {
        return Kinematics::default();
    };
    let s = (t - seg.start).clamp(0.0, seg.duration);
    let x = PI * s / seg.duration;
    match seg.phase {
        Phase::Rest => Kinematics::default(),
        Phase::Longitudinal { sign, peak } => {
            // speed is the integral of the raised-cosine pulse
            let frac = (s - seg.duration * (2.0 * x).sin() / (2.0 * PI)) / seg.duration;
            let speed = if sign > 0.0 {
                cruise * frac
            } else {
                cruise * (1.0 - frac)
            };
            Kinematics {
                a_long: sign * peak * x.sin().powi(2),
                speed,
                ..Default::default()
            }
        }
        Phase::Slalom { peak, half_period } => {
            let w = PI / half_period;
            Kinematics {
                a_lat: peak * (w * s).sin(),
                da_lat: peak * w * (w * s).cos(),
                speed: cruise,
                ..Default::default()
            }
        }
        Phase::UTurn { peak } => Kinematics {
            a_lat: peak * x.sin().powi(2),
            da_lat: peak * (2.0 * x).sin() * PI / seg.duration,
            speed: cruise,
            ..Default::default()
        },
    }
}

fn up_vector(theta_deg: f64) -> Vec3 {
    let r = theta_deg.to_radians();
    Vec3::new(r.cos(), r.sin(), 0.0)
}

/// A synthetic drive with its ground truth.
#[derive(Debug, Clone)]
pub struct SlalomTrial {
    /// Accelerometer (GIA) and gyro in head coordinates.
    pub imu: ImuSeries,
    pub head_roll_deg: Vec<f64>,
    pub theta_g_deg: Vec<f64>,
    /// Gravity (pointing up) in head coordinates.
    pub gravity: Vec<Vec3>,
    /// Inertial acceleration in head coordinates.
    pub accel: Vec<Vec3>,
    pub lateral_acc: Vec<f64>,
}

impl SlalomTrial {
    pub fn len(&self) -> usize {
        self.imu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.imu.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.imu.duration()
    }
}

/// Slalom through the pylons, U-turn, slalom back. The head rolls by
/// `head_roll_gain * a_lat`; the gyro sees the vehicle yaw about the true
/// vertical plus the head roll rate about the viewing axis.
pub fn slalom_trajectory(spec: &TrajectorySpec, dt: f64) -> Result<SlalomTrial> {
    spec.validate()?;
    if !(dt > 0.0) {
        return Err(Error::InvalidSpec(format!("dt must be > 0, got {dt}")));
    }
    let segments = build_segments(spec);
    let total: f64 = segments.iter().map(|s| s.duration).sum();
    let n = (total / dt).round() as usize;

    let mut out = SlalomTrial {
        imu: ImuSeries {
            samples: Vec::with_capacity(n),
            rate: 1.0 / dt,
        },
        head_roll_deg: Vec::with_capacity(n),
        theta_g_deg: Vec::with_capacity(n),
        gravity: Vec::with_capacity(n),
        accel: Vec::with_capacity(n),
        lateral_acc: Vec::with_capacity(n),
    };
    for k in 0..n {
        let t = k as f64 * dt;
        let kin = kinematics(&segments, spec.speed, t);
        let roll = spec.head_roll_gain * kin.a_lat;
        let roll_rate = (spec.head_roll_gain * kin.da_lat).to_radians();
        let theta_g = theta_g_for_head_roll(roll);
        let up = up_vector(theta_g);
        let r = roll.to_radians();
        let left = Vec3::new(-r.cos(), -r.sin(), 0.0);
        let forward = Vec3::new(0.0, 0.0, -1.0);

        let gravity = up * GRAVITY;
        let accel = left * kin.a_lat + forward * kin.a_long;
        let yaw_rate = if kin.speed > 0.0 {
            kin.a_lat / kin.speed
        } else {
            0.0
        };
        let gyro = up * yaw_rate + Vec3::new(0.0, 0.0, -roll_rate);

        out.imu.samples.push(ImuSample {
            t,
            accel: accel + gravity,
            gyro,
        });
        out.head_roll_deg.push(roll);
        out.theta_g_deg.push(theta_g);
        out.gravity.push(gravity);
        out.accel.push(accel);
        out.lateral_acc.push(kin.a_lat);
    }
    Ok(out)
}

/// Write a bundle (`trial.json`, `imu.csv`, `frames/`) for a scene sequence
/// and its IMU record.
pub fn write_bundle(dir: &Path, imu: &ImuSeries, scenes: &SceneSequence) -> Result<()> {
    if imu.len() != scenes.len() {
        return Err(Error::Validation(format!(
            "IMU has {} samples but {} frames",
            imu.len(),
            scenes.len()
        )));
    }
    let frames_dir = dir.join("frames");
    fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;

    let imu_path = dir.join("imu.csv");
    let f = fs::File::create(&imu_path).map_err(|e| Error::io(&imu_path, e))?;
    imu.write_csv(f)?;

    (0..scenes.len()).into_par_iter().try_for_each(|i| {
        dataio::write_png(
            &frames_dir.join(dataio::frame_file_name(i)),
            &scenes.frame(i),
        )
    })?;

    let truth_path = dir.join("truth.csv");
    let mut truth = String::from("frame_index,t_s,head_roll_deg,theta_g_deg\n");
    for (i, s) in imu.samples.iter().enumerate() {
        truth.push_str(&format!(
            "{},{},{},{}\n",
            i,
            s.t,
            scenes.head_roll_deg[i],
            scenes.theta_g(i)
        ));
    }
    fs::write(&truth_path, truth).map_err(|e| Error::io(&truth_path, e))?;

    TrialManifest {
        imu: Some("imu.csv".into()),
        frames_dir: "frames".into(),
        frame_times: imu.times(),
        width: scenes.template.width,
        height: scenes.template.height,
    }
    .write(dir)?;
    Ok(())
}
