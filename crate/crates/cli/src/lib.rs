//! Drivers behind the `svcvv` subcommands.
//!
//! Each `cmd_*` function reads its inputs, writes its artifacts into an
//! output directory and returns the report it wrote, so the same code paths
//! serve the binary and the tests.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use svcvv::dataio::{self, duplicate_trial, FrameManifest, ImuSeries, Trial, SYNC_RATE_HZ};
use svcvv::metrics::{self, RegressionResult};
use svcvv::svc::{self, ModelKind, ModelParams, MsiTrace, SvcInput, TimedInput};
use svcvv::synth::{self, SceneKind, SceneSequence, SceneSpec, TrajectorySpec};
use svcvv::vv::{self, VvEstimate};
use svcvv::{Error, Result, Vec3};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_SIMULATION: i32 = 4;

pub const DEFAULT_DT: f64 = 1.0 / 60.0;
pub const DEFAULT_DUPLICATES: usize = 10;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. } | Error::Image { .. } => EXIT_IO,
        Error::Divergence { .. } | Error::NonUniformInput { .. } => EXIT_SIMULATION,
        _ => EXIT_VALIDATION,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub model: ModelKind,
    /// `key = value` parameter overrides applied on top of the preset.
    pub params_file: Option<PathBuf>,
    pub dt: f64,
    pub duplicate_n: usize,
    pub out: PathBuf,
}

impl RunConfig {
    pub fn new(manifest: impl Into<PathBuf>, model: ModelKind) -> Self {
        RunConfig {
            manifest: manifest.into(),
            model,
            params_file: None,
            dt: DEFAULT_DT,
            duplicate_n: DEFAULT_DUPLICATES,
            out: PathBuf::from("."),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.duplicate_n < 1 {
            return Err(Error::Validation("--dup must be at least 1".into()));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Validation(format!(
                "--dt must be > 0, got {}",
                self.dt
            )));
        }
        Ok(())
    }

    pub fn params(&self) -> Result<ModelParams> {
        let preset = ModelParams::preset(self.model);
        match &self.params_file {
            None => Ok(preset),
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                preset.with_overrides(&text, &path.display().to_string())
            }
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn create_file(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|e| Error::io(path, e))
}

/// Raw direction of every frame. A file referenced several times (as after
/// resampling) is decoded once.
pub fn frame_raw_thetas(frames: &FrameManifest) -> Result<Vec<Option<f64>>> {
    let mut slot: HashMap<&Path, usize> = HashMap::new();
    let mut unique: Vec<&Path> = Vec::new();
    let index: Vec<usize> = frames
        .frames
        .iter()
        .map(|f| {
            *slot.entry(f.path.as_path()).or_insert_with(|| {
                unique.push(f.path.as_path());
                unique.len() - 1
            })
        })
        .collect();
    let raw: Vec<Option<f64>> = unique
        .par_iter()
        .map(|p| vv::raw_theta(&dataio::read_png(p)?))
        .collect::<Result<_>>()?;
    Ok(index.into_iter().map(|i| raw[i]).collect())
}

/// Raw directions of rendered frames, without going through files.
pub fn sequence_raw_thetas(scenes: &SceneSequence) -> Result<Vec<Option<f64>>> {
    (0..scenes.len())
        .into_par_iter()
        .map(|i| vv::raw_theta(&scenes.frame(i)))
        .collect()
}

fn write_vv(path: &Path, estimates: &[VvEstimate]) -> Result<()> {
    dataio::write_vv_csv(estimates, create_file(path)?).map_err(|e| Error::io(path, e))
}

/// Per-frame visual vertical for a trial; writes `vv.csv`.
pub fn cmd_vv(manifest: &Path, out: &Path) -> Result<Vec<VvEstimate>> {
    let trial = Trial::load(manifest)?;
    let raw = frame_raw_thetas(&trial.frames)?;
    let estimates = vv::smooth_sequence(&raw, &trial.frames.times());
    create_dir(out)?;
    write_vv(&out.join("vv.csv"), &estimates)?;
    Ok(estimates)
}

#[derive(Debug, Clone, Serialize)]
pub struct MsiReport {
    pub model: String,
    pub params: ModelParams,
    pub dt_s: f64,
    pub duplicate_n: usize,
    pub trial_duration_s: f64,
    pub frames_per_copy: usize,
    pub final_msi_pct: f64,
    pub max_msi_pct: f64,
    /// Visual vertical against the gyro-tracked vertical, first copy.
    pub vv_mad_deg: f64,
    pub vv_sd_deg: f64,
    pub gimbal_steps: usize,
}

#[derive(Debug, Clone)]
pub struct MsiRun {
    pub trace: MsiTrace,
    pub vv: Vec<VvEstimate>,
    pub report: MsiReport,
}

/// Duplicate a synchronized trial, blend its visual vertical and integrate
/// the model.
///
/// `imu` must be uniformly sampled and `raw[i]` belongs to `imu.samples[i]`.
/// The vertical used for the direction statistics is integrated from the
/// gyro, starting from the first accelerometer sample.
pub fn run_msi(
    imu: &ImuSeries,
    raw: &[Option<f64>],
    params: &ModelParams,
    model: &str,
    dt: f64,
    duplicate_n: usize,
) -> Result<MsiRun> {
    if imu.len() != raw.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} IMU samples but {} frames",
            imu.len(),
            raw.len()
        )));
    }
    if imu.len() < 2 {
        return Err(Error::Validation("trial needs at least two ticks".into()));
    }
    if duplicate_n < 1 {
        return Err(Error::Validation(
            "duplicate count must be at least 1".into(),
        ));
    }
    let period = imu.duration();
    let samples = duplicate_trial(&imu.samples, period, duplicate_n);
    let timed_raw: Vec<(f64, Option<f64>)> =
        imu.times().into_iter().zip(raw.iter().copied()).collect();
    let timed_raw = duplicate_trial(&timed_raw, period, duplicate_n);
    let (times, raw_all): (Vec<f64>, Vec<Option<f64>>) = timed_raw.into_iter().unzip();
    let estimates = vv::smooth_sequence(&raw_all, &times);

    let inputs: Vec<TimedInput> = samples
        .iter()
        .zip(&estimates)
        .map(|(s, e)| TimedInput {
            t: s.t,
            input: SvcInput {
                f: s.accel,
                omega: s.gyro,
                vv: e.vv,
            },
        })
        .collect();
    let trace = svc::simulate(&inputs, params, dt)?;

    let omega: Vec<Vec3> = imu.samples.iter().map(|s| s.gyro).collect();
    let track = svc::gravity_track(&omega, imu.samples[0].accel, 1.0 / imu.rate);
    let theta_vv: Vec<f64> = estimates[..imu.len()].iter().map(|e| e.theta_vv).collect();
    let report = MsiReport {
        model: model.to_string(),
        params: *params,
        dt_s: dt,
        duplicate_n,
        trial_duration_s: period,
        frames_per_copy: imu.len(),
        final_msi_pct: trace.final_msi(),
        max_msi_pct: trace.max_msi(),
        vv_mad_deg: metrics::mad(&theta_vv, &track.theta_deg)?,
        vv_sd_deg: metrics::std_dev(&theta_vv)?,
        gimbal_steps: trace.gimbal_steps,
    };
    Ok(MsiRun {
        trace,
        vv: estimates,
        report,
    })
}

/// Full pipeline on a trial bundle; writes `msi_trace.csv`, `vv.csv` and
/// `metrics.json`.
pub fn cmd_msi(cfg: &RunConfig) -> Result<MsiReport> {
    cfg.validate()?;
    let params = cfg.params()?;
    let trial = Trial::load(&cfg.manifest)?;
    let (imu, frames) = dataio::resample_sync(trial.require_imu()?, &trial.frames, SYNC_RATE_HZ)?;
    let raw = frame_raw_thetas(&frames)?;
    let run = run_msi(
        &imu,
        &raw,
        &params,
        &cfg.model.to_string(),
        cfg.dt,
        cfg.duplicate_n,
    )?;

    create_dir(&cfg.out)?;
    let trace_path = cfg.out.join("msi_trace.csv");
    run.trace
        .write_csv(create_file(&trace_path)?)
        .map_err(|e| Error::io(&trace_path, e))?;
    write_vv(&cfg.out.join("vv.csv"), &run.vv)?;
    write_json(&cfg.out.join("metrics.json"), &run.report)?;
    Ok(run.report)
}

#[derive(Debug, Clone, Serialize)]
pub struct StaticReport {
    pub frames: usize,
    /// Fit of the true vertical on the estimated one.
    pub regression: RegressionResult,
    pub mad_deg: f64,
    pub elapsed_s: f64,
}

/// Regression of `theta_g` on `theta_vv` and their MAD.
pub fn static_report(theta_vv: &[f64], theta_g: &[f64]) -> Result<(RegressionResult, f64)> {
    Ok((
        metrics::linear_regression(theta_vv, theta_g)?,
        metrics::mad(theta_vv, theta_g)?,
    ))
}

/// Static accuracy on a bundle whose IMU holds still poses. The true
/// vertical of each frame is the in-plane direction of the accelerometer.
/// Writes `vv.csv` and `report.json`.
pub fn cmd_static_eval(manifest: &Path, out: &Path) -> Result<StaticReport> {
    let start = Instant::now();
    let trial = Trial::load(manifest)?;
    let imu = trial.require_imu()?;
    let theta_g: Vec<f64> = trial
        .frames
        .frames
        .iter()
        .map(|f| svc::planar_angle_deg(&imu.interpolate(f.t).accel))
        .collect();
    let raw = frame_raw_thetas(&trial.frames)?;
    let estimates = vv::smooth_sequence(&raw, &trial.frames.times());
    let theta_vv: Vec<f64> = estimates.iter().map(|e| e.theta_vv).collect();
    let (regression, mad_deg) = static_report(&theta_vv, &theta_g)?;
    let report = StaticReport {
        frames: estimates.len(),
        regression,
        mad_deg,
        elapsed_s: start.elapsed().as_secs_f64(),
    };
    create_dir(out)?;
    write_vv(&out.join("vv.csv"), &estimates)?;
    write_json(&out.join("report.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BundleKind {
    Slalom,
    StaticSuite,
}

/// Contents of a `synth` spec file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthSpec {
    pub bundle: BundleKind,
    pub scene: SceneSpec,
    pub trajectory: TrajectorySpec,
    /// Static suite head-roll poses, degrees.
    pub angles_deg: Vec<f64>,
    pub frames_per_pose: usize,
    pub rate_hz: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            bundle: BundleKind::Slalom,
            scene: SceneSpec::default(),
            trajectory: TrajectorySpec::default(),
            angles_deg: synth::default_pose_angles(),
            frames_per_pose: synth::FRAMES_PER_POSE,
            rate_hz: SYNC_RATE_HZ,
        }
    }
}

impl SynthSpec {
    /// Parse `key = value` lines over the defaults.
    ///
    /// Keys: `bundle` (`slalom` | `static_suite`), `scene`, `roll_deg`,
    /// `line_spacing`, `line_width`, `noise_std`, `width`, `height`, `seed`,
    /// `pylon_spacing`, `speed`, `max_lat_acc`, `max_long_acc`, `n_pylons`,
    /// `head_roll_gain`, `rest_s`, `static_duration_s`, `angles` (comma
    /// separated), `frames_per_pose`, `rate_hz`.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut s = SynthSpec::default();
        for (line, key, value) in dataio::parse_kv(text, origin)? {
            let err = |msg: String| Error::Parse {
                path: origin.to_string(),
                line,
                msg,
            };
            let num = |v: &str| -> Result<f64> {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| err(format!("'{v}' is not a number")))
            };
            let count = |v: &str| -> Result<usize> {
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| err(format!("'{v}' is not a count")))
            };
            match key.as_str() {
                "bundle" => {
                    s.bundle = match value.as_str() {
                        "slalom" => BundleKind::Slalom,
                        "static_suite" => BundleKind::StaticSuite,
                        other => return Err(err(format!("unknown bundle '{other}'"))),
                    }
                }
                "scene" => s.scene.kind = value.parse::<SceneKind>()?,
                "roll_deg" => s.scene.roll_deg = num(&value)?,
                "line_spacing" => s.scene.line_spacing = num(&value)?,
                "line_width" => s.scene.line_width = num(&value)?,
                "noise_std" => s.scene.noise_std = num(&value)?,
                "width" => s.scene.width = count(&value)?,
                "height" => s.scene.height = count(&value)?,
                "seed" => {
                    s.scene.seed = value
                        .parse()
                        .map_err(|_| err(format!("'{value}' is not a seed")))?
                }
                "pylon_spacing" => s.trajectory.pylon_spacing = num(&value)?,
                "speed" => s.trajectory.speed = num(&value)?,
                "max_lat_acc" => s.trajectory.max_lat_acc = num(&value)?,
                "max_long_acc" => s.trajectory.max_long_acc = num(&value)?,
                "n_pylons" => s.trajectory.n_pylons = count(&value)?,
                "head_roll_gain" => s.trajectory.head_roll_gain = num(&value)?,
                "rest_s" => s.trajectory.rest_s = num(&value)?,
                "static_duration_s" => s.trajectory.static_duration_s = num(&value)?,
                "angles" => {
                    s.angles_deg = value.split(',').map(num).collect::<Result<_>>()?;
                }
                "frames_per_pose" => s.frames_per_pose = count(&value)?,
                "rate_hz" => s.rate_hz = num(&value)?,
                other => return Err(err(format!("unknown key '{other}'"))),
            }
        }
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        if !(self.rate_hz.is_finite() && self.rate_hz > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "rate_hz must be > 0, got {}",
                self.rate_hz
            )));
        }
        match self.bundle {
            BundleKind::Slalom => self.trajectory.validate(),
            BundleKind::StaticSuite => Ok(()),
        }
    }

    /// IMU record and matching frames.
    pub fn build(&self) -> Result<(ImuSeries, SceneSequence)> {
        self.validate()?;
        match self.bundle {
            BundleKind::Slalom => {
                let trial = synth::slalom_trajectory(&self.trajectory, 1.0 / self.rate_hz)?;
                let scenes = SceneSequence::new(self.scene, trial.head_roll_deg)?;
                Ok((trial.imu, scenes))
            }
            BundleKind::StaticSuite => {
                let suite =
                    synth::static_pose_suite(&self.angles_deg, self.frames_per_pose, self.scene)?;
                Ok((suite.imu(self.rate_hz), suite.sequence))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SynthSummary {
    pub bundle: BundleKind,
    pub scene: SceneKind,
    pub frames: usize,
    pub duration_s: f64,
}

/// Generate a bundle from a spec file (or the defaults when `spec` is
/// `None`). A `seed` given here overrides the one in the file.
pub fn cmd_synth(spec: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<SynthSummary> {
    let mut s = match spec {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            SynthSpec::parse(&text, &path.display().to_string())?
        }
        None => SynthSpec::default(),
    };
    if let Some(seed) = seed {
        s.scene.seed = seed;
    }
    let (imu, scenes) = s.build()?;
    create_dir(out)?;
    synth::write_bundle(out, &imu, &scenes)?;
    Ok(SynthSummary {
        bundle: s.bundle,
        scene: s.scene.kind,
        frames: scenes.len(),
        duration_s: imu.duration(),
    })
}
