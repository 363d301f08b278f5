//! Recording ingestion: IMU CSV, trial manifests and frame files, plus the
//! resampling, duplication and hold operations that line the streams up for
//! the model.
//!
//! A trial bundle is a directory holding `trial.json`, an IMU CSV and a
//! frames directory of `frame_%06d.png` files. Paths in the manifest are
//! relative to the manifest itself.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgproc::ColorImage;
use crate::vv::VvEstimate;
use crate::Vec3;

pub const MANIFEST_NAME: &str = "trial.json";
pub const IMU_HEADER: [&str; 7] = ["t", "ax", "ay", "az", "wx", "wy", "wz"];
/// Common grid rate for IMU and camera streams.
pub const SYNC_RATE_HZ: f64 = 60.0;
const TIME_EPS: f64 = 1e-9;

/// Split `key = value` lines. Blank lines and `#` comments are skipped.
/// Returns `(line_number, key, value)` triples.
pub fn parse_kv(text: &str, origin: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: origin.to_string(),
            line: i + 1,
            msg: format!("expected key = value, got '{line}'"),
        })?;
        out.push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub t: f64,
    /// Specific force (gravito-inertial acceleration), m/s².
    pub accel: Vec3,
    /// Angular velocity, rad/s.
    pub gyro: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImuSeries {
    pub samples: Vec<ImuSample>,
    /// Nominal sample rate, Hz.
    pub rate: f64,
}

impl ImuSeries {
    /// Builds a series, checking that timestamps strictly increase. The rate
    /// is the mean sample rate.
    pub fn new(samples: Vec<ImuSample>) -> Result<Self> {
        for (i, w) in samples.windows(2).enumerate() {
            if !(w[1].t > w[0].t) {
                return Err(Error::Order {
                    path: "<series>".into(),
                    line: i + 2,
                    t: w[1].t,
                });
            }
        }
        let rate = mean_rate(samples.iter().map(|s| s.t));
        Ok(ImuSeries { samples, rate })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Span covered, counting the last sample as held for one period.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.rate
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    /// Linear interpolation, holding the end values outside the span.
    pub fn interpolate(&self, t: f64) -> ImuSample {
        let s = &self.samples;
        let idx = s.partition_point(|x| x.t <= t + TIME_EPS);
        if idx == 0 {
            return ImuSample { t, ..s[0] };
        }
        let a = &s[idx - 1];
        if (t - a.t).abs() <= TIME_EPS || idx == s.len() {
            return ImuSample { t, ..*a };
        }
        let b = &s[idx];
        let frac = (t - a.t) / (b.t - a.t);
        ImuSample {
            t,
            accel: a.accel + (b.accel - a.accel) * frac,
            gyro: a.gyro + (b.gyro - a.gyro) * frac,
        }
    }

    pub fn duplicate(&self, n: usize) -> ImuSeries {
        ImuSeries {
            samples: duplicate_trial(&self.samples, self.duration(), n),
            rate: self.rate,
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        let io = |e| Error::io("<imu csv>", e);
        writeln!(w, "{}", IMU_HEADER.join(",")).map_err(io)?;
        for s in &self.samples {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                s.t, s.accel.x, s.accel.y, s.accel.z, s.gyro.x, s.gyro.y, s.gyro.z
            )
            .map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

fn mean_rate(times: impl Iterator<Item = f64>) -> f64 {
    let ts: Vec<f64> = times.collect();
    match ts.len() {
        0 | 1 => 0.0,
        n => (n - 1) as f64 / (ts[n - 1] - ts[0]),
    }
}

/// Parse an IMU CSV with header `t,ax,ay,az,wx,wy,wz`.
pub fn parse_imu_csv<R: Read>(reader: R, origin: &str) -> Result<ImuSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: origin.to_string(),
        line,
        msg,
    };
    let header = rdr
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    let cols: Vec<&str> = header.iter().collect();
    if cols != IMU_HEADER {
        return Err(parse_err(
            1,
            format!(
                "expected header '{}', got '{}'",
                IMU_HEADER.join(","),
                cols.join(",")
            ),
        ));
    }

    let mut samples: Vec<ImuSample> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        if rec.len() != IMU_HEADER.len() {
            return Err(parse_err(
                line,
                format!("expected {} fields, got {}", IMU_HEADER.len(), rec.len()),
            ));
        }
        let mut v = [0f64; 7];
        for (j, field) in rec.iter().enumerate() {
            v[j] = field
                .parse()
                .ok()
                .filter(|x: &f64| x.is_finite())
                .ok_or_else(|| {
                    parse_err(
                        line,
                        format!("column {}: '{}' is not a number", IMU_HEADER[j], field),
                    )
                })?;
        }
        if let Some(prev) = samples.last() {
            if !(v[0] > prev.t) {
                return Err(Error::Order {
                    path: origin.to_string(),
                    line,
                    t: v[0],
                });
            }
        }
        samples.push(ImuSample {
            t: v[0],
            accel: Vec3::new(v[1], v[2], v[3]),
            gyro: Vec3::new(v[4], v[5], v[6]),
        });
    }
    let rate = mean_rate(samples.iter().map(|s| s.t));
    Ok(ImuSeries { samples, rate })
}

pub fn read_imu_csv(path: &Path) -> Result<ImuSeries> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_imu_csv(BufReader::new(f), &path.display().to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRef {
    pub t: f64,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameManifest {
    pub frames: Vec<FrameRef>,
    pub width: usize,
    pub height: usize,
}

impl FrameManifest {
    pub fn times(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.t).collect()
    }

    pub fn rate(&self) -> f64 {
        mean_rate(self.frames.iter().map(|f| f.t))
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Items carrying a timestamp, so that trials can be replicated in time.
pub trait Timestamped: Clone {
    fn time(&self) -> f64;
    fn with_time(&self, t: f64) -> Self;
}

impl Timestamped for ImuSample {
    fn time(&self) -> f64 {
        self.t
    }
    fn with_time(&self, t: f64) -> Self {
        ImuSample { t, ..*self }
    }
}

impl Timestamped for FrameRef {
    fn time(&self) -> f64 {
        self.t
    }
    fn with_time(&self, t: f64) -> Self {
        FrameRef {
            t,
            path: self.path.clone(),
        }
    }
}

impl Timestamped for VvEstimate {
    fn time(&self) -> f64 {
        self.t
    }
    fn with_time(&self, t: f64) -> Self {
        VvEstimate { t, ..*self }
    }
}

impl Timestamped for (f64, Option<f64>) {
    fn time(&self) -> f64 {
        self.0
    }
    fn with_time(&self, t: f64) -> Self {
        (t, self.1)
    }
}

/// Concatenate `n` copies back to back; copy `k` is shifted by
/// `k * period`.
pub fn duplicate_trial<T: Timestamped>(items: &[T], period: f64, n: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(items.len() * n);
    for k in 0..n {
        if k == 0 {
            out.extend_from_slice(items);
        } else {
            let offset = k as f64 * period;
            out.extend(items.iter().map(|x| x.with_time(x.time() + offset)));
        }
    }
    out
}

/// Put both streams on a common grid over their overlap.
///
/// Each stream covers `[first, last + 1/rate)`. The IMU is linearly
/// interpolated at each tick; each tick takes the latest frame at or before
/// it.
pub fn resample_sync(
    imu: &ImuSeries,
    frames: &FrameManifest,
    rate: f64,
) -> Result<(ImuSeries, FrameManifest)> {
    if imu.len() < 2 {
        return Err(Error::Sync("IMU series needs at least two samples".into()));
    }
    if frames.is_empty() {
        return Err(Error::Sync("no frames".into()));
    }
    let frame_period = if frames.len() > 1 {
        1.0 / frames.rate()
    } else {
        1.0 / rate
    };
    let start = imu.samples[0].t.max(frames.frames[0].t);
    let end = (imu.samples[imu.len() - 1].t + 1.0 / imu.rate)
        .min(frames.frames[frames.len() - 1].t + frame_period);
    if !(end > start) {
        return Err(Error::Sync(format!(
            "streams do not overlap (start {start}, end {end})"
        )));
    }
    let n = ((end - start) * rate + 1e-6).floor() as usize;
    if n == 0 {
        return Err(Error::Sync("overlap shorter than one tick".into()));
    }

    let mut samples = Vec::with_capacity(n);
    let mut synced = Vec::with_capacity(n);
    for k in 0..n {
        let t = start + k as f64 / rate;
        samples.push(imu.interpolate(t));
        let idx = frames.frames.partition_point(|f| f.t <= t + TIME_EPS);
        let f = &frames.frames[idx.max(1) - 1];
        synced.push(FrameRef {
            t,
            path: f.path.clone(),
        });
    }
    Ok((
        ImuSeries { samples, rate },
        FrameManifest {
            frames: synced,
            width: frames.width,
            height: frames.height,
        },
    ))
}

/// Visual vertical held from the latest frame at or before `t`.
pub fn zoh_vv(series: &[VvEstimate], t: f64) -> Result<Vec3> {
    let idx = series.partition_point(|e| e.t <= t + TIME_EPS);
    if idx == 0 {
        return Err(Error::Range {
            t,
            first: series.first().map_or(f64::NAN, |e| e.t),
        });
    }
    Ok(series[idx - 1].vv)
}

pub fn write_vv_csv<W: Write>(estimates: &[VvEstimate], w: W) -> std::io::Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(w, "frame_index,timestamp_s,theta_vv_deg,vv_x,vv_y,vv_z")?;
    for e in estimates {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            e.frame_index, e.t, e.theta_vv, e.vv.x, e.vv.y, e.vv.z
        )?;
    }
    w.flush()
}

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:06}.png")
}

pub fn read_png(path: &Path) -> Result<ColorImage> {
    let img = image::open(path)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?
        .to_rgb8();
    let (w, h) = img.dimensions();
    ColorImage::new(h as usize, w as usize, img.into_raw())
}

pub fn write_png(path: &Path, img: &ColorImage) -> Result<()> {
    image::save_buffer_with_format(
        path,
        img.data(),
        img.width() as u32,
        img.height() as u32,
        image::ExtendedColorType::Rgb8,
        image::ImageFormat::Png,
    )
    .map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// On-disk `trial.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialManifest {
    /// IMU CSV, relative to the manifest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub imu: Option<String>,
    pub frames_dir: String,
    pub frame_times: Vec<f64>,
    #[serde(default = "default_width")]
    pub width: usize,
    #[serde(default = "default_height")]
    pub height: usize,
}

fn default_width() -> usize {
    640
}

fn default_height() -> usize {
    360
}

impl TrialManifest {
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_NAME);
        let text = serde_json::to_string_pretty(self).map_err(|source| Error::Json {
            path: path.clone(),
            source,
        })?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

/// A loaded and validated trial bundle.
#[derive(Debug, Clone)]
pub struct Trial {
    pub manifest_path: PathBuf,
    pub imu: Option<ImuSeries>,
    pub frames: FrameManifest,
}

impl Trial {
    /// Accepts either the manifest file or the bundle directory.
    pub fn load(path: &Path) -> Result<Self> {
        let manifest_path = if path.is_dir() {
            path.join(MANIFEST_NAME)
        } else {
            path.to_path_buf()
        };
        let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let m: TrialManifest = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: manifest_path.clone(),
            source,
        })?;
        let base = manifest_path.parent().unwrap_or(Path::new("."));

        if m.frame_times.is_empty() {
            return Err(Error::Validation(format!(
                "{}: no frames listed",
                manifest_path.display()
            )));
        }
        for (i, w) in m.frame_times.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(Error::Validation(format!(
                    "{}: frame time {} at index {} does not increase",
                    manifest_path.display(),
                    w[1],
                    i + 1
                )));
            }
        }
        let frames_dir = base.join(&m.frames_dir);
        let frames: Vec<FrameRef> = m
            .frame_times
            .iter()
            .enumerate()
            .map(|(i, &t)| FrameRef {
                t,
                path: frames_dir.join(frame_file_name(i)),
            })
            .collect();
        if let Some(missing) = frames.iter().find(|f| !f.path.is_file()) {
            return Err(Error::Validation(format!(
                "missing frame file {}",
                missing.path.display()
            )));
        }

        let imu = match &m.imu {
            Some(rel) => {
                let imu = read_imu_csv(&base.join(rel))?;
                if imu.len() < 2 {
                    return Err(Error::Validation(format!(
                        "{rel}: need at least two IMU samples"
                    )));
                }
                Some(imu)
            }
            None => None,
        };

        Ok(Trial {
            manifest_path,
            imu,
            frames: FrameManifest {
                frames,
                width: m.width,
                height: m.height,
            },
        })
    }

    pub fn require_imu(&self) -> Result<&ImuSeries> {
        self.imu.as_ref().ok_or_else(|| {
            Error::Validation(format!(
                "{}: trial has no IMU recording",
                self.manifest_path.display()
            ))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vv::vv_vector;

    fn imu_at(times: &[f64]) -> ImuSeries {
        ImuSeries::new(
            times
                .iter()
                .enumerate()
                .map(|(i, &t)| ImuSample {
                    t,
                    accel: Vec3::new(i as f64, 9.81, 0.0),
                    gyro: Vec3::new(0.0, 0.0, 0.1 * i as f64),
                })
                .collect(),
        )
        .unwrap()
    }

    fn frames_at(times: &[f64]) -> FrameManifest {
        FrameManifest {
            frames: times
                .iter()
                .enumerate()
                .map(|(i, &t)| FrameRef {
                    t,
                    path: PathBuf::from(frame_file_name(i)),
                })
                .collect(),
            width: 640,
            height: 360,
        }
    }

    #[test]
    fn parses_valid_csv() {
        let text =
            "t,ax,ay,az,wx,wy,wz\n0,0,9.81,0,0,0,0\n0.5,1,9.81,0,0,0,0.1\n1.0,2,9.81,0,0,0,0.2\n";
        let s = parse_imu_csv(text.as_bytes(), "mem").unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.rate, 2.0);
        assert_eq!(s.samples[2].gyro.z, 0.2);
    }

    #[test]
    fn duplicate_timestamp_is_order_error() {
        let text = "t,ax,ay,az,wx,wy,wz\n0,0,9.81,0,0,0,0\n0,1,9.81,0,0,0,0\n";
        assert!(matches!(
            parse_imu_csv(text.as_bytes(), "mem"),
            Err(Error::Order { line: 3, .. })
        ));
    }

    #[test]
    fn missing_column_is_parse_error() {
        let text = "t,ay,az,wx,wy,wz\n0,9.81,0,0,0,0\n";
        assert!(matches!(
            parse_imu_csv(text.as_bytes(), "mem"),
            Err(Error::Parse { line: 1, .. })
        ));
        let text = "t,ax,ay,az,wx,wy,wz\n0,0,9.81,0,0,0,0\n0.1,x,9.81,0,0,0,0\n";
        assert!(matches!(
            parse_imu_csv(text.as_bytes(), "mem"),
            Err(Error::Parse { line: 3, .. })
        ));
        let text = "t,ax,ay,az,wx,wy,wz\n0,0,9.81,0,0,0\n";
        assert!(matches!(
            parse_imu_csv(text.as_bytes(), "mem"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn kv_parsing() {
        let kv = parse_kv("a = 1\n\n# skip\nb=two # trailing\n", "mem").unwrap();
        assert_eq!(
            kv,
            vec![(1, "a".into(), "1".into()), (4, "b".into(), "two".into())]
        );
        assert!(parse_kv("novalue\n", "mem").is_err());
    }

    #[test]
    fn sync_100hz_imu_with_30hz_frames() {
        let imu: Vec<f64> = (0..1000).map(|i| i as f64 / 100.0).collect();
        let cam: Vec<f64> = (0..300).map(|i| i as f64 / 30.0).collect();
        let (s, f) = resample_sync(&imu_at(&imu), &frames_at(&cam), 60.0).unwrap();
        assert_eq!(s.len(), 600);
        assert_eq!(f.len(), 600);
        assert_eq!(s.times(), f.times());
        // tick 3 at 0.05 s takes frame 1 at 1/30 s
        assert_eq!(f.frames[3].path, PathBuf::from(frame_file_name(1)));
        assert_eq!(f.frames[2].path, PathBuf::from(frame_file_name(1)));
        assert_eq!(f.frames[1].path, PathBuf::from(frame_file_name(0)));
    }

    #[test]
    fn sync_identical_grids_is_identity() {
        let t: Vec<f64> = (0..120).map(|i| i as f64 / 60.0).collect();
        let imu = imu_at(&t);
        let cam = frames_at(&t);
        let (s, f) = resample_sync(&imu, &cam, 60.0).unwrap();
        assert_eq!(s.samples, imu.samples);
        assert_eq!(f.frames, cam.frames);
    }

    #[test]
    fn sync_interpolates_linearly() {
        let imu = ImuSeries::new(vec![
            ImuSample {
                t: 0.0,
                accel: Vec3::zeros(),
                gyro: Vec3::zeros(),
            },
            ImuSample {
                t: 0.1,
                accel: Vec3::new(1.0, 0.0, 0.0),
                gyro: Vec3::zeros(),
            },
        ])
        .unwrap();
        assert!((imu.interpolate(0.05).accel.x - 0.5).abs() < 1e-12);
    }

    #[test]
    fn sync_without_overlap_fails() {
        let imu = imu_at(&[0.0, 0.1, 0.2]);
        let cam = frames_at(&[5.0, 5.1]);
        assert!(matches!(
            resample_sync(&imu, &cam, 60.0),
            Err(Error::Sync(_))
        ));
    }

    #[test]
    fn duplication() {
        let t: Vec<f64> = (0..2217).map(|i| i as f64 / 60.0).collect();
        let imu = imu_at(&t);
        assert!((imu.duration() - 36.95).abs() < 1e-9);
        let dup = imu.duplicate(10);
        assert_eq!(dup.len(), 22170);
        assert!((dup.duration() - 369.5).abs() < 1e-6);
        for k in 0..10 {
            let copy = &dup.samples[k * 2217..(k + 1) * 2217];
            for (a, b) in copy.iter().zip(&imu.samples) {
                assert_eq!((a.accel, a.gyro), (b.accel, b.gyro));
                assert!((a.t - (b.t + k as f64 * 36.95)).abs() < 1e-9);
            }
        }
        assert_eq!(imu.duplicate(1), imu);
    }

    #[test]
    fn zero_order_hold() {
        let series: Vec<VvEstimate> = [90.0, 100.0]
            .iter()
            .enumerate()
            .map(|(i, &theta)| VvEstimate {
                frame_index: i,
                t: i as f64 / 60.0,
                theta_vv: theta,
                vv: vv_vector(theta),
            })
            .collect();
        assert_eq!(zoh_vv(&series, 0.01).unwrap(), series[0].vv);
        assert_eq!(zoh_vv(&series, 1.0 / 60.0).unwrap(), series[1].vv);
        assert_eq!(zoh_vv(&series, 0.0).unwrap(), series[0].vv);
        assert_eq!(zoh_vv(&series, 1.0 / 120.0).unwrap(), series[0].vv);
        assert_eq!(zoh_vv(&series, 5.0).unwrap(), series[1].vv);
        assert!(matches!(zoh_vv(&series, -0.1), Err(Error::Range { .. })));
    }

    proptest::proptest! {
        #[test]
        fn csv_roundtrip(rows in proptest::collection::vec(
            (0.001f64..1.0, proptest::array::uniform6(-50.0f64..50.0)), 1..40)
        ) {
            let mut t = 0.0;
            let samples: Vec<ImuSample> = rows.iter().map(|(dt, v)| {
                t += dt;
                ImuSample { t, accel: Vec3::new(v[0], v[1], v[2]), gyro: Vec3::new(v[3], v[4], v[5]) }
            }).collect();
            let series = ImuSeries::new(samples).unwrap();
            let mut buf = Vec::new();
            series.write_csv(&mut buf).unwrap();
            let back = parse_imu_csv(buf.as_slice(), "mem").unwrap();
            proptest::prop_assert_eq!(back.samples, series.samples);
        }
    }
}
