//! Visual vertical estimation from a single camera frame.
//!
//! A frame is reduced to a magnitude-weighted histogram of folded gradient
//! directions. The three strongest one-degree bins inside the plausible
//! head-roll band `[30, 150]` give a raw direction, which is then blended
//! with the previous estimate (weight 0.7 on the new frame).
//!
//! [`raw_theta`] is pure and can be evaluated for many frames in parallel;
//! [`VvEstimator`] applies the sequential blend.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgproc::{self, ColorImage, GrayImage};
use crate::{Vec3, GRAVITY};

pub const HIST_BINS: usize = 180;
pub const BAND_LOW_DEG: usize = 30;
pub const BAND_HIGH_DEG: usize = 150;
pub const BAND_BINS: usize = BAND_HIGH_DEG - BAND_LOW_DEG + 1;
/// Weight of the current frame in the temporal blend.
pub const CURRENT_WEIGHT: f64 = 0.7;
/// Direction assumed before the first frame.
pub const INITIAL_THETA_DEG: f64 = 90.0;

/// Magnitude-weighted histogram of folded gradient directions; bin `d`
/// collects angles in `[d, d + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleHistogram {
    bins: [f64; HIST_BINS],
}

impl Default for AngleHistogram {
    fn default() -> Self {
        AngleHistogram {
            bins: [0.0; HIST_BINS],
        }
    }
}

impl AngleHistogram {
    pub fn from_bins(bins: [f64; HIST_BINS]) -> Self {
        AngleHistogram { bins }
    }

    pub fn bins(&self) -> &[f64; HIST_BINS] {
        &self.bins
    }

    #[inline]
    fn add(&mut self, angle_deg: f32, weight: f32) {
        // folded angles are < 180, but guard against a stray exact 180
        let bin = (angle_deg.floor() as usize).min(HIST_BINS - 1);
        self.bins[bin] += weight as f64;
    }
}

/// The three strongest in-band bins. Offsets count from 30 degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Top3 {
    pub offsets: [usize; 3],
    pub weights: [f64; 3],
}

impl Top3 {
    /// Weighted mean direction in absolute degrees.
    pub fn theta_deg(&self) -> f64 {
        self.offsets
            .iter()
            .zip(&self.weights)
            .map(|(&o, &w)| o as f64 * w)
            .sum::<f64>()
            + BAND_LOW_DEG as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VvEstimate {
    pub frame_index: usize,
    pub t: f64,
    pub theta_vv: f64,
    pub vv: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VvEstimatorState {
    pub theta_prev: f64,
}

impl Default for VvEstimatorState {
    fn default() -> Self {
        VvEstimatorState {
            theta_prev: INITIAL_THETA_DEG,
        }
    }
}

pub fn weighted_histogram(theta: &GrayImage, magnitude: &GrayImage) -> Result<AngleHistogram> {
    if !theta.same_dims(magnitude) {
        return Err(Error::DimensionMismatch(format!(
            "angle field {}x{} vs magnitude {}x{}",
            theta.height(),
            theta.width(),
            magnitude.height(),
            magnitude.width()
        )));
    }
    let mut hist = AngleHistogram::default();
    for (&a, &m) in theta.data().iter().zip(magnitude.data()) {
        if m != 0.0 {
            hist.add(a, m);
        }
    }
    Ok(hist)
}

/// Picks the three largest in-band bins (ties go to the smaller offset) and
/// normalises their counts. `None` when the band is empty.
pub fn top3_in_band(hist: &AngleHistogram) -> Option<Top3> {
    let band = &hist.bins[BAND_LOW_DEG..=BAND_HIGH_DEG];
    let mut order: Vec<usize> = (0..BAND_BINS).collect();
    // stable sort keeps smaller offsets first among equal counts
    order.sort_by(|&a, &b| band[b].total_cmp(&band[a]));
    let offsets = [order[0], order[1], order[2]];
    let counts = offsets.map(|o| band[o]);
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return None;
    }
    Some(Top3 {
        offsets,
        weights: counts.map(|c| c / total),
    })
}

/// Blend a raw frame direction with the previous estimate and advance the
/// state.
pub fn smooth_theta(raw_theta: f64, state: &mut VvEstimatorState) -> f64 {
    let theta = CURRENT_WEIGHT * raw_theta + (1.0 - CURRENT_WEIGHT) * state.theta_prev;
    state.theta_prev = theta;
    theta
}

/// Planar vertical vector of norm 9.81 at `theta_deg`.
pub fn vv_vector(theta_deg: f64) -> Vec3 {
    let rad = theta_deg.to_radians();
    Vec3::new(GRAVITY * rad.cos(), GRAVITY * rad.sin(), 0.0)
}

/// Gradient histogram of a frame after preprocessing, thresholding and
/// erosion of the magnitude field.
pub fn frame_histogram(img: &ColorImage) -> Result<AngleHistogram> {
    let gray = imgproc::to_gray(img);
    let gray = imgproc::gaussian_blur(&gray)?;
    let gray = imgproc::minmax_normalize(&gray);
    let (gx, gy) = imgproc::sobel_gradients(&gray)?;
    let magnitude = GrayImage::new(
        gx.height(),
        gx.width(),
        gx.data()
            .iter()
            .zip(gy.data())
            .map(|(x, y)| (x * x + y * y).sqrt())
            .collect(),
    )?;
    let magnitude = imgproc::minmax_normalize(&magnitude);
    let magnitude = imgproc::threshold_below(&magnitude, imgproc::MAGNITUDE_CUTOFF);
    let magnitude = imgproc::erode3x3(&magnitude)?;

    // angles are only needed where weight survived erosion
    let mut hist = AngleHistogram::default();
    for ((&m, &x), &y) in magnitude.data().iter().zip(gx.data()).zip(gy.data()) {
        if m != 0.0 {
            hist.add(imgproc::fold_angle(x, y), m);
        }
    }
    Ok(hist)
}

/// Raw (unblended) direction of one frame, or `None` for a frame with no
/// in-band edges.
pub fn raw_theta(img: &ColorImage) -> Result<Option<f64>> {
    Ok(top3_in_band(&frame_histogram(img)?).map(|t| t.theta_deg()))
}

/// Raw directions for a batch of frames, computed in parallel.
pub fn raw_thetas(frames: &[ColorImage]) -> Result<Vec<Option<f64>>> {
    frames.par_iter().map(raw_theta).collect()
}

/// Sequential estimator holding the previous direction.
#[derive(Debug, Clone, Default)]
pub struct VvEstimator {
    state: VvEstimatorState,
    next_index: usize,
}

impl VvEstimator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn state(&self) -> VvEstimatorState {
        self.state
    }

    pub fn with_state(state: VvEstimatorState) -> Self {
        VvEstimator {
            state,
            next_index: 0,
        }
    }

    /// Consume one precomputed raw direction. A `None` frame holds the
    /// previous estimate.
    pub fn push_raw(&mut self, raw: Option<f64>, t: f64) -> VvEstimate {
        let theta_vv = match raw {
            Some(r) => smooth_theta(r, &mut self.state),
            None => self.state.theta_prev,
        };
        let est = VvEstimate {
            frame_index: self.next_index,
            t,
            theta_vv,
            vv: vv_vector(theta_vv),
        };
        self.next_index += 1;
        est
    }

    pub fn estimate_frame(&mut self, img: &ColorImage, t: f64) -> Result<VvEstimate> {
        let raw = raw_theta(img)?;
        Ok(self.push_raw(raw, t))
    }
}

/// Blend a whole raw sequence starting from the initial direction.
pub fn smooth_sequence(raw: &[Option<f64>], times: &[f64]) -> Vec<VvEstimate> {
    let mut est = VvEstimator::new();
    raw.iter()
        .zip(times)
        .map(|(&r, &t)| est.push_raw(r, t))
        .collect()
}
