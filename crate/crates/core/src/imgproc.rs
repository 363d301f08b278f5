//! Low-level image operations used by the visual vertical estimator.
//!
//! Every operation takes its input by reference and returns a fresh buffer
//! with the same dimensions. Borders are handled by edge replication.

use crate::error::{Error, Result};

/// Side length of the Gaussian smoothing kernel.
pub const GAUSSIAN_KSIZE: usize = 11;

/// Standard deviation paired with [`GAUSSIAN_KSIZE`]:
/// `0.3 * ((ksize - 1) / 2 - 1) + 0.8`.
pub const GAUSSIAN_SIGMA: f64 = 0.3 * ((GAUSSIAN_KSIZE as f64 - 1.0) * 0.5 - 1.0) + 0.8;

/// Normalised gradient magnitudes below this value are dropped.
pub const MAGNITUDE_CUTOFF: f32 = 0.25;

/// 8-bit RGB image, row-major, three interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColorImage {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl ColorImage {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        check_min(height, width, 3)?;
        if data.len() != height * width * 3 {
            return Err(Error::DimensionMismatch(format!(
                "color buffer has {} bytes, expected {}x{}x3",
                data.len(),
                height,
                width
            )));
        }
        Ok(ColorImage {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, rgb: [u8; 3]) -> Result<Self> {
        let data = rgb
            .iter()
            .copied()
            .cycle()
            .take(height * width * 3)
            .collect();
        Self::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        let i = (row * self.width + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

/// Single-channel real-valued image. Also used for gradient, magnitude and
/// angle fields.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "gray buffer has {} values, expected {}x{}",
                data.len(),
                height,
                width
            )));
        }
        Ok(GrayImage {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        GrayImage {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        GrayImage {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: f32) {
        self.data[row * self.width + col] = v;
    }

    pub fn same_dims(&self, other: &GrayImage) -> bool {
        self.height == other.height && self.width == other.width
    }

    fn map(&self, f: impl Fn(f32) -> f32) -> GrayImage {
        GrayImage {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

fn check_min(height: usize, width: usize, min: usize) -> Result<()> {
    if height < min || width < min {
        return Err(Error::ImageTooSmall { height, width, min });
    }
    Ok(())
}

fn check_same(a: &GrayImage, b: &GrayImage) -> Result<()> {
    if !a.same_dims(b) {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.height, a.width, b.height, b.width
        )));
    }
    Ok(())
}

/// BT.601 luma.
pub fn to_gray(img: &ColorImage) -> GrayImage {
    let data = img
        .data
        .chunks_exact(3)
        .map(|p| 0.299 * p[0] as f32 + 0.587 * p[1] as f32 + 0.114 * p[2] as f32)
        .collect();
    GrayImage {
        height: img.height,
        width: img.width,
        data,
    }
}

/// Normalised 1-D Gaussian taps of length [`GAUSSIAN_KSIZE`].
pub fn gaussian_kernel() -> [f32; GAUSSIAN_KSIZE] {
    let half = (GAUSSIAN_KSIZE / 2) as f64;
    let mut taps = [0f64; GAUSSIAN_KSIZE];
    for (i, t) in taps.iter_mut().enumerate() {
        let x = i as f64 - half;
        *t = (-x * x / (2.0 * GAUSSIAN_SIGMA * GAUSSIAN_SIGMA)).exp();
    }
    let sum: f64 = taps.iter().sum();
    let mut out = [0f32; GAUSSIAN_KSIZE];
    for (o, t) in out.iter_mut().zip(taps) {
        *o = (t / sum) as f32;
    }
    out
}

/// Separable correlation with a symmetric odd-length kernel, replicating
/// edge pixels.
fn separable_filter(img: &GrayImage, taps: &[f32]) -> GrayImage {
    let (h, w) = (img.height, img.width);
    let r = taps.len() / 2;
    let src = &img.data;

    let mut tmp = vec![0f32; h * w];
    for row in 0..h {
        let line = &src[row * w..(row + 1) * w];
        let out = &mut tmp[row * w..(row + 1) * w];
        let edge = |c: usize| -> f32 {
            taps.iter()
                .enumerate()
                .map(|(k, &t)| t * line[(c + k).saturating_sub(r).min(w - 1)])
                .sum()
        };
        for c in (0..r.min(w)).chain(w.saturating_sub(r).max(r)..w) {
            out[c] = edge(c);
        }
        if w > 2 * r {
            for (o, win) in out[r..w - r].iter_mut().zip(line.windows(taps.len())) {
                *o = win.iter().zip(taps).map(|(a, b)| a * b).sum();
            }
        }
    }

    let mut out = vec![0f32; h * w];
    for row in 0..h {
        let dst = &mut out[row * w..(row + 1) * w];
        for (k, &t) in taps.iter().enumerate() {
            let rr = (row + k).saturating_sub(r).min(h - 1);
            let srow = &tmp[rr * w..(rr + 1) * w];
            for (d, s) in dst.iter_mut().zip(srow) {
                *d += t * s;
            }
        }
    }
    GrayImage {
        height: h,
        width: w,
        data: out,
    }
}

pub fn gaussian_blur(img: &GrayImage) -> Result<GrayImage> {
    check_min(img.height, img.width, GAUSSIAN_KSIZE)?;
    Ok(separable_filter(img, &gaussian_kernel()))
}

/// Affine rescale to `[0, 1]`. A constant image maps to all zeros.
pub fn minmax_normalize(img: &GrayImage) -> GrayImage {
    let (lo, hi) = img
        .data
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if !(hi > lo) {
        return GrayImage::zeros(img.height, img.width);
    }
    let scale = 1.0 / (hi - lo);
    img.map(|v| ((v - lo) * scale).clamp(0.0, 1.0))
}

/// Horizontal Sobel response and the negated vertical Sobel response, so
/// that `gy` points up in head coordinates while image rows run down.
pub fn sobel_gradients(img: &GrayImage) -> Result<(GrayImage, GrayImage)> {
    check_min(img.height, img.width, 3)?;
    let (h, w) = (img.height, img.width);
    let src = &img.data;
    let mut gx = vec![0f32; h * w];
    let mut gy = vec![0f32; h * w];
    for row in 0..h {
        let up = &src[row.saturating_sub(1) * w..][..w];
        let mid = &src[row * w..][..w];
        let down = &src[(row + 1).min(h - 1) * w..][..w];
        let ox = &mut gx[row * w..][..w];
        let oy = &mut gy[row * w..][..w];
        let at = |c: usize, l: usize, r: usize| {
            let dx = (up[r] - up[l]) + 2.0 * (mid[r] - mid[l]) + (down[r] - down[l]);
            let dy = (down[l] + 2.0 * down[c] + down[r]) - (up[l] + 2.0 * up[c] + up[r]);
            (dx, -dy)
        };
        (ox[0], oy[0]) = at(0, 0, 1);
        (ox[w - 1], oy[w - 1]) = at(w - 1, w - 2, w - 1);
        for c in 1..w - 1 {
            (ox[c], oy[c]) = at(c, c - 1, c + 1);
        }
    }
    Ok((
        GrayImage {
            height: h,
            width: w,
            data: gx,
        },
        GrayImage {
            height: h,
            width: w,
            data: gy,
        },
    ))
}

/// Gradient direction in degrees, folded onto `[0, 180)`.
///
/// The direction is taken from the two-argument arctangent in `[0, 360)`,
/// then `[180, 360)` is shifted down by 180 and an exact 360 maps to 0.
#[inline]
pub fn fold_angle(gx: f32, gy: f32) -> f32 {
    let mut deg = gy.atan2(gx).to_degrees();
    if deg < 0.0 {
        deg += 360.0;
    }
    if deg >= 360.0 {
        deg = 0.0;
    } else if deg >= 180.0 {
        deg -= 180.0;
    }
    // f32 rounding can land exactly on the open upper bound
    if deg >= 180.0 {
        deg = 0.0;
    }
    deg
}

/// Per-pixel gradient magnitude and folded direction.
pub fn magnitude_angle(gx: &GrayImage, gy: &GrayImage) -> Result<(GrayImage, GrayImage)> {
    check_same(gx, gy)?;
    let mut mag = Vec::with_capacity(gx.data.len());
    let mut ang = Vec::with_capacity(gx.data.len());
    for (&x, &y) in gx.data.iter().zip(&gy.data) {
        mag.push((x * x + y * y).sqrt());
        ang.push(fold_angle(x, y));
    }
    Ok((
        GrayImage {
            height: gx.height,
            width: gx.width,
            data: mag,
        },
        GrayImage {
            height: gx.height,
            width: gx.width,
            data: ang,
        },
    ))
}

/// Zero every value strictly below `cutoff`.
pub fn threshold_below(img: &GrayImage, cutoff: f32) -> GrayImage {
    img.map(|v| if v < cutoff { 0.0 } else { v })
}

/// Minimum without NaN handling, which lets the loops vectorize.
#[inline(always)]
fn min2(a: f32, b: f32) -> f32 {
    if b < a {
        b
    } else {
        a
    }
}

/// Grayscale erosion with a 3x3 all-ones structuring element.
pub fn erode3x3(img: &GrayImage) -> Result<GrayImage> {
    check_min(img.height, img.width, 3)?;
    let (h, w) = (img.height, img.width);
    let src = &img.data;

    let mut tmp = vec![0f32; h * w];
    for row in 0..h {
        let line = &src[row * w..][..w];
        let out = &mut tmp[row * w..][..w];
        out[0] = min2(line[0], line[1]);
        out[w - 1] = min2(line[w - 2], line[w - 1]);
        for (o, win) in out[1..w - 1].iter_mut().zip(line.windows(3)) {
            *o = min2(min2(win[0], win[1]), win[2]);
        }
    }

    let mut out = vec![0f32; h * w];
    for row in 0..h {
        let up = &tmp[row.saturating_sub(1) * w..][..w];
        let mid = &tmp[row * w..][..w];
        let down = &tmp[(row + 1).min(h - 1) * w..][..w];
        let dst = &mut out[row * w..][..w];
        for (((d, &a), &b), &c) in dst.iter_mut().zip(up).zip(mid).zip(down) {
            *d = min2(min2(a, b), c);
        }
    }
    Ok(GrayImage {
        height: h,
        width: w,
        data: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn gray(h: usize, w: usize, v: &[f32]) -> GrayImage {
        GrayImage::new(h, w, v.to_vec()).unwrap()
    }

    #[test]
    fn sigma_follows_kernel_size_formula() {
        assert_abs_diff_eq!(GAUSSIAN_SIGMA, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn gray_conversion() {
        let img = ColorImage::new(
            3,
            3,
            [[100u8, 100, 100], [255, 0, 0], [0, 0, 0]]
                .iter()
                .cycle()
                .take(9)
                .flatten()
                .copied()
                .collect(),
        )
        .unwrap();
        let g = to_gray(&img);
        assert_abs_diff_eq!(g.get(0, 0), 100.0, epsilon = 1e-4);
        assert_abs_diff_eq!(g.get(0, 1), 76.245, epsilon = 1e-4);
        assert_eq!(g.get(0, 2), 0.0);
        assert_eq!((g.height(), g.width()), (3, 3));
    }

    #[test]
    fn color_image_rejects_bad_buffers() {
        assert!(ColorImage::new(2, 5, vec![0; 30]).is_err());
        assert!(ColorImage::new(3, 3, vec![0; 26]).is_err());
    }

    #[test]
    fn blur_keeps_constant_image() {
        let img = GrayImage::from_fn(20, 30, |_, _| 7.5);
        let out = gaussian_blur(&img).unwrap();
        for &v in out.data() {
            assert_abs_diff_eq!(v, 7.5, epsilon = 1e-4);
        }
    }

    #[test]
    fn blur_of_impulse_is_kernel() {
        let mut img = GrayImage::zeros(21, 21);
        img.set(10, 10, 1.0);
        let out = gaussian_blur(&img).unwrap();
        let k = gaussian_kernel();
        for dy in 0..GAUSSIAN_KSIZE {
            for dx in 0..GAUSSIAN_KSIZE {
                assert_abs_diff_eq!(out.get(5 + dy, 5 + dx), k[dy] * k[dx], epsilon = 1e-7);
            }
        }
        let sum: f32 = k.iter().sum();
        assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn blur_reduces_noise_variance() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let img = GrayImage::from_fn(64, 64, |_, _| rng.gen_range(0.0..1.0));
        let out = gaussian_blur(&img).unwrap();
        let var = |d: &[f32]| {
            let n = d.len() as f64;
            let m = d.iter().map(|&v| v as f64).sum::<f64>() / n;
            d.iter().map(|&v| (v as f64 - m).powi(2)).sum::<f64>() / n
        };
        assert!(var(out.data()) < var(img.data()));
    }

    #[test]
    fn blur_rejects_small_images() {
        let img = GrayImage::zeros(10, 40);
        assert!(matches!(
            gaussian_blur(&img),
            Err(Error::ImageTooSmall { min: 11, .. })
        ));
    }

    #[test]
    fn minmax_examples() {
        let out = minmax_normalize(&gray(1, 3, &[0.0, 128.0, 255.0]));
        assert_abs_diff_eq!(out.data()[1], 0.50196, epsilon = 1e-5);
        assert_eq!((out.data()[0], out.data()[2]), (0.0, 1.0));

        let out = minmax_normalize(&gray(1, 3, &[-3.0, 1.0, 5.0]));
        assert_eq!(out.data(), &[0.0, 0.5, 1.0]);

        let out = minmax_normalize(&gray(2, 2, &[4.0; 4]));
        assert_eq!(out.data(), &[0.0; 4]);
    }

    #[test]
    fn sobel_flat_field_is_zero() {
        let (gx, gy) = sobel_gradients(&GrayImage::from_fn(5, 6, |_, _| 3.0)).unwrap();
        assert!(gx.data().iter().chain(gy.data()).all(|&v| v == 0.0));
    }

    #[test]
    fn sobel_vertical_step() {
        let img = GrayImage::from_fn(6, 8, |_, c| if c < 4 { 0.0 } else { 1.0 });
        let (gx, gy) = sobel_gradients(&img).unwrap();
        assert_eq!(gx.get(2, 3), 4.0);
        assert_eq!(gx.get(2, 4), 4.0);
        assert_eq!(gx.get(2, 1), 0.0);
        assert_eq!(gy.get(2, 3), 0.0);
    }

    #[test]
    fn sobel_horizontal_step_is_negated() {
        let img = GrayImage::from_fn(8, 6, |r, _| if r < 4 { 0.0 } else { 1.0 });
        let (gx, gy) = sobel_gradients(&img).unwrap();
        assert_eq!(gy.get(3, 2), -4.0);
        assert_eq!(gy.get(4, 2), -4.0);
        assert_eq!(gx.get(3, 2), 0.0);
    }

    #[test]
    fn replicated_borders_have_no_edge_response() {
        let img = GrayImage::from_fn(5, 5, |r, c| (r * 5 + c) as f32);
        let (gx, _) = sobel_gradients(&img).unwrap();
        // a linear ramp in x: replication halves the response at the border
        assert_eq!(gx.get(2, 2), 8.0);
        assert_eq!(gx.get(2, 0), 4.0);
    }

    #[test]
    fn magnitude_angle_examples() {
        let gx = gray(1, 4, &[1.0, -1.0, 0.0, 0.0]);
        let gy = gray(1, 4, &[1.0, 0.0, -1.0, 0.0]);
        let (m, a) = magnitude_angle(&gx, &gy).unwrap();
        assert_abs_diff_eq!(m.data()[0], 2f32.sqrt(), epsilon = 1e-6);
        assert_abs_diff_eq!(a.data()[0], 45.0, epsilon = 1e-5);
        assert_eq!(a.data()[1], 0.0);
        assert_abs_diff_eq!(a.data()[2], 90.0, epsilon = 1e-5);
        assert_eq!((m.data()[3], a.data()[3]), (0.0, 0.0));
    }

    #[test]
    fn magnitude_angle_dimension_mismatch() {
        assert!(magnitude_angle(&GrayImage::zeros(3, 3), &GrayImage::zeros(3, 4)).is_err());
    }

    #[test]
    fn threshold_examples() {
        let img = gray(1, 3, &[0.1, 0.25, 0.9]);
        assert_eq!(threshold_below(&img, 0.25).data(), &[0.0, 0.25, 0.9]);
        assert_eq!(threshold_below(&img, 1.0).data(), &[0.0; 3]);
        assert_eq!(threshold_below(&img, 0.0), img);
    }

    #[test]
    fn erode_examples() {
        let flat = GrayImage::from_fn(5, 5, |_, _| 0.4);
        assert_eq!(erode3x3(&flat).unwrap(), flat);

        let mut hole = GrayImage::from_fn(7, 7, |_, _| 1.0);
        hole.set(3, 3, 0.0);
        let out = erode3x3(&hole).unwrap();
        for r in 0..7 {
            for c in 0..7 {
                let inside = (2..=4).contains(&r) && (2..=4).contains(&c);
                assert_eq!(out.get(r, c), if inside { 0.0 } else { 1.0 });
            }
        }

        let mut dot = GrayImage::zeros(7, 7);
        dot.set(3, 3, 1.0);
        assert!(erode3x3(&dot).unwrap().data().iter().all(|&v| v == 0.0));
    }

    fn small_image() -> impl Strategy<Value = GrayImage> {
        (11usize..16, 11usize..16).prop_flat_map(|(h, w)| {
            proptest::collection::vec(-5.0f32..5.0, h * w)
                .prop_map(move |d| GrayImage::new(h, w, d).unwrap())
        })
    }

    proptest! {
        #[test]
        fn ops_preserve_dims(img in small_image()) {
            let dims = (img.height(), img.width());
            let blurred = gaussian_blur(&img).unwrap();
            let (gx, gy) = sobel_gradients(&img).unwrap();
            let (m, a) = magnitude_angle(&gx, &gy).unwrap();
            for out in [&blurred, &gx, &gy, &m, &a, &erode3x3(&img).unwrap(), &minmax_normalize(&img)] {
                prop_assert_eq!((out.height(), out.width()), dims);
            }
            prop_assert!(a.data().iter().all(|&v| (0.0..180.0).contains(&v)));
            prop_assert!(m.data().iter().all(|&v| v >= 0.0));
        }

        #[test]
        fn normalize_is_bounded_and_idempotent(img in small_image()) {
            let n = minmax_normalize(&img);
            prop_assert!(n.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
            let nn = minmax_normalize(&n);
            for (a, b) in n.data().iter().zip(nn.data()) {
                prop_assert!((a - b).abs() < 1e-6);
            }
        }

        #[test]
        fn erosion_never_increases(img in small_image()) {
            let e = erode3x3(&img).unwrap();
            prop_assert!(e.data().iter().zip(img.data()).all(|(a, b)| a <= b));
        }

        #[test]
        fn filters_are_linear(x in small_image(), a in -2.0f32..2.0, b in -2.0f32..2.0) {
            let y = GrayImage::from_fn(x.height(), x.width(), |r, c| (r as f32 - c as f32).sin());
            let mix = GrayImage::from_fn(x.height(), x.width(), |r, c| a * x.get(r, c) + b * y.get(r, c));
            let lhs = gaussian_blur(&mix).unwrap();
            let (bx, by) = (gaussian_blur(&x).unwrap(), gaussian_blur(&y).unwrap());
            let (sx, sy) = (sobel_gradients(&x).unwrap().0, sobel_gradients(&y).unwrap().0);
            let slhs = sobel_gradients(&mix).unwrap().0;
            for r in 1..x.height() - 1 {
                for c in 1..x.width() - 1 {
                    prop_assert!((lhs.get(r, c) - (a * bx.get(r, c) + b * by.get(r, c))).abs() < 1e-3);
                    prop_assert!((slhs.get(r, c) - (a * sx.get(r, c) + b * sy.get(r, c))).abs() < 1e-3);
                }
            }
        }
    }
}
