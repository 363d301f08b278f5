//! Agreement statistics between estimated and reference directions.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegressionResult {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares fit of `y = slope * x + intercept`.
///
/// When `y` is constant and fitted exactly, `r_squared` is 1.
pub fn linear_regression(x: &[f64], y: &[f64]) -> Result<RegressionResult> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "regression inputs have lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::Degenerate(
            "regression needs at least two points".into(),
        ));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
    }
    if sxx <= f64::EPSILON * n * mx.abs().max(1.0) {
        return Err(Error::Degenerate("x is constant".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        let r = yi - (slope * xi + intercept);
        ss_res += r * r;
        ss_tot += (yi - my) * (yi - my);
    }
    let r_squared = if ss_tot == 0.0 {
        if ss_res == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(RegressionResult {
        slope,
        intercept,
        r_squared,
    })
}

/// Mean absolute deviation between paired series.
pub fn mad(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "MAD inputs have lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.is_empty() {
        return Err(Error::Degenerate("MAD of empty series".into()));
    }
    Ok(x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum::<f64>() / x.len() as f64)
}

/// Population standard deviation (divides by `n`).
pub fn std_dev(x: &[f64]) -> Result<f64> {
    if x.len() < 2 {
        return Err(Error::Degenerate(
            "standard deviation needs at least two values".into(),
        ));
    }
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    Ok((x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn exact_line() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let r = linear_regression(&x, &y).unwrap();
        assert_abs_diff_eq!(r.slope, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.intercept, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.r_squared, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_y() {
        let r = linear_regression(&[1.0, 2.0, 3.0], &[4.0, 4.0, 4.0]).unwrap();
        assert_eq!((r.slope, r.r_squared), (0.0, 1.0));
    }

    #[test]
    fn constant_x_is_degenerate() {
        assert!(matches!(
            linear_regression(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]),
            Err(Error::Degenerate(_))
        ));
        assert!(linear_regression(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn mad_examples() {
        assert_eq!(mad(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mad(&[0.0, 10.0], &[2.0, 6.0]).unwrap(), 3.0);
        assert!(mad(&[], &[]).is_err());
        assert!(mad(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn std_examples() {
        assert_eq!(std_dev(&[3.0, 3.0, 3.0]).unwrap(), 0.0);
        assert_eq!(std_dev(&[0.0, 2.0]).unwrap(), 1.0);
        assert!(std_dev(&[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn mad_symmetry_and_shift(
            pairs in proptest::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 1..50),
            shift in -50.0f64..50.0,
        ) {
            let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let a = mad(&x, &y).unwrap();
            prop_assert!(a >= 0.0);
            prop_assert_eq!(a, mad(&y, &x).unwrap());
            let xs: Vec<f64> = x.iter().map(|v| v + shift).collect();
            let ys: Vec<f64> = y.iter().map(|v| v + shift).collect();
            prop_assert!((mad(&xs, &ys).unwrap() - a).abs() < 1e-9);
        }

        #[test]
        fn collinear_data_fits_exactly(
            xs in proptest::collection::btree_set(-1000i32..1000, 2..40),
            slope in -5.0f64..5.0,
            intercept in -100.0f64..100.0,
        ) {
            let x: Vec<f64> = xs.into_iter().map(|v| v as f64 * 0.1).collect();
            let y: Vec<f64> = x.iter().map(|v| slope * v + intercept).collect();
            let r = linear_regression(&x, &y).unwrap();
            prop_assert!((r.r_squared - 1.0).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&r.r_squared));
        }
    }
}
