use nalgebra::SVector;

/// One classical fourth-order Runge-Kutta step of `dx/dt = f(t, x)`.
#[inline]
pub fn rk4_step<const N: usize>(
    mut f: impl FnMut(f64, &SVector<f64, N>) -> SVector<f64, N>,
    t: f64,
    x: &SVector<f64, N>,
    h: f64,
) -> SVector<f64, N> {
    let k1 = f(t, x);
    let k2 = f(t + 0.5 * h, &(x + k1 * (0.5 * h)));
    let k3 = f(t + 0.5 * h, &(x + k2 * (0.5 * h)));
    let k4 = f(t + h, &(x + k3 * h));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector1;

    #[test]
    fn exponential_decay_is_fourth_order() {
        let err = |h: f64| {
            let mut x = Vector1::new(1.0);
            let n = (1.0 / h).round() as usize;
            for k in 0..n {
                x = rk4_step(|_, x| -x, k as f64 * h, &x, h);
            }
            (x[0] - (-1.0f64).exp()).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!((12.0..20.0).contains(&ratio), "ratio {ratio}");
    }
}
