//! Small quadrature and interpolation helpers shared by the modules.

/// Composite trapezoid rule on samples `(xs, ys)`; `xs` need not be uniform.
pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (y[0] + y[1]) * (x[1] - x[0]))
        .sum()
}

/// Running trapezoid integral, `out[0] = 0`.
pub fn cumulative_trapezoid(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    debug_assert_eq!(xs.len(), ys.len());
    let mut out = Vec::with_capacity(xs.len());
    let mut acc = 0.0;
    out.push(acc);
    for k in 1..xs.len() {
        acc += 0.5 * (ys[k - 1] + ys[k]) * (xs[k] - xs[k - 1]);
        out.push(acc);
    }
    out
}

/// Linear interpolation on increasing `xs`. Outside the range the end value
/// is returned.
pub fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if n == 0 {
        return f64::NAN;
    }
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let k = bracket(xs, x);
    let f = (x - xs[k]) / (xs[k + 1] - xs[k]);
    ys[k] + f * (ys[k + 1] - ys[k])
}

/// Index `k` with `xs[k] <= x < xs[k+1]` for increasing `xs`, clamped to
/// `[0, n-2]`.
pub fn bracket(xs: &[f64], x: f64) -> usize {
    let n = xs.len();
    debug_assert!(n >= 2);
    let k = xs.partition_point(|&v| v <= x);
    k.saturating_sub(1).min(n - 2)
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    if a > -PI && a <= PI {
        return a;
    }
    let r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r == -PI {
        PI
    } else {
        r
    }
}

/// Linear interpolation of angles along the shorter arc, result wrapped.
pub fn lerp_angle(a: f64, b: f64, f: f64) -> f64 {
    wrap_angle(a + f * wrap_angle(b - a))
}
