mod common;

use charwave_core::physmap::{resample_uniform, uniform_grid};
use charwave_core::{FunctionSpec, InitialData, WaveSpeed};
use common::{bump, solve};

/// Halving the lattice step shrinks the change in `v(τ, ·)` at matched
/// points by about four.
#[test]
fn slices_converge_at_second_order() {
    let ws = WaveSpeed::trigonometric(4.0, 1.0).unwrap();
    let d = InitialData::sample(&bump(0.5, 0.3), &FunctionSpec::Zero, (-1.5, 1.5), 0.00125, &ws).unwrap();
    let x = uniform_grid(-2.0, 2.0, 801);
    let vs: Vec<Vec<f64>> = [0.02, 0.01, 0.005]
        .iter()
        .map(|&h| {
            let (_, s) = solve(&d, &ws, h, 0.5, &[0.5]);
            resample_uniform(&s[0], &x).v
        })
        .collect();
    let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    let d1 = diff(&vs[0], &vs[1]);
    let d2 = diff(&vs[1], &vs[2]);
    let order = (d1 / d2).log2();
    assert!(order >= 1.8, "changes {d1:.3e}, {d2:.3e}, order {order:.2}");
}

/// Constant speed, odd-free data: the solution stays even in `x`.
#[test]
fn even_data_stay_even() {
    let ws = WaveSpeed::constant(1.0).unwrap();
    let d = InitialData::sample(&bump(0.6, 0.4), &FunctionSpec::Zero, (-2.0, 2.0), 0.0025, &ws).unwrap();
    let (_, s) = solve(&d, &ws, 0.01, 0.6, &[0.6]);
    let x = uniform_grid(0.0, 1.5, 301);
    let xm: Vec<f64> = x.iter().map(|v| -v).collect();
    let r = resample_uniform(&s[0], &x).v;
    let l = resample_uniform(&s[0], &xm).v;
    let worst = r.iter().zip(&l).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-4, "{worst}");
}
