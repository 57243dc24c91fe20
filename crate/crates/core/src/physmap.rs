//! Physical coordinates `t(ξ, η)`, `x(ξ, η)` and level sets `t = τ`.
//!
//! ```text
//! x_ξ = (1 + cos w) p / 4     x_η = -(1 + cos z) q / 4
//! t_ξ = (1 + cos w) p / (4c)  t_η =  (1 + cos z) q / (4c)
//! ```

use serde::Serialize;

use crate::charsolver::CharGrid;
use crate::error::{Error, Result};
use crate::initdata::BoundaryPoint;
use crate::quad::{bracket, lerp_angle, wrap_angle};
use crate::wavespeed::WaveSpeed;

/// Threshold on `min(1 + cos w, 1 + cos z)` below which a sample is treated
/// as a gradient singularity.
pub const SINGULAR_THRESHOLD: f64 = 1e-8;

/// Partial derivatives `(x_ξ, x_η, t_ξ, t_η)` at a state.
#[inline]
pub fn coordinate_derivatives(ws: &WaveSpeed, w: f64, z: f64, p: f64, q: f64, v: f64) -> (f64, f64, f64, f64) {
    let c = ws.c(v);
    let a = (1.0 + w.cos()) * p / 4.0;
    let b = (1.0 + z.cos()) * q / 4.0;
    (a, -b, a / c, b / c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoordReport {
    /// Largest disagreement between the two path integrals at a node.
    pub max_mismatch: f64,
    pub limit: f64,
}

/// Fills `g.t` and `g.x` by trapezoidal integration from the boundary curve
/// (where `t = 0` and `x` is the curve parameter), averaging the estimate
/// carried up the column with the one carried along the row.
pub fn attach_coords(g: &mut CharGrid) -> Result<CoordReport> {
    let lat = g.lattice;
    let ws = g.ws;
    let limit = 1e3 * (lat.d_xi * lat.d_xi + lat.d_eta * lat.d_eta);
    let n = g.len();
    let mut t = vec![0.0; n];
    let mut x = vec![0.0; n];
    let deriv = |g: &CharGrid, k: usize| coordinate_derivatives(&ws, g.w[k], g.z[k], g.p[k], g.q[k], g.v[k]);
    let gamma_deriv = |b: &BoundaryPoint| coordinate_derivatives(&ws, b.w, b.z, 1.0, 1.0, b.v);
    let mut max_mismatch = 0.0f64;
    for i in 0..lat.n_xi {
        let col = g.columns[i];
        if col.len == 0 {
            continue;
        }
        let gb = g.gamma_below(i);
        for r in 0..col.len {
            let j = col.start + r;
            let k = col.offset + r;
            let (xx, xe, tx, te) = deriv(g, k);
            let (tb, xb) = if r == 0 {
                let h = (lat.eta(j) - gb.eta).max(0.0);
                let (_, gxe, _, gte) = gamma_deriv(&gb);
                (0.5 * h * (gte + te), gb.x + 0.5 * h * (gxe + xe))
            } else {
                let kb = k - 1;
                let (_, bxe, _, bte) = deriv(g, kb);
                (t[kb] + 0.5 * lat.d_eta * (bte + te), x[kb] + 0.5 * lat.d_eta * (bxe + xe))
            };
            let (tl, xl) = match i.checked_sub(1).and_then(|il| g.index(il, j)) {
                Some(kl) => {
                    let (lxx, _, ltx, _) = deriv(g, kl);
                    (t[kl] + 0.5 * lat.d_xi * (ltx + tx), x[kl] + 0.5 * lat.d_xi * (lxx + xx))
                }
                None => {
                    let gl = g.gamma_left(j);
                    let h = (lat.xi(i) - gl.xi).max(0.0);
                    let (gxx, _, gtx, _) = gamma_deriv(&gl);
                    (0.5 * h * (gtx + tx), gl.x + 0.5 * h * (gxx + xx))
                }
            };
            let mismatch = (tb - tl).abs().max((xb - xl).abs());
            if mismatch > limit {
                return Err(Error::CompatibilityViolation {
                    i,
                    j,
                    mismatch,
                    limit,
                });
            }
            max_mismatch = max_mismatch.max(mismatch);
            t[k] = 0.5 * (tb + tl);
            x[k] = 0.5 * (xb + xl);
        }
    }
    g.t = Some(t);
    g.x = Some(x);
    Ok(CoordReport { max_mismatch, limit })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompatResidual {
    /// `max |∂_η(x_ξ) - ∂_ξ(x_η)|` over interior nodes.
    pub x_res: f64,
    /// Same for `t`.
    pub t_res: f64,
    /// Node where the larger of the two is attained.
    pub worst: Option<(usize, usize)>,
}

/// Centered-difference mismatch of the mixed derivatives of `x` and `t`,
/// computed from the right-hand sides of the coordinate equations.
pub fn compatibility_residual(g: &CharGrid) -> CompatResidual {
    let lat = g.lattice;
    let ws = g.ws;
    let d = |k: usize| coordinate_derivatives(&ws, g.w[k], g.z[k], g.p[k], g.q[k], g.v[k]);
    let mut out = CompatResidual {
        x_res: 0.0,
        t_res: 0.0,
        worst: None,
    };
    let mut worst = -1.0;
    for (i, j, _) in g.nodes() {
        if i == 0 || j == 0 {
            continue;
        }
        let (Some(kn), Some(ks), Some(ke), Some(kw)) =
            (g.index(i, j + 1), g.index(i, j - 1), g.index(i + 1, j), g.index(i - 1, j))
        else {
            continue;
        };
        let (n, s, e, w) = (d(kn), d(ks), d(ke), d(kw));
        let xr = ((n.0 - s.0) / (2.0 * lat.d_eta) - (e.1 - w.1) / (2.0 * lat.d_xi)).abs();
        let tr = ((n.2 - s.2) / (2.0 * lat.d_eta) - (e.3 - w.3) / (2.0 * lat.d_xi)).abs();
        out.x_res = out.x_res.max(xr);
        out.t_res = out.t_res.max(tr);
        if xr.max(tr) > worst {
            worst = xr.max(tr);
            out.worst = Some((i, j));
        }
    }
    out
}

/// A point of a level curve `t = τ` in the characteristic plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub xi: f64,
    pub eta: f64,
    pub x: f64,
    pub w: f64,
    pub z: f64,
    pub p: f64,
    pub q: f64,
    pub v: f64,
}

impl CurvePoint {
    fn from_gamma(b: &BoundaryPoint) -> Self {
        Self {
            xi: b.xi,
            eta: b.eta,
            x: b.x,
            w: b.w,
            z: b.z,
            p: 1.0,
            q: 1.0,
            v: b.v,
        }
    }

    fn node(g: &CharGrid, i: usize, j: usize, k: usize, x: f64) -> Self {
        Self {
            xi: g.lattice.xi(i),
            eta: g.lattice.eta(j),
            x,
            w: g.w[k],
            z: g.z[k],
            p: g.p[k],
            q: g.q[k],
            v: g.v[k],
        }
    }

    /// Linear interpolation, angles along the shorter arc.
    pub fn lerp(&self, o: &Self, f: f64) -> Self {
        let l = |a: f64, b: f64| a + f * (b - a);
        Self {
            xi: l(self.xi, o.xi),
            eta: l(self.eta, o.eta),
            x: l(self.x, o.x),
            w: lerp_angle(self.w, o.w, f),
            z: lerp_angle(self.z, o.z, f),
            p: l(self.p, o.p),
            q: l(self.q, o.q),
            v: l(self.v, o.v),
        }
    }

    pub fn is_singular(&self) -> bool {
        (1.0 + self.w.cos()).min(1.0 + self.z.cos()) < SINGULAR_THRESHOLD
    }
}

/// Characteristic coordinates and weights behind a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Chart {
    pub xi: f64,
    pub eta: f64,
    pub p: f64,
    pub q: f64,
}

/// A physical sample of a time slice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sample {
    pub x: f64,
    pub v: f64,
    /// `NaN` at singular samples.
    pub vt: f64,
    /// `NaN` at singular samples.
    pub vx: f64,
    pub singular: bool,
    pub w: f64,
    pub z: f64,
    /// Present for slices cut from a characteristic grid.
    #[serde(skip)]
    pub chart: Option<Chart>,
}

impl Sample {
    pub fn from_angles(ws: &WaveSpeed, x: f64, w: f64, z: f64, v: f64) -> Self {
        let singular = (1.0 + w.cos()).min(1.0 + z.cos()) < SINGULAR_THRESHOLD;
        let (vt, vx) = if singular {
            (f64::NAN, f64::NAN)
        } else {
            let vt = w.sin() / (2.0 * (1.0 + w.cos())) + z.sin() / (2.0 * (1.0 + z.cos()));
            let vx = ((w / 2.0).tan() - (z / 2.0).tan()) / (2.0 * ws.c(v));
            (vt, vx)
        };
        Self {
            x,
            v,
            vt,
            vx,
            singular,
            w,
            z,
            chart: None,
        }
    }

    /// `R = tan(w/2)`.
    pub fn r(&self) -> f64 {
        (self.w / 2.0).tan()
    }

    /// `S = tan(z/2)`.
    pub fn s(&self) -> f64 {
        (self.z / 2.0).tan()
    }
}

/// The level set `t = τ`: physical samples ordered strictly by `x`, plus the
/// underlying polyline in the characteristic plane (empty for slices that
/// do not come from a characteristic grid).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeSlice {
    pub tau: f64,
    pub samples: Vec<Sample>,
    #[serde(skip)]
    pub curve: Vec<CurvePoint>,
}

impl TimeSlice {
    pub fn singular_count(&self) -> usize {
        self.samples.iter().filter(|s| s.singular).count()
    }

    pub fn x_range(&self) -> Option<(f64, f64)> {
        Some((self.samples.first()?.x, self.samples.last()?.x))
    }

    pub fn xs(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.x).collect()
    }

    /// Builds a slice from physical samples given as `(x, v, R, S)`.
    pub fn from_riemann(ws: &WaveSpeed, tau: f64, x: &[f64], v: &[f64], r: &[f64], s: &[f64]) -> Self {
        let samples = (0..x.len())
            .map(|k| Sample::from_angles(ws, x[k], 2.0 * r[k].atan(), 2.0 * s[k].atan(), v[k]))
            .collect();
        Self {
            tau,
            samples,
            curve: Vec::new(),
        }
    }
}

/// Range `[0, t_max]` of the recovered time over the stored nodes.
pub fn time_range(g: &CharGrid) -> Result<(f64, f64)> {
    let t = g.t.as_ref().ok_or(Error::MissingCoordinates)?;
    Ok((0.0, t.iter().copied().fold(0.0, f64::max)))
}

/// Crossings of `t = τ` along the lattice lines, ordered along the curve,
/// with extra points inserted where `w` or `z` passes through `±π`.
pub fn level_curve(g: &CharGrid, tau: f64) -> Result<Vec<CurvePoint>> {
    let t = g.t.as_ref().ok_or(Error::MissingCoordinates)?;
    let x = g.x.as_ref().ok_or(Error::MissingCoordinates)?;
    let (t_min, t_max) = time_range(g)?;
    if !(tau >= t_min && tau <= t_max) {
        return Err(Error::TimeOutOfRange { tau, t_min, t_max });
    }
    let lat = g.lattice;
    let in_lattice = |b: &BoundaryPoint| {
        let e = 1e-9 * (lat.d_xi + lat.d_eta);
        b.xi >= lat.xi0 - e
            && b.xi <= lat.xi(lat.n_xi - 1) + e
            && b.eta >= lat.eta0 - e
            && b.eta <= lat.eta(lat.n_eta - 1) + e
    };
    let mut pts: Vec<CurvePoint> = Vec::new();
    if tau == 0.0 {
        pts.extend(
            (0..g.bc.len())
                .map(|k| g.bc.node(k))
                .filter(|b| in_lattice(b))
                .map(|b| CurvePoint::from_gamma(&b)),
        );
    } else {
        let mut scan = |chain: &mut dyn Iterator<Item = (f64, CurvePoint)>| {
            let Some(mut prev) = chain.next() else { return };
            for cur in chain {
                let (ta, tb) = (prev.0, cur.0);
                if ta <= tau && tau < tb {
                    pts.push(prev.1.lerp(&cur.1, (tau - ta) / (tb - ta)));
                }
                prev = cur;
            }
        };
        for (i, c) in g.columns.iter().enumerate() {
            if c.len == 0 {
                continue;
            }
            let gb = g.gamma_below(i);
            let mut chain = std::iter::once((0.0, CurvePoint::from_gamma(&gb))).chain(
                (0..c.len).map(|r| (t[c.offset + r], CurvePoint::node(g, i, c.start + r, c.offset + r, x[c.offset + r]))),
            );
            scan(&mut chain);
        }
        for (j, span) in g.row_spans().into_iter().enumerate() {
            let Some((i0, len)) = span else { continue };
            let gl = g.gamma_left(j);
            let mut chain = std::iter::once((0.0, CurvePoint::from_gamma(&gl))).chain((i0..i0 + len).map(|i| {
                let k = g.index(i, j).expect("row span");
                (t[k], CurvePoint::node(g, i, j, k, x[k]))
            }));
            scan(&mut chain);
        }
    }
    if pts.is_empty() {
        return Err(Error::EmptyLevelSet(tau));
    }
    pts.sort_by(|a, b| (a.xi - a.eta).total_cmp(&(b.xi - b.eta)));
    let tiny = 1e-12 * (lat.d_xi + lat.d_eta);
    pts.dedup_by(|b, a| (a.xi - b.xi).abs() + (a.eta - b.eta).abs() < tiny);
    Ok(insert_angle_crossings(&pts))
}

/// Inserts the points where `w` or `z` passes through `±π` between
/// consecutive curve points.
fn insert_angle_crossings(pts: &[CurvePoint]) -> Vec<CurvePoint> {
    use std::f64::consts::PI;
    let mut out = Vec::with_capacity(pts.len());
    for (k, a) in pts.iter().enumerate() {
        out.push(*a);
        let Some(b) = pts.get(k + 1) else { break };
        let mut fs: Vec<f64> = Vec::new();
        for (ua, ub) in [(a.w, b.w), (a.z, b.z)] {
            let d = wrap_angle(ub - ua);
            let end = ua + d;
            // the unwrapped path ua → end crosses ±π
            for target in [PI, -PI] {
                if (ua - target) * (end - target) < 0.0 {
                    fs.push((target - ua) / d);
                }
            }
        }
        fs.sort_by(f64::total_cmp);
        for f in fs {
            let mut m = a.lerp(b, f);
            // pin the crossing angle exactly
            if (wrap_angle(m.w).abs() - PI).abs() < 1e-6 {
                m.w = PI;
            }
            if (wrap_angle(m.z).abs() - PI).abs() < 1e-6 {
                m.z = PI;
            }
            out.push(m);
        }
    }
    out
}

/// Extracts the time slice `t = τ`. At `τ = 0` this is the boundary data.
pub fn extract_time_slice(g: &CharGrid, tau: f64) -> Result<TimeSlice> {
    let curve = level_curve(g, tau)?;
    let ws = g.ws;
    let mut samples: Vec<Sample> = Vec::with_capacity(curve.len());
    for cp in &curve {
        if let Some(last) = samples.last() {
            if cp.x <= last.x {
                continue;
            }
        }
        samples.push(Sample {
            chart: Some(Chart {
                xi: cp.xi,
                eta: cp.eta,
                p: cp.p,
                q: cp.q,
            }),
            ..Sample::from_angles(&ws, cp.x, cp.w, cp.z, cp.v)
        });
    }
    Ok(TimeSlice { tau, samples, curve })
}

/// A slice resampled onto a given grid. `vt`, `vx` are `None` next to
/// singular samples; `v` is `NaN` outside the slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Resampled {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub vt: Vec<Option<f64>>,
    pub vx: Vec<Option<f64>>,
}

pub fn resample_uniform(s: &TimeSlice, x_grid: &[f64]) -> Resampled {
    let xs = s.xs();
    let n = xs.len();
    let mut out = Resampled {
        x: x_grid.to_vec(),
        v: Vec::with_capacity(x_grid.len()),
        vt: Vec::with_capacity(x_grid.len()),
        vx: Vec::with_capacity(x_grid.len()),
    };
    for &x in x_grid {
        if n == 0 || x < xs[0] || x > xs[n - 1] {
            out.v.push(f64::NAN);
            out.vt.push(None);
            out.vx.push(None);
            continue;
        }
        if n == 1 || x == xs[n - 1] {
            let a = &s.samples[n - 1];
            out.v.push(a.v);
            out.vt.push((!a.singular).then_some(a.vt));
            out.vx.push((!a.singular).then_some(a.vx));
            continue;
        }
        let k = bracket(&xs, x);
        let (a, b) = (&s.samples[k], &s.samples[k + 1]);
        let f = (x - a.x) / (b.x - a.x);
        out.v.push(if f == 0.0 { a.v } else { a.v + f * (b.v - a.v) });
        let pick = |fa: f64, fb: f64| {
            if f == 0.0 {
                (!a.singular).then_some(fa)
            } else if a.singular || b.singular {
                None
            } else {
                Some(fa + f * (fb - fa))
            }
        };
        out.vt.push(pick(a.vt, b.vt));
        out.vx.push(pick(a.vx, b.vx));
    }
    out
}

/// `n` equally spaced points on `[a, b]`.
pub fn uniform_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    let h = (b - a) / (n - 1) as f64;
    (0..n).map(|k| if k == n - 1 { b } else { a + k as f64 * h }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charsolver::{solve_march, Domain, Lattice, MarchOptions};
    use crate::initdata::{BoundaryCurve, DataFamily, FunctionSpec, InitialData};

    fn unit() -> WaveSpeed {
        WaveSpeed::constant(1.0).unwrap()
    }

    fn zero_grid(h: f64) -> CharGrid {
        let d = InitialData::sample(&FunctionSpec::Zero, &FunctionSpec::Zero, (-2.0, 2.0), 0.05, &unit()).unwrap();
        let bc = BoundaryCurve::from_initial(&d);
        let lat = Lattice::new(Domain::symmetric(2.0, 2.0), h, h).unwrap();
        solve_march(&bc, lat, &unit(), MarchOptions::default()).unwrap()
    }

    fn bump_grid(ws: &WaveSpeed, h: f64) -> CharGrid {
        let (v0, v1) = DataFamily::GaussianBump {
            amplitude: 0.5,
            center: 0.0,
            width: 0.3,
            cutoff: 1.2,
        }
        .build(ws);
        let d = InitialData::sample(&v0, &v1, (-1.5, 1.5), 0.0025, ws).unwrap();
        let bc = BoundaryCurve::from_initial(&d);
        let lat = Lattice::new(Domain::covering(&bc, -2.5, 2.5), h, h).unwrap();
        let mut g = solve_march(&bc, lat, ws, MarchOptions::default()).unwrap();
        attach_coords(&mut g).unwrap();
        g
    }

    #[test]
    fn zero_data_coordinates_are_exact() {
        let mut g = zero_grid(0.05);
        attach_coords(&mut g).unwrap();
        let (t, x) = (g.t.as_ref().unwrap(), g.x.as_ref().unwrap());
        for (i, j, k) in g.nodes() {
            let (xi, eta) = (g.lattice.xi(i), g.lattice.eta(j));
            assert!((t[k] - (xi + eta) / 2.0).abs() < 1e-12);
            assert!((x[k] - (xi - eta) / 2.0).abs() < 1e-12);
        }
        let r = compatibility_residual(&g);
        assert_eq!((r.x_res, r.t_res), (0.0, 0.0));
    }

    #[test]
    fn zero_slice_lies_on_the_diagonal() {
        let mut g = zero_grid(0.05);
        attach_coords(&mut g).unwrap();
        let s = extract_time_slice(&g, 0.5).unwrap();
        assert!(s.samples.len() > 40);
        assert!(s.samples.iter().all(|p| p.v == 0.0 && p.vt == 0.0 && p.vx == 0.0 && !p.singular));
        for cp in &s.curve {
            assert!((cp.xi + cp.eta - 1.0).abs() < 1e-12);
        }
        assert!(s.samples.windows(2).all(|w| w[1].x > w[0].x));
    }

    #[test]
    fn slice_errors() {
        let mut g = zero_grid(0.1);
        assert!(matches!(extract_time_slice(&g, 0.5), Err(Error::MissingCoordinates)));
        attach_coords(&mut g).unwrap();
        assert!(matches!(extract_time_slice(&g, 50.0), Err(Error::TimeOutOfRange { .. })));
        assert!(matches!(extract_time_slice(&g, -0.1), Err(Error::TimeOutOfRange { .. })));
    }

    #[test]
    fn boundary_is_recovered_at_time_zero() {
        let ws = WaveSpeed::trigonometric(4.0, 1.0).unwrap();
        let g = bump_grid(&ws, 0.02);
        let (t, x) = (g.t.as_ref().unwrap(), g.x.as_ref().unwrap());
        // the first node of each column sits within one step of the curve
        let mut worst = 0.0f64;
        for (i, c) in g.columns.iter().enumerate() {
            if c.len == 0 {
                continue;
            }
            let gb = g.gamma_below(i);
            let k = c.offset;
            let h = g.lattice.eta(c.start) - gb.eta;
            let (_, xe, _, te) = coordinate_derivatives(&ws, g.w[k], g.z[k], g.p[k], g.q[k], g.v[k]);
            worst = worst.max((t[k] - h * te).abs()).max((x[k] - gb.x - h * xe).abs());
        }
        assert!(worst < 1e-3, "{worst}");
        let s0 = extract_time_slice(&g, 0.0).unwrap();
        assert_eq!(s0.samples.len(), g.bc.len());
    }

    #[test]
    fn jacobian_is_nonnegative_and_slices_are_monotone() {
        let ws = WaveSpeed::trigonometric(4.0, 1.0).unwrap();
        let g = bump_grid(&ws, 0.02);
        for (_, _, k) in g.nodes() {
            let (xx, xe, tx, te) = coordinate_derivatives(&ws, g.w[k], g.z[k], g.p[k], g.q[k], g.v[k]);
            let jac = xx * te - xe * tx;
            let closed = g.p[k] * g.q[k] * (1.0 + g.w[k].cos()) * (1.0 + g.z[k].cos()) / (8.0 * ws.c(g.v[k]));
            assert!(jac >= 0.0);
            assert!((jac - closed).abs() < 1e-14);
        }
        for tau in [0.25, 0.5, 1.0] {
            let s = extract_time_slice(&g, tau).unwrap();
            assert!(s.samples.windows(2).all(|w| w[1].x > w[0].x));
        }
    }

    #[test]
    fn forward_characteristics_move_with_speed_c() {
        let ws = WaveSpeed::trigonometric(4.0, 1.0).unwrap();
        let g = bump_grid(&ws, 0.01);
        let (t, x) = (g.t.as_ref().unwrap(), g.x.as_ref().unwrap());
        let mut worst = 0.0f64;
        for j in (0..g.lattice.n_eta).step_by(25) {
            let Some((i0, len)) = g.row_span(j) else { continue };
            for i in i0 + 1..i0 + len.saturating_sub(1) {
                let (a, b) = (g.index(i - 1, j).unwrap(), g.index(i + 1, j).unwrap());
                let k = g.index(i, j).unwrap();
                let speed = (x[b] - x[a]) / (t[b] - t[a]);
                worst = worst.max((speed - ws.c(g.v[k])).abs());
            }
        }
        assert!(worst < 1e-2, "{worst}");
    }

    #[test]
    fn compatibility_residual_drops_under_refinement_and_spikes_on_fault() {
        let ws = WaveSpeed::trigonometric(4.0, 1.0).unwrap();
        let r1 = compatibility_residual(&bump_grid(&ws, 0.02));
        let r2 = compatibility_residual(&bump_grid(&ws, 0.01));
        assert!(r2.x_res < r1.x_res / 1.8, "{r1:?} {r2:?}");
        assert!(r2.t_res < r1.t_res / 1.8, "{r1:?} {r2:?}");
        let mut g = bump_grid(&ws, 0.02);
        let (i, j, k) = g.nodes().nth(g.len() / 2).unwrap();
        g.p[k] *= 3.0;
        let r = compatibility_residual(&g);
        let (wi, wj) = r.worst.unwrap();
        assert!(wi.abs_diff(i) <= 1 && wj.abs_diff(j) <= 1);
        assert!(r.x_res > 10.0 * r1.x_res);
    }

    #[test]
    fn resampling_reproduces_nodes() {
        let ws = unit();
        let g = bump_grid(&ws, 0.02);
        let s = extract_time_slice(&g, 0.5).unwrap();
        let xs = s.xs();
        let r = resample_uniform(&s, &xs);
        for (k, sm) in s.samples.iter().enumerate() {
            assert_eq!(r.v[k], sm.v);
            assert_eq!(r.vt[k], Some(sm.vt));
            assert_eq!(r.vx[k], Some(sm.vx));
        }
        let z = TimeSlice::from_riemann(&ws, 0.0, &[0.0, 1.0], &[0.0; 2], &[0.0; 2], &[0.0; 2]);
        let r = resample_uniform(&z, &uniform_grid(0.0, 1.0, 5));
        assert!(r.v.iter().all(|&v| v == 0.0));
        assert!(r.vt.iter().all(|&v| v == Some(0.0)));
    }

    #[test]
    fn singular_neighbours_hide_derivatives() {
        let ws = unit();
        let s = TimeSlice::from_riemann(&ws, 0.0, &[0.0, 1.0, 2.0], &[0.0; 3], &[0.0, 1e12, 0.0], &[0.0; 3]);
        assert!(s.samples[1].singular);
        let r = resample_uniform(&s, &[0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(r.vt, vec![Some(0.0), None, None, None, Some(0.0)]);
    }

    #[test]
    fn angle_crossings_are_inserted() {
        use std::f64::consts::PI;
        let a = CurvePoint {
            xi: 0.0,
            eta: 0.0,
            x: 0.0,
            w: 3.0,
            z: 0.0,
            p: 1.0,
            q: 1.0,
            v: 0.0,
        };
        let b = CurvePoint {
            xi: 1.0,
            eta: -1.0,
            x: 1.0,
            w: -3.0,
            ..a
        };
        let out = insert_angle_crossings(&[a, b]);
        assert_eq!(out.len(), 3);
        assert_eq!(out[1].w, PI);
        assert!(out[1].is_singular());
        assert!((out[1].xi - 0.5).abs() < 1e-12);
    }
}
