//! Conserved quantities, energy measures and bound checks.
//!
//! Physical densities are evaluated from the angle variables, which stay
//! finite through gradient blow-up:
//!
//! ```text
//! R² = (1 - cos w)/(1 + cos w),   S² = (1 - cos z)/(1 + cos z)
//! E  = (R² + S²)/4 + (2v² + v⁴)/8,  M = (S² - R²)/(4c)
//! ```
//!
//! In the characteristic plane the energy is carried by the closed 1-form
//! `a p dξ - b q dη` with `a = (1 - cos w)/8 + (1 + cos w)(2v² + v⁴)/32` and
//! `b` the same expression in `z`. The momentum law `M_t + (E - 2F)_x = 0`
//! (its flux is the Lagrangian, `F = (2v² + v⁴)/8`) gives the closed form
//! `(a_m p dξ + b_m q dη)/c`, where `a_m` is `a` with the potential term
//! negated.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::charsolver::CharGrid;
use crate::error::{Error, Result};
use crate::physmap::{level_curve, resample_uniform, time_range, uniform_grid, Chart, CurvePoint, TimeSlice};
use crate::quad::{lerp_angle, trapezoid};
use crate::refsolver::FdState;
use crate::wavespeed::{SpeedBounds, WaveSpeed};

/// One verdict of a report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound,
            pass: value <= bound,
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound,
            pass: value >= bound,
        }
    }
}

/// Fraction of singular samples above which a quadrature is flagged.
pub const SINGULAR_WARN_FRACTION: f64 = 0.05;

/// Segments whose end points have `min(1 + cos)` below this are integrated
/// with the midpoint rule instead of the trapezoid rule.
const REGULAR_THRESHOLD: f64 = 0.1;

fn r2(w: f64) -> f64 {
    (1.0 - w.cos()) / (1.0 + w.cos())
}

fn potential(v: f64) -> f64 {
    (2.0 * v * v + v.powi(4)) / 8.0
}

/// Energy density `E` at angles `(w, z)` and value `v`.
pub fn energy_density(w: f64, z: f64, v: f64) -> f64 {
    (r2(w) + r2(z)) / 4.0 + potential(v)
}

#[derive(Debug, Clone, Copy)]
struct Pt {
    x: f64,
    w: f64,
    z: f64,
    v: f64,
    chart: Option<Chart>,
}

impl Pt {
    fn lerp(&self, o: &Pt, f: f64) -> Pt {
        let l = |a: f64, b: f64| a + f * (b - a);
        Pt {
            x: l(self.x, o.x),
            w: lerp_angle(self.w, o.w, f),
            z: lerp_angle(self.z, o.z, f),
            v: l(self.v, o.v),
            chart: match (self.chart, o.chart) {
                (Some(a), Some(b)) => Some(Chart {
                    xi: l(a.xi, b.xi),
                    eta: l(a.eta, b.eta),
                    p: l(a.p, b.p),
                    q: l(a.q, b.q),
                }),
                _ => None,
            },
        }
    }

    fn regularity(&self) -> f64 {
        (1.0 + self.w.cos()).min(1.0 + self.z.cos())
    }
}

/// Density `α R² + β S² + γ F` with `F = (2v² + v⁴)/8`.
#[derive(Debug, Clone, Copy)]
struct Density {
    r2: f64,
    s2: f64,
    pot: f64,
}

impl Density {
    const ENERGY: Self = Self {
        r2: 0.25,
        s2: 0.25,
        pot: 1.0,
    };

    fn at(&self, p: &Pt) -> f64 {
        self.r2 * r2(p.w) + self.s2 * r2(p.z) + self.pot * potential(p.v)
    }
}

/// `∫ f dx` over one slice segment, `None` if it cannot be evaluated.
///
/// Regular segments use the trapezoid rule in `x`. Near a singular point
/// `R²` blows up while `dx` collapses, so when the characteristic chart is
/// known the squared terms are integrated in `ξ` and `η` instead, using
/// `R² dx = (1 - cos w) p dξ/2` and `S² dx = -(1 - cos z) q dη/2` along a
/// level curve. Without a chart the midpoint rule in `x` is used, and the
/// segment is skipped if its midpoint is singular.
fn segment_integral(a: &Pt, b: &Pt, f: Density) -> Option<f64> {
    let dx = b.x - a.x;
    if a.regularity() >= REGULAR_THRESHOLD && b.regularity() >= REGULAR_THRESHOLD {
        return Some(0.5 * (f.at(a) + f.at(b)) * dx);
    }
    if let (Some(ca), Some(cb)) = (a.chart, b.chart) {
        let rr = 0.25 * ((1.0 - a.w.cos()) * ca.p + (1.0 - b.w.cos()) * cb.p) * (cb.xi - ca.xi);
        let ss = -0.25 * ((1.0 - a.z.cos()) * ca.q + (1.0 - b.z.cos()) * cb.q) * (cb.eta - ca.eta);
        let pot = 0.5 * (potential(a.v) + potential(b.v)) * dx;
        return Some(f.r2 * rr + f.s2 * ss + f.pot * pot);
    }
    let m = a.lerp(b, 0.5);
    (m.regularity() >= crate::physmap::SINGULAR_THRESHOLD).then(|| f.at(&m) * dx)
}

fn slice_points(s: &TimeSlice) -> Vec<Pt> {
    s.samples
        .iter()
        .map(|p| Pt {
            x: p.x,
            w: p.w,
            z: p.z,
            v: p.v,
            chart: p.chart,
        })
        .collect()
}

/// Per-segment integrals of `f` over `[lo, hi] ∩` slice range, with skipped
/// segment count.
fn slice_segments(s: &TimeSlice, lo: f64, hi: f64, f: Density) -> (Vec<f64>, usize) {
    let pts = slice_points(s);
    let mut out = Vec::with_capacity(pts.len());
    let mut skipped = 0;
    for seg in pts.windows(2) {
        let (a, b) = (&seg[0], &seg[1]);
        if b.x <= lo || a.x >= hi {
            continue;
        }
        let fa = ((lo - a.x) / (b.x - a.x)).max(0.0);
        let fb = ((hi - a.x) / (b.x - a.x)).min(1.0);
        let (ca, cb) = (
            if fa > 0.0 { a.lerp(b, fa) } else { *a },
            if fb < 1.0 { a.lerp(b, fb) } else { *b },
        );
        match segment_integral(&ca, &cb, f) {
            Some(v) => out.push(v),
            None => {
                out.push(0.0);
                skipped += 1;
            }
        }
    }
    (out, skipped)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyValue {
    pub value: f64,
    pub singular_fraction: f64,
    pub skipped_segments: usize,
    /// More than 5% of the samples are singular.
    pub warning: bool,
}

/// `½ ∫ (v_t² + c² v_x² + v²/2 + v⁴/4) dx` over a slice.
pub fn energy_physical(s: &TimeSlice) -> EnergyValue {
    let (segs, skipped) = slice_segments(s, f64::NEG_INFINITY, f64::INFINITY, Density::ENERGY);
    let n = s.samples.len().max(1);
    let frac = s.singular_count() as f64 / n as f64;
    EnergyValue {
        value: segs.iter().sum(),
        singular_fraction: frac,
        skipped_segments: skipped,
        warning: frac > SINGULAR_WARN_FRACTION,
    }
}

/// `(μ⁻, μ⁺)` of `[a, b]` from the densities of a regular slice,
/// `R²/4 + F/2` and `S²/4 + F/2` with `F = (2v² + v⁴)/8`.
pub fn smooth_measures(s: &TimeSlice, a: f64, b: f64) -> (f64, f64) {
    let half = |r2, s2| Density { r2, s2, pot: 0.5 };
    let m = slice_segments(s, a, b, half(0.25, 0.0)).0.iter().sum();
    let pl = slice_segments(s, a, b, half(0.0, 0.25)).0.iter().sum();
    (m, pl)
}

/// `¼ ∬_{x>y} R²(x) S²(y) dx dy`.
pub fn interaction_potential(s: &TimeSlice) -> f64 {
    let only = |r2, s2| Density { r2, s2, pot: 0.0 };
    let (mr, _) = slice_segments(s, f64::NEG_INFINITY, f64::INFINITY, only(1.0, 0.0));
    let (ms, _) = slice_segments(s, f64::NEG_INFINITY, f64::INFINITY, only(0.0, 1.0));
    let mut cum_s = 0.0;
    let mut acc = 0.0;
    for (r, s) in mr.iter().zip(&ms) {
        acc += r * (cum_s + 0.5 * s);
        cum_s += s;
    }
    acc / 4.0
}

fn form_a(w: f64, v: f64) -> f64 {
    (1.0 - w.cos()) / 8.0 + (1.0 + w.cos()) * (2.0 * v * v + v.powi(4)) / 32.0
}

fn form_m(w: f64, v: f64) -> f64 {
    (1.0 - w.cos()) / 8.0 - (1.0 + w.cos()) * (2.0 * v * v + v.powi(4)) / 32.0
}

/// `(μ⁻, μ⁺)` contributions of one curve segment.
fn segment_forms(a: &CurvePoint, b: &CurvePoint) -> (f64, f64) {
    let mu_minus = 0.5 * (form_a(a.w, a.v) * a.p + form_a(b.w, b.v) * b.p) * (b.xi - a.xi);
    let mu_plus = -0.5 * (form_a(a.z, a.v) * a.q + form_a(b.z, b.v) * b.q) * (b.eta - a.eta);
    (mu_minus, mu_plus)
}

/// Line integral of the energy form along the level curve `t = τ`.
pub fn energy_forms(g: &CharGrid, tau: f64) -> Result<f64> {
    let curve = level_curve(g, tau)?;
    Ok(curve
        .windows(2)
        .map(|s| {
            let (a, b) = segment_forms(&s[0], &s[1]);
            a + b
        })
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeasureRow {
    pub a: f64,
    pub b: f64,
    pub mu_minus: f64,
    pub mu_plus: f64,
    /// The interval misses the slice.
    pub empty: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureTable {
    pub tau: f64,
    pub intervals: Vec<MeasureRow>,
    /// `μ_τ(ℝ)`.
    pub total: f64,
}

/// Energy measures `μ⁻ = ∫ a p dξ`, `μ⁺ = -∫ b q dη` of the part of the
/// level curve with `x ∈ [a, b]`.
pub fn measures(g: &CharGrid, tau: f64, intervals: &[(f64, f64)]) -> Result<MeasureTable> {
    let curve = level_curve(g, tau)?;
    let total = curve
        .windows(2)
        .map(|s| {
            let (a, b) = segment_forms(&s[0], &s[1]);
            a + b
        })
        .sum();
    let (x_lo, x_hi) = (curve[0].x, curve[curve.len() - 1].x);
    let rows = intervals
        .iter()
        .map(|&(a, b)| {
            let mut row = MeasureRow {
                a,
                b,
                mu_minus: 0.0,
                mu_plus: 0.0,
                empty: b <= x_lo || a >= x_hi || b <= a,
            };
            if row.empty {
                return row;
            }
            for seg in curve.windows(2) {
                let (p, q) = (&seg[0], &seg[1]);
                let (fa, fb) = if q.x > p.x {
                    (
                        ((a - p.x) / (q.x - p.x)).clamp(0.0, 1.0),
                        ((b - p.x) / (q.x - p.x)).clamp(0.0, 1.0),
                    )
                } else if p.x >= a && p.x < b {
                    (0.0, 1.0)
                } else {
                    continue;
                };
                if fb <= fa {
                    continue;
                }
                let (mm, mp) = segment_forms(&p.lerp(q, fa), &p.lerp(q, fb));
                row.mu_minus += mm;
                row.mu_plus += mp;
            }
            row
        })
        .collect();
    Ok(MeasureTable {
        tau,
        intervals: rows,
        total,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Closedness {
    pub energy_res: f64,
    pub momentum_res: f64,
}

/// Largest discrete curl over lattice cells of the energy form
/// (`∂_η(a p) + ∂_ξ(b q)`) and the momentum form
/// (`∂_η(a_m p/c) - ∂_ξ(b_m q/c)`).
pub fn closedness_residual(g: &CharGrid) -> Closedness {
    let lat = g.lattice;
    let ap = |k: usize| form_a(g.w[k], g.v[k]) * g.p[k];
    let bq = |k: usize| form_a(g.z[k], g.v[k]) * g.q[k];
    let amp = |k: usize| form_m(g.w[k], g.v[k]) * g.p[k] / g.ws.c(g.v[k]);
    let bmq = |k: usize| form_m(g.z[k], g.v[k]) * g.q[k] / g.ws.c(g.v[k]);
    let mut out = Closedness {
        energy_res: 0.0,
        momentum_res: 0.0,
    };
    for (i, j, k00) in g.nodes() {
        let (Some(k10), Some(k01), Some(k11)) = (g.index(i + 1, j), g.index(i, j + 1), g.index(i + 1, j + 1)) else {
            continue;
        };
        let d_eta = |f: &dyn Fn(usize) -> f64| (f(k01) + f(k11) - f(k00) - f(k10)) / (2.0 * lat.d_eta);
        let d_xi = |f: &dyn Fn(usize) -> f64| (f(k10) + f(k11) - f(k00) - f(k01)) / (2.0 * lat.d_xi);
        let e = d_eta(&ap) + d_xi(&bq);
        let m = d_eta(&amp) - d_xi(&bmq);
        out.energy_res = out.energy_res.max(e.abs());
        out.momentum_res = out.momentum_res.max(m.abs());
    }
    out
}

/// `L = [4(𝒦³ + 1) E₀]^{1/2}`.
pub fn lipschitz_constant(e0: f64, bounds: &SpeedBounds) -> f64 {
    (4.0 * (bounds.kappa().powi(3) + 1.0) * e0).sqrt()
}

/// Common grid over the intersection of the slices' x-ranges.
pub fn common_grid(slices: &[&TimeSlice], n: usize) -> Option<Vec<f64>> {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for s in slices {
        let (a, b) = s.x_range()?;
        lo = lo.max(a);
        hi = hi.min(b);
    }
    (hi > lo).then(|| uniform_grid(lo, hi, n))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LipschitzReport {
    pub max_ratio: f64,
    pub bound: f64,
    pub pairs: usize,
    pub check: Check,
}

/// `max ‖v(t) - v(s)‖_{L²} / |t - s|` over all slice pairs against
/// `L (1 + slack)`.
pub fn lipschitz_check(slices: &[TimeSlice], e0: f64, bounds: &SpeedBounds, slack: f64) -> Result<LipschitzReport> {
    let refs: Vec<&TimeSlice> = slices.iter().collect();
    let grid = common_grid(&refs, 4001).ok_or(Error::NoOverlap)?;
    let vs: Vec<Vec<f64>> = slices.iter().map(|s| resample_uniform(s, &grid).v).collect();
    let mut max_ratio = 0.0f64;
    let mut pairs = 0;
    for a in 0..slices.len() {
        for b in a + 1..slices.len() {
            let dt = (slices[b].tau - slices[a].tau).abs();
            if dt == 0.0 {
                continue;
            }
            let d2: Vec<f64> = vs[a].iter().zip(&vs[b]).map(|(x, y)| (x - y).powi(2)).collect();
            max_ratio = max_ratio.max(trapezoid(&grid, &d2).sqrt() / dt);
            pairs += 1;
        }
    }
    let bound = lipschitz_constant(e0, bounds);
    Ok(LipschitzReport {
        max_ratio,
        bound,
        pairs,
        check: Check::at_most("lipschitz", max_ratio, bound * (1.0 + slack)),
    })
}

/// `‖v_t(t_{k+1}) - v_t(t_k)‖_{L²}` for consecutive slices, over the points
/// where both are regular.
pub fn vt_increments(slices: &[TimeSlice]) -> Vec<f64> {
    slices
        .windows(2)
        .map(|p| {
            let Some(grid) = common_grid(&[&p[0], &p[1]], 4001) else {
                return f64::NAN;
            };
            let a = resample_uniform(&p[0], &grid).vt;
            let b = resample_uniform(&p[1], &grid).vt;
            let d2: Vec<f64> = a
                .iter()
                .zip(&b)
                .map(|(x, y)| match (x, y) {
                    (Some(x), Some(y)) => (x - y).powi(2),
                    _ => 0.0,
                })
                .collect();
            trapezoid(&grid, &d2).sqrt()
        })
        .collect()
}

/// Largest upward slope `(Λ(t) - Λ(s)) / (t - s)` over sampled `t > s`.
pub fn lambda_slope(times: &[f64], lambda: &[f64]) -> f64 {
    let mut m = f64::NEG_INFINITY;
    for a in 0..times.len() {
        for b in 0..times.len() {
            if times[b] > times[a] {
                m = m.max((lambda[b] - lambda[a]) / (times[b] - times[a]));
            }
        }
    }
    m
}

/// Upper bound on `dΛ/dt` from the transport equations of `R²` and `S²`:
/// `128 𝒦 E₀³ A² + 8 E₀² (1 + v_max²)` with `A = sup |c'/(4c)|`.
pub fn lambda_slope_bound(e0: f64, ws: &WaveSpeed, v_max: f64) -> f64 {
    let a = ws.sup_over_period(|c, cp| (cp / (4.0 * c)).abs());
    let kappa = ws.bounds().kappa();
    128.0 * kappa * e0.powi(3) * a * a + 8.0 * e0 * e0 * (1.0 + v_max * v_max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HolderOptions {
    pub x_window: (f64, f64),
    pub pairs: usize,
    pub seed: u64,
}

/// `max |v(P) - v(Q)| / d(P, Q)^{1/2}` over random pairs of points on the
/// given slices. Pairs depend only on the slice times, the window and the
/// seed, so the same pairs are used for every refinement level.
pub fn holder_coefficient(slices: &[TimeSlice], opts: &HolderOptions) -> f64 {
    let (x0, x1) = opts.x_window;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let near = 0.05 * (x1 - x0);
    let mut pts: Vec<Vec<(f64, f64, usize)>> = vec![Vec::new(); slices.len()];
    let mut pairs = Vec::with_capacity(opts.pairs);
    for n in 0..opts.pairs {
        let a = rng.gen_range(0..slices.len());
        let xa = rng.gen_range(x0..x1);
        let (b, xb) = if n % 2 == 0 {
            (a, (xa + rng.gen_range(-near..near)).clamp(x0, x1))
        } else {
            (rng.gen_range(0..slices.len()), rng.gen_range(x0..x1))
        };
        let (ka, kb) = (pts[a].len(), pts[b].len() + usize::from(a == b));
        pts[a].push((xa, f64::NAN, ka));
        pts[b].push((xb, f64::NAN, kb));
        pairs.push((a, ka, b, kb));
    }
    let values: Vec<Vec<f64>> = slices
        .iter()
        .zip(&pts)
        .map(|(s, p)| {
            let xs: Vec<f64> = p.iter().map(|q| q.0).collect();
            resample_uniform(s, &xs).v
        })
        .collect();
    let mut coef = 0.0f64;
    for (a, ka, b, kb) in pairs {
        let (xa, xb) = (pts[a][ka].0, pts[b][kb].0);
        let d = ((slices[a].tau - slices[b].tau).powi(2) + (xa - xb).powi(2)).sqrt();
        let dv = (values[a][ka] - values[b][kb]).abs();
        if d > 1e-12 && dv.is_finite() {
            coef = coef.max(dv / d.sqrt());
        }
    }
    coef
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HolderReport {
    pub coefficients: Vec<f64>,
    /// Ratios of coefficients between consecutive refinement levels.
    pub ratios: Vec<f64>,
    pub check: Check,
}

/// Stability of the Hölder coefficient across refinement levels: every
/// ratio between consecutive levels must lie in `[0.5, 2]`.
pub fn holder_check(levels: &[Vec<TimeSlice>], opts: &HolderOptions) -> HolderReport {
    let coefficients: Vec<f64> = levels.iter().map(|s| holder_coefficient(s, opts)).collect();
    let ratios: Vec<f64> = coefficients
        .windows(2)
        .map(|c| if c[0] == 0.0 && c[1] == 0.0 { 1.0 } else { c[1] / c[0] })
        .collect();
    let worst = ratios
        .iter()
        .fold(1.0f64, |m, &r| if (r.ln()).abs() > m.ln().abs() { r } else { m });
    let pass = ratios.iter().all(|r| (0.5..=2.0).contains(r));
    HolderReport {
        coefficients,
        ratios,
        check: Check {
            name: "holder_stability".into(),
            value: worst,
            bound: 2.0,
            pass,
        },
    }
}

/// Smooth bump `ψ((t - t0)/rt) ψ((x - x0)/rx)` with
/// `ψ(s) = exp(-1/(1 - s²))` on `|s| < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestFunction {
    pub t0: f64,
    pub x0: f64,
    pub rt: f64,
    pub rx: f64,
}

fn psi(s: f64) -> (f64, f64) {
    if s.abs() >= 1.0 {
        return (0.0, 0.0);
    }
    let d = 1.0 - s * s;
    let v = (-1.0 / d).exp();
    (v, v * (-2.0 * s / (d * d)))
}

impl TestFunction {
    /// `(φ, φ_t, φ_x)`.
    pub fn eval(&self, t: f64, x: f64) -> (f64, f64, f64) {
        let (a, da) = psi((t - self.t0) / self.rt);
        let (b, db) = psi((x - self.x0) / self.rx);
        (a * b, da * b / self.rt, a * db / self.rx)
    }
}

/// Five bumps spread over `[t_lo, t_hi] × [x_lo, x_hi]`.
pub fn default_test_family(t_lo: f64, t_hi: f64, x_lo: f64, x_hi: f64) -> Vec<TestFunction> {
    let (tm, xm) = (0.5 * (t_lo + t_hi), 0.5 * (x_lo + x_hi));
    let (rt, rx) = (0.5 * (t_hi - t_lo), 0.5 * (x_hi - x_lo));
    vec![
        TestFunction { t0: tm, x0: xm, rt, rx },
        TestFunction { t0: tm, x0: xm - 0.5 * rx, rt: 0.6 * rt, rx: 0.4 * rx },
        TestFunction { t0: tm, x0: xm + 0.5 * rx, rt: 0.6 * rt, rx: 0.4 * rx },
        TestFunction { t0: t_lo + 0.35 * rt, x0: xm, rt: 0.3 * rt, rx: 0.6 * rx },
        TestFunction { t0: t_hi - 0.35 * rt, x0: xm, rt: 0.3 * rt, rx: 0.6 * rx },
    ]
}

/// Weak-form integrand times the Jacobian `dx dt = J dξ dη`,
/// `J = p q (1 + cos w)(1 + cos z)/(8c)`, written with bounded factors.
#[allow(clippy::too_many_arguments)]
pub fn weak_integrand(ws: &WaveSpeed, phi: (f64, f64, f64), w: f64, z: f64, p: f64, q: f64, v: f64) -> f64 {
    let (c, cp) = ws.c_and_prime(v);
    let (f, ft, fx) = phi;
    let (sw, cw) = w.sin_cos();
    let (sz, cz) = z.sin_cos();
    let pq = p * q;
    let vt_j = pq / (16.0 * c) * (sw * (1.0 + cz) + sz * (1.0 + cw));
    let cvx_j = pq / (16.0 * c) * (sw * (1.0 + cz) - sz * (1.0 + cw));
    let cvx2_j = pq / (32.0 * c) * ((1.0 - cw) * (1.0 + cz) - 2.0 * sw * sz + (1.0 + cw) * (1.0 - cz));
    let jac = pq * (1.0 + cw) * (1.0 + cz) / (8.0 * c);
    ft * vt_j - c * fx * cvx_j - f * (cp / c) * cvx2_j - 0.5 * f * (v + v * v * v) * jac
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakResidual {
    /// `|∬ integrand|` per test function.
    pub residuals: Vec<f64>,
    /// `∬ |terms|` per test function, for relative comparisons.
    pub scales: Vec<f64>,
    pub max: f64,
}

impl WeakResidual {
    fn from_parts(residuals: Vec<f64>, scales: Vec<f64>) -> Self {
        let max = residuals.iter().copied().fold(0.0, f64::max);
        Self { residuals, scales, max }
    }

    pub fn max_relative(&self) -> f64 {
        self.residuals
            .iter()
            .zip(&self.scales)
            .map(|(r, s)| if *s > 0.0 { r / s } else { 0.0 })
            .fold(0.0, f64::max)
    }
}

fn abs_scale(ws: &WaveSpeed, phi: (f64, f64, f64), w: f64, z: f64, p: f64, q: f64, v: f64) -> f64 {
    let (f, ft, fx) = phi;
    weak_integrand(ws, (0.0, ft.abs(), 0.0), w, z, p, q, v).abs()
        + weak_integrand(ws, (0.0, 0.0, fx.abs()), w, z, p, q, v).abs()
        + weak_integrand(ws, (f.abs(), 0.0, 0.0), w, z, p, q, v).abs()
}

/// Checks that a test function's support lies inside the recovered region.
fn check_support(g: &CharGrid, tf: &TestFunction) -> Result<()> {
    let (_, t_max) = time_range(g)?;
    let (t_lo, t_hi) = (tf.t0 - tf.rt, tf.t0 + tf.rt);
    if t_lo <= 0.0 || t_hi >= t_max {
        return Err(Error::SupportOutsideRegion(format!(
            "t-support [{t_lo}, {t_hi}] not inside (0, {t_max})"
        )));
    }
    for tau in [t_lo, tf.t0, t_hi] {
        let c = level_curve(g, tau)?;
        let (a, b) = (c[0].x, c[c.len() - 1].x);
        if tf.x0 - tf.rx <= a || tf.x0 + tf.rx >= b {
            return Err(Error::SupportOutsideRegion(format!(
                "x-support [{}, {}] not inside [{a}, {b}] at t = {tau}",
                tf.x0 - tf.rx,
                tf.x0 + tf.rx
            )));
        }
    }
    Ok(())
}

/// `∬ φ_t v_t - [c φ]_x [c v_x] - φ(v + v³)/2 dx dt` for each test function,
/// integrated over the characteristic lattice.
pub fn weak_residual(g: &CharGrid, tests: &[TestFunction]) -> Result<WeakResidual> {
    let t = g.t.as_ref().ok_or(Error::MissingCoordinates)?;
    let x = g.x.as_ref().ok_or(Error::MissingCoordinates)?;
    for tf in tests {
        check_support(g, tf)?;
    }
    let cell = g.lattice.d_xi * g.lattice.d_eta;
    let mut res = vec![0.0; tests.len()];
    let mut scale = vec![0.0; tests.len()];
    for k in 0..g.len() {
        for (n, tf) in tests.iter().enumerate() {
            let phi = tf.eval(t[k], x[k]);
            if phi == (0.0, 0.0, 0.0) {
                continue;
            }
            let (w, z, p, q, v) = (g.w[k], g.z[k], g.p[k], g.q[k], g.v[k]);
            res[n] += weak_integrand(&g.ws, phi, w, z, p, q, v) * cell;
            scale[n] += abs_scale(&g.ws, phi, w, z, p, q, v) * cell;
        }
    }
    Ok(WeakResidual::from_parts(res.into_iter().map(f64::abs).collect(), scale))
}

/// The same functional evaluated on finite-difference snapshots (trapezoid
/// in `x` and `t`). Snapshots must share one grid and be ordered in time.
pub fn weak_residual_fd(states: &[FdState], ws: &WaveSpeed, tests: &[TestFunction]) -> Result<WeakResidual> {
    if states.len() < 2 {
        return Err(Error::InvalidData("need at least two snapshots".into()));
    }
    let x = &states[0].x;
    let (t0, t1) = (states[0].t, states[states.len() - 1].t);
    for tf in tests {
        if tf.t0 - tf.rt < t0 || tf.t0 + tf.rt > t1 || tf.x0 - tf.rx < x[0] || tf.x0 + tf.rx > x[x.len() - 1] {
            return Err(Error::SupportOutsideRegion(format!("{tf:?}")));
        }
    }
    let mut res = vec![0.0; tests.len()];
    let mut scale = vec![0.0; tests.len()];
    let row = |st: &FdState, tf: &TestFunction| -> (f64, f64) {
        let (mut a, mut b) = (0.0, 0.0);
        for k in 0..x.len() {
            let wgt = if k == 0 || k == x.len() - 1 { 0.5 } else { 1.0 } * st.dx;
            let phi = tf.eval(st.t, x[k]);
            if phi == (0.0, 0.0, 0.0) {
                continue;
            }
            let (f, ft, fx) = phi;
            let v = st.v[k];
            let (c, cp) = ws.c_and_prime(v);
            let vt = 0.5 * (st.r[k] + st.s[k]);
            let cvx = 0.5 * (st.r[k] - st.s[k]);
            let terms = [ft * vt, -c * fx * cvx, -f * (cp / c) * cvx * cvx, -0.5 * f * (v + v * v * v)];
            a += wgt * terms.iter().sum::<f64>();
            b += wgt * terms.iter().map(|t| t.abs()).sum::<f64>();
        }
        (a, b)
    };
    for (n, tf) in tests.iter().enumerate() {
        let vals: Vec<(f64, f64)> = states.iter().map(|s| row(s, tf)).collect();
        for k in 1..states.len() {
            let dt = states[k].t - states[k - 1].t;
            res[n] += 0.5 * dt * (vals[k].0 + vals[k - 1].0);
            scale[n] += 0.5 * dt * (vals[k].1 + vals[k - 1].1);
        }
    }
    Ok(WeakResidual::from_parts(res.into_iter().map(f64::abs).collect(), scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charsolver::{solve_march, Domain, Lattice, MarchOptions, Sources, State};
    use crate::initdata::{BoundaryCurve, DataFamily, FunctionSpec, InitialData};
    use crate::physmap::{attach_coords, extract_time_slice};
    use proptest::prelude::*;

    fn unit() -> WaveSpeed {
        WaveSpeed::constant(1.0).unwrap()
    }

    fn bump_run(ws: &WaveSpeed, h: f64) -> (InitialData, CharGrid) {
        let (v0, v1) = DataFamily::GaussianBump {
            amplitude: 0.5,
            center: 0.0,
            width: 0.3,
            cutoff: 1.2,
        }
        .build(ws);
        let d = InitialData::sample(&v0, &v1, (-1.5, 1.5), h / 4.0, ws).unwrap();
        let bc = BoundaryCurve::from_initial(&d);
        let lat = Lattice::new(Domain::covering(&bc, -3.0, 3.0), h, h).unwrap();
        let mut g = solve_march(
            &bc,
            lat,
            ws,
            MarchOptions {
                cell_iters: 3,
                t_max: Some(1.2),
            },
        )
        .unwrap();
        attach_coords(&mut g).unwrap();
        (d, g)
    }

    #[test]
    fn density_matches_physical_form() {
        let ws = WaveSpeed::trigonometric(4.0, 1.0).unwrap();
        let (w, z, v) = (0.9, -2.1, 0.3);
        let (r, s) = ((w / 2.0f64).tan(), (z / 2.0f64).tan());
        let c = ws.c(v);
        let vt = (r + s) / 2.0;
        let vx = (r - s) / (2.0 * c);
        let direct = 0.5 * (vt * vt + c * c * vx * vx + v * v / 2.0 + v.powi(4) / 4.0);
        assert!((energy_density(w, z, v) - direct).abs() < 1e-14);
    }

    #[test]
    fn slice_at_time_zero_has_ground_energy() {
        for ws in [unit(), WaveSpeed::trigonometric(4.0, 1.0).unwrap()] {
            let (d, g) = bump_run(&ws, 0.04);
            let s = extract_time_slice(&g, 0.0).unwrap();
            let e = energy_physical(&s);
            assert!(((e.value - d.e0) / d.e0).abs() < 1e-12, "{} vs {}", e.value, d.e0);
            assert!(!e.warning);
            let f = energy_forms(&g, 0.0).unwrap();
            assert!(((f - d.e0) / d.e0).abs() < 1e-3, "{f} vs {}", d.e0);
        }
    }

    #[test]
    fn zero_slice_has_zero_everything() {
        let ws = unit();
        let s = TimeSlice::from_riemann(&ws, 0.3, &[0.0, 0.5, 1.0], &[0.0; 3], &[0.0; 3], &[0.0; 3]);
        assert_eq!(energy_physical(&s).value, 0.0);
        assert_eq!(interaction_potential(&s), 0.0);
        assert_eq!(smooth_measures(&s, 0.0, 1.0), (0.0, 0.0));
    }

    #[test]
    fn interaction_of_separated_supports_is_the_full_product() {
        // S² supported left of R²: every pair has x > y
        let ws = unit();
        let x: Vec<f64> = (0..=400).map(|k| -2.0 + k as f64 * 0.01).collect();
        let bump = |x: f64, c: f64| if (x - c).abs() < 0.5 { 1.0 - ((x - c) / 0.5).powi(2) } else { 0.0 };
        let r: Vec<f64> = x.iter().map(|&x| bump(x, 1.0)).collect();
        let s: Vec<f64> = x.iter().map(|&x| 0.5 * bump(x, -1.0)).collect();
        let sl = TimeSlice::from_riemann(&ws, 0.0, &x, &vec![0.0; x.len()], &r, &s);
        let r2: Vec<f64> = r.iter().map(|v| v * v).collect();
        let s2: Vec<f64> = s.iter().map(|v| v * v).collect();
        let expect = 0.25 * trapezoid(&x, &r2) * trapezoid(&x, &s2);
        assert!((interaction_potential(&sl) - expect).abs() < 1e-12 * expect.max(1.0));
        // swapped roles: no pair with x > y
        let sl2 = TimeSlice::from_riemann(&ws, 0.0, &x, &vec![0.0; x.len()], &s, &r);
        assert!(interaction_potential(&sl2).abs() < 1e-15);
    }

    #[test]
    fn measures_split_and_total() {
        let ws = WaveSpeed::trigonometric(4.0, 1.0).unwrap();
        let (d, g) = bump_run(&ws, 0.02);
        let tab = measures(&g, 0.5, &[(-10.0, 0.0), (0.0, 10.0), (50.0, 60.0)]).unwrap();
        let r = &tab.intervals;
        assert!(r[2].empty);
        assert!(r.iter().all(|r| r.mu_minus >= 0.0 && r.mu_plus >= 0.0));
        let split = r[0].mu_minus + r[0].mu_plus + r[1].mu_minus + r[1].mu_plus;
        assert!((split - tab.total).abs() < 1e-12);
        assert!(((tab.total - d.e0) / d.e0).abs() < 0.02);
        // smooth case: the measures have densities R²/4 + F/2, S²/4 + F/2
        let s = extract_time_slice(&g, 0.5).unwrap();
        for row in &r[..2] {
            let (m, p) = smooth_measures(&s, row.a, row.b);
            assert!(((row.mu_minus - m) / m).abs() < 0.02, "{} vs {m}", row.mu_minus);
            assert!(((row.mu_plus - p) / p).abs() < 0.02, "{} vs {p}", row.mu_plus);
        }
    }

    #[test]
    fn closedness_converges() {
        let ws = WaveSpeed::trigonometric(4.0, 1.0).unwrap();
        let a = closedness_residual(&bump_run(&ws, 0.04).1);
        let b = closedness_residual(&bump_run(&ws, 0.02).1);
        assert!(b.energy_res < a.energy_res / 1.8, "{a:?} {b:?}");
        assert!(b.momentum_res < a.momentum_res / 1.8, "{a:?} {b:?}");
    }

    #[test]
    fn weak_residual_rejects_outside_support() {
        let (_, g) = bump_run(&unit(), 0.04);
        let bad = TestFunction {
            t0: 0.05,
            x0: 0.0,
            rt: 0.1,
            rx: 0.5,
        };
        assert!(matches!(weak_residual(&g, &[bad]), Err(Error::SupportOutsideRegion(_))));
        let wide = TestFunction {
            t0: 0.5,
            x0: 0.0,
            rt: 0.2,
            rx: 50.0,
        };
        assert!(matches!(weak_residual(&g, &[wide]), Err(Error::SupportOutsideRegion(_))));
    }

    #[test]
    fn zero_data_weak_residual_vanishes() {
        let ws = unit();
        let d = InitialData::sample(&FunctionSpec::Zero, &FunctionSpec::Zero, (-2.0, 2.0), 0.05, &ws).unwrap();
        let bc = BoundaryCurve::from_initial(&d);
        let mut g = solve_march(&bc, Lattice::new(Domain::symmetric(3.0, 3.0), 0.05, 0.05).unwrap(), &ws, MarchOptions::default()).unwrap();
        attach_coords(&mut g).unwrap();
        let tests = default_test_family(0.2, 1.0, -1.0, 1.0);
        assert_eq!(weak_residual(&g, &tests).unwrap().max, 0.0);
    }

    #[test]
    fn holder_of_constant_slices_is_zero() {
        let ws = unit();
        let s: Vec<TimeSlice> = (0..3)
            .map(|k| TimeSlice::from_riemann(&ws, k as f64 * 0.1, &[-1.0, 1.0], &[0.0; 2], &[0.0; 2], &[0.0; 2]))
            .collect();
        let opts = HolderOptions {
            x_window: (-1.0, 1.0),
            pairs: 200,
            seed: 42,
        };
        let rep = holder_check(&[s.clone(), s], &opts);
        assert_eq!(rep.coefficients, vec![0.0, 0.0]);
        assert!(rep.check.pass);
    }

    #[test]
    fn lipschitz_of_zero_run() {
        let ws = unit();
        let s: Vec<TimeSlice> = (0..3)
            .map(|k| TimeSlice::from_riemann(&ws, k as f64 * 0.1, &[-1.0, 1.0], &[0.0; 2], &[0.0; 2], &[0.0; 2]))
            .collect();
        let rep = lipschitz_check(&s, 0.0, &ws.bounds(), 0.05).unwrap();
        assert_eq!(rep.max_ratio, 0.0);
        assert!(rep.check.pass);
        assert_eq!(rep.pairs, 3);
    }

    #[test]
    fn test_function_derivatives() {
        let tf = TestFunction {
            t0: 0.5,
            x0: 0.1,
            rt: 0.3,
            rx: 0.7,
        };
        let h = 1e-6;
        for (t, x) in [(0.5, 0.1), (0.6, -0.3), (0.7, 0.5)] {
            let (_, ft, fx) = tf.eval(t, x);
            let nt = (tf.eval(t + h, x).0 - tf.eval(t - h, x).0) / (2.0 * h);
            let nx = (tf.eval(t, x + h).0 - tf.eval(t, x - h).0) / (2.0 * h);
            assert!((ft - nt).abs() < 1e-7 && (fx - nx).abs() < 1e-7);
        }
        assert_eq!(tf.eval(0.81, 0.1), (0.0, 0.0, 0.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        // Pointwise closedness of both forms, from the system's right-hand sides.
        #[test]
        fn forms_are_closed(w in -3.0f64..3.0, z in -3.0f64..3.0, p in 0.1f64..3.0,
                            q in 0.1f64..3.0, v in -1.5f64..1.5) {
            let ws = WaveSpeed::trigonometric(4.0, 1.0).unwrap();
            let st = State { w, z, p, q, v };
            let s = Sources::at(&ws, &st);
            let (c, cp) = ws.c_and_prime(v);
            let pot = 2.0 * v * v + v.powi(4);
            let dpot = 4.0 * v + 4.0 * v.powi(3);
            let a = form_a(w, v);
            let b = form_a(z, v);
            let a_w = w.sin() / 8.0 - w.sin() * pot / 32.0;
            let b_z = z.sin() / 8.0 - z.sin() * pot / 32.0;
            let am_w = w.sin() / 8.0 + w.sin() * pot / 32.0;
            let bm_z = z.sin() / 8.0 + z.sin() * pot / 32.0;
            let a_v = (1.0 + w.cos()) * dpot / 32.0;
            let b_v = (1.0 + z.cos()) * dpot / 32.0;
            let ap_eta = (a_w * s.w_eta + a_v * s.v_eta) * p + a * s.p_eta;
            let bq_xi = (b_z * s.z_xi + b_v * s.v_xi) * q + b * s.q_xi;
            prop_assert!((ap_eta + bq_xi).abs() < 1e-12);
            let c_eta = cp * s.v_eta;
            let c_xi = cp * s.v_xi;
            let (am, bm) = (form_m(w, v), form_m(z, v));
            let am_eta = (am_w * s.w_eta - a_v * s.v_eta) * p + am * s.p_eta;
            let bm_xi = (bm_z * s.z_xi - b_v * s.v_xi) * q + bm * s.q_xi;
            let m_eta = am_eta / c - am * p * c_eta / (c * c);
            let m_xi = bm_xi / c - bm * q * c_xi / (c * c);
            prop_assert!((m_eta - m_xi).abs() < 1e-12);
        }

        // q_ξ + p_η = -½ (G q (1 + cos z))_ξ - ½ (G p (1 + cos w))_η
        #[test]
        fn balance_identity(w in -3.0f64..3.0, z in -3.0f64..3.0, p in 0.1f64..3.0,
                            q in 0.1f64..3.0, v in -1.5f64..1.5) {
            let ws = WaveSpeed::trigonometric(4.0, 1.0).unwrap();
            let s = Sources::at(&ws, &State { w, z, p, q, v });
            let gg = v * v / 2.0 + v.powi(4) / 4.0;
            let dg = v + v.powi(3);
            let a_xi = dg * s.v_xi * q * (1.0 + z.cos()) + gg * s.q_xi * (1.0 + z.cos()) - gg * q * z.sin() * s.z_xi;
            let b_eta = dg * s.v_eta * p * (1.0 + w.cos()) + gg * s.p_eta * (1.0 + w.cos()) - gg * p * w.sin() * s.w_eta;
            prop_assert!((s.q_xi + s.p_eta + 0.5 * a_xi + 0.5 * b_eta).abs() < 1e-12);
        }
    }
}
