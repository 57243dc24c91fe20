//! Initial data `(v0, v1)`, Riemann variables at `t = 0`, ground energy and
//! the boundary curve `γ = {η = φ(ξ)}` carrying the data of the semilinear
//! system.
//!
//! Functions are sampled on a uniform grid `x_k = k·dx`, so `x = 0` is always
//! a node; both coordinate integrals are anchored there.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quad::{bracket, cumulative_trapezoid, trapezoid};
use crate::wavespeed::WaveSpeed;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A compactly supported real function of `x`, optionally with an analytic
/// derivative.
#[derive(Clone)]
pub enum FunctionSpec {
    Zero,
    /// `a·exp(-((x-x0)/width)²)` for `|x-x0| < cutoff`, zero outside.
    Gaussian {
        amplitude: f64,
        center: f64,
        width: f64,
        cutoff: f64,
    },
    /// Piecewise-linear through `(xs, ys)`, zero outside `[xs[0], xs[n-1]]`.
    Tabulated { xs: Vec<f64>, ys: Vec<f64> },
    Custom {
        f: ScalarFn,
        df: Option<ScalarFn>,
        support: (f64, f64),
    },
}

impl fmt::Debug for FunctionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => write!(f, "Zero"),
            Self::Gaussian {
                amplitude,
                center,
                width,
                cutoff,
            } => f
                .debug_struct("Gaussian")
                .field("amplitude", amplitude)
                .field("center", center)
                .field("width", width)
                .field("cutoff", cutoff)
                .finish(),
            Self::Tabulated { xs, .. } => write!(f, "Tabulated({} points)", xs.len()),
            Self::Custom { support, df, .. } => f
                .debug_struct("Custom")
                .field("support", support)
                .field("analytic_derivative", &df.is_some())
                .finish(),
        }
    }
}

impl FunctionSpec {
    pub fn custom(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: Option<ScalarFn>,
        support: (f64, f64),
    ) -> Self {
        Self::Custom {
            f: Arc::new(f),
            df,
            support,
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Gaussian {
                amplitude,
                center,
                width,
                cutoff,
            } => {
                let d = x - center;
                if d.abs() < *cutoff {
                    amplitude * (-(d / width).powi(2)).exp()
                } else {
                    0.0
                }
            }
            Self::Tabulated { xs, ys } => {
                if xs.is_empty() || x < xs[0] || x > xs[xs.len() - 1] {
                    0.0
                } else if xs.len() == 1 {
                    ys[0]
                } else {
                    crate::quad::interp(xs, ys, x)
                }
            }
            Self::Custom { f, support, .. } => {
                if x < support.0 || x > support.1 {
                    0.0
                } else {
                    f(x)
                }
            }
        }
    }

    /// Analytic derivative when the representation provides one.
    pub fn derivative(&self, x: f64) -> Option<f64> {
        match self {
            Self::Zero => Some(0.0),
            Self::Gaussian {
                amplitude,
                center,
                width,
                cutoff,
            } => {
                let d = x - center;
                Some(if d.abs() < *cutoff {
                    -2.0 * d / (width * width) * amplitude * (-(d / width).powi(2)).exp()
                } else {
                    0.0
                })
            }
            Self::Tabulated { .. } => None,
            Self::Custom { df, support, .. } => df.as_ref().map(|df| {
                if x < support.0 || x > support.1 {
                    0.0
                } else {
                    df(x)
                }
            }),
        }
    }

    /// Closed interval outside of which the function vanishes; `None` for the
    /// zero function.
    pub fn support(&self) -> Option<(f64, f64)> {
        match self {
            Self::Zero => None,
            Self::Gaussian { center, cutoff, .. } => Some((center - cutoff, center + cutoff)),
            Self::Tabulated { xs, .. } => xs.first().map(|&a| (a, xs[xs.len() - 1])),
            Self::Custom { support, .. } => Some(*support),
        }
    }

    /// Reads a two-column `x,value` CSV. A non-numeric first line is taken
    /// as a header.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split(',').map(str::trim);
            let (a, b) = match (cols.next(), cols.next()) {
                (Some(a), Some(b)) => (a, b),
                _ => {
                    return Err(Error::InvalidData(format!(
                        "{}:{}: expected two columns",
                        path.display(),
                        lineno + 1
                    )))
                }
            };
            match (a.parse::<f64>(), b.parse::<f64>()) {
                (Ok(x), Ok(y)) => {
                    xs.push(x);
                    ys.push(y);
                }
                _ if xs.is_empty() && lineno == 0 => continue,
                _ => {
                    return Err(Error::InvalidData(format!(
                        "{}:{}: cannot parse '{line}'",
                        path.display(),
                        lineno + 1
                    )))
                }
            }
        }
        if xs.len() < 2 || xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidData(format!(
                "{}: need at least two strictly increasing x values",
                path.display()
            )));
        }
        Ok(Self::Tabulated { xs, ys })
    }
}

/// Built-in initial-data families.
#[derive(Debug, Clone, PartialEq)]
pub enum DataFamily {
    Zero,
    /// `v0 = a·exp(-((x-x0)/w)²)` cut at `|x-x0| = cutoff`, `v1 = 0`.
    GaussianBump {
        amplitude: f64,
        center: f64,
        width: f64,
        cutoff: f64,
    },
    /// Right-moving wave packet of the linearization about `v = 0`:
    /// `v0 = a cos(k(x-x0)) e(x)` with Gaussian envelope `e`, and `v1` the
    /// time derivative of `a cos(k(x-x0) - ωt) e(x - c_g t)` at `t = 0`,
    /// where `ω² = c(0)²k² + 1/2` and `c_g = c(0)²k/ω`.
    SinePacket {
        amplitude: f64,
        wavenumber: f64,
        width: f64,
        center: f64,
    },
    /// Steep bump with `v1 = c(v0)·v0'`, so that `S = 0` and
    /// `R = 2c(v0)v0'` is large on the flanks: the classical setting for
    /// finite-time gradient blow-up when `c' ≠ 0`.
    GhzBlowup {
        amplitude: f64,
        center: f64,
        width: f64,
    },
}

/// Envelope half-support in units of the Gaussian width.
const ENVELOPE_CUTOFF: f64 = 5.0;

impl DataFamily {
    /// Returns `(v0, v1)`.
    pub fn build(&self, ws: &WaveSpeed) -> (FunctionSpec, FunctionSpec) {
        match *self {
            Self::Zero => (FunctionSpec::Zero, FunctionSpec::Zero),
            Self::GaussianBump {
                amplitude,
                center,
                width,
                cutoff,
            } => (
                FunctionSpec::Gaussian {
                    amplitude,
                    center,
                    width,
                    cutoff,
                },
                FunctionSpec::Zero,
            ),
            Self::SinePacket {
                amplitude,
                wavenumber,
                width,
                center,
            } => {
                let c0 = ws.c(0.0);
                let k = wavenumber;
                let omega = (c0 * c0 * k * k + 0.5).sqrt();
                let cg = c0 * c0 * k / omega;
                let half = ENVELOPE_CUTOFF * width;
                let support = (center - half, center + half);
                let env = move |x: f64| (-((x - center) / width).powi(2)).exp();
                let denv = move |x: f64| -2.0 * (x - center) / (width * width) * env(x);
                let v0 = move |x: f64| amplitude * (k * (x - center)).cos() * env(x);
                let dv0 = move |x: f64| {
                    let ph = k * (x - center);
                    amplitude * (-k * ph.sin() * env(x) + ph.cos() * denv(x))
                };
                let v1 = move |x: f64| {
                    let ph = k * (x - center);
                    amplitude * (omega * ph.sin() * env(x) - cg * ph.cos() * denv(x))
                };
                (
                    FunctionSpec::custom(v0, Some(Arc::new(dv0)), support),
                    FunctionSpec::custom(v1, None, support),
                )
            }
            Self::GhzBlowup {
                amplitude,
                center,
                width,
            } => {
                let cutoff = ENVELOPE_CUTOFF * width;
                let bump = FunctionSpec::Gaussian {
                    amplitude,
                    center,
                    width,
                    cutoff,
                };
                let b = bump.clone();
                let ws = *ws;
                let v1 = move |x: f64| ws.c(b.value(x)) * b.derivative(x).unwrap_or(0.0);
                (bump, FunctionSpec::custom(v1, None, (center - cutoff, center + cutoff)))
            }
        }
    }

    /// Support of the data, if not identically zero.
    pub fn support(&self) -> Option<(f64, f64)> {
        match *self {
            Self::Zero => None,
            Self::GaussianBump { center, cutoff, .. } => Some((center - cutoff, center + cutoff)),
            Self::SinePacket { center, width, .. } | Self::GhzBlowup { center, width, .. } => {
                let h = ENVELOPE_CUTOFF * width;
                Some((center - h, center + h))
            }
        }
    }
}

/// Sampled initial data on a uniform grid.
#[derive(Debug, Clone)]
pub struct InitialData {
    pub x: Vec<f64>,
    pub dx: f64,
    pub v0: Vec<f64>,
    pub v0x: Vec<f64>,
    pub v1: Vec<f64>,
    /// `R(0,·) = v1 + c(v0) v0x`
    pub r0: Vec<f64>,
    /// `S(0,·) = v1 - c(v0) v0x`
    pub s0: Vec<f64>,
    pub e0: f64,
    /// A-priori bound on `sup |v|`.
    pub v_max: f64,
    pub wave_speed: WaveSpeed,
}

impl InitialData {
    /// Samples `(v0, v1)` on `x_k = k·dx` covering `window` (extended to
    /// include `x = 0`). `v0x` is analytic when available, otherwise central
    /// differences.
    pub fn sample(
        v0: &FunctionSpec,
        v1: &FunctionSpec,
        window: (f64, f64),
        dx: f64,
        ws: &WaveSpeed,
    ) -> Result<Self> {
        let (lo, hi) = window;
        if !(dx.is_finite() && dx > 0.0) {
            return Err(Error::InvalidData(format!("dx must be positive, got {dx}")));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidData(format!("bad window [{lo}, {hi}]")));
        }
        for (name, f) in [("v0", v0), ("v1", v1)] {
            if let Some((a, b)) = f.support() {
                if a < lo || b > hi {
                    return Err(Error::InvalidData(format!(
                        "support [{a}, {b}] of {name} not contained in window [{lo}, {hi}]"
                    )));
                }
            }
        }
        let k_lo = ((lo.min(0.0) / dx) - 1e-9).ceil() as i64;
        let k_hi = ((hi.max(0.0) / dx) + 1e-9).floor() as i64;
        let x: Vec<f64> = (k_lo..=k_hi).map(|k| k as f64 * dx).collect();
        if x.len() < 3 {
            return Err(Error::InvalidData("window holds fewer than three nodes".into()));
        }
        let v0s: Vec<f64> = x.iter().map(|&xi| v0.value(xi)).collect();
        let v1s: Vec<f64> = x.iter().map(|&xi| v1.value(xi)).collect();
        let v0x: Vec<f64> = match v0.derivative(x[0]) {
            Some(_) => x.iter().map(|&xi| v0.derivative(xi).unwrap_or(0.0)).collect(),
            None => central_difference(&v0s, dx),
        };
        Self::from_samples(x, v0s, v0x, v1s, ws)
    }

    /// Builds from raw samples on a uniform grid containing `x = 0`.
    pub fn from_samples(
        x: Vec<f64>,
        v0: Vec<f64>,
        v0x: Vec<f64>,
        v1: Vec<f64>,
        ws: &WaveSpeed,
    ) -> Result<Self> {
        let n = x.len();
        if n < 3 || v0.len() != n || v0x.len() != n || v1.len() != n {
            return Err(Error::InvalidData("sample arrays must share a length >= 3".into()));
        }
        let dx = x[1] - x[0];
        if x.windows(2).any(|w| ((w[1] - w[0]) - dx).abs() > 1e-9 * dx.abs().max(1.0)) || dx <= 0.0 {
            return Err(Error::InvalidData("x grid must be uniform and increasing".into()));
        }
        if !x.iter().any(|&xi| xi.abs() < 1e-9 * dx) {
            return Err(Error::InvalidData("x = 0 must be a grid node".into()));
        }
        if let Some(k) = (0..n).find(|&k| !(v0[k].is_finite() && v0x[k].is_finite() && v1[k].is_finite())) {
            return Err(Error::InvalidData(format!("non-finite sample at x = {}", x[k])));
        }
        let tol = 1e-10;
        for k in [0, n - 1] {
            if v0[k].abs() > tol || v0x[k].abs() > tol || v1[k].abs() > tol {
                return Err(Error::InvalidData(format!(
                    "data do not vanish at the window end x = {}",
                    x[k]
                )));
            }
        }
        let cv: Vec<f64> = v0.iter().zip(&v0x).map(|(&v, &vx)| ws.c(v) * vx).collect();
        let r0: Vec<f64> = v1.iter().zip(&cv).map(|(a, b)| a + b).collect();
        let s0: Vec<f64> = v1.iter().zip(&cv).map(|(a, b)| a - b).collect();
        let mut d = Self {
            x,
            dx,
            v0,
            v0x,
            v1,
            r0,
            s0,
            e0: 0.0,
            v_max: 0.0,
            wave_speed: *ws,
        };
        d.e0 = ground_energy(&d, ws);
        let kappa = ws.bounds().kappa();
        let vmax0 = d.v0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        d.v_max = (2.0 * kappa * d.e0).sqrt() + vmax0;
        Ok(d)
    }

    /// Data for the backward problem `t ↦ -t`: `(v0, -v1)`, which maps
    /// `(R, S)` to `(-S, -R)`.
    pub fn time_reversed(&self) -> Self {
        let mut d = self.clone();
        d.v1.iter_mut().for_each(|v| *v = -*v);
        d.r0 = self.s0.iter().map(|s| -s).collect();
        d.s0 = self.r0.iter().map(|r| -r).collect();
        d
    }

    /// `∫ (v0²/2 + v0⁴/4) dx`.
    pub fn potential_integral(&self) -> f64 {
        let g: Vec<f64> = self.v0.iter().map(|v| v * v / 2.0 + v.powi(4) / 4.0).collect();
        trapezoid(&self.x, &g)
    }

    pub fn zero_index(&self) -> usize {
        (-self.x[0] / self.dx).round() as usize
    }
}

fn central_difference(f: &[f64], dx: f64) -> Vec<f64> {
    let n = f.len();
    (0..n)
        .map(|k| {
            if k == 0 {
                (f[1] - f[0]) / dx
            } else if k == n - 1 {
                (f[n - 1] - f[n - 2]) / dx
            } else {
                (f[k + 1] - f[k - 1]) / (2.0 * dx)
            }
        })
        .collect()
}

/// `½ ∫ { v1² + c²(v0) v0x² + v0²/2 + v0⁴/4 } dx` by the trapezoid rule.
pub fn ground_energy(d: &InitialData, ws: &WaveSpeed) -> f64 {
    let density: Vec<f64> = (0..d.x.len())
        .map(|k| {
            let v = d.v0[k];
            let c = ws.c(v);
            0.5 * (d.v1[k].powi(2) + (c * d.v0x[k]).powi(2) + v * v / 2.0 + v.powi(4) / 4.0)
        })
        .collect();
    trapezoid(&d.x, &density)
}

/// A point of the boundary curve with its data; `p = q = 1` there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryPoint {
    pub x: f64,
    pub xi: f64,
    pub eta: f64,
    pub w: f64,
    pub z: f64,
    pub v: f64,
}

/// The image `η = φ(ξ)` of the initial line, parameterized by `x`:
/// `ξ(x) = ∫₀ˣ (1 + R0²)`, `η(x) = ∫ₓ⁰ (1 + S0²)`, with boundary values
/// `w = 2 atan R0`, `z = 2 atan S0`, `p = q = 1`, `v = v0`.
///
/// Outside the sampled window the data vanish, so the curve continues with
/// `dξ/dx = 1`, `dη/dx = -1` and zero data.
#[derive(Debug, Clone)]
pub struct BoundaryCurve {
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
    pub w: Vec<f64>,
    pub z: Vec<f64>,
    pub v: Vec<f64>,
    /// `eta` reversed, increasing; used for lookups by `η`.
    eta_rev: Vec<f64>,
}

impl BoundaryCurve {
    pub fn from_initial(d: &InitialData) -> Self {
        let one_r: Vec<f64> = d.r0.iter().map(|r| 1.0 + r * r).collect();
        let one_s: Vec<f64> = d.s0.iter().map(|s| 1.0 + s * s).collect();
        let cx = cumulative_trapezoid(&d.x, &one_r);
        let cy = cumulative_trapezoid(&d.x, &one_s);
        let k0 = d.zero_index();
        let xi: Vec<f64> = cx.iter().map(|c| c - cx[k0]).collect();
        let eta: Vec<f64> = cy.iter().map(|c| cy[k0] - c).collect();
        let w = d.r0.iter().map(|r| 2.0 * r.atan()).collect();
        let z = d.s0.iter().map(|s| 2.0 * s.atan()).collect();
        let eta_rev = eta.iter().rev().copied().collect();
        Self {
            x: d.x.clone(),
            xi,
            eta,
            w,
            z,
            v: d.v0.clone(),
            eta_rev,
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn node(&self, k: usize) -> BoundaryPoint {
        BoundaryPoint {
            x: self.x[k],
            xi: self.xi[k],
            eta: self.eta[k],
            w: self.w[k],
            z: self.z[k],
            v: self.v[k],
        }
    }

    fn lerp(&self, k: usize, f: f64) -> BoundaryPoint {
        let a = self.node(k);
        let b = self.node(k + 1);
        let l = |p: f64, q: f64| p + f * (q - p);
        BoundaryPoint {
            x: l(a.x, b.x),
            xi: l(a.xi, b.xi),
            eta: l(a.eta, b.eta),
            w: l(a.w, b.w),
            z: l(a.z, b.z),
            v: l(a.v, b.v),
        }
    }

    /// Shifts an end point along the zero-data extension by `s` units of `x`.
    fn extend(&self, end: usize, s: f64) -> BoundaryPoint {
        let p = self.node(end);
        BoundaryPoint {
            x: p.x + s,
            xi: p.xi + s,
            eta: p.eta - s,
            ..p
        }
    }

    /// Point of the curve with boundary parameter `x`.
    pub fn at_x(&self, x: f64) -> BoundaryPoint {
        let n = self.len();
        if x <= self.x[0] {
            return self.extend(0, x - self.x[0]);
        }
        if x >= self.x[n - 1] {
            return self.extend(n - 1, x - self.x[n - 1]);
        }
        let k = bracket(&self.x, x);
        self.lerp(k, (x - self.x[k]) / (self.x[k + 1] - self.x[k]))
    }

    /// Point of the curve with first coordinate `ξ`.
    pub fn at_xi(&self, xi: f64) -> BoundaryPoint {
        let n = self.len();
        if xi <= self.xi[0] {
            return self.extend(0, xi - self.xi[0]);
        }
        if xi >= self.xi[n - 1] {
            return self.extend(n - 1, xi - self.xi[n - 1]);
        }
        let k = bracket(&self.xi, xi);
        self.lerp(k, (xi - self.xi[k]) / (self.xi[k + 1] - self.xi[k]))
    }

    /// Point of the curve with second coordinate `η`.
    pub fn at_eta(&self, eta: f64) -> BoundaryPoint {
        let n = self.len();
        // η decreases with x: the first node has the largest η.
        if eta >= self.eta[0] {
            return self.extend(0, self.eta[0] - eta);
        }
        if eta <= self.eta[n - 1] {
            return self.extend(n - 1, self.eta[n - 1] - eta);
        }
        let r = bracket(&self.eta_rev, eta);
        // eta_rev[r] <= eta < eta_rev[r+1]  <=>  nodes k = n-1-r (lower η) and k-1
        let k = n - 2 - r;
        self.lerp(k, (self.eta[k] - eta) / (self.eta[k] - self.eta[k + 1]))
    }

    /// `φ(ξ)`.
    pub fn phi(&self, xi: f64) -> f64 {
        self.at_xi(xi).eta
    }

    /// `φ⁻¹(η)`.
    pub fn phi_inv(&self, eta: f64) -> f64 {
        self.at_eta(eta).xi
    }
}
