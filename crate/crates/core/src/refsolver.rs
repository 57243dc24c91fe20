//! Physical-space reference solver for the first-order system
//!
//! ```text
//! R_t - c R_x = c'/(4c) (R² - S²) - (v + v³)/2
//! S_t + c S_x = c'/(4c) (S² - R²) - (v + v³)/2
//! v_t = (R + S)/2
//! ```
//!
//! First-order upwind in space (R looks right, S looks left, zero inflow),
//! explicit midpoint in time. Only meant for smooth solutions.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::initdata::InitialData;
use crate::physmap::{resample_uniform, uniform_grid, TimeSlice};
use crate::quad::trapezoid;
use crate::wavespeed::WaveSpeed;

/// `max(|R|, |S|)` above which a run is declared blown up.
pub const BLOWUP_THRESHOLD: f64 = 1e6;
pub const MAX_CFL: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FdState {
    pub x: Vec<f64>,
    pub dx: f64,
    pub v: Vec<f64>,
    pub r: Vec<f64>,
    pub s: Vec<f64>,
    pub t: f64,
    pub dt: f64,
}

impl FdState {
    pub fn to_slice(&self, ws: &WaveSpeed) -> TimeSlice {
        TimeSlice::from_riemann(ws, self.t, &self.x, &self.v, &self.r, &self.s)
    }

    pub fn max_abs_vx(&self, ws: &WaveSpeed) -> f64 {
        self.r
            .iter()
            .zip(&self.s)
            .zip(&self.v)
            .map(|((r, s), v)| ((r - s) / (2.0 * ws.c(*v))).abs())
            .fold(0.0, f64::max)
    }

    /// `∑ E dx` with `E = (R² + S²)/4 + (2v² + v⁴)/8`.
    pub fn energy(&self) -> f64 {
        let e: Vec<f64> = (0..self.x.len()).map(|k| self.energy_density(k)).collect();
        trapezoid(&self.x, &e)
    }

    fn energy_density(&self, k: usize) -> f64 {
        let (r, s, v) = (self.r[k], self.s[k], self.v[k]);
        (r * r + s * s) / 4.0 + (2.0 * v * v + v.powi(4)) / 8.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FdStatus {
    Completed,
    /// `max(|R|, |S|)` passed [`BLOWUP_THRESHOLD`].
    BlowUpDetected { t: f64 },
    /// A non-finite value appeared.
    NumericalBlowUp { t: f64 },
}

impl FdStatus {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Completed => "completed",
            Self::BlowUpDetected { .. } => "blow-up detected",
            Self::NumericalBlowUp { .. } => "numerical blow-up",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FdRun {
    /// Snapshots at the requested times that were reached. After an abort
    /// the last entry is the last valid state.
    pub snapshots: Vec<FdState>,
    pub status: FdStatus,
    /// `(t, max |v_x|)` after every step, starting at `t = 0`.
    pub vx_history: Vec<(f64, f64)>,
}

struct Rhs {
    r: Vec<f64>,
    s: Vec<f64>,
    v: Vec<f64>,
}

impl Rhs {
    fn zeros(n: usize) -> Self {
        Self {
            r: vec![0.0; n],
            s: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

/// Evaluates the right-hand side; returns `max |v_x|` of the input state.
fn rhs(ws: &WaveSpeed, dx: f64, v: &[f64], r: &[f64], s: &[f64], out: &mut Rhs) -> f64 {
    let n = v.len();
    let mut vx = 0.0f64;
    for k in 0..n {
        let (c, cp) = ws.c_and_prime(v[k]);
        let src = cp / (4.0 * c) * (r[k] * r[k] - s[k] * s[k]);
        let pot = 0.5 * (v[k] + v[k] * v[k] * v[k]);
        let r_right = if k + 1 < n { r[k + 1] } else { 0.0 };
        let s_left = if k > 0 { s[k - 1] } else { 0.0 };
        out.r[k] = c * (r_right - r[k]) / dx + src - pot;
        out.s[k] = -c * (s[k] - s_left) / dx - src - pot;
        out.v[k] = 0.5 * (r[k] + s[k]);
        vx = vx.max(((r[k] - s[k]) / (2.0 * c)).abs());
    }
    vx
}

/// Integrates to `t_end` and records snapshots at `record_times` (values
/// outside `[0, t_end]` are ignored).
pub fn fd_solve(d: &InitialData, ws: &WaveSpeed, cfl: f64, t_end: f64, record_times: &[f64]) -> Result<FdRun> {
    let k = ws.bounds().kappa();
    if !(cfl > 0.0 && cfl <= MAX_CFL) {
        return Err(Error::Cfl {
            dt: cfl * d.dx / k,
            limit: MAX_CFL * d.dx / k,
        });
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidData(format!("final time must be positive, got {t_end}")));
    }
    let dt_max = cfl * d.dx / k;
    let mut stops: Vec<f64> = record_times
        .iter()
        .copied()
        .filter(|t| (0.0..=t_end).contains(t))
        .collect();
    stops.push(t_end);
    stops.sort_by(f64::total_cmp);
    stops.dedup();
    let recorded = |t: f64| record_times.contains(&t);

    let n = d.x.len();
    let mut st = FdState {
        x: d.x.clone(),
        dx: d.dx,
        v: d.v0.clone(),
        r: d.r0.clone(),
        s: d.s0.clone(),
        t: 0.0,
        dt: dt_max,
    };
    let mut run = FdRun {
        snapshots: Vec::new(),
        status: FdStatus::Completed,
        vx_history: Vec::new(),
    };
    let (mut k1, mut k2) = (Rhs::zeros(n), Rhs::zeros(n));
    let mut mid = Rhs::zeros(n);
    let mut next = Rhs::zeros(n);

    for stop in stops {
        if stop == 0.0 {
            if recorded(0.0) {
                run.snapshots.push(st.clone());
            }
            continue;
        }
        let steps = ((stop - st.t) / dt_max).ceil().max(1.0) as usize;
        let dt = (stop - st.t) / steps as f64;
        let t_start = st.t;
        for m in 0..steps {
            let vx = rhs(ws, d.dx, &st.v, &st.r, &st.s, &mut k1);
            run.vx_history.push((st.t, vx));
            for i in 0..n {
                mid.r[i] = st.r[i] + 0.5 * dt * k1.r[i];
                mid.s[i] = st.s[i] + 0.5 * dt * k1.s[i];
                mid.v[i] = st.v[i] + 0.5 * dt * k1.v[i];
            }
            rhs(ws, d.dx, &mid.v, &mid.r, &mid.s, &mut k2);
            let t_new = if m + 1 == steps { stop } else { t_start + (m + 1) as f64 * dt };
            let mut peak = 0.0f64;
            let mut finite = true;
            for i in 0..n {
                next.r[i] = st.r[i] + dt * k2.r[i];
                next.s[i] = st.s[i] + dt * k2.s[i];
                next.v[i] = st.v[i] + dt * k2.v[i];
                finite &= next.r[i].is_finite() && next.s[i].is_finite() && next.v[i].is_finite();
                peak = peak.max(next.r[i].abs()).max(next.s[i].abs());
            }
            if !finite {
                run.status = FdStatus::NumericalBlowUp { t: t_new };
                run.snapshots.push(st);
                return Ok(run);
            }
            std::mem::swap(&mut st.r, &mut next.r);
            std::mem::swap(&mut st.s, &mut next.s);
            std::mem::swap(&mut st.v, &mut next.v);
            st.t = t_new;
            st.dt = dt;
            if peak > BLOWUP_THRESHOLD {
                run.vx_history.push((st.t, st.max_abs_vx(ws)));
                run.status = FdStatus::BlowUpDetected { t: t_new };
                run.snapshots.push(st);
                return Ok(run);
            }
        }
        if recorded(stop) {
            run.snapshots.push(st.clone());
        }
    }
    run.vx_history.push((st.t, st.max_abs_vx(ws)));
    Ok(run)
}

/// `(L∞, L²)` difference of `v` between a slice and a snapshot on the
/// snapshot's grid points inside the overlap of both ranges.
pub fn compare(s: &TimeSlice, fd: &FdState) -> Result<(f64, f64)> {
    if (s.tau - fd.t).abs() > fd.dt.max(1e-12) {
        return Err(Error::InvalidData(format!(
            "slice time {} and snapshot time {} differ by more than dt",
            s.tau, fd.t
        )));
    }
    let (a, b) = s.x_range().ok_or(Error::NoOverlap)?;
    let lo = a.max(fd.x[0]);
    let hi = b.min(fd.x[fd.x.len() - 1]);
    let idx: Vec<usize> = (0..fd.x.len()).filter(|&k| fd.x[k] >= lo && fd.x[k] <= hi).collect();
    if idx.len() < 2 {
        return Err(Error::NoOverlap);
    }
    let xs: Vec<f64> = idx.iter().map(|&k| fd.x[k]).collect();
    let vs = resample_uniform(s, &xs).v;
    let d: Vec<f64> = idx.iter().zip(&vs).map(|(&k, v)| v - fd.v[k]).collect();
    let linf = d.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    let l2 = trapezoid(&xs, &d.iter().map(|e| e * e).collect::<Vec<_>>()).sqrt();
    Ok((linf, l2))
}

/// Frequency of the Fourier mode `k` of `v` across the snapshots, from a
/// least-squares fit of its unwrapped phase. A right-moving wave gives a
/// positive value.
pub fn measure_frequency(snapshots: &[FdState], k: f64) -> f64 {
    let mut phases = Vec::with_capacity(snapshots.len());
    for st in snapshots {
        let re: Vec<f64> = st.x.iter().zip(&st.v).map(|(x, v)| v * (k * x).cos()).collect();
        let im: Vec<f64> = st.x.iter().zip(&st.v).map(|(x, v)| -v * (k * x).sin()).collect();
        phases.push(trapezoid(&st.x, &im).atan2(trapezoid(&st.x, &re)));
    }
    for i in 1..phases.len() {
        let mut d = phases[i] - phases[i - 1];
        d -= (d / std::f64::consts::TAU).round() * std::f64::consts::TAU;
        phases[i] = phases[i - 1] + d;
    }
    let ts: Vec<f64> = snapshots.iter().map(|s| s.t).collect();
    let n = ts.len() as f64;
    let (mt, mp) = (ts.iter().sum::<f64>() / n, phases.iter().sum::<f64>() / n);
    let cov: f64 = ts.iter().zip(&phases).map(|(t, p)| (t - mt) * (p - mp)).sum();
    let var: f64 = ts.iter().map(|t| (t - mt).powi(2)).sum();
    -cov / var
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BalanceResidual {
    pub energy: f64,
    pub momentum: f64,
}

/// Centered-difference residuals of the balance laws at the middle of three
/// equally spaced snapshots:
///
/// ```text
/// E_t + (c² M)_x = 0,   M_t + (E - 2F)_x = 0
/// ```
///
/// with `F = (2v² + v⁴)/8`. The momentum flux is the Lagrangian, so the
/// potential enters it with a minus sign.
pub fn balance_residuals(ws: &WaveSpeed, prev: &FdState, mid: &FdState, next: &FdState) -> BalanceResidual {
    let dt = next.t - prev.t;
    let dx = mid.dx;
    let e = |st: &FdState, k: usize| st.energy_density(k);
    let m = |st: &FdState, k: usize| (st.s[k].powi(2) - st.r[k].powi(2)) / (4.0 * ws.c(st.v[k]));
    let f = |st: &FdState, k: usize| (2.0 * st.v[k].powi(2) + st.v[k].powi(4)) / 8.0;
    let flux_e = |k: usize| ws.c(mid.v[k]).powi(2) * m(mid, k);
    let flux_m = |k: usize| e(mid, k) - 2.0 * f(mid, k);
    let mut out = BalanceResidual {
        energy: 0.0,
        momentum: 0.0,
    };
    for k in 1..mid.x.len() - 1 {
        let re = (e(next, k) - e(prev, k)) / dt + (flux_e(k + 1) - flux_e(k - 1)) / (2.0 * dx);
        let rm = (m(next, k) - m(prev, k)) / dt + (flux_m(k + 1) - flux_m(k - 1)) / (2.0 * dx);
        out.energy = out.energy.max(re.abs());
        out.momentum = out.momentum.max(rm.abs());
    }
    out
}

/// Common uniform grid for comparing two snapshot sets.
pub fn overlap_grid(a: &FdState, b: &FdState, n: usize) -> Result<Vec<f64>> {
    let lo = a.x[0].max(b.x[0]);
    let hi = a.x[a.x.len() - 1].min(b.x[b.x.len() - 1]);
    if hi <= lo {
        return Err(Error::NoOverlap);
    }
    Ok(uniform_grid(lo, hi, n))
}
