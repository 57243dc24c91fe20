//! The semilinear system in characteristic coordinates and its solvers.
//!
//! Unknowns `(w, z, p, q, v)` live on a uniform `(ξ, η)` lattice above the
//! boundary curve `η = φ(ξ)`:
//!
//! ```text
//! w_η = q [ k (cos z - cos w) - g (1 + cos z)(1 + cos w) ]
//! z_ξ = p [ k (cos w - cos z) - g (1 + cos z)(1 + cos w) ]
//! p_η = p q [ k (sin z - sin w) - g sin w (1 + cos z) ]
//! q_ξ = p q [ k (sin w - sin z) - g sin z (1 + cos w) ]
//! v_η = q sin z / (4c),   v_ξ = p sin w / (4c)
//! ```
//!
//! with `k = c'/(8c²)` and `g = (v + v³)/(8c)`.
//!
//! Storage is banded: each lattice column keeps the contiguous run of nodes
//! that lie on or above the curve and inside the domain of determinacy of
//! the lattice (optionally capped at a maximal time).

use serde::Serialize;

use crate::diagnostics::Check;
use crate::error::{Error, Result};
use crate::initdata::{BoundaryCurve, BoundaryPoint};
use crate::quad::wrap_angle;
use crate::wavespeed::{SpeedBounds, WaveSpeed};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct State {
    pub w: f64,
    pub z: f64,
    pub p: f64,
    pub q: f64,
    pub v: f64,
}

impl From<BoundaryPoint> for State {
    fn from(b: BoundaryPoint) -> Self {
        Self {
            w: b.w,
            z: b.z,
            p: 1.0,
            q: 1.0,
            v: b.v,
        }
    }
}

impl State {
    pub fn is_finite(&self) -> bool {
        self.w.is_finite() && self.z.is_finite() && self.p.is_finite() && self.q.is_finite() && self.v.is_finite()
    }

    /// Max-norm distance, with angles compared modulo `2π`.
    pub fn distance(&self, o: &State) -> f64 {
        wrap_angle(self.w - o.w)
            .abs()
            .max(wrap_angle(self.z - o.z).abs())
            .max((self.p - o.p).abs())
            .max((self.q - o.q).abs())
            .max((self.v - o.v).abs())
    }
}

/// Right-hand sides of the system at one state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Sources {
    pub w_eta: f64,
    pub p_eta: f64,
    pub v_eta: f64,
    pub z_xi: f64,
    pub q_xi: f64,
    pub v_xi: f64,
}

impl Sources {
    #[inline]
    pub fn at(ws: &WaveSpeed, s: &State) -> Self {
        let (c, cp) = ws.c_and_prime(s.v);
        let k = cp / (8.0 * c * c);
        let g = (s.v + s.v * s.v * s.v) / (8.0 * c);
        let (sw, cw) = s.w.sin_cos();
        let (sz, cz) = s.z.sin_cos();
        let both = (1.0 + cz) * (1.0 + cw);
        let pq = s.p * s.q;
        Self {
            w_eta: s.q * (k * (cz - cw) - g * both),
            z_xi: s.p * (k * (cw - cz) - g * both),
            p_eta: pq * (k * (sz - sw) - g * sw * (1.0 + cz)),
            q_xi: pq * (k * (sw - sz) - g * sz * (1.0 + cw)),
            v_eta: s.q * sz / (4.0 * c),
            v_xi: s.p * sw / (4.0 * c),
        }
    }
}

/// Axis-aligned rectangle in the `(ξ, η)` plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Domain {
    pub xi_min: f64,
    pub xi_max: f64,
    pub eta_min: f64,
    pub eta_max: f64,
}

impl Domain {
    /// The smallest rectangle containing the domain of determinacy of the
    /// physical interval `[x_a, x_b]`.
    pub fn covering(bc: &BoundaryCurve, x_a: f64, x_b: f64) -> Self {
        let a = bc.at_x(x_a);
        let b = bc.at_x(x_b);
        Self {
            xi_min: a.xi,
            xi_max: b.xi,
            eta_min: b.eta,
            eta_max: a.eta,
        }
    }

    /// `[-xi_extent, xi_extent] × [-eta_extent, eta_extent]`.
    pub fn symmetric(xi_extent: f64, eta_extent: f64) -> Self {
        Self {
            xi_min: -xi_extent,
            xi_max: xi_extent,
            eta_min: -eta_extent,
            eta_max: eta_extent,
        }
    }
}

/// Largest admissible lattice step: the curve must get at least four nodes
/// per unit length.
pub const MAX_STEP: f64 = 0.25;

const MAX_NODES: usize = 400_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Lattice {
    pub xi0: f64,
    pub eta0: f64,
    pub d_xi: f64,
    pub d_eta: f64,
    pub n_xi: usize,
    pub n_eta: usize,
}

impl Lattice {
    /// Lattice anchored at the lower-left corner of `domain`, extended to a
    /// whole number of steps.
    pub fn new(domain: Domain, d_xi: f64, d_eta: f64) -> Result<Self> {
        for (name, h) in [("dX", d_xi), ("dY", d_eta)] {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::InvalidGrid(format!("{name} must be positive, got {h}")));
            }
            if h > MAX_STEP {
                return Err(Error::InvalidGrid(format!(
                    "{name} = {h} does not resolve the boundary curve (max {MAX_STEP})"
                )));
            }
        }
        let w = domain.xi_max - domain.xi_min;
        let h = domain.eta_max - domain.eta_min;
        if !(w.is_finite() && h.is_finite() && w > 0.0 && h > 0.0) {
            return Err(Error::InvalidGrid(format!("degenerate domain {domain:?}")));
        }
        let n_xi = (w / d_xi - 1e-9).ceil() as usize + 1;
        let n_eta = (h / d_eta - 1e-9).ceil() as usize + 1;
        if n_xi.saturating_mul(n_eta) > MAX_NODES {
            return Err(Error::InvalidGrid(format!("{n_xi} x {n_eta} lattice is too large")));
        }
        Ok(Self {
            xi0: domain.xi_min,
            eta0: domain.eta_min,
            d_xi,
            d_eta,
            n_xi,
            n_eta,
        })
    }

    #[inline]
    pub fn xi(&self, i: usize) -> f64 {
        self.xi0 + i as f64 * self.d_xi
    }

    #[inline]
    pub fn eta(&self, j: usize) -> f64 {
        self.eta0 + j as f64 * self.d_eta
    }

    fn eps(&self) -> f64 {
        1e-10 * self.d_xi.min(self.d_eta)
    }

    /// First row index on or above `η = eta`; may be `n_eta` or more.
    fn row_at_or_above(&self, eta: f64) -> Option<usize> {
        let r = (eta - self.eta0) / self.d_eta;
        if r < -1e-9 {
            return None;
        }
        Some((r - 1e-9).ceil().max(0.0) as usize)
    }
}

/// Stored run of one column: rows `start..start+len` at `offset..`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Column {
    pub start: usize,
    pub len: usize,
    pub offset: usize,
}

impl Column {
    #[inline]
    pub fn end(&self) -> usize {
        self.start + self.len
    }

    #[inline]
    pub fn contains(&self, j: usize) -> bool {
        j >= self.start && j < self.end()
    }
}

/// Solution on the banded lattice. Field vectors are indexed by
/// [`CharGrid::index`]; `t` and `x` are filled by coordinate recovery.
#[derive(Debug, Clone)]
pub struct CharGrid {
    pub lattice: Lattice,
    pub columns: Vec<Column>,
    pub w: Vec<f64>,
    pub z: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub v: Vec<f64>,
    pub t: Option<Vec<f64>>,
    pub x: Option<Vec<f64>>,
    pub bc: BoundaryCurve,
    pub ws: WaveSpeed,
}

impl CharGrid {
    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> Option<usize> {
        let c = self.columns.get(i)?;
        c.contains(j).then(|| c.offset + j - c.start)
    }

    #[inline]
    pub fn is_masked(&self, i: usize, j: usize) -> bool {
        self.index(i, j).is_some()
    }

    #[inline]
    pub fn state(&self, k: usize) -> State {
        State {
            w: self.w[k],
            z: self.z[k],
            p: self.p[k],
            q: self.q[k],
            v: self.v[k],
        }
    }

    pub fn set_state(&mut self, k: usize, s: State) {
        self.w[k] = s.w;
        self.z[k] = s.z;
        self.p[k] = s.p;
        self.q[k] = s.q;
        self.v[k] = s.v;
    }

    /// All stored nodes as `(i, j, k)`, column by column.
    pub fn nodes(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.columns
            .iter()
            .enumerate()
            .flat_map(|(i, c)| (0..c.len).map(move |r| (i, c.start + r, c.offset + r)))
    }

    /// Boundary point below column `i`.
    pub fn gamma_below(&self, i: usize) -> BoundaryPoint {
        self.bc.at_xi(self.lattice.xi(i))
    }

    /// Boundary point left of row `j`.
    pub fn gamma_left(&self, j: usize) -> BoundaryPoint {
        self.bc.at_eta(self.lattice.eta(j))
    }

    /// Stored run of row `j` as `(first i, count)`; rows are contiguous.
    pub fn row_span(&self, j: usize) -> Option<(usize, usize)> {
        let first = self.columns.iter().position(|c| c.contains(j))?;
        let n = self.columns[first..].iter().take_while(|c| c.contains(j)).count();
        Some((first, n))
    }

    /// Row spans for all rows, computed in one pass.
    pub fn row_spans(&self) -> Vec<Option<(usize, usize)>> {
        let mut spans: Vec<Option<(usize, usize)>> = vec![None; self.lattice.n_eta];
        for (i, c) in self.columns.iter().enumerate() {
            for j in c.start..c.end() {
                match &mut spans[j] {
                    Some((first, n)) if *first + *n == i => *n += 1,
                    Some(_) => {}
                    s @ None => *s = Some((i, 1)),
                }
            }
        }
        spans
    }

    pub fn max_abs_angle(&self) -> f64 {
        self.w.iter().chain(&self.z).fold(0.0f64, |m, a| m.max(a.abs()))
    }
}

/// Where the `ξ`-direction integration for a node starts.
enum LeftSource {
    Node(usize),
    Gamma(BoundaryPoint),
    Blocked,
}

fn left_source(
    bc: &BoundaryCurve,
    lat: &Lattice,
    plus_start: &[usize],
    columns: &[Column],
    i: usize,
    j: usize,
) -> LeftSource {
    if i > 0 && j >= plus_start[i - 1] {
        let prev = columns[i - 1];
        if prev.contains(j) {
            LeftSource::Node(prev.offset + j - prev.start)
        } else {
            LeftSource::Blocked
        }
    } else {
        let g = bc.at_eta(lat.eta(j));
        if i == 0 && g.xi < lat.xi0 - lat.eps() {
            LeftSource::Blocked
        } else {
            LeftSource::Gamma(g)
        }
    }
}

/// First row of column `i` on or above the curve, if the curve point below
/// the column lies inside the lattice.
fn column_start(bc: &BoundaryCurve, lat: &Lattice, i: usize) -> (usize, Option<BoundaryPoint>) {
    let g = bc.at_xi(lat.xi(i));
    match lat.row_at_or_above(g.eta - lat.eps()) {
        Some(j0) => (j0, Some(g)),
        None => {
            // curve below the lattice: rows start at 0 but the column is not
            // determined by lattice data
            (0, None)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarchOptions {
    /// Fixed-point sweeps per node, at least 2.
    pub cell_iters: usize,
    /// Stop each column after the first node whose time exceeds this.
    pub t_max: Option<f64>,
}

impl Default for MarchOptions {
    fn default() -> Self {
        Self {
            cell_iters: 3,
            t_max: None,
        }
    }
}

/// Solves one node from its lower and left neighbours by trapezoidal
/// integration along both edges, starting from an explicit Euler predictor.
/// Returns the node state, or the pair of residuals that failed to decrease.
#[inline]
#[allow(clippy::too_many_arguments)]
fn solve_node(
    ws: &WaveSpeed,
    below: &State,
    sb: &Sources,
    hb: f64,
    left: &State,
    sl: &Sources,
    hl: f64,
    iters: usize,
) -> std::result::Result<State, (f64, f64)> {
    let mut n = State {
        w: below.w + hb * sb.w_eta,
        p: below.p + hb * sb.p_eta,
        v: below.v + hb * sb.v_eta,
        z: left.z + hl * sl.z_xi,
        q: left.q + hl * sl.q_xi,
    };
    let hb2 = 0.5 * hb;
    let hl2 = 0.5 * hl;
    let mut prev = f64::INFINITY;
    for _ in 0..iters {
        let sn = Sources::at(ws, &n);
        let m = State {
            w: below.w + hb2 * (sb.w_eta + sn.w_eta),
            p: below.p + hb2 * (sb.p_eta + sn.p_eta),
            v: below.v + hb2 * (sb.v_eta + sn.v_eta),
            z: left.z + hl2 * (sl.z_xi + sn.z_xi),
            q: left.q + hl2 * (sl.q_xi + sn.q_xi),
        };
        let res = (m.w - n.w)
            .abs()
            .max((m.z - n.z).abs())
            .max((m.p - n.p).abs())
            .max((m.q - n.q).abs())
            .max((m.v - n.v).abs());
        n = m;
        let floor = 1e-12 * (1.0 + n.p.abs() + n.q.abs());
        if res > prev && res > floor {
            return Err((prev, res));
        }
        prev = res;
    }
    Ok(n)
}

#[inline]
fn t_eta(ws: &WaveSpeed, s: &State) -> f64 {
    (1.0 + s.z.cos()) * s.q / (4.0 * ws.c(s.v))
}

fn check_node(i: usize, j: usize, lat: &Lattice, s: &State) -> Result<()> {
    if !s.is_finite() {
        return Err(Error::NonFinite { i, j });
    }
    if s.p <= 0.0 || s.q <= 0.0 {
        return Err(Error::PositivityLoss {
            i,
            j,
            xi: lat.xi(i),
            eta: lat.eta(j),
            p: s.p,
            q: s.q,
        });
    }
    Ok(())
}

/// Marches the system column by column (increasing `ξ`, then `η`). Every
/// node depends only on its lower and left neighbours, so this order
/// respects causality exactly as anti-diagonal wavefronts do.
pub fn solve_march(bc: &BoundaryCurve, lattice: Lattice, ws: &WaveSpeed, opts: MarchOptions) -> Result<CharGrid> {
    if opts.cell_iters < 2 {
        return Err(Error::InvalidGrid(format!(
            "cell_iters must be at least 2, got {}",
            opts.cell_iters
        )));
    }
    let lat = lattice;
    let mut g = CharGrid {
        lattice: lat,
        columns: Vec::with_capacity(lat.n_xi),
        w: Vec::new(),
        z: Vec::new(),
        p: Vec::new(),
        q: Vec::new(),
        v: Vec::new(),
        t: None,
        x: None,
        bc: bc.clone(),
        ws: *ws,
    };
    let mut plus_start = Vec::with_capacity(lat.n_xi);
    // provisional time along the current column, only for the cap
    let mut t_prev = 0.0;
    for i in 0..lat.n_xi {
        let (j0, gamma) = column_start(bc, &lat, i);
        plus_start.push(j0);
        let offset = g.w.len();
        let mut len = 0;
        if let Some(gb) = gamma {
            let xi = lat.xi(i);
            let gb_state = State::from(gb);
            let gb_src = Sources::at(ws, &gb_state);
            let mut below = gb_state;
            let mut sb = gb_src;
            for j in j0..lat.n_eta {
                let eta = lat.eta(j);
                let hb = if j == j0 { (eta - gb.eta).max(0.0) } else { lat.d_eta };
                let (left, hl) = match left_source(bc, &lat, &plus_start, &g.columns, i, j) {
                    LeftSource::Node(k) => (g.state(k), lat.d_xi),
                    LeftSource::Gamma(gl) => (State::from(gl), (xi - gl.xi).max(0.0)),
                    LeftSource::Blocked => break,
                };
                let sl = Sources::at(ws, &left);
                let mut n = solve_node(ws, &below, &sb, hb, &left, &sl, hl, opts.cell_iters).map_err(
                    |(previous, current)| Error::CellDivergence {
                        i,
                        j,
                        previous,
                        current,
                    },
                )?;
                check_node(i, j, &lat, &n)?;
                n.w = wrap_angle(n.w);
                n.z = wrap_angle(n.z);
                let t_b = if j == j0 { 0.0 } else { t_prev };
                let t_n = t_b + 0.5 * hb * (t_eta(ws, &below) + t_eta(ws, &n));
                g.w.push(n.w);
                g.z.push(n.z);
                g.p.push(n.p);
                g.q.push(n.q);
                g.v.push(n.v);
                len += 1;
                t_prev = t_n;
                below = n;
                sb = Sources::at(ws, &n);
                if opts.t_max.is_some_and(|tm| t_n > tm) {
                    break;
                }
            }
        }
        g.columns.push(Column {
            start: j0,
            len,
            offset,
        });
    }
    Ok(g)
}

/// The node set used by the march without a time cap: every lattice node on
/// or above the curve whose domain of dependence lies inside the lattice.
pub fn layout(bc: &BoundaryCurve, lat: &Lattice) -> Vec<Column> {
    let mut columns: Vec<Column> = Vec::with_capacity(lat.n_xi);
    let mut plus_start = Vec::with_capacity(lat.n_xi);
    let mut offset = 0;
    for i in 0..lat.n_xi {
        let (j0, gamma) = column_start(bc, lat, i);
        plus_start.push(j0);
        let mut len = 0;
        if gamma.is_some() {
            for j in j0..lat.n_eta {
                if let LeftSource::Blocked = left_source(bc, lat, &plus_start, &columns, i, j) {
                    break;
                }
                len += 1;
            }
        }
        columns.push(Column { start: j0, len, offset });
        offset += len;
    }
    columns
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardOptions {
    pub k_weight: f64,
    pub max_iters: usize,
    pub tol: f64,
}

/// History of a global Picard iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PicardTrace {
    /// Weighted distance between successive iterates, one per sweep.
    pub distances: Vec<f64>,
    /// `distances[n+1] / distances[n]`.
    pub ratios: Vec<f64>,
    /// Unweighted sup distance per sweep.
    pub sup_distances: Vec<f64>,
    pub k_weight: f64,
}

/// Constant `K` of the weighted norm when none is configured.
///
/// The map's Lipschitz constant in the weighted norm is of order
/// `(C₁ + 𝒦(1 + K₀)/8)/K` times bounds on `p, q`; the factor ten and the
/// `(1 + E₀ + 𝒦)` scaling leave a wide margin.
pub fn default_k_weight(bounds: &SpeedBounds, e0: f64, v_max: f64) -> f64 {
    let kappa = bounds.kappa();
    let k0 = v_max + v_max.powi(3);
    10.0 * (bounds.c1 + kappa * (1.0 + k0) / 8.0) * (1.0 + e0 + kappa)
}

/// Iterates the integral map over the whole node set from the constant
/// extension of the boundary data, until both the weighted distance
/// `max e^{-K(ξ+η)} |Δf|` and the plain sup distance between sweeps drop
/// below `tol`. The weight decays fast in `ξ + η`, so the weighted distance
/// alone says little about the far corner of the lattice. Node changes at
/// round-off level count as zero.
pub fn picard_global(
    bc: &BoundaryCurve,
    lattice: Lattice,
    ws: &WaveSpeed,
    opts: PicardOptions,
) -> Result<(CharGrid, PicardTrace)> {
    if !(opts.k_weight.is_finite() && opts.k_weight > 0.0) {
        return Err(Error::InvalidGrid(format!("K_weight must be positive, got {}", opts.k_weight)));
    }
    let lat = lattice;
    let columns = layout(bc, &lat);
    let n = columns.last().map_or(0, |c| c.offset + c.len);
    let mut g = CharGrid {
        lattice: lat,
        columns,
        w: vec![0.0; n],
        z: vec![0.0; n],
        p: vec![1.0; n],
        q: vec![1.0; n],
        v: vec![0.0; n],
        t: None,
        x: None,
        bc: bc.clone(),
        ws: *ws,
    };
    let spans = g.row_spans();
    let below: Vec<(State, Sources, f64)> = (0..lat.n_xi)
        .map(|i| {
            let b = g.gamma_below(i);
            let s = State::from(b);
            (s, Sources::at(ws, &s), b.eta)
        })
        .collect();
    let left: Vec<Option<(State, Sources, f64)>> = spans
        .iter()
        .enumerate()
        .map(|(j, sp)| {
            sp.map(|_| {
                let b = g.gamma_left(j);
                let s = State::from(b);
                (s, Sources::at(ws, &s), b.xi)
            })
        })
        .collect();
    // constant extension of the boundary data
    for i in 0..lat.n_xi {
        let c = g.columns[i];
        for r in 0..c.len {
            g.w[c.offset + r] = below[i].0.w;
            g.v[c.offset + r] = below[i].0.v;
        }
    }
    for (j, sp) in spans.iter().enumerate() {
        if let (Some((i0, len)), Some((s, _, _))) = (sp, &left[j]) {
            for i in *i0..i0 + len {
                let k = g.index(i, j).expect("row span");
                g.z[k] = s.z;
            }
        }
    }
    let weight: Vec<f64> = g
        .nodes()
        .map(|(i, j, _)| (-opts.k_weight * (lat.xi(i) + lat.eta(j))).exp())
        .collect();

    let mut trace = PicardTrace {
        distances: Vec::new(),
        ratios: Vec::new(),
        sup_distances: Vec::new(),
        k_weight: opts.k_weight,
    };
    let mut src = vec![Sources::default(); n];
    let mut next = g.clone();
    for _ in 0..opts.max_iters {
        for (k, s) in src.iter_mut().enumerate() {
            *s = Sources::at(ws, &g.state(k));
        }
        for (i, c) in g.columns.iter().enumerate() {
            if c.len == 0 {
                continue;
            }
            let (gs, gsrc, geta) = below[i];
            let h0 = (lat.eta(c.start) - geta).max(0.0);
            let (mut w, mut p, mut v) = (gs.w, gs.p, gs.v);
            let mut prev = gsrc;
            for r in 0..c.len {
                let k = c.offset + r;
                let h = if r == 0 { h0 } else { lat.d_eta };
                let s = src[k];
                w += 0.5 * h * (prev.w_eta + s.w_eta);
                p += 0.5 * h * (prev.p_eta + s.p_eta);
                v += 0.5 * h * (prev.v_eta + s.v_eta);
                next.w[k] = w;
                next.p[k] = p;
                next.v[k] = v;
                prev = s;
            }
        }
        for (j, sp) in spans.iter().enumerate() {
            let (Some((i0, len)), Some((gs, gsrc, gxi))) = (sp, left[j]) else {
                continue;
            };
            let h0 = (lat.xi(*i0) - gxi).max(0.0);
            let (mut z, mut q) = (gs.z, gs.q);
            let mut prev = gsrc;
            for i in *i0..i0 + len {
                let k = g.index(i, j).expect("row span");
                let h = if i == *i0 { h0 } else { lat.d_xi };
                let s = src[k];
                z += 0.5 * h * (prev.z_xi + s.z_xi);
                q += 0.5 * h * (prev.q_xi + s.q_xi);
                next.z[k] = z;
                next.q[k] = q;
                prev = s;
            }
        }
        let mut dist = 0.0f64;
        let mut sup = 0.0f64;
        for k in 0..n {
            let (a, b) = (next.state(k), g.state(k));
            let d = a.distance(&b);
            if !d.is_finite() {
                let (i, j, _) = g.nodes().nth(k).expect("node");
                return Err(Error::NonFinite { i, j });
            }
            // changes at round-off level are noise, not iteration error
            let scale = a.w.abs().max(a.z.abs()).max(a.p.abs()).max(a.q.abs()).max(a.v.abs());
            let d = if d <= 64.0 * f64::EPSILON * (1.0 + scale) { 0.0 } else { d };
            dist = dist.max(weight[k] * d);
            sup = sup.max(d);
        }
        std::mem::swap(&mut g, &mut next);
        if let Some(&last) = trace.distances.last() {
            trace.ratios.push(if last > 0.0 { dist / last } else { 0.0 });
        }
        trace.distances.push(dist);
        trace.sup_distances.push(sup);
        if dist < opts.tol && sup < opts.tol {
            for (i, j, k) in g.nodes().collect::<Vec<_>>() {
                let mut s = g.state(k);
                check_node(i, j, &lat, &s)?;
                s.w = wrap_angle(s.w);
                s.z = wrap_angle(s.z);
                g.set_state(k, s);
            }
            return Ok((g, trace));
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iters,
        ratios: trace.ratios,
    })
}

/// Constants entering the a-priori bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AprioriConstants {
    pub e0: f64,
    pub c1: f64,
    pub kappa: f64,
    /// `sup (v + v³)` over the a-priori range of `v`.
    pub k0: f64,
    pub k1: f64,
}

impl AprioriConstants {
    pub fn new(e0: f64, bounds: &SpeedBounds, v_max: f64, k1: f64) -> Self {
        Self {
            e0,
            c1: bounds.c1,
            kappa: bounds.kappa(),
            k0: v_max + v_max.powi(3),
            k1,
        }
    }

    /// `2(|ξ| + |η| + 4E₀) + K₁`.
    pub fn integral_bound(&self, xi: f64, eta: f64) -> f64 {
        2.0 * (xi.abs() + eta.abs() + 4.0 * self.e0) + self.k1
    }

    /// `exp{2C₁(|ξ|+|η|+4E₀) + C₁K₁}`.
    pub fn exp_bound_literal(&self, xi: f64, eta: f64) -> f64 {
        (self.c1 * self.integral_bound(xi, eta)).exp()
    }

    /// Growth rate `C₁ + 𝒦K₀/4` that also accounts for the `(v + v³)` part
    /// of the `p, q` equations.
    pub fn growth_rate(&self) -> f64 {
        self.c1 + self.kappa * self.k0 / 4.0
    }

    pub fn exp_bound(&self, xi: f64, eta: f64) -> f64 {
        (self.growth_rate() * self.integral_bound(xi, eta)).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AprioriReport {
    pub min_p: f64,
    pub min_q: f64,
    /// Node `(i, j)` where `min(p, q)` is attained.
    pub min_node: Option<(usize, usize)>,
    pub max_p: f64,
    pub max_q: f64,
    /// `max max(p,q) / exp{2C₁(|ξ|+|η|+4E₀) + C₁K₁}`.
    pub literal_bound_ratio: f64,
    /// Same with the growth rate `C₁ + 𝒦K₀/4`.
    pub bound_ratio: f64,
    /// `max (∫p dξ' + ∫q dη') / (2(|ξ|+|η|+4E₀) + K₁)` over the legs from
    /// the curve to each node.
    pub integral_ratio: f64,
    pub checks: Vec<Check>,
}

impl AprioriReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Relative slack for bounds that hold with equality on trivial data.
const ROUNDOFF: f64 = 1e-9;

/// Positivity, exponential and integral bounds on `p, q`.
pub fn apriori_check(g: &CharGrid, k: &AprioriConstants) -> AprioriReport {
    let lat = g.lattice;
    let mut rep = AprioriReport {
        min_p: f64::INFINITY,
        min_q: f64::INFINITY,
        min_node: None,
        max_p: f64::NEG_INFINITY,
        max_q: f64::NEG_INFINITY,
        literal_bound_ratio: 0.0,
        bound_ratio: 0.0,
        integral_ratio: 0.0,
        checks: Vec::new(),
    };
    let mut min_pq = f64::INFINITY;
    // ∫ q dη' along columns
    let mut col_int = vec![0.0; g.len()];
    for (i, c) in g.columns.iter().enumerate() {
        let gb = g.gamma_below(i);
        let mut acc = 0.0;
        let mut prev = 1.0;
        for r in 0..c.len {
            let kk = c.offset + r;
            let h = if r == 0 { (lat.eta(c.start) - gb.eta).max(0.0) } else { lat.d_eta };
            acc += 0.5 * h * (prev + g.q[kk]);
            col_int[kk] = acc;
            prev = g.q[kk];
        }
    }
    for (j, sp) in g.row_spans().into_iter().enumerate() {
        let Some((i0, len)) = sp else { continue };
        let gl = g.gamma_left(j);
        let mut acc = 0.0;
        let mut prev = 1.0;
        for i in i0..i0 + len {
            let kk = g.index(i, j).expect("row span");
            let h = if i == i0 { (lat.xi(i) - gl.xi).max(0.0) } else { lat.d_xi };
            acc += 0.5 * h * (prev + g.p[kk]);
            prev = g.p[kk];
            let (xi, eta) = (lat.xi(i), lat.eta(j));
            rep.integral_ratio = rep.integral_ratio.max((acc + col_int[kk]) / k.integral_bound(xi, eta));
        }
    }
    for (i, j, kk) in g.nodes() {
        let (p, q) = (g.p[kk], g.q[kk]);
        let (xi, eta) = (lat.xi(i), lat.eta(j));
        rep.min_p = rep.min_p.min(p);
        rep.min_q = rep.min_q.min(q);
        rep.max_p = rep.max_p.max(p);
        rep.max_q = rep.max_q.max(q);
        if p.min(q) < min_pq || p.is_nan() || q.is_nan() {
            min_pq = p.min(q);
            rep.min_node = Some((i, j));
        }
        let m = p.max(q);
        rep.literal_bound_ratio = rep.literal_bound_ratio.max(m / k.exp_bound_literal(xi, eta));
        rep.bound_ratio = rep.bound_ratio.max(m / k.exp_bound(xi, eta));
    }
    let min_all = rep.min_p.min(rep.min_q);
    let pos_name = match rep.min_node {
        Some((i, j)) if min_all <= 0.0 || min_all.is_nan() => format!("positivity (fails at node {i},{j})"),
        _ => "positivity".to_string(),
    };
    rep.checks = vec![
        Check {
            name: pos_name,
            value: min_all,
            bound: 0.0,
            pass: g.is_empty() || min_all > 0.0,
        },
        Check::at_most("exp_bound", rep.bound_ratio, 1.0 + ROUNDOFF),
        Check::at_most("integral_bound", rep.integral_ratio, 1.0 + ROUNDOFF),
    ];
    rep
}

/// Circulation of `(p + B/2) dξ - (q + A/2) dη` around the lattice rectangle
/// `[i0, i1] × [j0, j1]`, where `G = v²/2 + v⁴/4`, `A = G q (1 + cos z)`,
/// `B = G p (1 + cos w)`.
///
/// The `p, q` equations give `q_ξ + p_η = -½ A_ξ - ½ B_η` exactly, so the
/// circulation vanishes in the continuum. `None` if the rectangle is not
/// fully stored.
pub fn balance_residual(g: &CharGrid, i0: usize, i1: usize, j0: usize, j1: usize) -> Option<f64> {
    let lat = g.lattice;
    let gfun = |v: f64| v * v / 2.0 + v.powi(4) / 4.0;
    let a = |k: usize| g.q[k] + 0.5 * gfun(g.v[k]) * g.q[k] * (1.0 + g.z[k].cos());
    let b = |k: usize| g.p[k] + 0.5 * gfun(g.v[k]) * g.p[k] * (1.0 + g.w[k].cos());
    let mut circ = 0.0;
    // counter-clockwise: bottom (ξ increasing), right (η increasing),
    // top (ξ decreasing), left (η decreasing)
    for i in i0..i1 {
        let (k0, k1) = (g.index(i, j0)?, g.index(i + 1, j0)?);
        circ += 0.5 * lat.d_xi * (b(k0) + b(k1));
        let (k0, k1) = (g.index(i, j1)?, g.index(i + 1, j1)?);
        circ -= 0.5 * lat.d_xi * (b(k0) + b(k1));
    }
    for j in j0..j1 {
        let (k0, k1) = (g.index(i1, j)?, g.index(i1, j + 1)?);
        circ -= 0.5 * lat.d_eta * (a(k0) + a(k1));
        let (k0, k1) = (g.index(i0, j)?, g.index(i0, j + 1)?);
        circ += 0.5 * lat.d_eta * (a(k0) + a(k1));
    }
    Some(circ)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::initdata::{DataFamily, FunctionSpec, InitialData};
    use proptest::prelude::*;

    fn unit() -> WaveSpeed {
        WaveSpeed::constant(1.0).unwrap()
    }

    fn zero_curve() -> BoundaryCurve {
        let d = InitialData::sample(&FunctionSpec::Zero, &FunctionSpec::Zero, (-1.0, 1.0), 0.1, &unit()).unwrap();
        BoundaryCurve::from_initial(&d)
    }

    fn bump_curve(ws: &WaveSpeed, amp: f64) -> (InitialData, BoundaryCurve) {
        let (v0, v1) = DataFamily::GaussianBump {
            amplitude: amp,
            center: 0.0,
            width: 0.3,
            cutoff: 1.2,
        }
        .build(ws);
        let d = InitialData::sample(&v0, &v1, (-1.5, 1.5), 0.005, ws).unwrap();
        let bc = BoundaryCurve::from_initial(&d);
        (d, bc)
    }

    #[test]
    fn zero_state_is_an_equilibrium() {
        for ws in [unit(), WaveSpeed::trigonometric(4.0, 1.0).unwrap()] {
            let s = Sources::at(&ws, &State { p: 1.0, q: 1.0, ..State::default() });
            assert_eq!(s, Sources::default());
        }
    }

    #[test]
    fn trig_sources_at_zero_state_with_stretch_vanish() {
        let ws = WaveSpeed::trigonometric(2.0, 5.0).unwrap();
        let s = Sources::at(&ws, &State { w: 0.0, z: 0.0, p: 3.0, q: 0.5, v: 0.0 });
        assert_eq!(s, Sources::default());
    }

    #[test]
    fn v_derivatives_match_riemann_variables() {
        // v_ξ = v_t t_ξ + v_x x_ξ reduces to p R (1 + cos w)/(4c)
        let ws = WaveSpeed::trigonometric(3.0, 1.5).unwrap();
        let st = State { w: 0.7, z: -1.1, p: 1.3, q: 0.8, v: 0.4 };
        let s = Sources::at(&ws, &st);
        let c = ws.c(st.v);
        let r = (st.w / 2.0).tan();
        let sv = (st.z / 2.0).tan();
        assert!((s.v_xi - st.p * r * (1.0 + st.w.cos()) / (4.0 * c)).abs() < 1e-14);
        assert!((s.v_eta - st.q * sv * (1.0 + st.z.cos()) / (4.0 * c)).abs() < 1e-14);
    }

    #[test]
    fn zero_data_march_is_exact() {
        let bc = zero_curve();
        let lat = Lattice::new(Domain::symmetric(1.0, 1.0), 0.05, 0.05).unwrap();
        let g = solve_march(&bc, lat, &unit(), MarchOptions::default()).unwrap();
        assert!(g.len() > 200);
        for (_, _, k) in g.nodes() {
            assert_eq!(g.state(k), State { p: 1.0, q: 1.0, ..State::default() });
        }
    }

    #[test]
    fn zero_data_layout_is_the_upper_triangle() {
        let bc = zero_curve();
        let lat = Lattice::new(Domain::symmetric(1.0, 1.0), 0.25, 0.25).unwrap();
        let cols = layout(&bc, &lat);
        // φ(ξ) = -ξ: column i starts at row n-1-i and runs to the top
        let n = lat.n_xi;
        assert_eq!(n, 9);
        for (i, c) in cols.iter().enumerate() {
            assert_eq!(c.start, n - 1 - i, "column {i}");
            assert_eq!(c.end(), n);
        }
    }

    #[test]
    fn march_respects_time_cap() {
        let ws = unit();
        let (_, bc) = bump_curve(&ws, 0.3);
        let dom = Domain::covering(&bc, -3.0, 3.0);
        let lat = Lattice::new(dom, 0.02, 0.02).unwrap();
        let full = solve_march(&bc, lat, &ws, MarchOptions::default()).unwrap();
        let capped = solve_march(
            &bc,
            lat,
            &ws,
            MarchOptions {
                cell_iters: 3,
                t_max: Some(0.5),
            },
        )
        .unwrap();
        assert!(capped.len() < full.len() / 2);
        for (i, j, k) in capped.nodes() {
            let kf = full.index(i, j).unwrap();
            assert_eq!(capped.state(k), full.state(kf));
        }
        assert_eq!(capped.columns.iter().map(|c| c.len).sum::<usize>(), capped.len());
    }

    #[test]
    fn march_and_picard_share_the_fixed_point() {
        let ws = unit();
        let (d, bc) = bump_curve(&ws, 0.4);
        let dom = Domain::covering(&bc, -1.5, 1.5);
        let lat = Lattice::new(dom, 0.02, 0.02).unwrap();
        let march = solve_march(
            &bc,
            lat,
            &ws,
            MarchOptions {
                cell_iters: 30,
                t_max: None,
            },
        )
        .unwrap();
        let kw = default_k_weight(&ws.bounds(), d.e0, d.v_max);
        let (pic, trace) = picard_global(
            &bc,
            lat,
            &ws,
            PicardOptions {
                k_weight: kw,
                max_iters: 200,
                tol: 1e-13,
            },
        )
        .unwrap();
        assert_eq!(march.columns, pic.columns);
        let diff = (0..march.len())
            .map(|k| march.state(k).distance(&pic.state(k)))
            .fold(0.0, f64::max);
        assert!(diff < 1e-11, "diff {diff}, trace {:?}", trace.distances);
        assert!(trace.ratios.iter().all(|&r| r < 1.0), "{:?}", trace.ratios);
    }

    #[test]
    fn picard_on_zero_data_converges_immediately() {
        let bc = zero_curve();
        let lat = Lattice::new(Domain::symmetric(1.0, 1.0), 0.05, 0.05).unwrap();
        let (_, trace) = picard_global(
            &bc,
            lat,
            &unit(),
            PicardOptions {
                k_weight: 1.0,
                max_iters: 5,
                tol: 1e-14,
            },
        )
        .unwrap();
        assert_eq!(trace.distances, vec![0.0]);
        assert!(trace.ratios.is_empty());
    }

    #[test]
    fn picard_reports_no_convergence() {
        let ws = unit();
        let (_, bc) = bump_curve(&ws, 0.5);
        let lat = Lattice::new(Domain::covering(&bc, -1.5, 1.5), 0.05, 0.05).unwrap();
        let err = picard_global(
            &bc,
            lat,
            &ws,
            PicardOptions {
                k_weight: 2.0,
                max_iters: 2,
                tol: 1e-14,
            },
        )
        .unwrap_err();
        match err {
            Error::NoConvergence { iterations, ratios } => {
                assert_eq!(iterations, 2);
                assert_eq!(ratios.len(), 1);
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn apriori_flags_injected_fault() {
        let bc = zero_curve();
        let lat = Lattice::new(Domain::symmetric(1.0, 1.0), 0.05, 0.05).unwrap();
        let mut g = solve_march(&bc, lat, &unit(), MarchOptions::default()).unwrap();
        let k = AprioriConstants::new(0.0, &unit().bounds(), 0.0, 0.0);
        let rep = apriori_check(&g, &k);
        assert!(rep.passed(), "{:?}", rep.checks);
        assert_eq!((rep.max_p, rep.min_q), (1.0, 1.0));
        let (i, j, kk) = g.nodes().nth(50).unwrap();
        g.p[kk] = -1.0;
        let rep = apriori_check(&g, &k);
        assert!(!rep.checks[0].pass);
        assert_eq!(rep.min_node, Some((i, j)));
        assert!(rep.checks[0].name.contains(&format!("{i},{j}")));
    }

    #[test]
    fn lattice_rejects_bad_steps() {
        let d = Domain::symmetric(1.0, 1.0);
        assert!(Lattice::new(d, 0.0, 0.1).is_err());
        assert!(Lattice::new(d, 0.1, f64::NAN).is_err());
        assert!(Lattice::new(d, 0.5, 0.1).is_err());
        let l = Lattice::new(d, 0.3 / 2.0, 0.1).unwrap();
        assert_eq!(l.n_eta, 21);
        assert!(l.xi(l.n_xi - 1) >= 1.0);
    }

    #[test]
    fn march_rejects_single_sweep() {
        let bc = zero_curve();
        let lat = Lattice::new(Domain::symmetric(1.0, 1.0), 0.1, 0.1).unwrap();
        assert!(solve_march(
            &bc,
            lat,
            &unit(),
            MarchOptions {
                cell_iters: 1,
                t_max: None
            }
        )
        .is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        // The system is 2π-periodic in the angles.
        #[test]
        fn sources_are_periodic(w in -3.0f64..3.0, z in -3.0f64..3.0, p in 0.1f64..3.0,
                                q in 0.1f64..3.0, v in -2.0f64..2.0) {
            let ws = WaveSpeed::trigonometric(4.0, 1.0).unwrap();
            let a = Sources::at(&ws, &State { w, z, p, q, v });
            let b = Sources::at(&ws, &State { w: w + 2.0 * std::f64::consts::PI, z: z - 2.0 * std::f64::consts::PI, p, q, v });
            prop_assert!((a.w_eta - b.w_eta).abs() < 1e-12);
            prop_assert!((a.p_eta - b.p_eta).abs() < 1e-12);
            prop_assert!((a.q_xi - b.q_xi).abs() < 1e-12);
            prop_assert!((a.v_eta - b.v_eta).abs() < 1e-12);
        }

        // x_ξη = x_ηξ holds identically for the system: the η-derivative of
        // (1+cos w)p equals the ξ-derivative of -(1+cos z)q... up to sign,
        // both equal c' p q (sin z - sin w + sin(z - w)) / (8c).
        #[test]
        fn coordinate_compatibility_identity(w in -3.0f64..3.0, z in -3.0f64..3.0, p in 0.1f64..3.0,
                                             q in 0.1f64..3.0, v in -2.0f64..2.0) {
            let ws = WaveSpeed::trigonometric(4.0, 1.0).unwrap();
            let s = Sources::at(&ws, &State { w, z, p, q, v });
            let (c, cp) = ws.c_and_prime(v);
            let x_xi_eta = ((1.0 + w.cos()) * s.p_eta - p * w.sin() * s.w_eta) / 4.0;
            let x_eta_xi = -((1.0 + z.cos()) * s.q_xi - q * z.sin() * s.z_xi) / 4.0;
            let closed = cp * p * q / (32.0 * c * c) * (z.sin() - w.sin() + (z - w).sin());
            prop_assert!((x_xi_eta - x_eta_xi).abs() < 1e-12);
            prop_assert!((x_xi_eta - closed).abs() < 1e-12);
        }
    }
}
