//! Scenario execution: data, characteristic solve, coordinates, slices,
//! diagnostics and checks.

use std::path::PathBuf;
use std::time::Instant;

use charwave_core::charsolver::{
    apriori_check, default_k_weight, picard_global, solve_march, AprioriConstants, AprioriReport, MarchOptions,
    PicardOptions, PicardTrace,
};
use charwave_core::diagnostics::{
    closedness_residual, default_test_family, energy_forms, energy_physical, holder_check, interaction_potential,
    lambda_slope, lambda_slope_bound, lipschitz_check, measures, smooth_measures, weak_residual, weak_residual_fd,
    Check, Closedness, HolderOptions, HolderReport, LipschitzReport, MeasureRow, TestFunction, WeakResidual,
};
use charwave_core::initdata::{DataFamily, FunctionSpec};
use charwave_core::physmap::{attach_coords, compatibility_residual, extract_time_slice, CompatResidual};
use charwave_core::refsolver::{balance_residuals, compare, fd_solve, measure_frequency, BalanceResidual, FdRun, FdStatus};
use charwave_core::{BoundaryCurve, CharGrid, Domain, InitialData, Lattice, TimeSlice, WaveSpeed};
use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, DataSource, RunConfig, Scenario, SolverMode};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: charwave_core::Error,
    },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("output: {0}")]
    Output(String),
}

trait Context<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T, PipelineError>;
}

impl<T> Context<T> for charwave_core::Result<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T, PipelineError> {
        self.map_err(|source| PipelineError::Core {
            context: what(),
            source,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportCheck {
    #[serde(flatten)]
    pub check: Check,
    /// Hard checks decide the exit status.
    pub hard: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SliceReport {
    pub tau: f64,
    pub samples: usize,
    pub singular: usize,
    pub singular_fraction: f64,
    pub e_phys: f64,
    pub e_forms: f64,
    pub lambda: f64,
    pub mu_total: f64,
    pub measures: Vec<MeasureRow>,
    /// Largest relative gap between the measures and their smooth-case
    /// densities, when the slice has no singular samples.
    pub smooth_measure_err: Option<f64>,
    pub warning: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelReport {
    pub d_xi: f64,
    pub d_eta: f64,
    pub nodes: usize,
    pub runtime_s: f64,
    pub coord_mismatch: f64,
    pub coord_limit: f64,
    pub compat: CompatResidual,
    pub closedness: Closedness,
    pub apriori: AprioriReport,
    pub e_forms_0: f64,
    pub max_abs_angle: f64,
    pub slices: Vec<SliceReport>,
    pub lipschitz: Option<LipschitzReport>,
    pub weak: Option<WeakResidual>,
    pub weak_error: Option<String>,
    pub max_energy_drift: f64,
    pub finite: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareRow {
    pub tau: f64,
    pub linf: f64,
    pub l2: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CrosscheckReport {
    pub fd_status: FdStatus,
    pub fd_dx: f64,
    pub rows: Vec<CompareRow>,
    pub tolerance: f64,
    pub omega_measured: Option<f64>,
    pub omega_exact: Option<f64>,
    pub fd_energy_drift: f64,
    pub balance: Option<BalanceResidual>,
    pub fd_weak: Option<WeakResidual>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BlowupReport {
    pub fd_status: FdStatus,
    pub fd_abort_time: Option<f64>,
    pub vx_initial: f64,
    pub vx_peak: f64,
    pub vx_peak_time: f64,
    /// `max |v_x|` never decreases before first reaching 10× its initial
    /// value (false if it never does).
    pub vx_monotone_to_10x: bool,
    pub singular_samples: usize,
    pub holder: HolderReport,
    pub lambda_slope: f64,
    pub lambda_slope_bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PicardReport {
    pub nodes: usize,
    pub traces: Vec<PicardTrace>,
    /// Sup distance between the fixed points for the two weights.
    pub k_disagreement: f64,
    /// Sup distance between the Picard and marching solutions.
    pub march_disagreement: f64,
    pub apriori: AprioriReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub scenario: Scenario,
    pub e0: f64,
    pub wave_speed: WaveSpeed,
    pub checks: Vec<ReportCheck>,
    pub warnings: Vec<String>,
    pub levels: Vec<LevelReport>,
    pub crosscheck: Option<CrosscheckReport>,
    pub blowup: Option<BlowupReport>,
    pub picard: Option<PicardReport>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| !c.hard || c.check.pass)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.check.name == name).map(|c| &c.check)
    }

    fn push(&mut self, check: Check, hard: bool) {
        self.checks.push(ReportCheck { check, hard });
    }
}

/// Everything a run produced, for report writing.
pub struct RunArtifacts {
    pub report: RunReport,
    pub data: InitialData,
    /// Finest characteristic grid and its slices.
    pub grid: Option<CharGrid>,
    pub slices: Vec<TimeSlice>,
    pub fd: Option<FdRun>,
}

/// A characteristic run at one resolution.
pub struct CharRun {
    pub grid: CharGrid,
    pub slices: Vec<TimeSlice>,
    pub report: LevelReport,
}

fn rel(value: f64, reference: f64) -> f64 {
    if reference > 0.0 {
        (value - reference).abs() / reference
    } else {
        value.abs()
    }
}

pub fn load_data(cfg: &RunConfig, dx: f64) -> Result<InitialData, PipelineError> {
    load_data_on(cfg, cfg.window, dx)
}

fn load_data_on(cfg: &RunConfig, window: (f64, f64), dx: f64) -> Result<InitialData, PipelineError> {
    let ws = cfg.wave_speed;
    let (v0, v1) = match &cfg.data {
        DataSource::Family(f) => f.build(&ws),
        DataSource::Csv { v0, v1 } => (
            FunctionSpec::from_csv(v0).context(|| format!("reading {}", v0.display()))?,
            FunctionSpec::from_csv(v1).context(|| format!("reading {}", v1.display()))?,
        ),
    };
    InitialData::sample(&v0, &v1, window, dx, &ws).context(|| "sampling initial data".into())
}

fn sample_dx(cfg: &RunConfig) -> f64 {
    let finest = cfg.solver.d_xi.min(cfg.solver.d_eta) / f64::powi(2.0, cfg.solver.refinements as i32);
    cfg.sample_dx.unwrap_or(finest / 4.0)
}

pub fn apriori_constants(d: &InitialData, ws: &WaveSpeed) -> AprioriConstants {
    AprioriConstants::new(d.e0, &ws.bounds(), d.v_max, 2.0 * d.potential_integral())
}

/// Test functions for the weak-form residual, fixed by the config.
pub fn weak_tests(cfg: &RunConfig) -> Vec<TestFunction> {
    let t = cfg.t_last();
    let (a, b) = cfg.window;
    default_test_family(0.15 * t, 0.85 * t, a, b)
}

/// Runs the characteristic pipeline at one resolution and evaluates the
/// per-level diagnostics.
pub fn char_run(cfg: &RunConfig, d: &InitialData, d_xi: f64, d_eta: f64) -> Result<CharRun, PipelineError> {
    let start = Instant::now();
    let ws = cfg.wave_speed;
    let times = &cfg.diag.slice_times;
    let t_last = cfg.t_last();
    let bc = BoundaryCurve::from_initial(d);
    let kappa = ws.bounds().kappa();
    let (a, b) = cfg.window;
    let margin = 0.5;
    let x_a = a - 2.0 * kappa * t_last - margin;
    let x_b = b + 2.0 * kappa * t_last + margin;
    let domain = match cfg.solver.extent {
        Some((xe, ye)) => Domain::symmetric(xe, ye),
        None => Domain::covering(&bc, x_a, x_b),
    };
    let lat = Lattice::new(domain, d_xi, d_eta).context(|| "building lattice".into())?;
    let t_cap = 1.05 * t_last + 2.0 * d_xi.max(d_eta);
    let mut g = match cfg.solver.mode {
        SolverMode::March => solve_march(
            &bc,
            lat,
            &ws,
            MarchOptions {
                cell_iters: cfg.solver.cell_iters,
                t_max: Some(t_cap),
            },
        ),
        SolverMode::Picard => picard_global(&bc, lat, &ws, picard_options(cfg, d, None)).map(|(g, _)| g),
    }
    .context(|| format!("characteristic solve at dX = {d_xi}, dY = {d_eta}"))?;
    let coords = attach_coords(&mut g).context(|| "recovering (t, x)".into())?;
    let mut slices = Vec::with_capacity(times.len());
    for &tau in times {
        slices.push(extract_time_slice(&g, tau).context(|| format!("slice at t = {tau}"))?);
    }

    let e0 = d.e0;
    let mut slice_reports = Vec::with_capacity(slices.len());
    for s in &slices {
        let e = energy_physical(s);
        let tab = measures(&g, s.tau, &cfg.diag.intervals).context(|| format!("measures at t = {}", s.tau))?;
        let smooth_measure_err = (s.singular_count() == 0).then(|| {
            tab.intervals
                .iter()
                .filter(|r| !r.empty)
                .flat_map(|r| {
                    let (m, p) = smooth_measures(s, r.a, r.b);
                    [(r.mu_minus, m), (r.mu_plus, p)]
                })
                .filter(|(_, m)| *m > 1e-3 * e0)
                .map(|(mu, m)| (mu - m).abs() / m)
                .fold(0.0, f64::max)
        });
        slice_reports.push(SliceReport {
            tau: s.tau,
            samples: s.samples.len(),
            singular: s.singular_count(),
            singular_fraction: e.singular_fraction,
            e_phys: e.value,
            e_forms: energy_forms(&g, s.tau).context(|| format!("energy forms at t = {}", s.tau))?,
            lambda: interaction_potential(s),
            mu_total: tab.total,
            measures: tab.intervals,
            smooth_measure_err,
            warning: e.warning,
        });
    }
    let lipschitz = if slices.len() >= 2 {
        Some(
            lipschitz_check(&slices, e0, &ws.bounds(), cfg.diag.lipschitz_slack)
                .context(|| "Lipschitz check".into())?,
        )
    } else {
        None
    };
    let (weak, weak_error) = if cfg.diag.weak_residual && t_last > 0.0 {
        match weak_residual(&g, &weak_tests(cfg)) {
            Ok(w) => (Some(w), None),
            Err(e) => (None, Some(e.to_string())),
        }
    } else {
        (None, None)
    };
    let apriori = apriori_check(&g, &apriori_constants(d, &ws));
    let finite = g
        .w
        .iter()
        .chain(&g.z)
        .chain(&g.p)
        .chain(&g.q)
        .chain(&g.v)
        .all(|v| v.is_finite());
    let report = LevelReport {
        d_xi,
        d_eta,
        nodes: g.len(),
        runtime_s: 0.0,
        coord_mismatch: coords.max_mismatch,
        coord_limit: coords.limit,
        compat: compatibility_residual(&g),
        closedness: closedness_residual(&g),
        apriori,
        max_abs_angle: g.max_abs_angle(),
        e_forms_0: energy_forms(&g, 0.0).context(|| "energy forms at t = 0".into())?,
        max_energy_drift: slice_reports.iter().map(|s| rel(s.e_phys, e0)).fold(0.0, f64::max),
        slices: slice_reports,
        lipschitz,
        weak,
        weak_error,
        finite,
    };
    let mut run = CharRun {
        grid: g,
        slices,
        report,
    };
    run.report.runtime_s = start.elapsed().as_secs_f64();
    Ok(run)
}

/// Levels `dX/2^k`, `k = 0..=refinements`. Only the finest grid is kept.
fn run_levels(cfg: &RunConfig, d: &InitialData) -> Result<(Vec<CharRun>, Vec<Vec<TimeSlice>>), PipelineError> {
    let mut finest: Option<CharRun> = None;
    let mut reports = Vec::new();
    let mut all_slices = Vec::new();
    for k in 0..=cfg.solver.refinements {
        let f = f64::powi(2.0, k as i32);
        let run = char_run(cfg, d, cfg.solver.d_xi / f, cfg.solver.d_eta / f)?;
        all_slices.push(run.slices.clone());
        if let Some(prev) = finest.take() {
            reports.push(prev);
        }
        finest = Some(run);
    }
    let mut out: Vec<CharRun> = reports
        .into_iter()
        .map(|mut r| {
            // drop coarse grids, keep reports
            r.grid.w = Vec::new();
            r.grid.z = Vec::new();
            r.grid.p = Vec::new();
            r.grid.q = Vec::new();
            r.grid.v = Vec::new();
            r.grid.t = None;
            r.grid.x = None;
            r
        })
        .collect();
    out.extend(finest);
    Ok((out, all_slices))
}

fn level_checks(cfg: &RunConfig, rep: &mut RunReport) {
    let e0 = rep.e0;
    let slack = cfg.diag.energy_bound_slack;
    let Some(fine) = rep.levels.last().cloned() else { return };

    // energy bound over every slice of every level
    let worst = rep
        .levels
        .iter()
        .flat_map(|l| &l.slices)
        .map(|s| if e0 > 0.0 { s.e_phys / e0 } else { s.e_phys })
        .fold(0.0, f64::max);
    let bound = if e0 > 0.0 { 1.0 + slack } else { 1e-12 };
    rep.push(Check::at_most("energy_bound", worst, bound), true);
    let drift_bound = if e0 > 0.0 { cfg.diag.energy_tol } else { 1e-12 };
    rep.push(Check::at_most("energy_conservation", fine.max_energy_drift, drift_bound), true);

    let mu = fine.slices.iter().map(|s| rel(s.mu_total, e0)).fold(0.0, f64::max);
    let mu_bound = if e0 > 0.0 { cfg.diag.measure_tol } else { 1e-12 };
    rep.push(Check::at_most("measure_total", mu, mu_bound), true);
    let smooth: Vec<f64> = fine.slices.iter().filter_map(|s| s.smooth_measure_err).collect();
    if e0 > 0.0 && !smooth.is_empty() {
        let m = smooth.iter().copied().fold(0.0, f64::max);
        rep.push(Check::at_most("smooth_measure_identity", m, cfg.diag.measure_tol), true);
    }
    let forms = fine
        .slices
        .iter()
        .map(|s| rel(s.e_forms, fine.e_forms_0))
        .fold(0.0, f64::max);
    rep.push(
        Check::at_most("energy_forms_time_independent", forms, if e0 > 0.0 { 0.02 } else { 1e-12 }),
        true,
    );

    for (n, l) in rep.levels.clone().iter().enumerate() {
        let tag = if rep.levels.len() > 1 { format!("[dX={}]", l.d_xi) } else { String::new() };
        for c in &l.apriori.checks {
            rep.push(
                Check {
                    name: format!("{}{tag}", c.name),
                    ..c.clone()
                },
                true,
            );
        }
        rep.push(
            Check::at_most(format!("exp_bound_literal{tag}"), l.apriori.literal_bound_ratio, 1.0),
            false,
        );
        if n + 1 == rep.levels.len() {
            if let Some(lip) = &l.lipschitz {
                rep.push(lip.check.clone(), true);
            }
            rep.push(Check::at_least("fields_finite", f64::from(u8::from(l.finite)), 1.0), true);
            rep.push(Check::at_most("angle_range", l.max_abs_angle, std::f64::consts::PI), true);
        }
    }
    if let Some(err) = &fine.weak_error {
        rep.warnings.push(format!("weak residual skipped: {err}"));
    }
    for s in &fine.slices {
        if s.warning {
            rep.warnings.push(format!(
                "slice t = {}: {:.1}% singular samples, quadratures unreliable",
                s.tau,
                100.0 * s.singular_fraction
            ));
        }
    }

    // refinement behaviour
    if rep.levels.len() >= 2 {
        let ls = rep.levels.clone();
        let pairs: Vec<(&LevelReport, &LevelReport)> = ls.windows(2).map(|w| (&w[0], &w[1])).collect();
        let min_ratio = |f: &dyn Fn(&LevelReport) -> f64| {
            pairs
                .iter()
                .map(|(a, b)| {
                    let (x, y) = (f(a), f(b));
                    if x == 0.0 && y == 0.0 {
                        f64::INFINITY
                    } else {
                        x / y
                    }
                })
                .fold(f64::INFINITY, f64::min)
        };
        if e0 > 0.0 {
            rep.push(
                Check::at_least("energy_drift_refines", min_ratio(&|l| l.max_energy_drift), 1.0),
                true,
            );
        }
        rep.push(
            Check::at_least("closedness_energy_order", min_ratio(&|l| l.closedness.energy_res), 1.8),
            true,
        );
        rep.push(
            Check::at_least("closedness_momentum_order", min_ratio(&|l| l.closedness.momentum_res), 1.8),
            true,
        );
        rep.push(
            Check::at_least("compatibility_refines", min_ratio(&|l| l.compat.x_res.max(l.compat.t_res)), 1.0),
            true,
        );
        if ls.iter().all(|l| l.weak.is_some()) {
            rep.push(
                Check::at_least(
                    "weak_residual_order",
                    min_ratio(&|l| l.weak.as_ref().map_or(0.0, |w| w.max)),
                    1.8,
                ),
                true,
            );
        }
    }
}

/// Runs a configured scenario. Files are not written here.
pub fn run(cfg: &RunConfig) -> Result<RunArtifacts, PipelineError> {
    match cfg.scenario {
        Scenario::PicardStudy => picard_study(cfg),
        _ => run_with_levels(cfg),
    }
}

fn empty_report(cfg: &RunConfig, e0: f64) -> RunReport {
    RunReport {
        scenario: cfg.scenario,
        e0,
        wave_speed: cfg.wave_speed,
        checks: Vec::new(),
        warnings: Vec::new(),
        levels: Vec::new(),
        crosscheck: None,
        blowup: None,
        picard: None,
    }
}

fn run_with_levels(cfg: &RunConfig) -> Result<RunArtifacts, PipelineError> {
    let d = load_data(cfg, sample_dx(cfg))?;
    let mut rep = empty_report(cfg, d.e0);
    let (runs, all_slices) = run_levels(cfg, &d)?;
    rep.levels = runs.iter().map(|r| r.report.clone()).collect();
    level_checks(cfg, &mut rep);
    let fine = runs.into_iter().last().expect("at least one level");

    let mut fd = None;
    match cfg.scenario {
        Scenario::Crosscheck => {
            let (c, run) = crosscheck(cfg, &fine.slices)?;
            let linf = c.rows.iter().map(|r| r.linf).fold(0.0, f64::max);
            rep.push(Check::at_most("crosscheck_linf", linf, c.tolerance), true);
            if let (Some(m), Some(e)) = (c.omega_measured, c.omega_exact) {
                rep.push(Check::at_most("dispersion", (m - e).abs() / e, 0.01), true);
            }
            rep.crosscheck = Some(c);
            fd = Some(run);
        }
        Scenario::BlowupDemo => {
            let (b, run) = blowup(cfg, &d, &rep, &all_slices)?;
            rep.push(
                Check::at_least("fd_gradient_growth", b.vx_peak / b.vx_initial.max(f64::MIN_POSITIVE), 10.0),
                false,
            );
            rep.push(
                Check::at_least("fd_abort", f64::from(u8::from(b.fd_abort_time.is_some())), 1.0),
                false,
            );
            rep.push(
                Check::at_least("singular_samples", b.singular_samples as f64, 1.0),
                false,
            );
            rep.push(b.holder.check.clone(), true);
            rep.push(Check::at_most("lambda_slope", b.lambda_slope, b.lambda_slope_bound), true);
            rep.blowup = Some(b);
            fd = Some(run);
        }
        _ => {}
    }
    Ok(RunArtifacts {
        report: rep,
        data: d,
        grid: Some(fine.grid),
        slices: fine.slices,
        fd,
    })
}

fn fd_window(cfg: &RunConfig) -> (f64, f64) {
    let k = cfg.wave_speed.bounds().kappa();
    let (a, b) = cfg.window;
    let pad = k * cfg.fd.t_final + 1.0;
    (a - pad, b + pad)
}

fn crosscheck(cfg: &RunConfig, slices: &[TimeSlice]) -> Result<(CrosscheckReport, FdRun), PipelineError> {
    let ws = cfg.wave_speed;
    let d = load_data_on(cfg, fd_window(cfg), cfg.fd.dx)?;
    let t_end = cfg.fd.t_final;
    let n = (t_end / cfg.fd.record_step).round() as usize;
    let mut record: Vec<f64> = (0..=n).map(|k| (k as f64 * cfg.fd.record_step).min(t_end)).collect();
    record.extend(cfg.diag.slice_times.iter().copied().filter(|&t| t <= t_end));
    record.sort_by(f64::total_cmp);
    record.dedup();
    let run = fd_solve(&d, &ws, cfg.fd.cfl, t_end, &record).context(|| "finite-difference solve".into())?;
    let mut rows = Vec::new();
    for s in slices {
        if let Some(st) = run.snapshots.iter().find(|st| st.t == s.tau) {
            let (linf, l2) = compare(s, st).context(|| format!("comparison at t = {}", s.tau))?;
            rows.push(CompareRow { tau: s.tau, linf, l2 });
        }
    }
    let (omega_measured, omega_exact) = match &cfg.data {
        DataSource::Family(DataFamily::SinePacket { wavenumber, .. }) => {
            let c0 = ws.c(0.0);
            let on_step: Vec<_> = run
                .snapshots
                .iter()
                .filter(|s| {
                    let k = s.t / cfg.fd.record_step;
                    (k - k.round()).abs() < 1e-9 || s.t == t_end
                })
                .cloned()
                .collect();
            (
                Some(measure_frequency(&on_step, *wavenumber)),
                Some((c0 * c0 * wavenumber * wavenumber + 0.5).sqrt()),
            )
        }
        _ => (None, None),
    };
    let snaps = &run.snapshots;
    let fd_energy_drift = match (snaps.first(), snaps.last()) {
        (Some(a), Some(b)) => rel(b.energy(), a.energy()),
        _ => 0.0,
    };
    let balance = (snaps.len() >= 3).then(|| {
        let m = snaps.len() / 2;
        balance_residuals(&ws, &snaps[m - 1], &snaps[m], &snaps[m + 1])
    });
    let fd_weak = weak_residual_fd(snaps, &ws, &weak_tests(cfg)).ok();
    let tolerance = cfg.fd.tol_factor * cfg.amplitude().abs();
    Ok((
        CrosscheckReport {
            fd_status: run.status,
            fd_dx: cfg.fd.dx,
            rows,
            tolerance,
            omega_measured,
            omega_exact,
            fd_energy_drift,
            balance,
            fd_weak,
        },
        run,
    ))
}

fn blowup(
    cfg: &RunConfig,
    d: &InitialData,
    rep: &RunReport,
    all_slices: &[Vec<TimeSlice>],
) -> Result<(BlowupReport, FdRun), PipelineError> {
    let ws = cfg.wave_speed;
    let fd_data = load_data_on(cfg, fd_window(cfg), cfg.fd.dx)?;
    let run = fd_solve(&fd_data, &ws, cfg.fd.cfl, cfg.fd.t_final, &[]).context(|| "finite-difference solve".into())?;
    let h = &run.vx_history;
    let vx_initial = h.first().map_or(0.0, |p| p.1);
    let (vx_peak_time, vx_peak) = h.iter().copied().fold((0.0, 0.0), |m, p| if p.1 > m.1 { p } else { m });
    let vx_monotone_to_10x = match h.iter().position(|p| p.1 >= 10.0 * vx_initial) {
        Some(k) => h[..=k].windows(2).all(|w| w[1].1 >= w[0].1),
        None => false,
    };
    let fd_abort_time = match run.status {
        FdStatus::Completed => None,
        FdStatus::BlowUpDetected { t } | FdStatus::NumericalBlowUp { t } => Some(t),
    };
    let fine = rep.levels.last().expect("level");
    let singular_samples = fine.slices.iter().map(|s| s.singular).sum();
    let holder = holder_check(
        all_slices,
        &HolderOptions {
            x_window: cfg.window,
            pairs: cfg.diag.holder_pairs,
            seed: cfg.diag.seed,
        },
    );
    let mut times = vec![0.0];
    let mut lam = vec![interaction_potential(&TimeSlice::from_riemann(
        &ws, 0.0, &d.x, &d.v0, &d.r0, &d.s0,
    ))];
    for s in &fine.slices {
        times.push(s.tau);
        lam.push(s.lambda);
    }
    Ok((
        BlowupReport {
            fd_status: run.status,
            fd_abort_time,
            vx_initial,
            vx_peak,
            vx_peak_time,
            vx_monotone_to_10x,
            singular_samples,
            holder,
            lambda_slope: lambda_slope(&times, &lam),
            lambda_slope_bound: lambda_slope_bound(d.e0, &ws, d.v_max),
        },
        run,
    ))
}

fn picard_options(cfg: &RunConfig, d: &InitialData, k_weight: Option<f64>) -> PicardOptions {
    let ws = cfg.wave_speed;
    PicardOptions {
        k_weight: k_weight
            .or(cfg.solver.k_weight)
            .unwrap_or_else(|| default_k_weight(&ws.bounds(), d.e0, d.v_max)),
        max_iters: cfg.solver.max_iters,
        tol: cfg.solver.tol,
    }
}

fn picard_study(cfg: &RunConfig) -> Result<RunArtifacts, PipelineError> {
    let ws = cfg.wave_speed;
    let d = load_data(cfg, sample_dx(cfg))?;
    let mut rep = empty_report(cfg, d.e0);
    let bc = BoundaryCurve::from_initial(&d);
    let (a, b) = cfg.window;
    let domain = match cfg.solver.extent {
        Some((xe, ye)) => Domain::symmetric(xe, ye),
        None => Domain::covering(&bc, a - 0.5, b + 0.5),
    };
    let lat = Lattice::new(domain, cfg.solver.d_xi, cfg.solver.d_eta).context(|| "building lattice".into())?;
    let k = picard_options(cfg, &d, None).k_weight;
    let mut traces = Vec::new();
    let mut grids = Vec::new();
    for kw in [k, 2.0 * k] {
        let (g, tr) = picard_global(
            &bc,
            lat,
            &ws,
            picard_options(cfg, &d, Some(kw)),
        )
        .context(|| format!("Picard iteration with K = {kw}"))?;
        grids.push(g);
        traces.push(tr);
    }
    let diff = |x: &CharGrid, y: &CharGrid| {
        (0..x.len())
            .map(|k| x.state(k).distance(&y.state(k)))
            .fold(0.0, f64::max)
    };
    let march = solve_march(
        &bc,
        lat,
        &ws,
        MarchOptions {
            cell_iters: 30,
            t_max: None,
        },
    )
    .context(|| "marching solve".into())?;
    let apriori = apriori_check(&grids[0], &apriori_constants(&d, &ws));
    let ratios: Vec<f64> = traces.iter().flat_map(|t| t.ratios.iter().copied()).collect();
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    let final_ratio = traces.iter().filter_map(|t| t.ratios.last().copied()).fold(0.0, f64::max);
    let k_disagreement = diff(&grids[0], &grids[1]);
    rep.push(Check::at_most("picard_ratio_max", max_ratio, 1.0 - f64::EPSILON), true);
    rep.push(Check::at_most("picard_final_ratio", final_ratio, 0.5), true);
    rep.push(Check::at_most("picard_k_independence", k_disagreement, cfg.solver.tol), true);
    for c in &apriori.checks {
        rep.push(c.clone(), true);
    }
    rep.push(Check::at_most("exp_bound_literal", apriori.literal_bound_ratio, 1.0), false);
    rep.picard = Some(PicardReport {
        nodes: grids[0].len(),
        traces,
        k_disagreement,
        march_disagreement: diff(&grids[0], &march),
        apriori,
    });
    let g = grids.swap_remove(0);
    Ok(RunArtifacts {
        report: rep,
        data: d,
        grid: Some(g),
        slices: Vec::new(),
        fd: None,
    })
}

/// Default output directory for a config: `out` joined with the scenario.
pub fn resolve_out(cfg: &RunConfig, out: Option<PathBuf>) -> PathBuf {
    out.unwrap_or_else(|| cfg.out_dir.clone())
}
